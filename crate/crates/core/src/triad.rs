//! Two-vector TRIAD attitude solution and its pass-level evaluation.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{Group, PassFeatures};
use crate::passlog::PassLog;
use crate::rotation::{quat_angle_rad, quat_rotate, vector_angle_deg, Dcm, Quaternion, Vec3};

/// Minimum `|v1 x v2|` accepted in either frame.
pub const COLLINEARITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    Sun,
    Mag,
}

impl FromStr for Priority {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sun" => Ok(Priority::Sun),
            "mag" => Ok(Priority::Mag),
            other => Err(invalid(format!("unknown TRIAD priority {other:?} (expected sun|mag)"))),
        }
    }
}

impl std::fmt::Display for Priority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Priority::Sun => "sun",
            Priority::Mag => "mag",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriadConfig {
    pub primary: Priority,
}

fn basis(v1: &Vec3, v2: &Vec3) -> Result<nalgebra::Matrix3<f64>> {
    let c = v1.cross(v2);
    let n = c.norm();
    if !(n > COLLINEARITY_THRESHOLD) {
        return Err(Error::DegenerateGeometry(n));
    }
    let t1 = *v1;
    let t2 = c / n;
    let t3 = t1.cross(&t2);
    Ok(nalgebra::Matrix3::from_columns(&[t1, t2, t3]))
}

/// Attitude matrix mapping `v1_i` exactly onto `v1_b`; the secondary pair only
/// fixes the rotation about the primary.
pub fn triad(v1_b: &Vec3, v2_b: &Vec3, v1_i: &Vec3, v2_i: &Vec3) -> Result<Dcm> {
    let mb = basis(v1_b, v2_b)?;
    let mi = basis(v1_i, v2_i)?;
    Ok(Dcm(mb * mi.transpose()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriadStep {
    pub t: f64,
    pub att_err_deg: Option<f64>,
    pub sun_err_deg: Option<f64>,
    pub mag_err_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriadEval {
    pub priority: Priority,
    pub rms_att_deg: f64,
    pub rms_sun_deg: f64,
    pub rms_mag_deg: f64,
    pub evaluated_steps: usize,
    pub failed_steps: usize,
    pub series: Vec<TriadStep>,
}

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut ss, mut n) = (0.0, 0usize);
    for v in values {
        ss += v * v;
        n += 1;
    }
    (n > 0).then(|| (ss / n as f64).sqrt())
}

impl TriadEval {
    fn from_series(priority: Priority, series: Vec<TriadStep>, failed_steps: usize) -> Result<Self> {
        let rms_att = rms(series.iter().filter_map(|s| s.att_err_deg))
            .ok_or_else(|| Error::EmptyEvaluation("no step produced a TRIAD solution".into()))?;
        Ok(TriadEval {
            priority,
            rms_att_deg: rms_att,
            rms_sun_deg: rms(series.iter().filter_map(|s| s.sun_err_deg)).unwrap_or(f64::NAN),
            rms_mag_deg: rms(series.iter().filter_map(|s| s.mag_err_deg)).unwrap_or(f64::NAN),
            evaluated_steps: series.iter().filter(|s| s.att_err_deg.is_some()).count(),
            failed_steps,
            series,
        })
    }

    /// Pool several pass evaluations into one.
    pub fn pooled(evals: &[TriadEval]) -> Result<Self> {
        let priority = evals.first().map(|e| e.priority).ok_or_else(|| invalid("nothing to pool"))?;
        let series = evals.iter().flat_map(|e| e.series.iter().copied()).collect();
        let failed = evals.iter().map(|e| e.failed_steps).sum();
        Self::from_series(priority, series, failed)
    }

    /// `t,att_err_deg,sun_err_deg,mag_err_deg`; missing values are empty fields.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("t,att_err_deg,sun_err_deg,mag_err_deg\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.series {
            let _ = writeln!(out, "{},{},{},{}", s.t, cell(s.att_err_deg), cell(s.sun_err_deg), cell(s.mag_err_deg));
        }
        out
    }
}

/// Attitude and sensor-direction errors of TRIAD over one pass.
///
/// Steps where a vector is unavailable or the geometry is collinear are
/// skipped and counted in `failed_steps`.
pub fn triad_pass_eval(pass: &PassLog, frames: &PassFeatures, cfg: &TriadConfig) -> Result<TriadEval> {
    if frames.frames.len() != pass.records.len() {
        return Err(invalid("frame count does not match the pass length"));
    }
    let mut series = Vec::with_capacity(pass.records.len());
    let mut failed = 0;
    for (rec, fr) in pass.records.iter().zip(&frames.frames) {
        let q_true: Quaternion = rec.q_true.normalize()?;
        let sun_b = fr.get(Group::SunSensor);
        let mag_b = fr.get(Group::MagSensor);
        let sun_i = fr.vector(Group::SunModel);
        let mag_i = fr.vector(Group::MagModel);
        let sun_err = sun_b.map(|s| vector_angle_deg(&s, &quat_rotate(&q_true, &sun_i)));
        let mag_err = mag_b.map(|m| vector_angle_deg(&m, &quat_rotate(&q_true, &mag_i)));
        let att_err = match (sun_b, mag_b) {
            (Some(s), Some(m)) => {
                let sol = match cfg.primary {
                    Priority::Sun => triad(&s, &m, &sun_i, &mag_i),
                    Priority::Mag => triad(&m, &s, &mag_i, &sun_i),
                };
                match sol {
                    Ok(dcm) => Some(quat_angle_rad(&dcm.to_quaternion(), &q_true).to_degrees()),
                    Err(Error::DegenerateGeometry(_)) => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        if att_err.is_none() {
            failed += 1;
        }
        series.push(TriadStep { t: rec.t, att_err_deg: att_err, sun_err_deg: sun_err, mag_err_deg: mag_err });
    }
    TriadEval::from_series(cfg.primary, series, failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::features::{build_frames, fit_gyro_scale, FeatureConfig};
    use crate::synth::synth_pass;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_when_frames_coincide() {
        let a = Vec3::new(0.2, 0.9, -0.1).normalize();
        let b = Vec3::new(-0.7, 0.1, 0.6).normalize();
        let d = triad(&a, &b, &a, &b).unwrap();
        assert!((d.0 - nalgebra::Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn recovers_known_rotation() {
        let q = Quaternion::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let a_i = Vec3::new(0.3, -0.4, 0.8).normalize();
        let b_i = Vec3::new(0.9, 0.2, -0.1).normalize();
        let d = triad(&quat_rotate(&q, &a_i), &quat_rotate(&q, &b_i), &a_i, &b_i).unwrap();
        assert!(quat_angle_rad(&d.to_quaternion(), &q).to_degrees() < 1e-9);
    }

    #[test]
    fn primary_is_exact_under_secondary_perturbation() {
        let q = Quaternion::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        let a_i = Vec3::new(0.3, -0.4, 0.8).normalize();
        let b_i = Vec3::new(0.9, 0.2, -0.1).normalize();
        let a_b = quat_rotate(&q, &a_i);
        let pert = Quaternion::from_axis_angle(&a_b.cross(&Vec3::x()), 5f64.to_radians());
        let b_b = quat_rotate(&pert, &quat_rotate(&q, &b_i));
        let d = triad(&a_b, &b_b, &a_i, &b_i).unwrap();
        assert!(vector_angle_deg(&d.apply(&a_i), &a_b) < 1e-9);
        assert!(d.orthonormality_error() < 1e-9);
        assert_abs_diff_eq!(d.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn collinear_inputs_are_degenerate() {
        let a = Vec3::x();
        let r = triad(&a, &(a * 1.0), &Vec3::y(), &Vec3::z());
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
        let r = triad(&Vec3::y(), &Vec3::z(), &a, &-a);
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn near_degenerate_still_proper_rotation() {
        let a = Vec3::x();
        let b = Vec3::new(1.0, 2e-6, 0.0).normalize();
        let d = triad(&a, &b, &Vec3::y(), &Vec3::new(1e-5, 1.0, 1e-5).normalize()).unwrap();
        assert!(d.orthonormality_error() < 1e-9);
        assert_abs_diff_eq!(d.determinant(), 1.0, epsilon = 1e-9);
    }

    fn frames_for(log: &PassLog) -> PassFeatures {
        let scale = fit_gyro_scale(&[log]).unwrap_or_else(|_| crate::features::GyroScale(1.0));
        build_frames(log, &FeatureConfig::default(), scale)
    }

    #[test]
    fn zero_error_pass_is_near_exact() {
        let log = synth_pass(&catalog::zero_error_catalog(1)[0]).unwrap();
        let fr = frames_for(&log);
        for p in [Priority::Sun, Priority::Mag] {
            let ev = triad_pass_eval(&log, &fr, &TriadConfig { primary: p }).unwrap();
            assert!(ev.rms_att_deg < 0.5, "{p}: {}", ev.rms_att_deg);
            assert_eq!(ev.failed_steps, 0);
        }
    }

    #[test]
    fn priorities_differ_but_sensor_errors_do_not() {
        let log = synth_pass(&catalog::biased_catalog(1)[0]).unwrap();
        let fr = frames_for(&log);
        let s = triad_pass_eval(&log, &fr, &TriadConfig { primary: Priority::Sun }).unwrap();
        let m = triad_pass_eval(&log, &fr, &TriadConfig { primary: Priority::Mag }).unwrap();
        assert!(s.rms_att_deg.is_finite() && m.rms_att_deg.is_finite());
        assert_ne!(s.rms_att_deg, m.rms_att_deg);
        assert_eq!(s.rms_sun_deg, m.rms_sun_deg);
        assert_eq!(s.rms_mag_deg, m.rms_mag_deg);
    }

    #[test]
    fn eclipse_pass_has_no_valid_step() {
        let log = synth_pass(&catalog::eclipse_catalog(1)[0]).unwrap();
        let fr = frames_for(&log);
        let r = triad_pass_eval(&log, &fr, &TriadConfig { primary: Priority::Sun });
        assert!(matches!(r, Err(Error::EmptyEvaluation(_))));
    }

    #[test]
    fn series_csv_has_gaps_as_empty_fields() {
        let log = synth_pass(&catalog::zero_error_catalog(1)[0]).unwrap();
        let fr = frames_for(&log);
        let ev = triad_pass_eval(&log, &fr, &TriadConfig { primary: Priority::Sun }).unwrap();
        let csv = ev.series_csv();
        assert!(csv.starts_with("t,att_err_deg,sun_err_deg,mag_err_deg\n"));
        assert_eq!(csv.lines().count(), 363);
        assert!(!csv.contains("NaN"));
    }
}
