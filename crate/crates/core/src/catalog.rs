//! The five-pass scenario catalog (P1..P5): near-noon ascending passes a
//! few days apart, each starting close to the star-acquisition attitude,
//! slewing about the same body axis around t = 60 s and tracking afterwards.

use crate::refmodels::{earth_direction, propagate_orbit, sun_direction_eci, utc_seconds, DipoleModel, OrbitElements};
use crate::rotation::{quat_rotate, Quaternion, Vec3};
use crate::synth::{Maneuver, Scenario, SensorErrors};
use crate::triad::triad;

const SEMIMAJOR_AXIS_KM: f64 = 6378.137 + 420.0;
const INCLINATION_DEG: f64 = 51.6;
/// Mid-pass sample index.
const MID_PASS_S: f64 = 181.0;

struct PassTemplate {
    id: &'static str,
    date: (i32, u32, u32, u32),
    /// Sub-satellite declination at mid-pass, deg.
    dec_deg: f64,
    /// Right ascension relative to the Sun at mid-pass, deg. The spread gives
    /// each pass a different roll about the Sun line.
    ra_offset_deg: f64,
    /// Small rotation applied to the nominal initial attitude, deg.
    offset_rv_deg: [f64; 3],
    slew_deg: f64,
    start_s: f64,
    track_dps: [f64; 3],
}

const TEMPLATES: [PassTemplate; 5] = [
    PassTemplate {
        id: "P1",
        date: (2021, 12, 18, 4),
        dec_deg: 10.0,
        ra_offset_deg: 1.0,
        offset_rv_deg: [0.6, -0.5, 0.4],
        slew_deg: 44.0,
        start_s: 60.0,
        track_dps: [0.020, -0.060, 0.030],
    },
    PassTemplate {
        id: "P2",
        date: (2021, 12, 21, 3),
        dec_deg: 9.0,
        ra_offset_deg: -9.0,
        offset_rv_deg: [-0.8, 0.7, 0.5],
        slew_deg: 41.0,
        start_s: 58.0,
        track_dps: [0.025, -0.055, 0.030],
    },
    PassTemplate {
        id: "P3",
        date: (2021, 12, 22, 2),
        dec_deg: 11.0,
        ra_offset_deg: 6.0,
        offset_rv_deg: [0.4, 0.6, -0.6],
        slew_deg: 46.0,
        start_s: 62.0,
        track_dps: [0.015, -0.065, 0.025],
    },
    PassTemplate {
        id: "P4",
        date: (2021, 12, 23, 3),
        dec_deg: 10.5,
        ra_offset_deg: -4.0,
        offset_rv_deg: [-0.5, -0.9, 0.3],
        slew_deg: 43.0,
        start_s: 61.0,
        track_dps: [0.020, -0.058, 0.035],
    },
    PassTemplate {
        id: "P5",
        date: (2021, 12, 24, 2),
        dec_deg: 9.5,
        ra_offset_deg: 3.0,
        offset_rv_deg: [0.7, 0.4, 0.8],
        slew_deg: 45.0,
        start_s: 59.0,
        track_dps: [0.022, -0.062, 0.028],
    },
];

/// Star-acquisition attitude relative to the inertial frame at P1 mid-pass,
/// as a rotation vector in degrees. The body-frame Sun and nadir directions it
/// implies are reused for every pass.
const NOMINAL_RV_DEG: [f64; 3] = [-20.0, 15.0, -25.0];

fn mid_pass_geometry(tpl: &PassTemplate) -> (OrbitElements, Vec3, Vec3) {
    let (y, mo, d, h) = tpl.date;
    let epoch = utc_seconds(y, mo, d, h, 0, 0.0);
    let t_mid = epoch + MID_PASS_S;
    let sun = sun_direction_eci(t_mid);
    let sun_ra = sun.y.atan2(sun.x).to_degrees();
    let orbit = OrbitElements::through_direction(
        SEMIMAJOR_AXIS_KM,
        INCLINATION_DEG,
        sun_ra + tpl.ra_offset_deg,
        tpl.dec_deg,
        t_mid,
        epoch,
    )
    .expect("catalog geometry is reachable");
    let r_mid = propagate_orbit(&orbit, t_mid).expect("valid orbit");
    let nadir = earth_direction(&r_mid).expect("non-zero position");
    (orbit, sun, nadir)
}

fn nominal_body_vectors() -> (Vec3, Vec3) {
    let (_, sun, nadir) = mid_pass_geometry(&TEMPLATES[0]);
    let q = Quaternion::from_rotation_vector(&Vec3::from(NOMINAL_RV_DEG).map(f64::to_radians));
    (quat_rotate(&q, &sun), quat_rotate(&q, &nadir))
}

fn slew_axis() -> [f64; 3] {
    let a = Vec3::new(0.25, 0.35, 0.90).normalize();
    [a.x, a.y, a.z]
}

fn scenario(tpl: &PassTemplate, errors: &SensorErrors, seed: u64, eclipse: bool) -> Scenario {
    let (orbit, sun, nadir) = mid_pass_geometry(tpl);
    let (body_sun, body_nadir) = nominal_body_vectors();
    let base = triad(&body_sun, &body_nadir, &sun, &nadir)
        .expect("Sun and nadir are not collinear")
        .to_quaternion();
    let offset = Quaternion::from_rotation_vector(&Vec3::from(tpl.offset_rv_deg).map(f64::to_radians));
    Scenario {
        id: tpl.id.to_string(),
        orbit,
        dipole: DipoleModel::default(),
        initial_attitude: base.then(&offset).normalize().expect("unit"),
        maneuver: Maneuver {
            axis: slew_axis(),
            magnitude_deg: tpl.slew_deg,
            start_s: tpl.start_s,
            rate_limit_dps: 0.5,
            accel_dps2: 0.05,
            track_rate_dps: tpl.track_dps,
        },
        errors: errors.clone(),
        eclipse,
        seed,
    }
}

/// Catalog with the given sensor error model; pass `k` uses seed `seed + k`.
pub fn catalog_with_errors(errors: &SensorErrors, seed: u64) -> Vec<Scenario> {
    TEMPLATES
        .iter()
        .enumerate()
        .map(|(k, tpl)| scenario(tpl, errors, seed.wrapping_add(k as u64), false))
        .collect()
}

/// P1..P5 with the default structured sensor errors.
pub fn biased_catalog(seed: u64) -> Vec<Scenario> {
    catalog_with_errors(&SensorErrors::biased(), seed)
}

/// P1..P5 with every error knob at zero.
pub fn zero_error_catalog(seed: u64) -> Vec<Scenario> {
    catalog_with_errors(&SensorErrors::zero(), seed)
}

/// P1..P5 forced into eclipse (no direct Sun, no albedo).
pub fn eclipse_catalog(seed: u64) -> Vec<Scenario> {
    TEMPLATES
        .iter()
        .enumerate()
        .map(|(k, tpl)| scenario(tpl, &SensorErrors::biased(), seed.wrapping_add(k as u64), true))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passlog::PASS_LEN;
    use crate::rotation::quat_to_mrp;
    use crate::synth::synth_pass;

    #[test]
    fn sun_and_earth_nearly_opposite() {
        for sc in biased_catalog(1) {
            let log = synth_pass(&sc).unwrap();
            for r in &log.records {
                let e = earth_direction(&r.r_eci).unwrap();
                assert!(r.sun_eci.dot(&e) < -0.7, "{}: {}", sc.id, r.sun_eci.dot(&e));
            }
            assert!(log.manifest.sunlit.iter().all(|s| *s));
        }
    }

    #[test]
    fn labels_stay_away_from_mrp_switching() {
        for sc in biased_catalog(1) {
            let log = synth_pass(&sc).unwrap();
            for r in &log.records {
                let m = quat_to_mrp(&r.q_true).unwrap();
                assert!(m.norm_squared().sqrt() < 0.9, "{}: |sigma| = {}", sc.id, m.norm_squared().sqrt());
            }
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn css_profiles_are_similar_across_passes() {
        let logs: Vec<_> = biased_catalog(1).iter().map(|s| synth_pass(s).unwrap()).collect();
        let series = |k: usize, ch: usize| -> Vec<f64> { logs[k].records.iter().map(|r| r.css[ch] as f64).collect() };
        let mut checked = 0;
        for ch in 0..6 {
            let base = series(0, ch);
            let std = {
                let m = base.iter().sum::<f64>() / PASS_LEN as f64;
                (base.iter().map(|x| (x - m).powi(2)).sum::<f64>() / PASS_LEN as f64).sqrt()
            };
            if std < 20.0 {
                continue;
            }
            checked += 1;
            for k in 1..logs.len() {
                let c = correlation(&base, &series(k, ch));
                assert!(c > 0.9, "css{ch} P1 vs P{}: r = {c}", k + 1);
            }
        }
        assert!(checked >= 3, "only {checked} CSS channels vary");
    }
}
