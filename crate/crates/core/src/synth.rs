//! Synthetic pass logs: a rate-limited slew profile, coarse Sun sensor,
//! magnetometer and gyro models with structured (non-white) errors.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::passlog::{PassLog, PassManifest, PassRecord, PASS_LEN};
use crate::refmodels::{is_sunlit, ref_vectors, DipoleModel, OrbitElements};
use crate::rotation::{quat_angle_rad, quat_rotate, Dcm, Quaternion, Vec3};

/// Channel-to-panel assignment: `(axis, sign)` of each CSS channel's normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelMap(pub [(usize, i8); 6]);

impl Default for PanelMap {
    /// `(+X, -X, +Y, -Y, +Z, -Z)` for channels 0..5.
    fn default() -> Self {
        PanelMap([(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)])
    }
}

impl PanelMap {
    pub fn normal(&self, channel: usize) -> Vec3 {
        let (axis, sign) = self.0[channel];
        let mut n = Vec3::zeros();
        n[axis] = sign as f64;
        n
    }

    /// Channels facing `(+axis, -axis)`.
    pub fn pair(&self, axis: usize) -> (usize, usize) {
        let find = |s: i8| self.0.iter().position(|&(a, sg)| a == axis && sg == s).unwrap();
        (find(1), find(-1))
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            for s in [1i8, -1] {
                let n = self.0.iter().filter(|&&(a, sg)| a == axis && sg == s).count();
                if n != 1 {
                    return Err(invalid(format!(
                        "panel map must have exactly one panel facing {}{}",
                        if s > 0 { '+' } else { '-' },
                        ['X', 'Y', 'Z'][axis.min(2)]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CssErrors {
    /// Counts at normal Sun incidence, per channel.
    pub gain: [f64; 6],
    pub bias: [f64; 6],
    /// Counts per unit cosine of the Earth direction (albedo crosstalk).
    pub albedo: [f64; 6],
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagErrors {
    /// Zero-field counts per axis.
    pub reference: [f64; 3],
    /// Counts per gauss.
    pub scale: f64,
    /// Gauss.
    pub hard_iron: [f64; 3],
    /// Sensor misalignment as a rotation vector, deg.
    pub misalignment_deg: [f64; 3],
    /// Counts.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GyroErrors {
    /// deg/s.
    pub bias: [f64; 3],
    /// deg/s.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorErrors {
    pub css: CssErrors,
    pub mag: MagErrors,
    pub gyro: GyroErrors,
    #[serde(default)]
    pub panels: PanelMap,
}

impl Default for SensorErrors {
    fn default() -> Self {
        Self::biased()
    }
}

impl Default for CssErrors {
    fn default() -> Self {
        SensorErrors::biased().css
    }
}

impl Default for MagErrors {
    fn default() -> Self {
        SensorErrors::biased().mag
    }
}

impl Default for GyroErrors {
    fn default() -> Self {
        SensorErrors::biased().gyro
    }
}

pub const NOMINAL_CSS_GAIN: f64 = 1000.0;
pub const NOMINAL_MAG_REF: f64 = 4096.0;
pub const NOMINAL_MAG_SCALE: f64 = 2000.0;
/// Magnetometer full-scale range, gauss.
pub const MAG_RANGE_GAUSS: f64 = 2.0;

impl SensorErrors {
    /// Every error knob at zero: nominal gains, no bias, albedo, misalignment or noise.
    pub fn zero() -> Self {
        SensorErrors {
            css: CssErrors { gain: [NOMINAL_CSS_GAIN; 6], bias: [0.0; 6], albedo: [0.0; 6], noise: 0.0 },
            mag: MagErrors {
                reference: [NOMINAL_MAG_REF; 3],
                scale: NOMINAL_MAG_SCALE,
                hard_iron: [0.0; 3],
                misalignment_deg: [0.0; 3],
                noise: 0.0,
            },
            gyro: GyroErrors { bias: [0.0; 3], noise: 0.0 },
            panels: PanelMap::default(),
        }
    }

    /// Default structured-error budget of the catalog sensor suite.
    pub fn biased() -> Self {
        let g = NOMINAL_CSS_GAIN;
        SensorErrors {
            css: CssErrors {
                gain: [1.08 * g, 0.93 * g, 1.05 * g, 0.96 * g, 0.90 * g, 1.10 * g],
                bias: [35.0, 18.0, 42.0, 25.0, 30.0, 22.0],
                albedo: [110.0, 100.0, 120.0, 110.0, 95.0, 115.0],
                noise: 2.0,
            },
            mag: MagErrors {
                reference: [NOMINAL_MAG_REF; 3],
                scale: NOMINAL_MAG_SCALE,
                hard_iron: [0.016, -0.012, 0.014],
                misalignment_deg: [1.2, -0.9, 0.6],
                noise: 3.0,
            },
            gyro: GyroErrors { bias: [0.008, -0.005, 0.006], noise: 0.003 },
            panels: PanelMap::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.panels.validate()?;
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be a finite non-negative number, got {v}")))
            }
        };
        nonneg("css.noise", self.css.noise)?;
        nonneg("mag.noise", self.mag.noise)?;
        nonneg("gyro.noise", self.gyro.noise)?;
        for (i, a) in self.css.albedo.iter().enumerate() {
            nonneg(&format!("css.albedo[{i}]"), *a)?;
        }
        if !(self.mag.scale > 0.0) {
            return Err(invalid(format!("mag.scale must be positive, got {}", self.mag.scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    /// Body-frame slew axis.
    pub axis: [f64; 3],
    pub magnitude_deg: f64,
    /// Slew start, seconds from the beginning of the pass.
    pub start_s: f64,
    pub rate_limit_dps: f64,
    pub accel_dps2: f64,
    /// Constant body rate held after the slew (ground-target tracking), deg/s.
    pub track_rate_dps: [f64; 3],
}

impl Maneuver {
    pub fn hold() -> Self {
        Maneuver {
            axis: [0.0, 0.0, 1.0],
            magnitude_deg: 0.0,
            start_s: 60.0,
            rate_limit_dps: 0.5,
            accel_dps2: 0.05,
            track_rate_dps: [0.0; 3],
        }
    }

    /// Slew duration under the rate and acceleration limits, seconds.
    pub fn duration(&self) -> f64 {
        let (m, r, a) = (self.magnitude_deg.abs(), self.rate_limit_dps, self.accel_dps2);
        if m == 0.0 {
            0.0
        } else if m >= r * r / a {
            m / r + r / a
        } else {
            2.0 * (m / a).sqrt()
        }
    }

    /// Slew angle (deg) and rate (deg/s) at `tau` seconds after start.
    fn profile(&self, tau: f64) -> (f64, f64) {
        let (m, r, a) = (self.magnitude_deg.abs(), self.rate_limit_dps, self.accel_dps2);
        let sign = self.magnitude_deg.signum();
        let d = self.duration();
        if m == 0.0 || tau <= 0.0 {
            return (0.0, 0.0);
        }
        if tau >= d {
            return (self.magnitude_deg, 0.0);
        }
        let peak = if m >= r * r / a { r } else { (m * a).sqrt() };
        let tr = peak / a;
        let (ang, rate) = if tau < tr {
            (0.5 * a * tau * tau, a * tau)
        } else if tau <= d - tr {
            (0.5 * a * tr * tr + peak * (tau - tr), peak)
        } else {
            let rem = d - tau;
            (m - 0.5 * a * rem * rem, a * rem)
        };
        (sign * ang, sign * rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub orbit: OrbitElements,
    #[serde(default)]
    pub dipole: DipoleModel,
    pub initial_attitude: Quaternion,
    pub maneuver: Maneuver,
    pub errors: SensorErrors,
    /// Force the whole pass into eclipse.
    #[serde(default)]
    pub eclipse: bool,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.orbit.validate()?;
        self.errors.validate()?;
        let m = &self.maneuver;
        if !(m.start_s >= 0.0) {
            return Err(invalid(format!("maneuver.start_s must be >= 0, got {}", m.start_s)));
        }
        if !(m.rate_limit_dps > 0.0 && m.rate_limit_dps <= 5.0) {
            return Err(invalid(format!("maneuver.rate_limit_dps must be in (0, 5], got {}", m.rate_limit_dps)));
        }
        if !(m.accel_dps2 > 0.0) {
            return Err(invalid(format!("maneuver.accel_dps2 must be positive, got {}", m.accel_dps2)));
        }
        if Vec3::from(m.axis).norm() == 0.0 && m.magnitude_deg != 0.0 {
            return Err(invalid("maneuver.axis must be non-zero"));
        }
        if Vec3::from(m.track_rate_dps).norm() > m.rate_limit_dps {
            return Err(invalid("maneuver.track_rate_dps exceeds the rate limit"));
        }
        if (self.initial_attitude.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("initial_attitude must be a unit quaternion"));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSample {
    pub q: Quaternion,
    /// Body rate, deg/s.
    pub omega_dps: Vec3,
}

pub fn make_attitude_profile(sc: &Scenario) -> Result<Vec<AttitudeSample>> {
    sc.validate()?;
    let m = &sc.maneuver;
    let t_end = m.start_s + m.duration();
    let last = (PASS_LEN - 1) as f64;
    if t_end > last {
        return Err(Error::ScenarioInfeasible(format!(
            "slew of {} deg at {} deg/s starting at {} s ends at {:.1} s, after the pass ends at {last} s",
            m.magnitude_deg, m.rate_limit_dps, m.start_s, t_end
        )));
    }
    let axis = Vec3::from(m.axis);
    let q0 = sc.initial_attitude;
    let q_end = q0.then(&Quaternion::from_axis_angle(&axis, m.magnitude_deg.to_radians()));
    let track = Vec3::from(m.track_rate_dps);

    Ok((0..PASS_LEN)
        .map(|k| {
            let t = k as f64;
            if t <= m.start_s {
                AttitudeSample { q: q0, omega_dps: Vec3::zeros() }
            } else if t <= t_end {
                let (ang, rate) = m.profile(t - m.start_s);
                let e = if axis.norm() > 0.0 { axis.normalize() } else { axis };
                AttitudeSample {
                    q: q0.then(&Quaternion::from_axis_angle(&axis, ang.to_radians())),
                    omega_dps: e * rate,
                }
            } else {
                let rv = track * (t - t_end);
                AttitudeSample {
                    q: q_end.then(&Quaternion::from_rotation_vector(&rv.map(f64::to_radians))),
                    omega_dps: track,
                }
            }
        })
        .collect())
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    // Always consume one draw so the stream layout does not depend on the knobs.
    let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
    z * sigma
}

/// Six coarse Sun sensor ADC counts.
pub fn simulate_css<R: Rng>(
    q_true: &Quaternion,
    sun_eci: &Vec3,
    earth_eci: &Vec3,
    sunlit: bool,
    err: &CssErrors,
    panels: &PanelMap,
    rng: &mut R,
) -> [u32; 6] {
    let s_b = quat_rotate(q_true, sun_eci);
    let e_b = quat_rotate(q_true, earth_eci);
    let lit = if sunlit { 1.0 } else { 0.0 };
    let mut out = [0u32; 6];
    for (p, o) in out.iter_mut().enumerate() {
        let n = panels.normal(p);
        let v = err.gain[p] * n.dot(&s_b).max(0.0) * lit
            + err.albedo[p] * n.dot(&e_b).max(0.0)
            + err.bias[p]
            + gaussian(rng, err.noise);
        *o = v.round().max(0.0) as u32;
    }
    out
}

/// Three magnetometer ADC counts and a saturation flag.
pub fn simulate_mag<R: Rng>(q_true: &Quaternion, field_eci: &Vec3, err: &MagErrors, rng: &mut R) -> ([i32; 3], bool) {
    let b_b = quat_rotate(q_true, field_eci);
    let mis = Dcm::from_quaternion(&Quaternion::from_rotation_vector(
        &Vec3::from(err.misalignment_deg).map(f64::to_radians),
    ));
    let sensed = mis.apply(&b_b) + Vec3::from(err.hard_iron);
    let mut saturated = false;
    let mut out = [0i32; 3];
    for a in 0..3 {
        let noise = gaussian(rng, err.noise);
        let mut g = sensed[a];
        if g.abs() > MAG_RANGE_GAUSS {
            saturated = true;
            g = g.clamp(-MAG_RANGE_GAUSS, MAG_RANGE_GAUSS);
        }
        let lo = err.reference[a] - MAG_RANGE_GAUSS * err.scale;
        let hi = err.reference[a] + MAG_RANGE_GAUSS * err.scale;
        out[a] = (err.reference[a] + err.scale * g + noise).round().clamp(lo, hi) as i32;
    }
    (out, saturated)
}

/// Gyro rates, deg/s.
pub fn simulate_gyro<R: Rng>(omega_dps: &Vec3, err: &GyroErrors, rng: &mut R) -> Vec3 {
    let mut w = omega_dps + Vec3::from(err.bias);
    for a in 0..3 {
        w[a] += gaussian(rng, err.noise);
    }
    w
}

pub fn synth_pass(sc: &Scenario) -> Result<PassLog> {
    let profile = make_attitude_profile(sc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut records = Vec::with_capacity(PASS_LEN);
    let mut sunlit_flags = Vec::with_capacity(PASS_LEN);
    let mut saturated = Vec::with_capacity(PASS_LEN);
    let mut css_err = sc.errors.css.clone();
    for (k, att) in profile.iter().enumerate() {
        let t = sc.orbit.epoch + k as f64;
        let (refs, field) = ref_vectors(&sc.orbit, &sc.dipole, t)?;
        let sunlit = !sc.eclipse && is_sunlit(&refs.position, &refs.sun);
        // no albedo from the night side
        css_err.albedo = if sunlit { sc.errors.css.albedo } else { [0.0; 6] };
        let css = simulate_css(&att.q, &refs.sun, &refs.earth, sunlit, &css_err, &sc.errors.panels, &mut rng);
        let (mag, sat) = simulate_mag(&att.q, &field, &sc.errors.mag, &mut rng);
        let w = simulate_gyro(&att.omega_dps, &sc.errors.gyro, &mut rng);
        records.push(PassRecord {
            t: k as f64,
            css,
            mag,
            w,
            sun_eci: refs.sun,
            mag_eci: refs.mag,
            r_eci: refs.position,
            q_true: att.q,
        });
        sunlit_flags.push(sunlit);
        saturated.push(sat);
    }
    let log = PassLog {
        id: sc.id.clone(),
        records,
        manifest: PassManifest {
            pass_id: sc.id.clone(),
            seed: sc.seed,
            scenario_hash: sc.hash(),
            epoch_utc: sc.orbit.epoch,
            scenario: Some(sc.clone()),
            sunlit: sunlit_flags,
            mag_saturated: saturated,
        },
    };
    log.validate()?;
    Ok(log)
}

/// Largest rotation between consecutive samples, deg.
pub fn max_step_rotation_deg(profile: &[AttitudeSample]) -> f64 {
    profile
        .windows(2)
        .map(|w| quat_angle_rad(&w[0].q, &w[1].q).to_degrees())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::rotation::vector_angle_deg;
    use approx::assert_abs_diff_eq;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn hold_scenario() -> Scenario {
        let mut sc = catalog::zero_error_catalog(1).remove(0);
        sc.maneuver = Maneuver::hold();
        sc
    }

    #[test]
    fn zero_maneuver_is_constant() {
        let p = make_attitude_profile(&hold_scenario()).unwrap();
        assert_eq!(p.len(), PASS_LEN);
        for s in &p {
            assert_eq!(quat_angle_rad(&s.q, &p[0].q), 0.0);
            assert_eq!(s.omega_dps, Vec3::zeros());
        }
    }

    #[test]
    fn slew_reaches_target_at_hand_computed_time() {
        let mut sc = hold_scenario();
        sc.maneuver = Maneuver {
            axis: [0.0, 1.0, 0.0],
            magnitude_deg: 40.0,
            start_s: 60.0,
            rate_limit_dps: 0.5,
            accel_dps2: 0.05,
            track_rate_dps: [0.0; 3],
        };
        // 10 s ramp up (2.5 deg), 70 s cruise (35 deg), 10 s ramp down (2.5 deg): done at 150 s
        let p = make_attitude_profile(&sc).unwrap();
        let ang = |k: usize| quat_angle_rad(&p[k].q, &p[0].q).to_degrees();
        assert_abs_diff_eq!(ang(150), 40.0, epsilon = 0.1);
        assert_abs_diff_eq!(ang(200), 40.0, epsilon = 1e-9);
        assert!(ang(140) < 39.9);
        assert_abs_diff_eq!(ang(60), 0.0, epsilon = 1e-12);
        assert!(max_step_rotation_deg(&p) <= 0.5 + 1e-9);
    }

    #[test]
    fn catalog_profiles_respect_rate_limit_and_finite_differences() {
        for sc in catalog::biased_catalog(1) {
            let p = make_attitude_profile(&sc).unwrap();
            assert!(max_step_rotation_deg(&p) <= sc.maneuver.rate_limit_dps + 1e-9);
            // central-difference body rate vs the analytic one, deg/s
            for k in 1..PASS_LEN - 1 {
                // q[k+1] = q[k-1].then(rot(omega * 2 s)) for a body-fixed rate
                let rel = p[k - 1].q.conjugate().hamilton(&p[k + 1].q).canonical();
                let v = rel.vector();
                let rv = if v.norm() > 0.0 { v.normalize() * rel.angle() } else { v };
                let fd_dps = rv.map(f64::to_degrees) / 2.0;
                let err = (fd_dps - p[k].omega_dps).norm();
                assert!(err < 0.06, "step {k}: fd {fd_dps:?} vs {:?}", p[k].omega_dps);
            }
        }
    }

    #[test]
    fn infeasible_slew_is_rejected() {
        let mut sc = hold_scenario();
        sc.maneuver.magnitude_deg = 170.0;
        sc.maneuver.start_s = 60.0;
        sc.maneuver.rate_limit_dps = 0.5;
        assert!(matches!(make_attitude_profile(&sc), Err(Error::ScenarioInfeasible(_))));
    }

    #[test]
    fn invalid_rate_limit_is_rejected() {
        let mut sc = hold_scenario();
        sc.maneuver.rate_limit_dps = 6.0;
        assert!(make_attitude_profile(&sc).is_err());
        sc.maneuver.rate_limit_dps = 0.0;
        assert!(make_attitude_profile(&sc).is_err());
    }

    #[test]
    fn css_single_illuminated_panel() {
        let mut err = SensorErrors::zero().css;
        err.bias = [7.0; 6];
        let c = simulate_css(
            &Quaternion::IDENTITY,
            &Vec3::x(),
            &-Vec3::x(),
            true,
            &err,
            &PanelMap::default(),
            &mut rng(),
        );
        assert_eq!(c, [1007, 7, 7, 7, 7, 7]);
    }

    #[test]
    fn css_eclipse_reads_bias() {
        let mut err = SensorErrors::zero().css;
        err.bias = [12.0, 9.0, 11.0, 10.0, 8.0, 13.0];
        let c = simulate_css(
            &Quaternion::IDENTITY,
            &Vec3::new(0.3, 0.5, 0.8).normalize(),
            &-Vec3::z(),
            false,
            &err,
            &PanelMap::default(),
            &mut rng(),
        );
        assert_eq!(c, [12, 9, 11, 10, 8, 13]);
    }

    #[test]
    fn css_cosine_law() {
        let mut err = SensorErrors::zero().css;
        err.bias = [5.0; 6];
        let s = Vec3::new(1.0, 1.0, 0.0).normalize();
        let c = simulate_css(&Quaternion::IDENTITY, &s, &-s, true, &err, &PanelMap::default(), &mut rng());
        // round(1000 * 0.70711 + 5) = 712
        assert_eq!(c[0], 712);
        assert_eq!(c[2], 712);
        assert_eq!(c[1], 5);
    }

    #[test]
    fn mag_sign_convention() {
        let err = SensorErrors::zero().mag;
        let (c, sat) = simulate_mag(&Quaternion::IDENTITY, &Vec3::zeros(), &err, &mut rng());
        assert_eq!(c, [4096; 3]);
        assert!(!sat);
        let (c, _) = simulate_mag(&Quaternion::IDENTITY, &Vec3::new(0.25, 0.0, -0.25), &err, &mut rng());
        assert_eq!(c, [4096 + 500, 4096, 4096 - 500]);
        let (c, sat) = simulate_mag(&Quaternion::IDENTITY, &Vec3::new(2.5, 0.0, 0.0), &err, &mut rng());
        assert!(sat);
        assert_eq!(c[0], 4096 + 4000);
    }

    #[test]
    fn mag_misalignment_shifts_direction() {
        let mut err = SensorErrors::zero().mag;
        err.misalignment_deg = [0.0, 0.0, 2.0];
        let b = Vec3::new(0.3, 0.0, 0.1);
        let (c, _) = simulate_mag(&Quaternion::IDENTITY, &b, &err, &mut rng());
        let rec = Vec3::new(c[0] as f64 - 4096.0, c[1] as f64 - 4096.0, c[2] as f64 - 4096.0);
        // quantization bound: 0.5 count on ~630 counts in-plane
        let q_bound = (0.5f64 * 3f64.sqrt() / 600.0).to_degrees();
        // only the in-plane component rotates: expected angle = 2 deg * |b_xy| / |b| projected
        let expected = vector_angle_deg(
            &b,
            &Dcm::from_quaternion(&Quaternion::from_axis_angle(&Vec3::z(), 2f64.to_radians())).apply(&b),
        );
        assert!((vector_angle_deg(&rec, &b) - expected).abs() < q_bound);
        assert!(expected > 1.8 && expected <= 2.0);
    }

    #[test]
    fn gyro_examples() {
        let z = GyroErrors { bias: [0.0; 3], noise: 0.0 };
        assert_eq!(simulate_gyro(&Vec3::zeros(), &z, &mut rng()), Vec3::zeros());
        let b = GyroErrors { bias: [0.01, 0.0, 0.0], noise: 0.0 };
        assert_eq!(simulate_gyro(&Vec3::zeros(), &b, &mut rng()), Vec3::new(0.01, 0.0, 0.0));
    }

    #[test]
    fn gyro_bias_statistics() {
        let sc = &catalog::biased_catalog(3)[0];
        let log = synth_pass(sc).unwrap();
        let profile = make_attitude_profile(sc).unwrap();
        let sigma = sc.errors.gyro.noise;
        for a in 0..3 {
            let mean = log
                .records
                .iter()
                .zip(&profile)
                .map(|(r, p)| r.w[a] - p.omega_dps[a])
                .sum::<f64>()
                / PASS_LEN as f64;
            let tol = 3.0 * sigma / (PASS_LEN as f64).sqrt();
            assert!((mean - sc.errors.gyro.bias[a]).abs() < tol, "axis {a}: {mean}");
        }
    }

    #[test]
    fn synth_is_deterministic_and_has_schema() {
        let sc = &catalog::biased_catalog(9)[2];
        let a = synth_pass(sc).unwrap();
        let b = synth_pass(sc).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(a.records.len(), PASS_LEN);
        assert_eq!(a.manifest.seed, sc.seed);
        assert_eq!(a.manifest.scenario_hash, sc.hash());
    }

    #[test]
    fn eclipse_pass_reads_bias() {
        for sc in catalog::eclipse_catalog(1) {
            let log = synth_pass(&sc).unwrap();
            assert!(log.manifest.sunlit.iter().all(|s| !s));
            let noise = sc.errors.css.noise;
            for r in &log.records {
                for p in 0..6 {
                    assert!((r.css[p] as f64 - sc.errors.css.bias[p]).abs() <= 5.0 * noise + 0.5);
                }
            }
        }
    }
}
