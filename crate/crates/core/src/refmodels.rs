//! Deterministic reference models: circular Kepler orbit, low-precision solar
//! ephemeris, tilted centered dipole and the nadir (Earth) direction.
//!
//! Time is UTC seconds since 1970-01-01T00:00:00Z. The ECI frame is a fixed
//! mean-equator frame; Earth rotation only enters through the dipole phase.

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rotation::Vec3;

pub const EARTH_RADIUS_KM: f64 = 6378.137;
pub const MU_EARTH: f64 = 398_600.4418;
const JD_UNIX_EPOCH: f64 = 2_440_587.5;
const JD_J2000: f64 = 2_451_545.0;

/// UTC seconds for a calendar instant.
pub fn utc_seconds(year: i32, month: u32, day: u32, hour: u32, min: u32, sec: f64) -> f64 {
    let dt: NaiveDateTime = NaiveDate::from_ymd_opt(year, month, day)
        .and_then(|d| d.and_hms_opt(hour, min, 0))
        .expect("valid calendar date");
    dt.and_utc().timestamp() as f64 + sec
}

pub fn julian_date(t: f64) -> f64 {
    t / 86_400.0 + JD_UNIX_EPOCH
}

/// Greenwich mean sidereal angle, radians in `[0, 2pi)`.
pub fn gmst_rad(t: f64) -> f64 {
    let d = julian_date(t) - JD_J2000;
    (280.460_618_37 + 360.985_647_366_29 * d).rem_euclid(360.0).to_radians()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitElements {
    pub semimajor_axis_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    /// Argument of latitude at `epoch`.
    pub arg_latitude_deg: f64,
    pub epoch: f64,
}

impl OrbitElements {
    pub fn validate(&self) -> Result<()> {
        if !(self.semimajor_axis_km > EARTH_RADIUS_KM) {
            return Err(invalid(format!(
                "semimajor axis {} km is not above the Earth surface",
                self.semimajor_axis_km
            )));
        }
        Ok(())
    }

    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH / self.semimajor_axis_km.powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion()
    }

    /// Elements of a circular orbit passing through the given ECI direction
    /// (right ascension / declination) at time `t_pass`, on its ascending
    /// half, with the epoch set to `epoch`.
    pub fn through_direction(
        semimajor_axis_km: f64,
        inclination_deg: f64,
        ra_deg: f64,
        dec_deg: f64,
        t_pass: f64,
        epoch: f64,
    ) -> Result<Self> {
        let inc = inclination_deg.to_radians();
        let dec = dec_deg.to_radians();
        let sin_u = dec.sin() / inc.sin();
        if !(-1.0..=1.0).contains(&sin_u) {
            return Err(invalid(format!(
                "declination {dec_deg} deg unreachable at inclination {inclination_deg} deg"
            )));
        }
        let u = sin_u.asin();
        let ra_offset = (inc.cos() * u.sin()).atan2(u.cos());
        let raan = ra_deg.to_radians() - ra_offset;
        let mut el = OrbitElements {
            semimajor_axis_km,
            inclination_deg,
            raan_deg: raan.to_degrees().rem_euclid(360.0),
            arg_latitude_deg: 0.0,
            epoch,
        };
        el.validate()?;
        let u0 = u - el.mean_motion() * (t_pass - epoch);
        el.arg_latitude_deg = u0.to_degrees();
        Ok(el)
    }
}

/// Position in ECI (km) of a circular orbit.
pub fn propagate_orbit(el: &OrbitElements, t: f64) -> Result<Vec3> {
    el.validate()?;
    if t < el.epoch {
        return Err(invalid(format!("time {t} precedes epoch {}", el.epoch)));
    }
    let u = el.arg_latitude_deg.to_radians() + el.mean_motion() * (t - el.epoch);
    let (su, cu) = u.sin_cos();
    let (so, co) = el.raan_deg.to_radians().sin_cos();
    let (si, ci) = el.inclination_deg.to_radians().sin_cos();
    let a = el.semimajor_axis_km;
    Ok(Vec3::new(
        a * (co * cu - so * su * ci),
        a * (so * cu + co * su * ci),
        a * su * si,
    ))
}

/// Geocentric unit Sun direction in ECI from the low-precision mean-elements
/// solar theory (about 0.01 deg over 1950-2050).
pub fn sun_direction_eci(t: f64) -> Vec3 {
    let n = julian_date(t) - JD_J2000;
    let mean_lon = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let g = (357.528 + 0.985_600_3 * n).rem_euclid(360.0).to_radians();
    let lambda = (mean_lon + 1.915 * g.sin() + 0.020 * (2.0 * g).sin()).to_radians();
    let eps = (23.439 - 0.000_000_4 * n).to_radians();
    let v = Vec3::new(lambda.cos(), eps.cos() * lambda.sin(), eps.sin() * lambda.sin());
    v / v.norm()
}

/// Tilted centered dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleModel {
    /// Equatorial surface field, gauss.
    pub b0_gauss: f64,
    /// Colatitude of the north geomagnetic pole, deg.
    pub tilt_deg: f64,
    /// East longitude of the north geomagnetic pole, deg.
    pub pole_lon_deg: f64,
}

impl Default for DipoleModel {
    fn default() -> Self {
        Self { b0_gauss: 0.306, tilt_deg: 11.5, pole_lon_deg: -72.6 }
    }
}

impl DipoleModel {
    pub fn aligned(b0_gauss: f64) -> Self {
        Self { b0_gauss, tilt_deg: 0.0, pole_lon_deg: 0.0 }
    }

    /// ECI unit vector towards the north geomagnetic pole.
    pub fn north_pole_eci(&self, t: f64) -> Vec3 {
        let colat = self.tilt_deg.to_radians();
        let lon = self.pole_lon_deg.to_radians() + gmst_rad(t);
        Vec3::new(colat.sin() * lon.cos(), colat.sin() * lon.sin(), colat.cos())
    }

    /// Field at ECI position `r_km`, gauss.
    pub fn field_eci(&self, r_km: &Vec3, t: f64) -> Vec3 {
        let r = r_km.norm();
        let rh = r_km / r;
        // dipole moment points to the southern geomagnetic pole
        let m = -self.north_pole_eci(t);
        let k = self.b0_gauss * (EARTH_RADIUS_KM / r).powi(3);
        (rh * (3.0 * m.dot(&rh)) - m) * k
    }
}

pub fn dipole_field_eci(r_km: &Vec3, t: f64) -> Vec3 {
    DipoleModel::default().field_eci(r_km, t)
}

/// Unit vector from the spacecraft to the Earth centre.
pub fn earth_direction(r_km: &Vec3) -> Result<Vec3> {
    let n = r_km.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("earth direction of a zero or non-finite position"));
    }
    Ok(-r_km / n)
}

/// Cylindrical-shadow sunlit test.
pub fn is_sunlit(r_km: &Vec3, sun: &Vec3) -> bool {
    let along = r_km.dot(sun);
    if along >= 0.0 {
        return true;
    }
    (r_km - sun * along).norm() > EARTH_RADIUS_KM
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefVectors {
    pub sun: Vec3,
    pub mag: Vec3,
    pub earth: Vec3,
    pub position: Vec3,
}

pub fn ref_vectors(el: &OrbitElements, dipole: &DipoleModel, t: f64) -> Result<(RefVectors, Vec3)> {
    let position = propagate_orbit(el, t)?;
    let field = dipole.field_eci(&position, t);
    let refs = RefVectors {
        sun: sun_direction_eci(t),
        mag: field / field.norm(),
        earth: earth_direction(&position)?,
        position,
    };
    Ok((refs, field))
}
