//! Input features (up to 21 channels), MRP labels, ablation cases and
//! sliding-window datasets.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::passlog::PassLog;
use crate::rotation::{quat_to_mrp, Mrp, Vec3};
use crate::synth::{PanelMap, NOMINAL_MAG_REF, NOMINAL_MAG_SCALE};

/// Largest supported window length.
pub const MAX_WINDOW: usize = 11;
pub const NUM_GROUPS: usize = 7;

/// The seven 3-channel vector groups, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "uS_c")]
    SunSensor,
    #[serde(rename = "uB_m")]
    MagSensor,
    #[serde(rename = "uE_c")]
    EarthSensor,
    #[serde(rename = "uS_i")]
    SunModel,
    #[serde(rename = "uB_i")]
    MagModel,
    #[serde(rename = "uE_i")]
    EarthModel,
    #[serde(rename = "W_g")]
    Gyro,
}

impl Group {
    pub const ALL: [Group; NUM_GROUPS] = [
        Group::SunSensor,
        Group::MagSensor,
        Group::EarthSensor,
        Group::SunModel,
        Group::MagModel,
        Group::EarthModel,
        Group::Gyro,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::SunSensor => "uS_c",
            Group::MagSensor => "uB_m",
            Group::EarthSensor => "uE_c",
            Group::SunModel => "uS_i",
            Group::MagModel => "uB_i",
            Group::EarthModel => "uE_i",
            Group::Gyro => "W_g",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One time step of features. Unavailable groups hold exact zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub values: [Vec3; NUM_GROUPS],
    pub available: [bool; NUM_GROUPS],
}

impl FeatureFrame {
    pub fn vector(&self, g: Group) -> Vec3 {
        self.values[g.index()]
    }

    pub fn get(&self, g: Group) -> Option<Vec3> {
        self.available[g.index()].then(|| self.values[g.index()])
    }

    /// Channels of the selected groups, in group order.
    pub fn select(&self, case: &CaseSpec, out: &mut Vec<f64>) {
        for g in case.groups() {
            out.extend_from_slice(self.values[g.index()].as_slice());
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Dark-count estimate subtracted from each CSS channel.
    pub css_bias: [f64; 6],
    /// Minimum Sun-side count (after bias removal) for the CSS vectors to be
    /// considered lit.
    pub css_sun_threshold: f64,
    pub mag_reference: [f64; 3],
    /// Counts per gauss.
    pub mag_scale: f64,
    pub panels: PanelMap,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            css_bias: [0.0; 6],
            css_sun_threshold: 100.0,
            mag_reference: [NOMINAL_MAG_REF; 3],
            mag_scale: NOMINAL_MAG_SCALE,
            panels: PanelMap::default(),
        }
    }
}

fn unit_or_unavailable(v: Vec3) -> (Vec3, bool) {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        (v / n, true)
    } else {
        (Vec3::zeros(), false)
    }
}

/// Sun (`uS_c`) and Earth-albedo (`uE_c`) directions from six CSS counts.
///
/// For each axis the larger bias-removed reading of the `(+axis, -axis)` pair
/// gives the Sun component and the smaller one the Earth component, negated
/// when it comes from the negative-facing panel. Ties go to the positive panel.
/// Returns `((uS_c, available), (uE_c, available))`.
pub fn css_to_sun_earth(
    css: &[u32; 6],
    bias: &[f64; 6],
    panels: &PanelMap,
    sun_threshold: f64,
) -> ((Vec3, bool), (Vec3, bool)) {
    let v = |p: usize| (css[p] as f64 - bias[p]).max(0.0);
    let mut sun = Vec3::zeros();
    let mut earth = Vec3::zeros();
    for axis in 0..3 {
        let (pos, neg) = panels.pair(axis);
        let (vp, vn) = (v(pos), v(neg));
        if vp >= vn {
            sun[axis] = vp;
            earth[axis] = -vn;
        } else {
            sun[axis] = -vn;
            earth[axis] = vp;
        }
    }
    if sun.amax() < sun_threshold {
        return ((Vec3::zeros(), false), (Vec3::zeros(), false));
    }
    (unit_or_unavailable(sun), unit_or_unavailable(earth))
}

/// Magnetic field direction from three ADC counts.
pub fn mag_to_unit(mag: &[i32; 3], reference: &[f64; 3], scale: f64) -> (Vec3, bool) {
    let b = Vec3::new(
        (mag[0] as f64 - reference[0]) / scale,
        (mag[1] as f64 - reference[1]) / scale,
        (mag[2] as f64 - reference[2]) / scale,
    );
    unit_or_unavailable(b)
}

/// Common gyro scale fitted on training passes only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GyroScale(pub f64);

impl GyroScale {
    pub fn apply(&self, w: &Vec3) -> Vec3 {
        w / self.0
    }
}

/// Largest absolute gyro component over the training passes.
pub fn fit_gyro_scale(train: &[&PassLog]) -> Result<GyroScale> {
    if train.is_empty() {
        return Err(invalid("gyro scale needs at least one training pass"));
    }
    let m = train
        .iter()
        .flat_map(|p| p.records.iter())
        .flat_map(|r| r.w.iter().copied())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Configuration("gyro data is all zero; scale is undefined".into()));
    }
    Ok(GyroScale(m))
}

/// Fit the scale on `train` and return the scaled gyro sequences with it.
pub fn scale_gyro(train: &[&PassLog]) -> Result<(Vec<Vec<Vec3>>, GyroScale)> {
    let s = fit_gyro_scale(train)?;
    let seqs = train.iter().map(|p| p.records.iter().map(|r| s.apply(&r.w)).collect()).collect();
    Ok((seqs, s))
}

/// Feature frames of one pass. `W_g` has been divided by `gyro_scale` once.
#[derive(Debug, Clone, PartialEq)]
pub struct PassFeatures {
    pub pass_id: String,
    pub frames: Vec<FeatureFrame>,
    pub gyro_scale: GyroScale,
}

pub fn build_frames(pass: &PassLog, cfg: &FeatureConfig, gyro_scale: GyroScale) -> PassFeatures {
    let frames = pass
        .records
        .iter()
        .map(|r| {
            let ((us, us_ok), (ue, ue_ok)) =
                css_to_sun_earth(&r.css, &cfg.css_bias, &cfg.panels, cfg.css_sun_threshold);
            let (ub, ub_ok) = mag_to_unit(&r.mag, &cfg.mag_reference, cfg.mag_scale);
            let (si, si_ok) = unit_or_unavailable(r.sun_eci);
            let (bi, bi_ok) = unit_or_unavailable(r.mag_eci);
            let (ei, ei_ok) = unit_or_unavailable(-r.r_eci);
            FeatureFrame {
                values: [us, ub, ue, si, bi, ei, gyro_scale.apply(&r.w)],
                available: [us_ok, ub_ok, ue_ok, si_ok, bi_ok, ei_ok, true],
            }
        })
        .collect();
    PassFeatures { pass_id: pass.id.clone(), frames, gyro_scale }
}

/// Canonical-quaternion MRP label per record.
pub fn attitude_labels(pass: &PassLog) -> Result<Vec<Mrp>> {
    pass.records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let n = r.q_true.norm();
            if !((n - 1.0).abs() <= 1e-6) {
                return Err(Error::DataIntegrity(format!(
                    "pass {}: truth quaternion at record {k} has norm {n}",
                    pass.id
                )));
            }
            quat_to_mrp(&r.q_true.normalize()?)
        })
        .collect()
}

/// A channel selection over the seven groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: String,
    pub include: [bool; NUM_GROUPS],
}

impl CaseSpec {
    pub fn new(id: &str, groups: &[Group]) -> Self {
        let mut include = [false; NUM_GROUPS];
        for g in groups {
            include[g.index()] = true;
        }
        CaseSpec { id: id.to_string(), include }
    }

    pub fn groups(&self) -> impl Iterator<Item = Group> + '_ {
        Group::ALL.into_iter().filter(|g| self.include[g.index()])
    }

    pub fn includes(&self, g: Group) -> bool {
        self.include[g.index()]
    }

    pub fn channels(&self) -> usize {
        3 * self.groups().count()
    }

    fn without(&self, id: &str, removed: &[Group]) -> Self {
        let mut c = self.clone();
        c.id = id.to_string();
        for g in removed {
            c.include[g.index()] = false;
        }
        c
    }
}

/// The ablation cases C1a..C4f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCatalog {
    pub cases: Vec<CaseSpec>,
}

const MAG_GROUPS: [Group; 2] = [Group::MagSensor, Group::MagModel];
const SUN_GROUPS: [Group; 3] = [Group::SunSensor, Group::EarthSensor, Group::SunModel];

impl CaseCatalog {
    pub fn case1() -> Vec<CaseSpec> {
        use Group::*;
        vec![
            CaseSpec::new("C1a", &[SunSensor, MagSensor]),
            CaseSpec::new("C1b", &[SunSensor, MagSensor, EarthSensor]),
            CaseSpec::new("C1c", &[SunSensor, MagSensor, SunModel, MagModel]),
            CaseSpec::new("C1d", &[SunSensor, MagSensor, SunModel, MagModel, EarthModel]),
            CaseSpec::new("C1e", &[SunSensor, MagSensor, EarthSensor, SunModel, MagModel, EarthModel]),
            CaseSpec::new("C1f", &Group::ALL),
        ]
    }

    /// C1 minus both magnetic groups.
    pub fn case2() -> Vec<CaseSpec> {
        Self::case1()
            .iter()
            .map(|c| c.without(&c.id.replacen("C1", "C2", 1), &MAG_GROUPS))
            .collect()
    }

    /// C1 minus the three Sun groups; `include_omitted` adds C3b and C3e,
    /// which duplicate C3a and C3d.
    pub fn case3(include_omitted: bool) -> Vec<CaseSpec> {
        Self::case1()
            .iter()
            .filter(|c| include_omitted || !matches!(c.id.as_str(), "C1b" | "C1e"))
            .map(|c| c.without(&c.id.replacen("C1", "C3", 1), &SUN_GROUPS))
            .collect()
    }

    pub fn case4() -> Vec<CaseSpec> {
        vec![CaseSpec::new("C4f", &[Group::Gyro])]
    }

    pub fn standard() -> Self {
        Self::with_omitted(false)
    }

    pub fn with_omitted(include_omitted: bool) -> Self {
        let mut cases = Self::case1();
        cases.extend(Self::case2());
        cases.extend(Self::case3(include_omitted));
        cases.extend(Self::case4());
        CaseCatalog { cases }
    }

    pub fn get(&self, id: &str) -> Option<&CaseSpec> {
        self.cases.iter().find(|c| c.id.eq_ignore_ascii_case(id))
    }

    /// Parse `all` or a comma-separated list of case ids.
    pub fn select(&self, spec: &str) -> Result<CaseCatalog> {
        if spec.trim().eq_ignore_ascii_case("all") {
            return Ok(self.clone());
        }
        let cases = spec
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|id| self.get(id).cloned().ok_or_else(|| invalid(format!("unknown case {id:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if cases.is_empty() {
            return Err(invalid("empty case list"));
        }
        Ok(CaseCatalog { cases })
    }
}

impl FromStr for CaseSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CaseCatalog::with_omitted(true)
            .get(s)
            .cloned()
            .ok_or_else(|| invalid(format!("unknown case {s:?}")))
    }
}

/// Windowed supervised dataset. Row `k` of `x` is the `n x channels` window
/// (time-major) whose label `y[k]` is the attitude at the window's last step.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub x: Array2<f64>,
    pub y: Vec<Mrp>,
    /// `(pass index, step of the label)` per window.
    pub origin: Vec<(usize, usize)>,
    pub n: usize,
    pub channels: usize,
    pub case_id: String,
    pub pass_ids: Vec<String>,
    pub shuffle_seed: Option<u64>,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// One JSON object per window: `{"pass", "step", "x", "y"}`.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (k, (&(p, step), y)) in self.origin.iter().zip(&self.y).enumerate() {
            let row = self.x.row(k);
            let x: Vec<&[f64]> = row.as_slice().expect("standard layout").chunks(self.channels).collect();
            let line = serde_json::json!({
                "pass": self.pass_ids[p],
                "step": step,
                "x": x,
                "y": y.as_array(),
            });
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

pub fn check_window(n: usize) -> Result<()> {
    if !(1..=MAX_WINDOW).contains(&n) {
        return Err(invalid(format!("window length {n} outside 1..={MAX_WINDOW}")));
    }
    Ok(())
}

/// Verify every group the case needs is present at every step.
pub fn check_case_feasible(frames: &PassFeatures, case: &CaseSpec) -> Result<()> {
    for g in case.groups() {
        if let Some(step) = frames.frames.iter().position(|f| !f.available[g.index()]) {
            return Err(Error::CaseInfeasible {
                case: case.id.clone(),
                group: g,
                pass: frames.pass_id.clone(),
                step,
            });
        }
    }
    Ok(())
}

/// Flattened window ending at `last` (inclusive).
pub fn window_at(frames: &[FeatureFrame], last: usize, n: usize, case: &CaseSpec, out: &mut Vec<f64>) {
    out.clear();
    for fr in &frames[last + 1 - n..=last] {
        fr.select(case, out);
    }
}

pub fn build_windows(passes: &[PassFeatures], labels: &[Vec<Mrp>], n: usize, case: &CaseSpec) -> Result<WindowDataset> {
    check_window(n)?;
    if passes.len() != labels.len() {
        return Err(invalid("one label sequence per pass is required"));
    }
    let channels = case.channels();
    if channels == 0 {
        return Err(invalid(format!("case {} selects no channels", case.id)));
    }
    let mut total = 0;
    for (p, l) in passes.iter().zip(labels) {
        check_case_feasible(p, case)?;
        if p.frames.len() != l.len() {
            return Err(invalid(format!("pass {}: {} frames but {} labels", p.pass_id, p.frames.len(), l.len())));
        }
        total += p.frames.len().saturating_sub(n - 1);
    }
    let width = n * channels;
    let mut data = Vec::with_capacity(total * width);
    let mut y = Vec::with_capacity(total);
    let mut origin = Vec::with_capacity(total);
    let mut buf = Vec::with_capacity(width);
    for (pi, (p, l)) in passes.iter().zip(labels).enumerate() {
        for last in n - 1..p.frames.len() {
            window_at(&p.frames, last, n, case, &mut buf);
            data.extend_from_slice(&buf);
            y.push(l[last]);
            origin.push((pi, last));
        }
    }
    Ok(WindowDataset {
        x: Array2::from_shape_vec((total, width), data).expect("consistent shape"),
        y,
        origin,
        n,
        channels,
        case_id: case.id.clone(),
        pass_ids: passes.iter().map(|p| p.pass_id.clone()).collect(),
        shuffle_seed: None,
    })
}

/// Deterministic permutation of the windows, keeping each `(x, y)` pair intact.
pub fn shuffle_windows(ds: &WindowDataset, seed: u64) -> WindowDataset {
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let x = ds.x.select(ndarray::Axis(0), &perm);
    WindowDataset {
        x,
        y: perm.iter().map(|&i| ds.y[i]).collect(),
        origin: perm.iter().map(|&i| ds.origin[i]).collect(),
        shuffle_seed: Some(seed),
        ..ds.clone()
    }
}
