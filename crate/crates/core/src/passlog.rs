//! Pass log schema and its on-disk form: one CSV per pass plus a sidecar
//! JSON manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{Quaternion, Vec3};
use crate::synth::Scenario;

/// Bumped whenever the CSV columns or the manifest fields change.
pub const PASSLOG_FORMAT_VERSION: u32 = 1;

/// Samples per pass (six minutes at 1 Hz).
pub const PASS_LEN: usize = 362;

pub const CSV_HEADER: [&str; 26] = [
    "t", "css0", "css1", "css2", "css3", "css4", "css5", "mag0", "mag1", "mag2", "w0", "w1", "w2", "uSx", "uSy",
    "uSz", "uBx", "uBy", "uBz", "rx", "ry", "rz", "qx", "qy", "qz", "qw",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PassRecord {
    /// Seconds from the start of the pass.
    pub t: f64,
    pub css: [u32; 6],
    pub mag: [i32; 3],
    /// Gyro rates, deg/s.
    pub w: Vec3,
    pub sun_eci: Vec3,
    pub mag_eci: Vec3,
    /// km.
    pub r_eci: Vec3,
    pub q_true: Quaternion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassManifest {
    pub pass_id: String,
    pub seed: u64,
    pub scenario_hash: String,
    pub epoch_utc: f64,
    pub scenario: Option<Scenario>,
    pub sunlit: Vec<bool>,
    #[serde(default)]
    pub mag_saturated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassLog {
    pub id: String,
    pub records: Vec<PassRecord>,
    pub manifest: PassManifest,
}

fn push_row(out: &mut String, r: &PassRecord) {
    let q = &r.q_true;
    let _ = write!(out, "{}", r.t);
    for c in r.css {
        let _ = write!(out, ",{c}");
    }
    for c in r.mag {
        let _ = write!(out, ",{c}");
    }
    for v in [&r.w, &r.sun_eci, &r.mag_eci, &r.r_eci] {
        let _ = write!(out, ",{},{},{}", v.x, v.y, v.z);
    }
    let _ = writeln!(out, ",{},{},{},{}", q.x, q.y, q.z, q.w);
}

impl PassLog {
    pub fn validate(&self) -> Result<()> {
        if self.records.len() != PASS_LEN {
            return Err(Error::DataIntegrity(format!(
                "pass {} has {} records, expected {PASS_LEN}",
                self.id,
                self.records.len()
            )));
        }
        for (k, w) in self.records.windows(2).enumerate() {
            if (w[1].t - w[0].t - 1.0).abs() > 1e-9 {
                return Err(Error::DataIntegrity(format!(
                    "pass {}: sample spacing {} s between records {k} and {}",
                    self.id,
                    w[1].t - w[0].t,
                    k + 1
                )));
            }
        }
        for (k, r) in self.records.iter().enumerate() {
            if !((r.q_true.norm() - 1.0).abs() <= 1e-6) {
                return Err(Error::DataIntegrity(format!(
                    "pass {}: truth quaternion at record {k} has norm {}",
                    self.id,
                    r.q_true.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 320);
        out.push_str(&CSV_HEADER.join(","));
        out.push('\n');
        for r in &self.records {
            push_row(&mut out, r);
        }
        out
    }

    /// Paths of the CSV and its manifest for pass `id` under `dir`.
    pub fn paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{id}.csv")), dir.join(format!("{id}.manifest.json")))
    }

    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let (csv_path, man_path) = Self::paths(dir, &self.id);
        std::fs::write(&csv_path, self.to_csv_string())?;
        std::fs::write(&man_path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok((csv_path, man_path))
    }

    /// Read a pass CSV; the sidecar manifest is used when present.
    pub fn read(csv_path: &Path) -> Result<PassLog> {
        let id = csv_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("pass")
            .to_string();
        let text = std::fs::read_to_string(csv_path)?;
        let records = parse_csv(&text, &id)?;
        let man_path = csv_path.with_file_name(format!("{id}.manifest.json"));
        let manifest = if man_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&man_path)?)?
        } else {
            PassManifest {
                pass_id: id.clone(),
                seed: 0,
                scenario_hash: String::new(),
                epoch_utc: 0.0,
                scenario: None,
                sunlit: vec![true; records.len()],
                mag_saturated: vec![false; records.len()],
            }
        };
        let log = PassLog { id: manifest.pass_id.clone(), records, manifest };
        log.validate()?;
        Ok(log)
    }
}

pub fn parse_csv(text: &str, id: &str) -> Result<Vec<PassRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 26];
    let missing: Vec<&str> = CSV_HEADER
        .iter()
        .enumerate()
        .filter_map(|(i, name)| match headers.iter().position(|h| h == *name) {
            Some(p) => {
                idx[i] = p;
                None
            }
            None => Some(*name),
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::DataIntegrity(format!("pass {id}: missing columns {}", missing.join(","))));
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(idx[i]).ok_or_else(|| {
                Error::DataIntegrity(format!("pass {id}: row {} lacks column {}", row + 1, CSV_HEADER[i]))
            })
        };
        let f = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>().map_err(|_| {
                Error::DataIntegrity(format!("pass {id}: row {} column {}: not a number: {s:?}", row + 1, CSV_HEADER[i]))
            })
        };
        let int = |i: usize| -> Result<i64> {
            let s = field(i)?;
            s.parse::<i64>().map_err(|_| {
                Error::DataIntegrity(format!("pass {id}: row {} column {}: not an integer: {s:?}", row + 1, CSV_HEADER[i]))
            })
        };
        let mut css = [0u32; 6];
        for (p, c) in css.iter_mut().enumerate() {
            let v = int(1 + p)?;
            *c = u32::try_from(v).map_err(|_| {
                Error::DataIntegrity(format!("pass {id}: row {}: negative CSS count {v}", row + 1))
            })?;
        }
        let mut mag = [0i32; 3];
        for (a, c) in mag.iter_mut().enumerate() {
            *c = int(7 + a)? as i32;
        }
        let v3 = |o: usize| -> Result<Vec3> { Ok(Vec3::new(f(o)?, f(o + 1)?, f(o + 2)?)) };
        records.push(PassRecord {
            t: f(0)?,
            css,
            mag,
            w: v3(10)?,
            sun_eci: v3(13)?,
            mag_eci: v3(16)?,
            r_eci: v3(19)?,
            q_true: Quaternion::new(f(22)?, f(23)?, f(24)?, f(25)?),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::synth::synth_pass;

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let log = synth_pass(&catalog::biased_catalog(4)[1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, _) = log.write(dir.path()).unwrap();
        let back = PassLog::read(&csv_path).unwrap();
        assert_eq!(back, log);
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), PASS_LEN + 1);
        assert!(text.starts_with("t,css0,css1,css2,css3,css4,css5,mag0,mag1,mag2,w0,w1,w2,uSx,uSy,uSz,uBx,uBy,uBz,rx,ry,rz,qx,qy,qz,qw\n"));
    }

    #[test]
    fn missing_column_is_named() {
        let log = synth_pass(&catalog::biased_catalog(4)[0]).unwrap();
        let text = log.to_csv_string().replacen("mag1", "magX", 1);
        let err = parse_csv(&text, "P").unwrap_err().to_string();
        assert!(err.contains("mag1"), "{err}");
    }

    #[test]
    fn irregular_spacing_is_rejected() {
        let mut log = synth_pass(&catalog::biased_catalog(4)[0]).unwrap();
        log.records[10].t += 0.5;
        assert!(matches!(log.validate(), Err(Error::DataIntegrity(_))));
    }
}
