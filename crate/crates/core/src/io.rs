//! JSON file formats. Item and slot indices are 1-based on disk.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroupSample, Instance, Ranking, Structure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub structure: Structure,
    /// Intrinsic values; utilities follow the DCG discount.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    /// Explicit `m x n` utilities.
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub utilities: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P")]
    pub probs: Vec<Vec<f64>>,
    /// `m x p` 0/1 membership.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<Vec<u8>>>,
}

fn to_matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<Array2<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "{what} row {} has {} entries, expected {cols}",
            i + 1,
            r.len()
        )));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

fn from_matrix<T: Copy>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        let probs = to_matrix(&self.probs, self.p, "P")?;
        if probs.nrows() != self.m {
            return Err(Error::DimensionMismatch(format!("P has {} rows, m = {}", probs.nrows(), self.m)));
        }
        let truth = match &self.truth {
            None => None,
            Some(rows) => {
                if rows.len() != self.m {
                    return Err(Error::DimensionMismatch(format!("truth has {} rows, m = {}", rows.len(), self.m)));
                }
                let mut mem = Array2::from_elem((self.m, self.p), false);
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != self.p {
                        return Err(Error::DimensionMismatch(format!("truth row {} has {} entries", i + 1, row.len())));
                    }
                    for (l, &v) in row.iter().enumerate() {
                        mem[[i, l]] = match v {
                            0 => false,
                            1 => true,
                            _ => return Err(Error::Parse(format!("truth entry ({}, {}) is {v}, not 0/1", i + 1, l + 1))),
                        };
                    }
                }
                Some(GroupSample::new(mem))
            }
        };
        match (self.w, self.utilities) {
            (Some(w), None) => {
                if w.len() != self.m {
                    return Err(Error::DimensionMismatch(format!("w has {} entries, m = {}", w.len(), self.m)));
                }
                Instance::from_values(w, self.n, probs, self.structure, truth)
            }
            (None, Some(rows)) => {
                let w = to_matrix(&rows, self.n, "W")?;
                if w.nrows() != self.m {
                    return Err(Error::DimensionMismatch(format!("W has {} rows, m = {}", w.nrows(), self.m)));
                }
                Instance::new(w, probs, self.structure, truth)
            }
            _ => Err(Error::Parse("exactly one of \"w\" and \"W\" must be given".into())),
        }
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let (w, utilities) = match inst.values() {
            Some(v) => (Some(v.to_vec()), None),
            None => (None, Some(from_matrix(inst.utilities()))),
        };
        Self {
            m: inst.m(),
            n: inst.n(),
            p: inst.p(),
            structure: inst.structure(),
            w,
            utilities,
            probs: from_matrix(inst.probs()),
            truth: inst
                .truth()
                .map(|g| g.membership().rows().into_iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect()),
        }
    }
}

pub fn instance_from_json(s: &str) -> Result<Instance> {
    serde_json::from_str::<InstanceFile>(s)?.into_instance()
}

pub fn instance_to_json(inst: &Instance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?)
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    instance_from_json(&fs::read_to_string(path)?)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &Instance) -> Result<()> {
    Ok(fs::write(path, instance_to_json(inst)? + "\n")?)
}

/// An externally produced `m x p` probability matrix (JSON array of rows).
pub fn read_probs(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(path)?)?;
    let cols = rows.first().map_or(0, Vec::len);
    to_matrix(&rows, cols, "P")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingFile {
    pub m: usize,
    /// 1-based item per slot.
    pub slots: Vec<usize>,
}

pub fn ranking_to_json(r: &Ranking, m: usize) -> Result<String> {
    let file = RankingFile {
        m,
        slots: r.slots().iter().map(|i| i + 1).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Returns the ranking and its item count.
pub fn ranking_from_json(s: &str) -> Result<(Ranking, usize)> {
    let file: RankingFile = serde_json::from_str(s)?;
    if file.slots.contains(&0) {
        return Err(Error::InvalidRanking("item indices are 1-based".into()));
    }
    let r = Ranking::new(file.slots.iter().map(|i| i - 1).collect(), file.m)?;
    Ok((r, file.m))
}

pub fn read_ranking(path: impl AsRef<Path>) -> Result<(Ranking, usize)> {
    ranking_from_json(&fs::read_to_string(path)?)
}

pub fn write_ranking(path: impl AsRef<Path>, r: &Ranking, m: usize) -> Result<()> {
    Ok(fs::write(path, ranking_to_json(r, m)? + "\n")?)
}
