use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fmt_field, read_json, write_json, PipelineConfig};
use crate::discriminator::ProductSample;
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, seeded_rng};
use crate::mps::{build_tfim_mpo, ground_state_search, Basis, DmrgConfig, DmrgResult, LocalBasis, SamplingWindow, ShotRecord};

const TAG_DMRG: u64 = 1;
const TAG_SHOTS: u64 = 2;
const TAG_SPLIT: u64 = 3;

/// Shots of one basis at one field. Serialized as one JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    #[serde(rename = "L")]
    pub l: usize,
    pub h: f64,
    pub basis: Basis,
    /// Seed the shots were drawn from; shot k uses substream k.
    pub seed: u64,
    pub shots: Vec<Vec<u8>>,
    pub label: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub window_start: usize,
    pub energy: f64,
    pub converged: bool,
}

impl DatasetFile {
    pub fn file_name(&self) -> String {
        format!("shots_h{}_{}.json", fmt_field(self.h), self.basis.as_str())
    }

    pub fn records(&self) -> impl Iterator<Item = ShotRecord> + '_ {
        self.shots.iter().map(|s| ShotRecord {
            basis: self.basis,
            outcomes: s.clone(),
            label: self.label,
            h_source: self.h,
        })
    }
}

/// Train/test assignment of every shot as (file index, shot index) pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub files: Vec<String>,
    pub train: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub files: Vec<DatasetFile>,
    pub split: Split,
}

/// Parameters of dataset generation. Every (field, label) pair contributes
/// `shots_per_basis` shots in each of the z and x bases.
#[derive(Clone, Debug)]
pub struct GenParams {
    pub fields: Vec<(f64, usize)>,
    pub shots_per_basis: usize,
    pub f: usize,
    pub l: usize,
    pub chi_max: usize,
    pub eps: f64,
    pub h_z2: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl GenParams {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        GenParams {
            fields: vec![(cfg.h_afm, crate::discriminator::AFM), (cfg.h_pm, crate::discriminator::PM)],
            shots_per_basis: cfg.shots,
            f: cfg.f,
            l: cfg.l,
            chi_max: cfg.chi_max,
            eps: cfg.eps,
            h_z2: cfg.h_z2,
            train_fraction: cfg.train_fraction,
            seed: cfg.seed,
        }
    }

    pub fn window_start(&self) -> usize {
        (self.f - self.l) / 2
    }
}

/// Ground state of the biased TFIM on `f` sites. Non-convergence is logged
/// and the best state is kept.
pub fn ground_state(h: f64, f: usize, chi_max: usize, eps: f64, h_z2: f64, seed: u64) -> Result<DmrgResult> {
    if !(h >= 0.0) {
        return Err(Error::invalid(format!("field {h} must be non-negative")));
    }
    let mpo = build_tfim_mpo(f, h, h_z2)?;
    let cfg = DmrgConfig {
        chi_max,
        eps,
        seed: derive_seed(seed, &[TAG_DMRG, h.to_bits()]),
        ..DmrgConfig::default()
    };
    let res = ground_state_search(&mpo, &cfg)?;
    if !res.converged {
        warn!("ground state at h={h} not converged after {} sweeps (E={:.10})", res.sweeps, res.energy);
    }
    Ok(res)
}

/// Draws `n` shots in `basis` from the centered window of a ground state.
pub fn sample_window(gs: &DmrgResult, start: usize, l: usize, basis: Basis, n: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    let window = SamplingWindow::prepare(&gs.mps, start, &vec![LocalBasis::of(basis); l])?;
    window.sample_many(n, seed)
}

pub fn shot_seed(seed: u64, h: f64, basis: Basis) -> u64 {
    derive_seed(seed, &[TAG_SHOTS, h.to_bits(), basis as u64])
}

pub fn gen_dataset(p: &GenParams) -> Result<Dataset> {
    if p.l == 0 || p.l > p.f || p.f < 2 {
        return Err(Error::invalid(format!("need 0 < L ≤ F and F ≥ 2, got L={} F={}", p.l, p.f)));
    }
    if p.shots_per_basis == 0 || p.fields.is_empty() {
        return Err(Error::invalid("need at least one field and one shot"));
    }
    if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let start = p.window_start();
    let mut files = Vec::new();
    for &(h, label) in &p.fields {
        let gs = ground_state(h, p.f, p.chi_max, p.eps, p.h_z2, p.seed)?;
        for basis in [Basis::Z, Basis::X] {
            let seed = shot_seed(p.seed, h, basis);
            files.push(DatasetFile {
                l: p.l,
                h,
                basis,
                seed,
                shots: sample_window(&gs, start, p.l, basis, p.shots_per_basis, seed)?,
                label,
                f: p.f,
                window_start: start,
                energy: gs.energy,
                converged: gs.converged,
            });
        }
    }
    let split = split_shots(&files, p.train_fraction, p.seed);
    Ok(Dataset { files, split })
}

/// Seeded shuffle of all shots, then the first `round(fraction·n)` train.
pub fn split_shots(files: &[DatasetFile], fraction: f64, seed: u64) -> Split {
    let mut all: Vec<(usize, usize)> = files
        .iter()
        .enumerate()
        .flat_map(|(fi, f)| (0..f.shots.len()).map(move |k| (fi, k)))
        .collect();
    let split_seed = derive_seed(seed, &[TAG_SPLIT]);
    all.shuffle(&mut seeded_rng(split_seed, 0));
    let n_train = (fraction * all.len() as f64).round() as usize;
    let test = all.split_off(n_train);
    Split {
        seed: split_seed,
        files: files.iter().map(DatasetFile::file_name).collect(),
        train: all,
        test,
    }
}

impl Dataset {
    fn samples(&self, idx: &[(usize, usize)]) -> Vec<ProductSample> {
        idx.iter()
            .map(|&(fi, k)| {
                let f = &self.files[fi];
                let rec = ShotRecord {
                    basis: f.basis,
                    outcomes: f.shots[k].clone(),
                    label: f.label,
                    h_source: f.h,
                };
                ProductSample {
                    x: rec.amplitudes(),
                    label: f.label,
                }
            })
            .collect()
    }

    pub fn train(&self) -> Vec<ProductSample> {
        self.samples(&self.split.train)
    }

    pub fn test(&self) -> Vec<ProductSample> {
        self.samples(&self.split.test)
    }

    pub fn n_shots(&self) -> usize {
        self.files.iter().map(|f| f.shots.len()).sum()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            write_json(&dir.join(f.file_name()), f)?;
        }
        write_json(&dir.join("split.json"), &self.split)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let split: Split = read_json(&dir.join("split.json"))?;
        let files = split
            .files
            .iter()
            .map(|name| read_json::<DatasetFile>(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        let n = files.iter().map(|f| f.shots.len()).sum::<usize>();
        let in_range = |&(fi, k): &(usize, usize)| fi < files.len() && k < files[fi].shots.len();
        if split.train.len() + split.test.len() != n || !split.train.iter().chain(&split.test).all(in_range) {
            return Err(Error::invalid(format!("split in {} does not match the shot files", dir.display())));
        }
        Ok(Dataset { files, split })
    }
}
