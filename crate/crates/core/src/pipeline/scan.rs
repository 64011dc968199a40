//! Phase scans: the fraction of shots classified PM as a function of h.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::dataset::{ground_state, sample_window, shot_seed};
use super::{fmt_field, read_json, write_atomic, PipelineConfig};
use crate::discriminator::{ProductSample, PM};
use crate::error::{Error, Result};
use crate::imps::{optimize_imps, ImpsModel, ImpsOptions};
use crate::linalg::derive_seed;
use crate::mps::{Basis, ShotRecord};
use crate::par;
use crate::runtime::{infer_entangled, sample_label, CompiledModel, TestState, DEFAULT_QUBIT_CAP};
use crate::stats::{wilson_interval, ShotTally, Z90};

const TAG_SCAN_SHOTS: u64 = 4;
const TAG_IMPS: u64 = 5;
const TAG_CIRCUIT_SHOTS: u64 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    Product,
    Entangled,
}

/// One row of a scan CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub h: f64,
    pub mode: ScanMode,
    pub shots: usize,
    pub fraction_pm: f64,
    pub wilson_half_width: f64,
    /// Discriminator bond dimension; 0 for the random-forest baseline.
    pub chi: usize,
    /// Test-state bond dimension in entangled mode.
    pub chi_i: Option<usize>,
}

impl ScanPoint {
    fn from_labels(h: f64, mode: ScanMode, labels: &[usize], chi: usize, chi_i: Option<usize>) -> Result<Self> {
        let pm = labels.iter().filter(|&&l| l == PM).count() as u64;
        let tally = ShotTally {
            n0: labels.len() as u64 - pm,
            n1: pm,
        };
        // interval on the PM fraction is the mirror image of the class-0 one
        let (_, half) = wilson_interval(tally, Z90)?;
        Ok(ScanPoint {
            h,
            mode,
            shots: labels.len(),
            fraction_pm: pm as f64 / labels.len() as f64,
            wilson_half_width: half,
            chi,
            chi_i,
        })
    }
}

/// Fresh z- and x-basis shots from the ground state at one field.
#[derive(Clone, Debug)]
pub struct FieldSamples {
    pub h: f64,
    pub samples: Vec<ProductSample>,
}

/// Ground states over `grid`, each sampled with `cfg.scan_shots` shots per
/// basis on substreams disjoint from the training data.
pub fn scan_samples(cfg: &PipelineConfig, grid: &[f64]) -> Result<Vec<FieldSamples>> {
    let base = derive_seed(cfg.seed, &[TAG_SCAN_SHOTS]);
    par::map_indexed(grid.len(), |k| {
        let h = grid[k];
        let gs = ground_state(h, cfg.f, cfg.chi_max, cfg.eps, cfg.h_z2, cfg.seed)?;
        let mut samples = Vec::with_capacity(2 * cfg.scan_shots);
        for basis in [Basis::Z, Basis::X] {
            for outcomes in sample_window(&gs, cfg.window_start(), cfg.l, basis, cfg.scan_shots, shot_seed(base, h, basis))? {
                let rec = ShotRecord {
                    basis,
                    outcomes,
                    label: usize::from(h > 1.0),
                    h_source: h,
                };
                samples.push(ProductSample {
                    x: rec.amplitudes(),
                    label: rec.label,
                });
            }
        }
        Ok(FieldSamples { h, samples })
    })
    .into_iter()
    .collect()
}

/// Classifies every shot at each field with `classify` and reports the PM
/// fraction.
pub fn product_scan<F>(fields: &[FieldSamples], chi: usize, classify: F) -> Result<Vec<ScanPoint>>
where
    F: Fn(&[ProductSample]) -> Result<Vec<usize>>,
{
    fields
        .iter()
        .map(|f| ScanPoint::from_labels(f.h, ScanMode::Product, &classify(&f.samples)?, chi, None))
        .collect()
}

pub fn imps_file_name(h: f64, chi_i: usize) -> String {
    format!("imps_chi{chi_i}_h{}.json", fmt_field(h))
}

/// Optimized iMPS test state at one field.
pub fn imps_at(h: f64, cfg: &PipelineConfig, chi_i: usize) -> Result<ImpsModel> {
    let opts = ImpsOptions {
        restarts: cfg.imps_restarts.max(1),
        ..ImpsOptions::default()
    };
    optimize_imps(h, chi_i, cfg.nb_prime, derive_seed(cfg.seed, &[TAG_IMPS, h.to_bits(), chi_i as u64]), &opts)
}

/// Entangled-mode scan from iMPS files in `dir`. Fields without a file are
/// skipped with a warning.
pub fn entangled_scan(model: &CompiledModel, dir: &Path, grid: &[f64], chi_i: usize, shots: usize, seed: u64) -> Result<Vec<ScanPoint>> {
    if shots == 0 {
        return Err(Error::invalid("entangled scan needs at least one shot"));
    }
    let rows = par::map_indexed(grid.len(), |k| -> Result<Option<ScanPoint>> {
        let h = grid[k];
        let path = dir.join(imps_file_name(h, chi_i));
        if !path.exists() {
            warn!("no iMPS file for h={h} at chi_i={chi_i}; skipping");
            return Ok(None);
        }
        let imps: ImpsModel = read_json(&path)?;
        let dist = infer_entangled(model, &TestState::from_imps(&imps)?, DEFAULT_QUBIT_CAP)?;
        let labels = sample_label(&dist, shots, derive_seed(seed, &[TAG_CIRCUIT_SHOTS, h.to_bits(), model.chi as u64, chi_i as u64]));
        ScanPoint::from_labels(h, ScanMode::Entangled, &labels, model.chi, Some(chi_i)).map(Some)
    });
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_csv(path: &Path, points: &[ScanPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

pub fn read_csv(path: &Path) -> Result<Vec<ScanPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::invalid(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.csv");
        let pts = vec![
            ScanPoint::from_labels(0.5, ScanMode::Product, &[0, 0, 1, 0], 2, None).unwrap(),
            ScanPoint::from_labels(1.5, ScanMode::Entangled, &[1, 1, 1, 0], 4, Some(4)).unwrap(),
        ];
        assert_eq!(pts[0].fraction_pm, 0.25);
        write_csv(&p, &pts).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "h,mode,shots,fraction_pm,wilson_half_width,chi,chi_i");
        assert_eq!(read_csv(&p).unwrap(), pts);
    }
}
