//! The cached end-to-end runner. Every stage is keyed by a SHA-256 of its
//! parameters and the keys of the stages it reads from; a stage whose key is
//! unchanged and whose outputs are on disk is not recomputed.

use std::path::Path;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{gen_dataset, Dataset, GenParams};
use super::forest::{baseline_random_forest, BaselineReport};
use super::regression::{fit_transition, RegressionResult};
use super::scan::{entangled_scan, imps_at, imps_file_name, product_scan, scan_samples, write_csv, ScanPoint};
use super::{read_json, write_atomic, write_json, PipelineConfig};
use crate::compiler::{compile_model, diagonal_gauge, CompileConfig};
use crate::discriminator::{self, f1_on, DiscriminatorTensors, Hyper, ModelFile, ProductSample, TrainSchedule};
use crate::error::{Error, Result};
use crate::par;
use crate::runtime::{self, finetune_parameters, CompiledModel, FinetuneConfig, MarginCost};

/// Number of uniform P_SS histogram bins on [0, 1].
pub const PSS_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Computed,
    Cached,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub status: StageStatus,
    /// Wall time of the run that produced the outputs, cached or not.
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CacheEntry<T> {
    key: String,
    outputs: Vec<String>,
    seconds: f64,
    result: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub files: Vec<String>,
    pub energies: Vec<(f64, f64)>,
    pub all_converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_cost: f64,
    pub train_f1: f64,
    pub test_f1: f64,
    pub mean_pss: f64,
    pub restart_costs: Vec<f64>,
    pub stalled: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeReport {
    pub cost_before: f64,
    pub cost_after: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompileReport {
    /// CNOTs per circuit in R, G, D, C order.
    pub cnots: [usize; 4],
    pub distances: [f64; 4],
    /// F1 of the compiled circuits run with postselection.
    pub f1_postselected: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinetuneReport {
    /// Compiled angles run without postselection, before fine-tuning.
    pub f1_no_postselection: f64,
    pub train_f1: f64,
    pub test_f1: f64,
    pub mean_pss: f64,
    pub epoch_costs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelReport {
    pub chi: usize,
    pub train: TrainReport,
    pub gauge: GaugeReport,
    pub compile: CompileReport,
    pub finetune: FinetuneReport,
    pub tensors: String,
    pub circuits: String,
    pub finetuned: String,
    pub pss_histogram: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanReport {
    pub name: String,
    pub csv: String,
    pub fit: Option<RegressionResult>,
}

/// Summary of a run; written as `manifest.json` in the output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub data: DataSummary,
    pub baseline: BaselineReport,
    pub models: Vec<ModelReport>,
    pub scans: Vec<ScanReport>,
}

fn hash_key<T: Serialize>(name: &str, material: &T) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(material).expect("key material serializes"));
    format!("{:x}", h.finalize())
}

struct Runner<'a> {
    out: &'a Path,
    stages: Vec<StageRecord>,
}

impl Runner<'_> {
    /// Runs `compute` unless a cache entry with the same key exists and all
    /// listed outputs are present.
    fn stage<K, T, F>(&mut self, name: &str, material: &K, outputs: &[String], compute: F) -> Result<(String, T)>
    where
        K: Serialize,
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let key = hash_key(name, material);
        let cache = self.out.join(".cache").join(format!("{name}.json"));
        if cache.exists() {
            if let Ok(entry) = read_json::<CacheEntry<T>>(&cache) {
                if entry.key == key && entry.outputs == outputs && outputs.iter().all(|o| self.out.join(o).exists()) {
                    info!("stage {name}: cached");
                    self.stages.push(StageRecord {
                        name: name.to_string(),
                        key: key.clone(),
                        status: StageStatus::Cached,
                        seconds: entry.seconds,
                    });
                    return Ok((key, entry.result));
                }
            }
        }
        info!("stage {name}: running");
        let start = std::time::Instant::now();
        let result = compute().map_err(|e| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        })?;
        let seconds = start.elapsed().as_secs_f64();
        write_json(
            &cache,
            &CacheEntry {
                key: key.clone(),
                outputs: outputs.to_vec(),
                seconds,
                result: &result,
            },
        )?;
        self.stages.push(StageRecord {
            name: name.to_string(),
            key: key.clone(),
            status: StageStatus::Computed,
            seconds,
        });
        Ok((key, result))
    }
}

pub fn train_schedule(cfg: &PipelineConfig) -> TrainSchedule {
    TrainSchedule {
        restarts: cfg.restarts,
        ..TrainSchedule::default()
    }
}

pub fn compile_config(cfg: &PipelineConfig) -> CompileConfig {
    CompileConfig {
        tol: cfg.tol,
        beam: cfg.beam,
        max_cnots: cfg.max_cnots,
        seed: cfg.seed,
        ..CompileConfig::default()
    }
}

pub fn finetune_config(cfg: &PipelineConfig) -> FinetuneConfig {
    FinetuneConfig {
        cost: MarginCost {
            lambda: cfg.lambda,
            eta: cfg.eta,
        },
        epochs: cfg.epochs,
        ..FinetuneConfig::default()
    }
}

pub fn hyper_for(cfg: &PipelineConfig, chi: usize) -> Hyper {
    Hyper {
        chi,
        nb: cfg.nb,
        l: cfg.l,
        nc: 2,
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

/// Trains one discriminator and stores its metrics on the model.
pub fn train_model(cfg: &PipelineConfig, chi: usize, train: &[ProductSample], test: &[ProductSample]) -> Result<(DiscriminatorTensors, TrainReport)> {
    let out = discriminator::train_discriminator(train, hyper_for(cfg, chi), cfg.seed, &train_schedule(cfg))?;
    let mut model = out.model;
    let (_, pss) = discriminator::evaluate(&model, train)?;
    let report = TrainReport {
        train_cost: out.cost,
        train_f1: f1_on(&model, train)?.average,
        test_f1: if test.is_empty() { f64::NAN } else { f1_on(&model, test)?.average },
        mean_pss: mean(&pss),
        restart_costs: out.restart_costs,
        stalled: out.stalled,
    };
    model.metrics.train_cost = Some(report.train_cost);
    model.metrics.train_f1 = Some(report.train_f1);
    model.metrics.test_f1 = Some(report.test_f1).filter(|x| x.is_finite());
    model.metrics.mean_pss = Some(report.mean_pss);
    model.metrics.stalled = report.stalled;
    Ok((model, report))
}

pub fn compile_discriminator(cfg: &PipelineConfig, model: &DiscriminatorTensors, train: &[ProductSample]) -> Result<(CompiledModel, CompileReport)> {
    let outs = compile_model(model, &compile_config(cfg))?;
    let cnots = [0, 1, 2, 3].map(|k| outs[k].circuit.cnot_count());
    let distances = [0, 1, 2, 3].map(|k| outs[k].distance);
    let compiled = CompiledModel::from_circuits(model.hyper, outs.map(|o| o.circuit))?;
    let f1_postselected = f1_on(&compiled.postselected_tensors()?, train)?.average;
    Ok((
        compiled,
        CompileReport {
            cnots,
            distances,
            f1_postselected,
        },
    ))
}

pub fn finetune_model(cfg: &PipelineConfig, compiled: &CompiledModel, train: &[ProductSample], test: &[ProductSample]) -> Result<(CompiledModel, FinetuneReport)> {
    let ft = finetune_parameters(compiled, train, &finetune_config(cfg))?;
    let (_, pss) = runtime::evaluate(&ft.model, train)?;
    let report = FinetuneReport {
        f1_no_postselection: ft.f1_before,
        train_f1: ft.f1_after,
        test_f1: if test.is_empty() { f64::NAN } else { runtime::f1_on(&ft.model, test)? },
        mean_pss: mean(&pss),
        epoch_costs: ft.epoch_costs,
    };
    Ok((ft.model, report))
}

/// Counts of P_SS values in `PSS_BINS` uniform bins on [0, 1].
pub fn pss_histogram(pss: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; PSS_BINS];
    for &p in pss {
        let b = ((p.clamp(0.0, 1.0) * PSS_BINS as f64) as usize).min(PSS_BINS - 1);
        counts[b] += 1;
    }
    counts
}

fn write_histogram(path: &Path, tensor: &[f64], circuit: &[f64]) -> Result<()> {
    let (ht, hc) = (pss_histogram(tensor), pss_histogram(circuit));
    let mut text = String::from("bin_lo,bin_hi,tensor,circuit\n");
    for b in 0..PSS_BINS {
        let lo = b as f64 / PSS_BINS as f64;
        let hi = (b + 1) as f64 / PSS_BINS as f64;
        text.push_str(&format!("{lo},{hi},{},{}\n", ht[b], hc[b]));
    }
    write_atomic(path, text.as_bytes())
}

/// Runs every stage under `out`, reusing cached stages, and writes the
/// manifest.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let mut r = Runner { out, stages: Vec::new() };

    let gen = GenParams::from_config(cfg);
    let gen_key_material = (
        &gen.fields,
        gen.shots_per_basis,
        gen.f,
        gen.l,
        gen.chi_max,
        gen.eps,
        gen.h_z2,
        gen.train_fraction,
        gen.seed,
    );
    let data_dir = out.join("data");
    let (data_key, data) = r.stage("gen-data", &gen_key_material, &["data/split.json".to_string()], || {
        let d = gen_dataset(&gen)?;
        d.write(&data_dir)?;
        Ok(DataSummary {
            n_train: d.split.train.len(),
            n_test: d.split.test.len(),
            files: d.split.files.clone(),
            energies: d.files.iter().step_by(2).map(|f| (f.h, f.energy)).collect(),
            all_converged: d.files.iter().all(|f| f.converged),
        })
    })?;
    let dataset = Dataset::read(&data_dir)?;
    let (train, test) = (dataset.train(), dataset.test());

    let (rf_key, baseline) = r.stage("baseline-rf", &(&data_key, cfg.rf_trees, cfg.seed), &["baseline/rf.json".to_string()], || {
        let (_, rep) = baseline_random_forest(&train, &test, cfg.rf_trees, cfg.seed)?;
        write_json(&out.join("baseline/rf.json"), &rep)?;
        Ok(rep)
    })?;

    let mut models = Vec::new();
    let mut model_keys = Vec::new();
    for &chi in &cfg.chi {
        let dir = format!("models/chi{chi}");
        let tensors = format!("{dir}/tensors.json");
        let gauged = format!("{dir}/gauged.json");
        let circuits = format!("{dir}/circuits.json");
        let finetuned = format!("{dir}/finetuned.json");
        let hist = format!("{dir}/pss_histogram.csv");

        let (tk, train_rep) = r.stage(&format!("train-chi{chi}"), &(&data_key, chi, cfg.nb, cfg.l, cfg.restarts, cfg.seed), &[tensors.clone()], || {
            let (m, rep) = train_model(cfg, chi, &train, &test)?;
            write_json(&out.join(&tensors), &ModelFile::from(&m))?;
            Ok(rep)
        })?;
        let (gk, gauge_rep) = r.stage(&format!("gauge-chi{chi}"), &(&tk, cfg.gauge_restarts, cfg.seed), &[gauged.clone()], || {
            let m = DiscriminatorTensors::try_from(&read_json::<ModelFile>(&out.join(&tensors))?)?;
            let g = diagonal_gauge(&m, cfg.gauge_restarts, cfg.seed)?;
            write_json(&out.join(&gauged), &ModelFile::from(&g.model))?;
            Ok(GaugeReport {
                cost_before: g.cost_before,
                cost_after: g.cost_after,
            })
        })?;
        let (ck, compile_rep) = r.stage(&format!("compile-chi{chi}"), &(&gk, cfg.tol, cfg.beam, cfg.max_cnots, cfg.seed), &[circuits.clone()], || {
            let m = DiscriminatorTensors::try_from(&read_json::<ModelFile>(&out.join(&gauged))?)?;
            let (c, rep) = compile_discriminator(cfg, &m, &train)?;
            write_json(&out.join(&circuits), &c)?;
            Ok(rep)
        })?;
        let (fk, ft_rep) = r.stage(&format!("finetune-chi{chi}"), &(&ck, cfg.lambda, cfg.eta, cfg.epochs), &[finetuned.clone()], || {
            let c: CompiledModel = read_json(&out.join(&circuits))?;
            let (m, rep) = finetune_model(cfg, &c, &train, &test)?;
            write_json(&out.join(&finetuned), &m)?;
            Ok(rep)
        })?;
        r.stage(&format!("evaluate-chi{chi}"), &(&tk, &fk), &[hist.clone()], || {
            let m = DiscriminatorTensors::try_from(&read_json::<ModelFile>(&out.join(&tensors))?)?;
            let c: CompiledModel = read_json(&out.join(&finetuned))?;
            let (_, pt) = discriminator::evaluate(&m, &train)?;
            let (_, pc) = runtime::evaluate(&c, &train)?;
            write_histogram(&out.join(&hist), &pt, &pc)?;
            Ok(())
        })?;
        model_keys.push((chi, tk, fk));
        models.push(ModelReport {
            chi,
            train: train_rep,
            gauge: gauge_rep,
            compile: compile_rep,
            finetune: ft_rep,
            tensors,
            circuits,
            finetuned,
            pss_histogram: hist,
        });
    }

    // iMPS test states over the scan grid
    let imps_names: Vec<String> = cfg.scan_h.iter().map(|&h| format!("imps/{}", imps_file_name(h, cfg.chi_i))).collect();
    let (imps_key, ()) = r.stage(
        &format!("imps-chi{}", cfg.chi_i),
        &(&cfg.scan_h, cfg.chi_i, cfg.nb_prime, cfg.imps_restarts, cfg.seed),
        &imps_names,
        || {
            let done = par::map_indexed(cfg.scan_h.len(), |k| -> Result<()> {
                let m = imps_at(cfg.scan_h[k], cfg, cfg.chi_i)?;
                write_json(&out.join(&imps_names[k]), &m)
            });
            done.into_iter().collect::<Result<Vec<()>>>()?;
            Ok(())
        },
    )?;

    let mut scan_jobs: Vec<(String, String)> = Vec::new();
    let product_names: Vec<String> = std::iter::once("product_rf".to_string())
        .chain(cfg.chi.iter().flat_map(|c| [format!("product_tensor_chi{c}"), format!("product_circuit_chi{c}")]))
        .collect();
    let product_files: Vec<String> = product_names.iter().map(|n| format!("scans/{n}.csv")).collect();
    r.stage("scan-product", &(&rf_key, &model_keys, &cfg.scan_h, cfg.scan_shots, cfg.f, cfg.chi_max, cfg.eps, cfg.h_z2, cfg.seed), &product_files, || {
        let fields = scan_samples(cfg, &cfg.scan_h)?;
        let (rf, _) = baseline_random_forest(&train, &test, cfg.rf_trees, cfg.seed)?;
        let pts = product_scan(&fields, 0, |s| Ok(s.iter().map(|x| rf.predict(&super::forest::features(x))).collect()))?;
        write_csv(&out.join(&product_files[0]), &pts)?;
        for (k, m) in models.iter().enumerate() {
            let t = DiscriminatorTensors::try_from(&read_json::<ModelFile>(&out.join(&m.tensors))?)?;
            let c: CompiledModel = read_json(&out.join(&m.finetuned))?;
            let pt = product_scan(&fields, m.chi, |s| Ok(discriminator::evaluate(&t, s)?.0))?;
            let pc = product_scan(&fields, m.chi, |s| Ok(runtime::evaluate(&c, s)?.0))?;
            write_csv(&out.join(&product_files[1 + 2 * k]), &pt)?;
            write_csv(&out.join(&product_files[2 + 2 * k]), &pc)?;
        }
        Ok(())
    })?;
    scan_jobs.extend(product_names.iter().cloned().zip(product_files.iter().cloned()));

    for (m, (_, _, fk)) in models.iter().zip(&model_keys) {
        let name = format!("entangled_chi{}_chii{}", m.chi, cfg.chi_i);
        let file = format!("scans/{name}.csv");
        r.stage(&format!("scan-{name}"), &(fk, &imps_key, cfg.entangled_shots, &cfg.scan_h, cfg.seed), &[file.clone()], || {
            let c: CompiledModel = read_json(&out.join(&m.finetuned))?;
            let pts = entangled_scan(&c, &out.join("imps"), &cfg.scan_h, cfg.chi_i, cfg.entangled_shots, cfg.seed)?;
            write_csv(&out.join(&file), &pts)?;
            Ok(())
        })?;
        scan_jobs.push((name, file));
    }

    let mut scans = Vec::new();
    for (name, file) in scan_jobs {
        let pts: Vec<ScanPoint> = super::scan::read_csv(&out.join(&file))?;
        let fit = fit_transition(&pts, cfg.fit_points).ok();
        scans.push(ScanReport { name, csv: file, fit });
    }
    write_json(&out.join("fits.json"), &scans)?;

    let manifest = Manifest {
        config: cfg.clone(),
        stages: r.stages,
        data,
        baseline,
        models,
        scans,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
