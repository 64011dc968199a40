use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tndisc::compiler::diagonal_gauge;
use tndisc::discriminator::{DiscriminatorTensors, ModelFile, PM};
use tndisc::imps::ImpsModel;
use tndisc::pipeline::dataset::{Dataset, GenParams};
use tndisc::pipeline::forest::{baseline_random_forest, features};
use tndisc::pipeline::run::{compile_discriminator, finetune_model, train_model};
use tndisc::pipeline::scan::{entangled_scan, imps_at, imps_file_name, product_scan, read_csv, scan_samples, write_csv};
use tndisc::pipeline::{fit_transition, gen_dataset, read_json, run_pipeline, write_json, PipelineConfig};
use tndisc::runtime::{self, infer_entangled, CompiledModel, TestState, DEFAULT_QUBIT_CAP};
use tndisc::stats::{class_from_samples, default_shot_cap};

#[derive(Parser)]
#[command(name = "tndisc", version, about = "Tensor-network discriminators for quantum phase data")]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample training shots from DMRG ground states and split them.
    GenData,
    /// Train a tensor-level discriminator.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        chi: usize,
    },
    /// Rotate the bond basis of a trained model toward diagonal dominance.
    Gauge {
        #[arg(long)]
        model: PathBuf,
    },
    /// Compile a model's unitary embeddings to CNOT + Ry circuits.
    Compile {
        #[arg(long)]
        model: PathBuf,
        /// Training data, used to report the postselected F1.
        #[arg(long)]
        data: PathBuf,
    },
    /// Optimize circuit angles for operation without postselection.
    Finetune {
        #[arg(long)]
        circuits: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Classify product-state data or an iMPS test state.
    Infer(InferArgs),
    /// Optimize an iMPS approximation of the TFIM ground state.
    Imps {
        #[arg(long)]
        h: f64,
        #[arg(long)]
        chi: usize,
    },
    /// Fraction of shots classified PM over a field grid.
    PhaseScan(ScanArgs),
    /// Weighted linear fit of a scan near the 50% crossing.
    FitTransition {
        #[arg(long)]
        csv: PathBuf,
        /// Number of points closest to 50% to fit.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run every stage with caching and write a manifest.
    RunPipeline,
    /// Random-forest baseline on the flattened shot amplitudes.
    BaselineRf {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
struct InferArgs {
    /// Compiled circuits (CPTP operation, no postselection).
    #[arg(long, conflicts_with = "model")]
    circuits: Option<PathBuf>,
    /// Tensor-level model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset directory; the test split is classified.
    #[arg(long)]
    data: Option<PathBuf>,
    /// iMPS test state, classified by entangled inference (needs --circuits).
    #[arg(long, conflicts_with = "data")]
    imps: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Product,
    Entangled,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, value_enum, default_value = "product")]
    mode: Mode,
    /// Compiled circuits to scan with.
    #[arg(long)]
    circuits: Option<PathBuf>,
    /// Tensor-level model to scan with (product mode).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Scan with a random forest trained on this dataset (product mode).
    #[arg(long)]
    rf_data: Option<PathBuf>,
    /// Directory of iMPS files (entangled mode); missing fields are skipped.
    #[arg(long)]
    imps_dir: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    write_json(&out.join(name), value)?;
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_model(p: &Path) -> Result<DiscriminatorTensors> {
    Ok(DiscriminatorTensors::try_from(&read_json::<ModelFile>(p)?)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::GenData => {
            let d = gen_dataset(&GenParams::from_config(&cfg))?;
            d.write(out)?;
            println!("{} shots ({} train, {} test) written to {}", d.n_shots(), d.split.train.len(), d.split.test.len(), out.display());
        }
        Cmd::Train { data, chi } => {
            let d = Dataset::read(data)?;
            let (m, rep) = train_model(&cfg, *chi, &d.train(), &d.test())?;
            write_json(&out.join(format!("tensors_chi{chi}.json")), &ModelFile::from(&m))?;
            emit(out, &format!("train_chi{chi}.json"), &rep)?;
        }
        Cmd::Gauge { model } => {
            let m = load_model(model)?;
            let g = diagonal_gauge(&m, cfg.gauge_restarts, cfg.seed)?;
            write_json(&out.join(format!("gauged_chi{}.json", m.hyper.chi)), &ModelFile::from(&g.model))?;
            println!("gauge cost {:.6} -> {:.6}", g.cost_before, g.cost_after);
        }
        Cmd::Compile { model, data } => {
            let m = load_model(model)?;
            let d = Dataset::read(data)?;
            let (c, rep) = compile_discriminator(&cfg, &m, &d.train())?;
            write_json(&out.join(format!("circuits_chi{}.json", m.hyper.chi)), &c)?;
            emit(out, &format!("compile_chi{}.json", m.hyper.chi), &rep)?;
        }
        Cmd::Finetune { circuits, data } => {
            let c: CompiledModel = read_json(circuits)?;
            let d = Dataset::read(data)?;
            let (m, rep) = finetune_model(&cfg, &c, &d.train(), &d.test())?;
            write_json(&out.join(format!("finetuned_chi{}.json", m.chi)), &m)?;
            emit(out, &format!("finetune_chi{}.json", m.chi), &rep)?;
        }
        Cmd::Infer(a) => infer(&cfg, out, a)?,
        Cmd::Imps { h, chi } => {
            let m = imps_at(*h, &cfg, *chi)?;
            write_json(&out.join(imps_file_name(*h, *chi)), &m)?;
            println!("e0 = {:.10}, burn-in cost = {:.3e}", m.e0, m.burn_in_cost);
        }
        Cmd::PhaseScan(a) => scan(&cfg, out, a)?,
        Cmd::FitTransition { csv, points } => {
            let pts = read_csv(csv)?;
            let fit = fit_transition(&pts, points.unwrap_or(cfg.fit_points))?;
            emit(out, "fit.json", &fit)?;
        }
        Cmd::RunPipeline => {
            let m = run_pipeline(&cfg, out)?;
            for s in &m.stages {
                println!("{:<28} {:?}", s.name, s.status);
            }
            println!("manifest: {}", out.join("manifest.json").display());
        }
        Cmd::BaselineRf { data } => {
            let d = Dataset::read(data)?;
            let (_, rep) = baseline_random_forest(&d.train(), &d.test(), cfg.rf_trees, cfg.seed)?;
            emit(out, "rf.json", &rep)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EntangledCall {
    p_pm: f64,
    label: usize,
    shots_used: usize,
    capped: bool,
}

fn infer(cfg: &PipelineConfig, out: &Path, a: &InferArgs) -> Result<()> {
    if let Some(imps) = &a.imps {
        let Some(circuits) = &a.circuits else {
            bail!("entangled inference needs --circuits");
        };
        let c: CompiledModel = read_json(circuits)?;
        let m: ImpsModel = read_json(imps)?;
        let dist = infer_entangled(&c, &TestState::from_imps(&m)?, DEFAULT_QUBIT_CAP)?;
        let mut k = 0u64;
        let labels = runtime::sample_label(&dist, default_shot_cap(cfg.p_star), cfg.seed);
        let call = class_from_samples(
            cfg.p_star,
            || {
                let l = labels[k as usize];
                k += 1;
                l as u8
            },
            labels.len(),
        )?;
        return emit(
            out,
            "entangled_call.json",
            &EntangledCall {
                p_pm: dist.diag[PM],
                label: call.label,
                shots_used: call.shots_used,
                capped: call.capped,
            },
        );
    }
    let Some(data) = &a.data else {
        bail!("pass --data or --imps");
    };
    let test = Dataset::read(data)?.test();
    let truth: Vec<usize> = test.iter().map(|s| s.label).collect();
    let (pred, pss) = match (&a.circuits, &a.model) {
        (Some(c), _) => runtime::evaluate(&read_json::<CompiledModel>(c)?, &test)?,
        (None, Some(m)) => tndisc::discriminator::evaluate(&load_model(m)?, &test)?,
        _ => bail!("pass --circuits or --model"),
    };
    let f1 = tndisc::discriminator::f1_scores(&tndisc::discriminator::confusion_matrix(&truth, &pred, 2));
    #[derive(Serialize)]
    struct Report {
        f1: Vec<f64>,
        average_f1: f64,
        mean_pss: f64,
        predictions: Vec<usize>,
    }
    let rep = Report {
        average_f1: f1.average,
        f1: f1.per_class,
        mean_pss: pss.iter().sum::<f64>() / pss.len().max(1) as f64,
        predictions: pred,
    };
    write_json(&out.join("predictions.json"), &rep)?;
    println!("test F1 = {:.4}, mean P_SS = {:.4}", rep.average_f1, rep.mean_pss);
    Ok(())
}

fn scan(cfg: &PipelineConfig, out: &Path, a: &ScanArgs) -> Result<()> {
    let (pts, name) = match a.mode {
        Mode::Entangled => {
            let (Some(c), Some(dir)) = (&a.circuits, &a.imps_dir) else {
                bail!("entangled scans need --circuits and --imps-dir");
            };
            let c: CompiledModel = read_json(c)?;
            let pts = entangled_scan(&c, dir, &cfg.scan_h, cfg.chi_i, cfg.entangled_shots, cfg.seed)?;
            (pts, format!("entangled_chi{}_chii{}.csv", c.chi, cfg.chi_i))
        }
        Mode::Product => {
            let fields = scan_samples(cfg, &cfg.scan_h)?;
            if let Some(c) = &a.circuits {
                let c: CompiledModel = read_json(c)?;
                (product_scan(&fields, c.chi, |s| Ok(runtime::evaluate(&c, s)?.0))?, format!("product_circuit_chi{}.csv", c.chi))
            } else if let Some(m) = &a.model {
                let m = load_model(m)?;
                (product_scan(&fields, m.hyper.chi, |s| Ok(tndisc::discriminator::evaluate(&m, s)?.0))?, format!("product_tensor_chi{}.csv", m.hyper.chi))
            } else if let Some(d) = &a.rf_data {
                let d = Dataset::read(d)?;
                let (rf, _) = baseline_random_forest(&d.train(), &d.test(), cfg.rf_trees, cfg.seed)?;
                (product_scan(&fields, 0, |s| Ok(s.iter().map(|x| rf.predict(&features(x))).collect()))?, "product_rf.csv".to_string())
            } else {
                bail!("pass --circuits, --model or --rf-data");
            }
        }
    };
    let path = out.join(&name);
    write_csv(&path, &pts)?;
    println!("{} points written to {}", pts.len(), path.display());
    Ok(())
}
