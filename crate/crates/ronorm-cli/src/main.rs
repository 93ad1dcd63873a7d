//! Experiment runner: data generation, basis computation, training,
//! evaluation, comparison sweeps and singular-value decay reports, all
//! driven by JSON config files.
//!
//! Exit codes: 0 on success, 2 for config errors, 3 for data/format errors,
//! 4 for numerical failures, 1 otherwise.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ronorm::baselines::{self, FcConfig};
use ronorm::config::{CompareConfig, CompareEntry, ExperimentConfig, Method};
use ronorm::container::Dataset;
use ronorm::datagen;
use ronorm::error::{Error, Result};
use ronorm::mesh::TriMesh;
use ronorm::metrics::EvalReport;
use ronorm::norm::Checkpoint;
use ronorm::train::{self, log_to_csv};

#[derive(Parser)]
#[command(name = "ronorm", version, about = "Reduced-order spectral operator learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/test dataset directories for the configured case.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute and cache the reduction and layer bases for a dataset.
    Basis {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the configured method, writing checkpoint, log and eval report.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a saved checkpoint on the test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several experiment configs and emit one comparison table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate-vs-overall singular value decay of the spatio-temporal side.
    SvdReport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::GenData { config, out, seed } => cmd_gen_data(&config, &out, seed),
        Cmd::Basis { config, out, seed } => cmd_basis(&config, &out, seed),
        Cmd::Train { config, out, seed } => cmd_train(&config, &out, seed),
        Cmd::Eval { config, out } => cmd_eval(&config, &out),
        Cmd::Compare { config, out } => cmd_compare(&config, &out),
        Cmd::SvdReport { config, out } => cmd_svd_report(&config, &out),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_mesh(cfg: &ExperimentConfig, base: &Path) -> Result<TriMesh> {
    let path = ExperimentConfig::resolve(base, &cfg.mesh);
    if !path.exists() {
        return Err(Error::Config(format!("mesh file {} does not exist", path.display())));
    }
    TriMesh::load(path)
}

fn load_splits(cfg: &ExperimentConfig, base: &Path) -> Result<(Dataset, Dataset)> {
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("config has no data_dir".into()))?;
    let dir = ExperimentConfig::resolve(base, dir);
    let train = Dataset::load(dir.join("train"))?;
    let test = Dataset::load(dir.join("test"))?;
    if train.header.mapping_kind != cfg.case.mapping_kind() {
        return Err(Error::Config(format!(
            "dataset was generated for {:?}, config case {:?} expects {:?}",
            train.header.mapping_kind,
            cfg.case,
            cfg.case.mapping_kind()
        )));
    }
    Ok((train, test))
}

fn cmd_gen_data(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let mesh = load_mesh(&cfg, &base)?;
    let spec = cfg.gen_spec(seed.unwrap_or(cfg.seed))?;
    let (train, test) = datagen::build_dataset(&mesh, &spec)?;
    train.save(out.join("train"))?;
    test.save(out.join("test"))?;
    println!(
        "generated {} ({:?}): {} train / {} test samples, n_x={}, n_t={}",
        spec.case.name(),
        train.header.mapping_kind,
        train.header.n_samples,
        test.header.n_samples,
        train.header.n_x,
        train.header.n_t
    );
    Ok(())
}

fn cmd_basis(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let mesh = load_mesh(&cfg, &base)?;
    let (train, _) = load_splits(&cfg, &base)?;
    let tc = cfg.train_config_with_seed(seed.unwrap_or(cfg.seed))?;
    let (reduction, layer) = train::prepare_bases(&train, &tc, Some(&mesh))?;
    std::fs::create_dir_all(out)?;
    let checksum = cfg.hash();
    reduction.save(out.join("basis_reduction.bin"), &checksum)?;
    layer.save(out.join("basis_layer.bin"), &checksum)?;
    println!(
        "reduction basis: {} modes on {} points; layer basis: {} modes on {} points",
        reduction.k(),
        reduction.n_points(),
        layer.k(),
        layer.n_points()
    );
    Ok(())
}

fn write_eval_artifacts(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::write(dir.join("eval.json"), serde_json::to_string_pretty(report)?)?;
    let mut me_csv = String::from("index,max_abs_error\n");
    for (i, v) in report.per_sample_max_errors.iter().enumerate() {
        me_csv.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(dir.join("max_errors.csv"), me_csv)?;
    if let Some(h) = &report.histogram {
        let mut csv = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in h.counts.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", h.bin_edges[i], h.bin_edges[i + 1], c));
        }
        std::fs::write(dir.join("histogram.csv"), csv)?;
    }
    Ok(())
}

/// Train one repeat of the configured method and write its artifacts into
/// `run_dir`. Returns the evaluation report on the test split.
fn run_single(
    cfg: &ExperimentConfig,
    mesh: &TriMesh,
    train_ds: &Dataset,
    test_ds: &Dataset,
    run_dir: &Path,
    seed: u64,
) -> Result<EvalReport> {
    std::fs::create_dir_all(run_dir)?;
    let config_hash = cfg.hash();
    match cfg.method {
        Method::RoNorm => {
            let tc = cfg.train_config_with_seed(seed)?;
            let (reduction, layer) = train::prepare_bases(train_ds, &tc, Some(mesh))?;
            let art = if train_ds.header.mapping_kind.is_increase() {
                train::train_increase(train_ds, test_ds, &reduction, &layer, &tc)?
            } else {
                train::train_decrease(train_ds, test_ds, &reduction, &layer, &tc)?
            };
            let ckpt = Checkpoint {
                params: art.params,
                seed,
                config_hash: config_hash.clone(),
                input_mean: art.input_mean,
                input_std: art.input_std,
            };
            ckpt.save(run_dir.join("model.ckpt"))?;
            std::fs::write(run_dir.join("log.csv"), log_to_csv(&art.log))?;
            let pred = train::predict_dataset(
                &ckpt.params,
                test_ds,
                &reduction,
                &layer,
                ckpt.input_mean.as_deref(),
                ckpt.input_std.as_deref(),
            )?;
            let report = EvalReport::single(
                &pred,
                &test_ds.u,
                cfg.histogram.as_ref(),
                art.wall_clock_s,
                ckpt.params.parameter_count(),
                &config_hash,
            )?;
            write_eval_artifacts(run_dir, &report)?;
            Ok(report)
        }
        Method::PcaNet => {
            let section = cfg
                .pca_net
                .as_ref()
                .ok_or_else(|| Error::Config("method pca_net needs a pca_net section".into()))?;
            let modes = cfg
                .train
                .as_ref()
                .ok_or_else(|| Error::Config("pca_net shares truncated_modes with the train section".into()))?
                .truncated_modes;
            let fc_cfg = FcConfig {
                hidden: section.hidden.clone(),
                epochs: section.epochs,
                batch_size: section.batch_size,
                lr: section.lr,
                step_lr_every: section.step_lr.map(|s| s.every).unwrap_or(usize::MAX),
                step_lr_gamma: section.step_lr.map(|s| s.gamma).unwrap_or(1.0),
                seed,
                activation: ronorm::norm::Activation::Gelu,
            };
            let art = baselines::train_pca_net(train_ds, test_ds, modes, modes, &fc_cfg)?;
            art.fc.save(run_dir.join("model.ckpt"), seed, &config_hash)?;
            std::fs::write(run_dir.join("log.csv"), log_to_csv(&art.log))?;
            let pred = art.predict(test_ds)?;
            let report = EvalReport::single(
                &pred,
                &test_ds.u,
                cfg.histogram.as_ref(),
                art.wall_clock_s,
                art.fc.parameter_count(),
                &config_hash,
            )?;
            write_eval_artifacts(run_dir, &report)?;
            Ok(report)
        }
    }
}

fn run_experiment(cfg: &ExperimentConfig, base: &Path, out: &Path, seed_override: Option<u64>) -> Result<EvalReport> {
    let mesh = load_mesh(cfg, base)?;
    let (train_ds, test_ds) = load_splits(cfg, base)?;
    std::fs::create_dir_all(out)?;
    let mut stamped = serde_json::to_value(cfg)?;
    stamped["config_hash"] = serde_json::Value::String(cfg.hash());
    std::fs::write(out.join("config_used.json"), serde_json::to_string_pretty(&stamped)?)?;

    let base_seed = seed_override.unwrap_or(cfg.seed);
    let mut reports = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let seed = base_seed + r as u64;
        let run_dir = out.join(format!("run_{seed}"));
        let report = run_single(cfg, &mesh, &train_ds, &test_ds, &run_dir, seed)?;
        println!(
            "run seed {seed}: test E_L2 = {:.6}, MME = {:.6}, params = {}, {:.1}s",
            report.e_l2_mean, report.mme_mean, report.parameter_count, report.wall_clock_s
        );
        reports.push(report);
    }
    let aggregate = EvalReport::aggregate(&reports)?;
    std::fs::write(out.join("aggregate.json"), serde_json::to_string_pretty(&aggregate)?)?;
    let mut csv = String::from("metric,mean,std,formatted\n");
    csv.push_str(&format!(
        "e_l2,{},{},\"{}\"\n",
        aggregate.e_l2_mean,
        aggregate.e_l2_std.unwrap_or(0.0),
        EvalReport::format_mean_std(aggregate.e_l2_mean, aggregate.e_l2_std)
    ));
    csv.push_str(&format!(
        "mme,{},{},\"{}\"\n",
        aggregate.mme_mean,
        aggregate.mme_std.unwrap_or(0.0),
        EvalReport::format_mean_std(aggregate.mme_mean, aggregate.mme_std)
    ));
    std::fs::write(out.join("aggregate.csv"), csv)?;
    Ok(aggregate)
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let aggregate = run_experiment(&cfg, &base, out, seed)?;
    println!(
        "aggregate over {} repeat(s): E_L2 = {}, MME = {}",
        cfg.repeats,
        EvalReport::format_mean_std(aggregate.e_l2_mean, aggregate.e_l2_std),
        EvalReport::format_mean_std(aggregate.mme_mean, aggregate.mme_std)
    );
    Ok(())
}

fn cmd_eval(config: &Path, out: &Path) -> Result<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let mesh = load_mesh(&cfg, &base)?;
    let (train_ds, test_ds) = load_splits(&cfg, &base)?;
    let ckpt_path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs a checkpoint path in the config".into()))?;
    let ckpt_path = ExperimentConfig::resolve(&base, ckpt_path);
    std::fs::create_dir_all(out)?;
    let config_hash = cfg.hash();

    let report = match cfg.method {
        Method::RoNorm => {
            let ckpt = Checkpoint::load(&ckpt_path)?;
            if ckpt.config_hash != config_hash {
                return Err(Error::Config(format!(
                    "checkpoint was trained with config hash {}, this config hashes to {config_hash}",
                    ckpt.config_hash
                )));
            }
            let tc = cfg.train_config_with_seed(ckpt.seed)?;
            let (reduction, layer) = train::prepare_bases(&train_ds, &tc, Some(&mesh))?;
            let pred = train::predict_dataset(
                &ckpt.params,
                &test_ds,
                &reduction,
                &layer,
                ckpt.input_mean.as_deref(),
                ckpt.input_std.as_deref(),
            )?;
            EvalReport::single(
                &pred,
                &test_ds.u,
                cfg.histogram.as_ref(),
                0.0,
                ckpt.params.parameter_count(),
                &config_hash,
            )?
        }
        Method::PcaNet => {
            let (fc, _seed, ckpt_hash) = ronorm::baselines::FcParams::load(&ckpt_path)?;
            if ckpt_hash != config_hash {
                return Err(Error::Config(format!(
                    "checkpoint was trained with config hash {ckpt_hash}, this config hashes to {config_hash}"
                )));
            }
            let modes = cfg
                .train
                .as_ref()
                .ok_or_else(|| Error::Config("pca_net shares truncated_modes with the train section".into()))?
                .truncated_modes;
            let in_basis = baselines::pca_flatten_basis(&train_ds.a, modes)?;
            let out_basis = baselines::pca_flatten_basis(&train_ds.u, modes)?;
            let art = baselines::PcaNetArtifacts {
                fc,
                in_basis,
                out_basis,
                log: Vec::new(),
                wall_clock_s: 0.0,
            };
            let pred = art.predict(&test_ds)?;
            EvalReport::single(
                &pred,
                &test_ds.u,
                cfg.histogram.as_ref(),
                0.0,
                art.fc.parameter_count(),
                &config_hash,
            )?
        }
    };
    write_eval_artifacts(out, &report)?;
    println!(
        "test E_L2 = {:.6}, MME = {:.6} over {} samples",
        report.e_l2_mean,
        report.mme_mean,
        report.per_sample_max_errors.len()
    );
    Ok(())
}

fn cmd_compare(config: &Path, out: &Path) -> Result<()> {
    let (cmp, base) = CompareConfig::load(config)?;
    std::fs::create_dir_all(out)?;
    let mut csv = String::from(
        "index,method,case,basis_family,reconstruction,truncated_modes,e_l2_mean,e_l2_std,mme_mean,mme_std,params,wall_clock_s,status\n",
    );
    let mut any_ok = false;
    for (i, entry) in cmp.runs.iter().enumerate() {
        let loaded = match entry {
            CompareEntry::Path(p) => {
                let path = ExperimentConfig::resolve(&base, p);
                ExperimentConfig::load(&path)
            }
            CompareEntry::Inline(cfg) => Ok(((**cfg).clone(), base.clone())),
        };
        let row = loaded.and_then(|(cfg, cfg_base)| {
            let row_dir = out.join(format!("row_{i}"));
            let report = run_experiment(&cfg, &cfg_base, &row_dir, None)?;
            Ok((cfg, report))
        });
        match row {
            Ok((cfg, report)) => {
                any_ok = true;
                let (family, recon, modes) = match &cfg.train {
                    Some(t) => (
                        format!("{:?}", t.basis_family).to_lowercase(),
                        format!("{:?}", t.reconstruction).to_lowercase(),
                        t.truncated_modes.to_string(),
                    ),
                    None => ("-".into(), "-".into(), "-".into()),
                };
                csv.push_str(&format!(
                    "{i},{:?},{},{family},{recon},{modes},{},{},{},{},{},{},ok\n",
                    cfg.method,
                    cfg.case.name(),
                    report.e_l2_mean,
                    report.e_l2_std.unwrap_or(0.0),
                    report.mme_mean,
                    report.mme_std.unwrap_or(0.0),
                    report.parameter_count,
                    report.wall_clock_s
                ));
            }
            Err(e) => {
                eprintln!("comparison row {i} failed: {e}");
                csv.push_str(&format!("{i},-,-,-,-,-,-,-,-,-,-,-,failed\n"));
            }
        }
    }
    std::fs::write(out.join("comparison.csv"), &csv)?;
    if !any_ok {
        return Err(Error::Numerical("every comparison row failed".into()));
    }
    println!("wrote {}", out.join("comparison.csv").display());
    Ok(())
}

fn cmd_svd_report(config: &Path, out: &Path) -> Result<()> {
    let (cfg, base) = ExperimentConfig::load(config)?;
    let (train_ds, _) = load_splits(&cfg, &base)?;
    let kind = train_ds.header.mapping_kind;
    // analyze the spatio-temporal side of the mapping
    let side = if kind.is_increase() { &train_ds.u } else { &train_ds.a };
    let axis = kind.reduction_axis();
    let report = baselines::svd_decay_report(side, axis)?;
    std::fs::create_dir_all(out)?;
    let write_spectrum = |name: &str, values: &[f64]| -> Result<()> {
        let mut csv = String::from("index,singular_value\n");
        for (i, v) in values.iter().enumerate() {
            csv.push_str(&format!("{i},{v}\n"));
        }
        std::fs::write(out.join(name), csv)?;
        Ok(())
    };
    write_spectrum("separate.csv", &report.separate)?;
    write_spectrum("overall.csv", &report.overall)?;
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "k99_separate": report.k99_separate,
            "k99_overall": report.k99_overall,
            "config_hash": cfg.hash(),
        }))?,
    )?;
    println!(
        "k99 separate = {}, k99 overall = {}",
        report.k99_separate, report.k99_overall
    );
    Ok(())
}
