use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use wavecast::mlp::{
    evaluate, generate_dataset, load_model, read_dataset, save_model, split_by_configuration,
    train_with_progress, write_dataset, Coverage, InputTransform, Sample, TargetSpace,
};
use wavecast::occupancy::occupancy;
use wavecast::oracle::AnalyticOracle;
use wavecast::predict::{
    extrapolate_batch, predict_iteration, rank_destinations, RankMetric, MODEL_EXTENSION,
};
use wavecast::roofline::{arithmetic_intensity, gamma_for_ridge};
use wavecast::trace::{
    lstm_like, parse_trace, resnet_like, serialize_trace, significant_kernels, synthesize_trace, SynthOptions,
};
use wavecast::{
    Equation, GpuSpec, IterationTrace, KernelKey, KernelLaunchConfig, KernelMetrics, MetricsCache,
    ModelStore, PredictionReport, PredictorConfig, Registry, TrainConfig,
};

use crate::render::{self, Table};
use crate::{
    Cli, Command, CoverageArg, Format, Global, InputArg, Internal, Metric, Split, TargetArg, Template,
};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Predict { trace, dest } => predict(g, trace, dest),
        Command::Rank { trace, gpus, metric } => rank(g, trace, gpus, *metric),
        Command::Plan { trace } => plan(g, trace),
        Command::DatasetGen {
            op,
            count,
            gpus,
            coverage,
            out,
        } => {
            let registry = registry(g)?;
            let gpus = select_gpus(&registry, gpus)?;
            let coverage = match coverage {
                CoverageArg::EveryGpu => Coverage::EveryGpu,
                CoverageArg::RoundRobin => Coverage::RoundRobin,
            };
            let samples = generate_dataset(*op, *count, g.seed, &gpus, coverage, &AnalyticOracle::default())?;
            let mut w = BufWriter::new(create(out)?);
            write_dataset(&mut w, *op, &samples)?;
            w.flush()?;
            eprintln!("wrote {} {op} samples to {}", samples.len(), out.display());
            Ok(())
        }
        Command::MlpTrain {
            dataset,
            out,
            layers,
            width,
            epochs,
            batch_size,
            target,
            inputs,
        } => {
            let config = TrainConfig {
                hidden_layers: *layers,
                hidden_width: *width,
                epochs: *epochs,
                batch_size: *batch_size,
                seed: g.seed,
                target_space: match target {
                    TargetArg::Linear => TargetSpace::Linear,
                    TargetArg::Log => TargetSpace::Log,
                },
                input_transform: match inputs {
                    InputArg::Identity => InputTransform::Identity,
                    InputArg::Log1p => InputTransform::Log1p,
                },
                ..TrainConfig::default()
            };
            mlp_train(g, dataset, out.as_deref(), &config)
        }
        Command::MlpEval {
            model,
            dataset,
            split,
        } => mlp_eval(g, model, dataset, *split),
        Command::Occupancy {
            gpu,
            threads,
            blocks,
            registers,
            shared_mem,
        } => {
            let registry = registry(g)?;
            let spec = registry.get(gpu)?;
            let launch = KernelLaunchConfig::new(*blocks, *threads)
                .with_registers(*registers)
                .with_shared_mem(*shared_mem);
            let occ = occupancy(&launch, spec)?;
            let wave = u64::from(occ.blocks_per_sm) * u64::from(spec.sm_count);
            let waves = launch.block_count.div_ceil(wave);
            let doc = json!({
                "gpu": spec.name,
                "blocks_per_sm": occ.blocks_per_sm,
                "wave_size": wave,
                "waves": waves,
                "limiter": occ.limiter,
            });
            let rows = vec![vec![
                spec.name.clone(),
                occ.blocks_per_sm.to_string(),
                wave.to_string(),
                waves.to_string(),
                occ.limiter.to_string(),
            ]];
            emit(
                g.format,
                &doc,
                Table::new(&["gpu", "blocks_per_sm", "wave_size", "waves", "limiter"], rows),
            )
        }
        Command::Gamma { flops, bytes, gpu } => {
            let registry = registry(g)?;
            let spec = registry.get(gpu)?;
            let x = arithmetic_intensity(&KernelMetrics {
                flop_count: *flops,
                dram_bytes: *bytes,
            })?;
            let ridge = spec.ridge_point();
            let (gamma, branch) = gamma_for_ridge(x, ridge);
            let doc = json!({"gpu": spec.name, "intensity": x, "ridge_point": ridge, "gamma": gamma, "branch": branch});
            let rows = vec![vec![
                spec.name.clone(),
                render::num(x),
                render::num(ridge),
                render::num(gamma),
                branch.as_str().into(),
            ]];
            emit(
                g.format,
                &doc,
                Table::new(&["gpu", "intensity", "ridge_point", "gamma", "branch"], rows),
            )
        }
        Command::Synth {
            template,
            origin,
            batch,
            out,
        } => {
            let registry = registry(g)?;
            let origin = registry.get(origin)?;
            let template = match template {
                Template::Resnet => resnet_like(*batch),
                Template::Lstm => lstm_like(*batch),
            };
            let trace = synthesize_trace(
                &template,
                origin,
                g.seed,
                &AnalyticOracle::default(),
                SynthOptions::default(),
            )?;
            let text = serialize_trace(&trace);
            match out {
                Some(path) => {
                    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?
                }
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Extrapolate { points, target } => {
            let e = extrapolate_batch(points, *target)?;
            for w in &e.warnings {
                eprintln!("warning: {w}");
            }
            let rows = vec![vec![
                render::num(e.slope),
                render::num(e.intercept),
                format!("{:.4}", e.r_squared),
                render::num(e.target_batch),
                render::num(e.predicted_time_ms),
            ]];
            emit(
                g.format,
                &serde_json::to_value(&e)?,
                Table::new(
                    &[
                        "slope_ms_per_sample",
                        "intercept_ms",
                        "r_squared",
                        "target_batch",
                        "predicted_ms",
                    ],
                    rows,
                ),
            )
        }
        Command::Gpus => {
            let registry = registry(g)?;
            let rows = registry
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        s.generation.clone(),
                        s.sm_count.to_string(),
                        render::num(s.peak_gflops),
                        render::num(s.mem_bandwidth_gb_s),
                        s.hourly_cost_usd.map_or("-".into(), render::num),
                    ]
                })
                .collect();
            let doc = serde_json::to_value(registry.iter().collect::<Vec<_>>())?;
            emit(
                g.format,
                &doc,
                Table::new(
                    &[
                        "gpu",
                        "generation",
                        "sms",
                        "peak_gflops",
                        "bandwidth_gb_s",
                        "usd_per_hour",
                    ],
                    rows,
                ),
            )
        }
        Command::Schema => {
            print!("{}", crate::REPORT_SCHEMA);
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn registry(g: &Global) -> Result<Registry> {
    match &g.registry {
        Some(path) => Ok(Registry::load(path)?),
        None => Ok(Registry::bundled()),
    }
}

fn select_gpus(registry: &Registry, names: &[String]) -> Result<Vec<GpuSpec>> {
    if names.is_empty() {
        return Ok(registry.iter().cloned().collect());
    }
    names.iter().map(|n| Ok(registry.get(n)?.clone())).collect()
}

fn models(g: &Global) -> Result<ModelStore> {
    match &g.models {
        Some(dir) => {
            ModelStore::load_dir(dir).with_context(|| format!("loading models from {}", dir.display()))
        }
        None => Ok(ModelStore::new()),
    }
}

fn load_trace(g: &Global, registry: &Registry, path: &Path) -> Result<(IterationTrace, MetricsCache)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
    let trace = parse_trace(&text, registry).with_context(|| format!("trace {}", path.display()))?;
    let sidecar = match &g.cache {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading cache {}", p.display()))?;
            MetricsCache::from_sidecar_json(&text).with_context(|| format!("cache {}", p.display()))?
        }
        None => MetricsCache::new(),
    };
    let cache = MetricsCache::merged(&sidecar, &trace);
    Ok((trace, cache))
}

fn predictor_config(g: &Global) -> PredictorConfig {
    PredictorConfig {
        equation: if g.exact {
            Equation::Exact
        } else {
            Equation::Simplified
        },
        fallback_wave_scaling: g.fallback_wave_scaling,
        ..PredictorConfig::default()
    }
}

/// The iteration time must be the trace-order sum of the operation predictions.
fn check_report(report: &PredictionReport) -> Result<()> {
    let sum = report.per_op.iter().fold(0.0, |acc, p| acc + p.predicted_time_ms);
    if sum != report.iteration_time_ms || !sum.is_finite() || sum <= 0.0 {
        return Err(Internal(format!(
            "report for {} sums to {sum} but states {}",
            report.dest_gpu, report.iteration_time_ms
        ))
        .into());
    }
    Ok(())
}

fn warn(reports: &[PredictionReport]) {
    for r in reports {
        for (i, w) in r.warnings() {
            eprintln!("warning: {}: operation {i}: {w}", r.dest_gpu);
        }
    }
}

fn predict(g: &Global, trace_path: &Path, dests: &[String]) -> Result<()> {
    let registry = registry(g)?;
    let (trace, cache) = load_trace(g, &registry, trace_path)?;
    let models = models(g)?;
    let config = predictor_config(g);
    let mut reports = Vec::with_capacity(dests.len());
    for name in dests {
        let dest = registry.get(name)?;
        let report = predict_iteration(&trace, &registry, dest, &models, &cache, &config)
            .with_context(|| format!("predicting for {name}"))?;
        check_report(&report)?;
        reports.push(report);
    }
    warn(&reports);
    render::reports(g.format, "predict", None, &trace, &reports)
}

fn rank(g: &Global, trace_path: &Path, names: &[String], metric: Metric) -> Result<()> {
    let registry = registry(g)?;
    let (trace, cache) = load_trace(g, &registry, trace_path)?;
    let models = models(g)?;
    let dests = names
        .iter()
        .map(|n| registry.get(n))
        .collect::<Result<Vec<_>, _>>()?;
    let metric = match metric {
        Metric::Throughput => RankMetric::Throughput,
        Metric::Cost => RankMetric::Cost,
    };
    let reports = rank_destinations(
        &trace,
        &registry,
        &dests,
        &models,
        &cache,
        &predictor_config(g),
        metric,
    )?;
    for r in &reports {
        check_report(r)?;
    }
    warn(&reports);
    render::reports(g.format, "rank", Some(metric), &trace, &reports)
}

fn plan(g: &Global, trace_path: &Path) -> Result<()> {
    let registry = registry(g)?;
    let (trace, cache) = load_trace(g, &registry, trace_path)?;
    let keys = significant_kernels(&trace, g.percentile);
    let entry = |key: &KernelKey| {
        let times: Vec<f64> = trace
            .kernels()
            .filter(|k| KernelKey::of(k) == *key)
            .map(|k| k.measured_time_ms)
            .collect();
        let max = times.iter().copied().fold(0.0, f64::max);
        (times.len(), max, cache.get(key).is_some())
    };
    let rows = keys
        .iter()
        .map(|k| {
            let (n, max, cached) = entry(k);
            vec![
                k.name.clone(),
                k.block_count.to_string(),
                k.threads_per_block.to_string(),
                n.to_string(),
                render::num(max),
                if cached { "yes" } else { "no" }.into(),
            ]
        })
        .collect();
    let doc = json!({
        "percentile": g.percentile,
        "kernels": keys.iter().map(|k| {
            let (n, max, cached) = entry(k);
            json!({"kernel_key": k, "occurrences": n, "max_time_ms": max, "cached": cached})
        }).collect::<Vec<_>>(),
    });
    emit(
        g.format,
        &doc,
        Table::new(
            &["kernel", "blocks", "threads", "occurrences", "max_ms", "cached"],
            rows,
        ),
    )
}

fn mlp_train(g: &Global, dataset: &Path, out: Option<&Path>, config: &TrainConfig) -> Result<()> {
    let (op, samples) =
        read_dataset(File::open(dataset).with_context(|| format!("opening {}", dataset.display()))?)?;
    let path = match (out, &g.models) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(dir)) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            dir.join(format!("{op}.{MODEL_EXTENSION}"))
        }
        (None, None) => bail!("no output: pass --out or --models"),
    };
    let table = g.format == Format::Table;
    if table {
        println!(
            "{:>5}  {:>9}  {:>10}  {:>10}",
            "epoch", "lr", "train_mape", "test_mape"
        );
    } else if g.format == Format::Csv {
        println!("epoch,learning_rate,train_mape,test_mape");
    }
    let trained = train_with_progress(op, &samples, config, |r| match g.format {
        Format::Table => println!(
            "{:>5}  {:>9.1e}  {:>10.4}  {:>10.4}",
            r.epoch, r.learning_rate, r.train_mape, r.test_mape
        ),
        Format::Csv => println!("{},{},{},{}", r.epoch, r.learning_rate, r.train_mape, r.test_mape),
        Format::Json => {}
    })?;
    let mut w = BufWriter::new(create(&path)?);
    save_model(&mut w, &trained.model)?;
    w.flush()?;
    match g.format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "operation": op,
                "model": path,
                "history": trained.history,
                "train_mape": trained.train_mape,
                "test_mape": trained.test_mape,
            }))?
        ),
        _ => eprintln!(
            "saved {op} model to {} (train MAPE {:.4}, test MAPE {:.4})",
            path.display(),
            trained.train_mape,
            trained.test_mape
        ),
    }
    Ok(())
}

fn mlp_eval(g: &Global, model_path: &Path, dataset: &Path, split: Split) -> Result<()> {
    let model =
        load_model(File::open(model_path).with_context(|| format!("opening {}", model_path.display()))?)
            .with_context(|| format!("model {}", model_path.display()))?;
    let (op, samples) =
        read_dataset(File::open(dataset).with_context(|| format!("opening {}", dataset.display()))?)?;
    if op != model.operation {
        bail!("dataset is for {op} but the model predicts {}", model.operation);
    }
    let chosen: Vec<Sample> = match split {
        Split::All => samples,
        Split::Train | Split::Test => {
            let (train, test) = split_by_configuration(
                &samples,
                TrainConfig::default().train_fraction,
                model.metadata.seed,
            )?;
            let idx = if split == Split::Train { train } else { test };
            idx.into_iter().map(|i| samples[i].clone()).collect()
        }
    };
    let mape = evaluate(&model, &chosen)?;
    let doc = json!({"operation": op, "samples": chosen.len(), "mape": mape});
    emit(
        g.format,
        &doc,
        Table::new(
            &["operation", "samples", "mape"],
            vec![vec![
                op.to_string(),
                chosen.len().to_string(),
                format!("{mape:.4}"),
            ]],
        ),
    )
}

fn emit(format: Format, doc: &serde_json::Value, table: Table) -> Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(doc)?),
        Format::Table => print!("{}", table.to_text()),
        Format::Csv => print!("{}", table.to_csv()),
    }
    Ok(())
}
