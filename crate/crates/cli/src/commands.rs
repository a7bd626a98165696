use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use engage_core::evaluation::{
    evaluate_matrix, render_report, report_json, EvalCell, EvalConfig, ModelScorer, ReportFormat,
    WindowMode,
};
use engage_core::featurizer::{
    build_dataset, write_dataset_csv, Dataset, EmitPolicy, FeaturizerConfig,
};
use engage_core::ingest::{
    descriptive_stats, parse_event_log, parse_zooniverse_export, validate_log, write_event_log,
    ValidatedLog,
};
use engage_core::models::ModelConfig;
use engage_core::nn::{finite_diff_check, Batch, DnnNet, GradCheckReport, LstmNet};
use engage_core::seed::derive_seed;
use engage_core::sessionizer::{sessionize_log, SessionizerConfig};
use engage_core::synth::{generate_log, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::json;

use crate::manifest::{ensure_dir, read_input, write_json, Manifest};
use crate::{
    BuildArgs, EvalArgs, GradcheckArgs, LogInput, NetKind, NumericFailure, Policy, SessionizeArgs,
    StatsArgs, SynthArgs, Window,
};

impl From<Policy> for EmitPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Full => EmitPolicy::RequireFullWindow,
            Policy::Pad => EmitPolicy::PadShortWindows,
        }
    }
}

impl From<Window> for WindowMode {
    fn from(w: Window) -> Self {
        match w {
            Window::Expanding => WindowMode::Expanding,
            Window::Sliding => WindowMode::Sliding,
        }
    }
}

struct LoadedLog {
    log: ValidatedLog,
    bytes: Vec<u8>,
}

fn load_log(path: &Path, zooniverse: bool, allow_empty: bool) -> Result<LoadedLog> {
    let bytes = read_input(path)?;
    let parsed = if zooniverse {
        parse_zooniverse_export(&bytes[..])
    } else {
        parse_event_log(&bytes[..])
    };
    let events = match parsed {
        Ok(events) => events,
        Err(engage_core::Error::EmptyLog) if allow_empty => {
            eprintln!("warning: {} contains no annotations", path.display());
            Vec::new()
        }
        Err(e) => return Err(anyhow::Error::new(e).context(format!("reading {}", path.display()))),
    };
    Ok(LoadedLog {
        log: validate_log(events),
        bytes,
    })
}

fn load_input(input: &LogInput, allow_empty: bool) -> Result<LoadedLog> {
    load_log(&input.log, input.zooniverse, allow_empty)
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let loaded = load_input(&args.input, false)?;
    let summary = descriptive_stats(&loaded.log, args.top_k as usize)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    print!("{text}");

    if let Some(dir) = &args.out {
        let dir = ensure_dir(dir)?;
        let out = dir.join("summary.json");
        fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
        let mut manifest = Manifest::new(
            "stats",
            json!({ "zooniverse": args.input.zooniverse, "top_k": args.top_k }),
        )?;
        manifest.input(&args.input.log, &loaded.bytes);
        manifest.output(&out);
        manifest.write(&dir.join("manifest.json"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SessionDump {
    gap_threshold_seconds: i64,
    users: usize,
    sessions: usize,
    sessions_per_user: BTreeMap<String, usize>,
    /// Session size to number of sessions of that size.
    size_histogram: BTreeMap<usize, usize>,
}

pub fn sessionize(args: SessionizeArgs) -> Result<()> {
    let loaded = load_input(&args.input, false)?;
    let config = SessionizerConfig::from_minutes(args.gap_min)?;
    let per_user = sessionize_log(&loaded.log, &config)?;
    let mut dump = SessionDump {
        gap_threshold_seconds: config.gap_threshold_seconds,
        users: loaded.log.user_count(),
        sessions: 0,
        sessions_per_user: BTreeMap::new(),
        size_histogram: BTreeMap::new(),
    };
    for (user, sessions) in loaded.log.users().iter().zip(&per_user) {
        dump.sessions += sessions.len();
        dump.sessions_per_user
            .insert(user.user_id.clone(), sessions.len());
        for s in sessions {
            *dump.size_histogram.entry(s.len()).or_default() += 1;
        }
    }
    if args.stats {
        println!("{}", serde_json::to_string_pretty(&dump)?);
    } else {
        println!(
            "{} users, {} sessions, {} annotations",
            dump.users,
            dump.sessions,
            loaded.log.event_count()
        );
    }
    Ok(())
}

pub fn build(args: BuildArgs) -> Result<()> {
    let loaded = load_input(&args.input, true)?;
    let sconfig = SessionizerConfig::from_minutes(args.gap_min)?;
    let fconfig = FeaturizerConfig::new(args.window as usize, args.gamma)?
        .with_policy(args.emit_policy.into());
    let dataset = if loaded.log.is_empty() {
        Dataset {
            items: Vec::new(),
            config: fconfig,
        }
    } else {
        build_dataset(&loaded.log, &sconfig, &fconfig)?
    };

    let dir = ensure_dir(&args.out)?;
    let csv_path = dir.join("dataset.csv");
    let mut csv = Vec::new();
    write_dataset_csv(&dataset, &mut csv)?;
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let sidecar = dir.join("dataset.config.json");
    write_json(&sidecar, &fconfig)?;

    let config = json!({
        "featurizer": fconfig,
        "sessionizer": sconfig,
        "zooniverse": args.input.zooniverse,
    });
    let mut manifest = Manifest::new("build", config)?;
    manifest.input(&args.input.log, &loaded.bytes);
    manifest.output(&csv_path);
    manifest.output(&sidecar);
    manifest.write(&dir.join("manifest.json"))?;
    eprintln!(
        "{} items ({} positive) written to {}",
        dataset.len(),
        dataset.positive_count(),
        csv_path.display()
    );
    Ok(())
}

fn roc_document(cells: &[EvalCell]) -> serde_json::Value {
    let curves: Vec<_> = cells
        .iter()
        .flat_map(|cell| {
            cell.folds.iter().filter_map(move |f| {
                f.roc.as_ref().map(|points| {
                    json!({
                        "M": cell.window,
                        "gamma": cell.gamma,
                        "variant": cell.variant.key(),
                        "fold": f.fold,
                        "auc": f.auc,
                        "points": points,
                    })
                })
            })
        })
        .collect();
    json!({ "curves": curves })
}

pub fn eval(args: EvalArgs) -> Result<()> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
            .context("configuring worker threads")?;
    }
    let loaded = load_log(&args.dataset_log, args.zooniverse, false)?;

    let mut config = EvalConfig::new(args.seed);
    config.sessionizer = SessionizerConfig::from_minutes(args.gap_min)?;
    config.emit_policy = args.emit_policy.into();
    config.window_mode = args.window.into();
    config.collect_roc = args.roc;
    config.models = ModelConfig {
        seed: args.seed,
        ..config.models
    };

    let dir = ensure_dir(&args.out)?;
    let scorer = ModelScorer {
        save_dir: if args.save_models {
            Some(ensure_dir(&dir.join("models"))?)
        } else {
            None
        },
    };
    let windows: Vec<usize> = args.windows.iter().map(|&w| w as usize).collect();
    let run = evaluate_matrix(
        &loaded.log,
        &args.gammas,
        &windows,
        &args.models,
        &config,
        &scorer,
    )?;

    let grid = json!({
        "gammas": sorted_unique(&args.gammas),
        "Ms": sorted_unique(&windows),
        "models": sorted_unique(&args.models).iter().map(|v| v.key()).collect::<Vec<_>>(),
    });
    let input_hash = hex_digest(&loaded.bytes);

    let mut outputs: Vec<PathBuf> = Vec::new();
    for &window in &sorted_unique(&windows) {
        let cells: Vec<EvalCell> = run
            .cells
            .iter()
            .filter(|c| c.window == window)
            .cloned()
            .collect();
        let path = dir.join(format!("report_M{window}.md"));
        fs::write(&path, render_report(&cells, ReportFormat::Markdown))
            .with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path);
    }
    let report = json!({
        "config": run.config,
        "grid": grid,
        "input": { "path": args.dataset_log.display().to_string(), "sha256": input_hash },
        "datasets": run.datasets,
        "report": report_json(&run.cells),
    });
    let report_path = dir.join("report.json");
    write_json(&report_path, &report)?;
    outputs.push(report_path);
    if args.roc {
        let path = dir.join("roc.json");
        write_json(&path, &roc_document(&run.cells))?;
        outputs.push(path);
    }

    let mut manifest = Manifest::new(
        "eval",
        json!({
            "eval": run.config,
            "grid": grid,
            "zooniverse": args.zooniverse,
            "save_models": args.save_models,
            "roc": args.roc,
            "fail_on_degenerate": args.fail_on_degenerate,
        }),
    )?;
    manifest.seed = Some(args.seed);
    manifest.input(&args.dataset_log, &loaded.bytes);
    for p in &outputs {
        manifest.output(p);
    }
    if let Some(models) = &scorer.save_dir {
        manifest.output(models);
    }
    manifest.write(&dir.join("manifest.json"))?;

    let degenerate: Vec<&EvalCell> = run
        .cells
        .iter()
        .filter(|c| !c.degenerate_folds.is_empty())
        .collect();
    for cell in &degenerate {
        eprintln!(
            "warning: {} at M = {}, gamma = {} has single-class test folds {:?}",
            cell.variant.display_name(),
            cell.window,
            cell.gamma,
            cell.degenerate_folds
        );
    }
    if args.fail_on_degenerate && !degenerate.is_empty() {
        return Err(NumericFailure(format!(
            "{} of {} cells have folds with undefined AUC",
            degenerate.len(),
            run.cells.len()
        ))
        .into());
    }
    Ok(())
}

fn sorted_unique<T: Ord + Copy>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn hex_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        user_count: args.users as usize,
        seed: args.seed,
        signal_strength: args.signal,
        ..SynthConfig::default()
    };
    let events = generate_log(&config)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut csv = Vec::new();
    write_event_log(&events, &mut csv)?;
    fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;

    let config_path = args.out.with_extension("config.json");
    write_json(&config_path, &config)?;
    let mut manifest = Manifest::new("synth", &config)?;
    manifest.seed = Some(args.seed);
    manifest.output(&args.out);
    manifest.output(&config_path);
    manifest.write(&args.out.with_extension("manifest.json"))?;
    eprintln!(
        "{} annotations written to {}",
        events.len(),
        args.out.display()
    );
    Ok(())
}

fn gradcheck_report(args: &GradcheckArgs) -> GradCheckReport {
    let window = args.window as usize;
    let defaults = ModelConfig::new(engage_core::models::Variant::LstmNet, window, args.seed);
    let width = defaults.width();
    let rows = args.rows as usize;

    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, "gradcheck/batch"));
    let x: Vec<f64> = (0..rows * width)
        .map(|_| data_rng.sample(StandardNormal))
        .collect();
    let y: Vec<f64> = (0..rows)
        .map(|_| f64::from(data_rng.random_range(0..2u8)))
        .collect();
    let batch = Batch::new(&x, &y, width);

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, "gradcheck/init"));
    let probe_seed = derive_seed(args.seed, "gradcheck/coords");
    let per_tensor = args.per_tensor as usize;
    match args.model {
        NetKind::Lstm => {
            let mut net = LstmNet::new(
                window,
                defaults.lstm_hidden,
                defaults.feature_dense,
                &defaults.head,
                &mut init_rng,
            );
            finite_diff_check(&mut net, &batch, args.h, per_tensor, probe_seed)
        }
        NetKind::Dnn => {
            let mut net = DnnNet::new(width, &defaults.dnn_layers, &mut init_rng);
            finite_diff_check(&mut net, &batch, args.h, per_tensor, probe_seed)
        }
    }
}

pub fn gradcheck(args: GradcheckArgs) -> Result<()> {
    if !(args.h > 0.0 && args.h.is_finite()) {
        bail!("--h must be a positive finite step");
    }
    let report = gradcheck_report(&args);
    let model = match args.model {
        NetKind::Lstm => "lstm",
        NetKind::Dnn => "dnn",
    };
    let passed = report.max_relative_error < args.tolerance;
    let doc = json!({
        "model": model,
        "seed": args.seed,
        "M": args.window,
        "h": args.h,
        "tolerance": args.tolerance,
        "max_relative_error": report.max_relative_error,
        "worst": report.worst,
        "checked": report.checked,
        "skipped_kinks": report.skipped_kinks,
        "passed": passed,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if !passed {
        return Err(NumericFailure(format!(
            "max relative gradient error {:.3e} is not below {:.0e}",
            report.max_relative_error, args.tolerance
        ))
        .into());
    }
    Ok(())
}
