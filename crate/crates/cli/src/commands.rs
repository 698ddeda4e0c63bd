use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ampf_core::data::load_csv;
use ampf_core::metrics::{write_curve, write_scores};
use ampf_core::training::{conformance, epoch_summaries, train as run_training, Motion, TrainError};
use ampf_core::{HyperParams, LabeledSet, MetricsReport, TrainConfig, TrainedModel, TrajectoryLog};

use crate::config::{resolve_out_dir, RunConfig};
use crate::manifest::{MetricSummary, RunManifest};
use crate::CliError;

fn runtime(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let shown = path.display().to_string();
    let file = File::create(&path).map_err(runtime(&shown))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(runtime(&shown))
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Config(msg) => CliError::Config(msg),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Scores `set` and writes scores, report and curve into `dir`.
fn evaluate(model: &TrainedModel, set: &LabeledSet, dir: &Path) -> Result<(MetricsReport, Vec<String>), CliError> {
    if set.dim() != model.classifier.input_dim() {
        return Err(CliError::Runtime(format!(
            "data has {} features but the model expects {}",
            set.dim(),
            model.classifier.input_dim()
        )));
    }
    if set.classes() != model.protos.num_classes() {
        return Err(CliError::Runtime(format!(
            "data declares {} known classes but the model has {}",
            set.classes(),
            model.protos.num_classes()
        )));
    }
    let samples = model.score(set).map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = MetricsReport::compute(&samples).map_err(|e| CliError::Runtime(e.to_string()))?;
    if report.auroc.is_none() {
        eprintln!("ampf: warning: no unknown-class rows; AUROC, OSCR and the curve are omitted");
    }
    let mut files = vec!["scores.csv".to_string(), "metrics.json".to_string()];
    write_file(dir, "scores.csv", |w| write_scores(&samples, w))?;
    write_file(dir, "metrics.json", |w| writeln!(w, "{}", report.to_json()))?;
    if let Some(curve) = &report.curve {
        write_file(dir, "curve.csv", |w| write_curve(curve, w))?;
        files.push("curve.csv".into());
    }
    Ok((report, files))
}

fn print_report(r: &MetricsReport) {
    print!("closed_acc {:.4}", r.closed_acc);
    if let (Some(a), Some(o)) = (r.auroc, r.oscr) {
        print!("  auroc {a:.4}  oscr {o:.4}");
    }
    println!();
}

pub fn train(
    config: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    strategy: Option<&str>,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = strategy {
        cfg.strategy = s.to_string();
    }
    let tc = cfg.train_config()?;
    let dir = resolve_out_dir(out, Some(&cfg), Path::new("runs"));
    std::fs::create_dir_all(&dir).map_err(runtime(&dir.display().to_string()))?;

    let started_at = chrono::Utc::now().to_rfc3339();
    let (train_set, test_set) = cfg.load_data()?;
    let (model, log) = run_training(&tc, &train_set).map_err(train_error)?;

    model
        .save(&dir.join("model.ckpt"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&dir, "trajectory.csv", |w| log.write_csv(w))?;
    let mut artifacts = vec!["model.ckpt".to_string(), "trajectory.csv".to_string()];

    println!(
        "trained {} for {} epochs ({} steps); final R {:.6}",
        tc.strategy,
        tc.max_epoch,
        log.len(),
        model.protos.radius()
    );
    let mut metrics = None;
    if let (true, Some(test)) = (cfg.output.evaluate, &test_set) {
        let (report, files) = evaluate(&model, test, &dir)?;
        print_report(&report);
        artifacts.extend(files);
        metrics = Some(MetricSummary::from(&report));
    }

    RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        strategy: tc.strategy.to_string(),
        seed: tc.seed,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        steps: log.len(),
        final_radius: model.protos.radius(),
        artifacts,
        metrics,
        config: cfg,
    }
    .write(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn eval(
    model_path: &Path,
    config: Option<&Path>,
    data: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let model = TrainedModel::load(model_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut cfg = config.map(RunConfig::load).transpose()?;
    let set = match (&mut cfg, data) {
        (_, Some(path)) => load_csv(path, model.protos.num_classes()).map_err(|e| CliError::Runtime(e.to_string()))?,
        (Some(c), None) => {
            if let Some(s) = seed {
                c.seed = s;
            }
            match c.load_data()? {
                (_, Some(test)) => test,
                (_, None) => return Err(CliError::Config("the config's data source has no test rows".into())),
            }
        }
        (None, None) => return Err(CliError::Config("eval needs --config or --data".into())),
    };
    let fallback = model_path.parent().unwrap_or(Path::new("."));
    let dir = resolve_out_dir(out, cfg.as_ref(), fallback);
    std::fs::create_dir_all(&dir).map_err(runtime(&dir.display().to_string()))?;
    let (report, files) = evaluate(&model, &set, &dir)?;
    print_report(&report);
    println!("wrote {} in {}", files.join(", "), dir.display());
    Ok(())
}

pub fn trace(
    path: &Path,
    config: Option<&Path>,
    lambda: Option<f64>,
    beta: Option<f64>,
    momentum: Option<f64>,
    tolerance: f64,
) -> Result<(), CliError> {
    let (mut l, mut b, mut m) = (
        HyperParams::default().lambda,
        HyperParams::default().beta,
        TrainConfig::default().momentum,
    );
    if let Some(p) = config {
        let c = RunConfig::load(p)?;
        (l, b, m) = (c.hyper.lambda, c.hyper.beta, c.train.momentum);
    }
    let (l, b, m) = (lambda.unwrap_or(l), beta.unwrap_or(b), momentum.unwrap_or(m));

    let shown = path.display().to_string();
    let file = File::open(path).map_err(runtime(&shown))?;
    let log = TrajectoryLog::read_csv(BufReader::new(file)).map_err(|e| CliError::Runtime(format!("{shown}: {e}")))?;
    if log.is_empty() {
        return Err(CliError::Runtime(format!("{shown}: trajectory has no records")));
    }

    println!(
        "{:>5}  {:>11}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  shape",
        "epoch", "mpf/adv/g2", "R start", "R0", "min R", "max R", "R end"
    );
    for s in epoch_summaries(log.records()) {
        let counts = format!("{}/{}/{}", s.phase_counts[0], s.phase_counts[1], s.phase_counts[2]);
        let r0 = s.r0.first().map_or("-".to_string(), |r| format!("{r:.6}"));
        let shape = match (s.rises, s.falls) {
            (true, true) => "rise-fall",
            (true, false) => "rise",
            (false, true) => "fall",
            (false, false) => "flat",
        };
        println!(
            "{:>5}  {:>11}  {:>10.6}  {:>10}  {:>10.6}  {:>10.6}  {:>10.6}  {shape}",
            s.epoch, counts, s.r_start, r0, s.min_r, s.max_r, s.r_end
        );
    }

    let c = conformance(log.records(), l, b, m, tolerance);
    println!("motion laws with lambda {l}, beta {b}, momentum {m}, tolerance {tolerance:e}:");
    for motion in Motion::ALL {
        let t = c.tally(motion);
        let pct = t.fraction().map_or("-".to_string(), |f| format!("{:.2}%", 100.0 * f));
        println!("  {:<40} {:>6}/{:<6} {pct}", motion.to_string(), t.matched, t.steps);
    }
    let total = c.total();
    println!("  max |error| {:.3e}", c.max_abs_error);
    if total.matched == total.steps {
        println!("verdict: all {} steps conform", total.steps);
    } else {
        println!(
            "verdict: {} of {} steps deviate",
            total.steps - total.matched,
            total.steps
        );
    }
    Ok(())
}
