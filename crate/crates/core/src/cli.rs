//! The `trendcpd` command line.
//!
//! Every subcommand reads one experiment config (see [`crate::config`]) and
//! writes under its `output_dir`. Exit codes: 0 success, 1 usage error,
//! 2 data or schema error, 3 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ExperimentConfig, SimulateSpec, StandardizeMode};
use crate::detector::GridPoint;
use crate::error::{Error, Result};
use crate::eval::{run_grid, score, select_best, validity_flags, EvalRecord, Scope, Selection};
use crate::io;
use crate::lstm::{train, LstmNet};
use crate::predict::training_pairs;
use crate::refdet::random_baseline;
use crate::series::{Detection, LabeledSeries};
use crate::standardize::{standardize, Mode};

#[derive(Debug, Parser)]
#[command(name = "trendcpd", version, about = "Change point detection on trending series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    /// Default parameters of each detector, as written by `detect`.
    Detect,
    /// Every grid point, as written by `grid`.
    Grid,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write every configured dataset to `datasets/` with a manifest.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Write standardized datasets to `standardized/`.
    Standardize {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides the configured mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Train the LSTM described in `[train_lstm]`.
    TrainLstm {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run every detector at its default parameters.
    Detect {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run every grid point on every dataset and score the runs.
    Grid {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Score a detections file against the dataset labels.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "detect")]
        source: Source,
    },
    /// Build the selection report from `metrics.csv`.
    Report {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Export chart data, and optionally an SVG, for one run.
    Plot {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        detector: Option<String>,
        #[arg(long)]
        params: Option<String>,
    },
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::Config(_)
        | Error::InvalidSeries(_)
        | Error::InvalidParameter { .. }
        | Error::InsufficientHistory { .. }
        | Error::ShapeMismatch { .. } => 2,
        _ => 3,
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a command and returns its summary lines.
pub fn run(cmd: &Command) -> Result<Vec<String>> {
    match cmd {
        Command::Simulate { config } => cmd_simulate(&ExperimentConfig::load(config)?),
        Command::Standardize { config, mode } => cmd_standardize(&ExperimentConfig::load(config)?, *mode),
        Command::TrainLstm { config } => cmd_train_lstm(&ExperimentConfig::load(config)?),
        Command::Detect { config } => cmd_detect(&ExperimentConfig::load(config)?),
        Command::Grid { config } => cmd_grid(&ExperimentConfig::load(config)?),
        Command::Eval { config, source } => cmd_eval(&ExperimentConfig::load(config)?, *source),
        Command::Report { config } => cmd_report(&ExperimentConfig::load(config)?),
        Command::Plot {
            config,
            dataset,
            detector,
            params,
        } => cmd_plot(&ExperimentConfig::load(config)?, dataset.clone(), detector.clone(), params.clone()),
    }
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    id: &'a str,
    file: String,
    length: usize,
    labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulate: Option<&'a SimulateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

fn label_strings(s: &LabeledSeries) -> Vec<String> {
    s.cp_labels()
        .iter()
        .map(|l| format!("{}>{} at {}", l.from, l.to, l.time + 1))
        .collect()
}

fn datasets(cfg: &ExperimentConfig) -> Result<Vec<(String, LabeledSeries)>> {
    (0..cfg.datasets.len())
        .map(|i| Ok((cfg.datasets[i].id.clone(), cfg.dataset(i)?)))
        .collect()
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let mut manifest = Vec::new();
    let mut lines = Vec::new();
    for (i, src) in cfg.datasets.iter().enumerate() {
        let s = cfg.raw_dataset(i)?;
        let file = format!("{}.csv", src.id);
        io::write_dataset(&cfg.output_path("datasets").join(&file), &s)?;
        lines.push(format!("{}: {} points, labels {:?}", src.id, s.len(), label_strings(&s)));
        manifest.push(ManifestEntry {
            id: &src.id,
            file,
            length: s.len(),
            labels: label_strings(&s),
            seed: src.simulate.as_ref().map(|_| cfg.dataset_seed(i)),
            simulate: src.simulate.as_ref(),
            source: src.path.as_ref().map(|p| p.display().to_string()),
        });
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    io::write(&cfg.output_path("datasets").join("manifest.json"), &json)?;
    Ok(lines)
}

pub fn cmd_standardize(cfg: &ExperimentConfig, mode: Option<ModeArg>) -> Result<Vec<String>> {
    let mode = match (mode, cfg.standardize.mode) {
        (Some(ModeArg::Offline), _) | (None, StandardizeMode::Offline) => Mode::Offline,
        (Some(ModeArg::Online), _) | (None, StandardizeMode::Online) => Mode::Online,
        (None, StandardizeMode::None) => {
            return Err(Error::Config("no standardization mode configured; pass --mode".into()))
        }
    };
    let mut lines = Vec::new();
    let mut log = String::from("dataset,nu_hat,b_hat,flagged,identity_fallback\n");
    for i in 0..cfg.datasets.len() {
        let id = &cfg.datasets[i].id;
        let st = standardize(&cfg.raw_dataset(i)?, cfg.standardize.t0, mode)?;
        io::write_dataset(&cfg.output_path("standardized").join(format!("{id}.csv")), &st.series)?;
        let (nu, b) = st.estimate.map_or((f64::NAN, f64::NAN), |e| (e.nu_hat, e.b_hat));
        let _ = writeln!(log, "{id},{nu},{b},{},{}", st.flagged.len(), st.identity_fallback);
        lines.push(format!("{id}: nu_hat={nu:.4} b_hat={b:.4} flagged={}", st.flagged.len()));
    }
    io::write(&cfg.output_path("standardized").join("estimates.csv"), &log)?;
    Ok(lines)
}

pub fn cmd_train_lstm(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let spec = cfg
        .train_lstm
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [train_lstm] section".into()))?;
    let series = cfg.dataset(cfg.dataset_index(&spec.dataset)?)?;
    let n = spec.train_len.min(series.len());
    let pairs = training_pairs(&series.values()[..n], spec.nh, spec.nz, spec.stride, None);
    let tc = spec.train.resolve(cfg.seed);
    let net = LstmNet::init(spec.nh, spec.nz, tc.hidden, tc.seed)?;
    let (net, report) = train(net, &pairs, &tc)?;
    let out = cfg.output_path(&spec.output);
    io::write(&out, &net.to_text())?;
    let mut log = String::from("epoch,train_loss,validation_loss\n");
    for (e, (t, v)) in report.train_loss.iter().zip(&report.validation_loss).enumerate() {
        let v = v.map_or(String::new(), |x| x.to_string());
        let _ = writeln!(log, "{},{t},{v}", e + 1);
    }
    let mut log_path = out.clone().into_os_string();
    log_path.push(".log.csv");
    io::write(Path::new(&log_path), &log)?;
    Ok(vec![format!(
        "trained on {} pairs; final train loss {:.6}; model written to {}",
        pairs.len(),
        report.train_loss.last().copied().unwrap_or(f64::NAN),
        out.display()
    )])
}

fn default_points(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    cfg.detectors
        .iter()
        .map(|d| {
            let mut spec = d.params.clone();
            spec.load_models(&cfg.base_dir)?;
            Ok(GridPoint {
                detector_id: d.id.clone(),
                params_id: "default".into(),
                spec,
            })
        })
        .collect()
}

fn tag(dets: Vec<Detection>, p: &GridPoint) -> Vec<Detection> {
    dets.into_iter().map(|d| d.tagged(&p.detector_id, &p.params_id)).collect()
}

/// Runs `points` on every dataset; returns records with detections attached, and run logs.
fn execute(cfg: &ExperimentConfig, data: &[(String, LabeledSeries)], points: &[GridPoint]) -> (Vec<EvalRecord>, Vec<String>) {
    let logs = std::sync::Mutex::new(BTreeMap::new());
    let target = cfg.eval.target;
    let position = cfg.eval.position;
    let records = run_grid(data, points, |ds, series, p| {
        let out = p.spec.run(series.values(), false)?;
        if !out.log.is_empty() {
            logs.lock()
                .expect("log lock")
                .insert((ds.to_string(), p.detector_id.clone(), p.params_id.clone()), out.log);
        }
        let dets = tag(out.detections, p);
        if series.cp_labels().is_empty() {
            // unlabeled data: keep detections, no metrics
            return Ok(EvalRecord {
                dataset_id: ds.into(),
                detector_id: p.detector_id.clone(),
                params_id: p.params_id.clone(),
                n_detections: dets.len(),
                fpc: 0.0,
                arlp: None,
                target_found: false,
                error: Some("dataset has no labels".into()),
                detections: dets,
            });
        }
        score(ds, &p.detector_id, &p.params_id, series, dets, target, position)
    });
    let logs = logs
        .into_inner()
        .expect("log lock")
        .into_iter()
        .flat_map(|((ds, det, params), lines)| lines.into_iter().map(move |l| format!("{ds} {det} [{params}]: {l}")))
        .collect();
    (records, logs)
}

fn detection_rows(records: &[EvalRecord]) -> Vec<(String, Detection)> {
    records
        .iter()
        .flat_map(|r| r.detections.iter().map(move |d| (r.dataset_id.clone(), d.clone())))
        .collect()
}

fn summarize(records: &[EvalRecord]) -> Vec<String> {
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let n: usize = records.iter().map(|r| r.n_detections).sum();
    vec![format!("{} runs, {n} detections, {failed} without metrics", records.len())]
}

pub fn cmd_detect(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let data = datasets(cfg)?;
    let points = default_points(cfg)?;
    let (records, logs) = execute(cfg, &data, &points);
    for r in &records {
        if let Some(e) = &r.error {
            if r.detections.is_empty() && !e.contains("no labels") {
                return Err(Error::Untrainable(format!("{} on {}: {e}", r.detector_id, r.dataset_id)));
            }
        }
    }
    io::write(&cfg.output_path("detections.csv"), &io::format_detections(&detection_rows(&records)))?;
    io::write(&cfg.output_path("detect.log"), &(logs.join("\n") + "\n"))?;
    Ok(summarize(&records))
}

pub fn cmd_grid(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let data = datasets(cfg)?;
    let points = cfg.grid_points()?;
    let (records, logs) = execute(cfg, &data, &points);
    io::write(&cfg.output_path("grid_detections.csv"), &io::format_detections(&detection_rows(&records)))?;
    io::write(&cfg.output_path("metrics.csv"), &io::format_metrics(&records))?;
    io::write(&cfg.output_path("grid.log"), &(logs.join("\n") + "\n"))?;
    let mut lines = vec![format!("{} grid points x {} datasets", points.len(), data.len())];
    lines.extend(summarize(&records));
    Ok(lines)
}

pub fn cmd_eval(cfg: &ExperimentConfig, source: Source) -> Result<Vec<String>> {
    let (points, input, output) = match source {
        Source::Detect => (default_points(cfg)?, "detections.csv", "detect_metrics.csv"),
        Source::Grid => (cfg.grid_points()?, "grid_detections.csv", "metrics.csv"),
    };
    let text = std::fs::read_to_string(cfg.output_path(input))
        .map_err(|e| Error::Config(format!("cannot read {input}: {e}; run the producing command first")))?;
    let mut by_run: BTreeMap<(String, String, String), Vec<Detection>> = BTreeMap::new();
    for (ds, d) in io::parse_detections(&text)? {
        by_run
            .entry((ds, d.detector_id.clone(), d.params_id.clone()))
            .or_default()
            .push(d);
    }
    let data = datasets(cfg)?;
    let mut records = Vec::new();
    for (ds, series) in &data {
        for p in &points {
            let key = (ds.clone(), p.detector_id.clone(), p.params_id.clone());
            let mut dets = by_run.remove(&key).unwrap_or_default();
            dets.sort_by_key(|d| d.detect_time);
            records.push(score(ds, &p.detector_id, &p.params_id, series, dets, cfg.eval.target, cfg.eval.position)?);
        }
    }
    if let Some(((ds, det, params), _)) = by_run.into_iter().next() {
        return Err(Error::Config(format!("{input} has detections for unknown run {ds} {det} [{params}]")));
    }
    io::write(&cfg.output_path(output), &io::format_metrics(&records))?;
    Ok(summarize(&records))
}

/// Random baseline records, one pseudo-detector per false-positive count.
fn random_records(cfg: &ExperimentConfig, records: &[EvalRecord]) -> Result<Vec<EvalRecord>> {
    let Some(spec) = &cfg.eval.random else {
        return Ok(Vec::new());
    };
    let mut counts = spec.n_fp.clone();
    if spec.avg_max {
        let mut max_by_det: BTreeMap<&str, f64> = BTreeMap::new();
        for r in records.iter().filter(|r| r.error.is_none()) {
            let m = max_by_det.entry(&r.detector_id).or_insert(0.0);
            *m = m.max(r.fpc);
        }
        if !max_by_det.is_empty() {
            let avg = max_by_det.values().sum::<f64>() / max_by_det.len() as f64;
            counts.push(avg.round() as usize);
        }
    }
    counts.sort_unstable();
    counts.dedup();
    let mut out = Vec::new();
    for (i, src) in cfg.datasets.iter().enumerate() {
        let series = cfg.dataset(i)?;
        for &n in &counts {
            let mut r = random_baseline(&src.id, &series, cfg.eval.target, n, spec.repetitions, cfg.seed)?;
            r.detector_id = format!("random n_fp={n}");
            out.push(r);
        }
    }
    Ok(out)
}

fn cell(sel: Option<&Selection>) -> String {
    match sel {
        Some(Selection { winner: Some(w), .. }) => format!("{} / {:.2} ({})", w.fpc, w.arlp, w.params_id),
        Some(Selection { diagnostic: Some(d), .. }) => format!("- ({d})"),
        _ => "-".into(),
    }
}

fn selection_rows(scope: &str, sels: &[Selection]) -> Vec<Vec<String>> {
    sels.iter()
        .map(|s| {
            let w = s.winner.as_ref();
            vec![
                scope.to_string(),
                s.dataset_id.clone().unwrap_or_default(),
                s.detector_id.clone(),
                w.map_or(String::new(), |w| w.params_id.clone()),
                w.map_or(String::new(), |w| w.fpc.to_string()),
                w.map_or(String::new(), |w| w.arlp.to_string()),
                s.diagnostic.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

/// Serialized name of a unit enum variant.
fn name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Markdown report with per-dataset and overall winners.
pub fn render_report(cfg: &ExperimentConfig, records: &[EvalRecord]) -> (String, String) {
    let e = &cfg.eval;
    let per = select_best(records, &Scope::PerDataset, Some(e.cap_per_dataset), e.rule);
    let overall = select_best(records, &Scope::Overall, Some(e.cap_overall), e.rule);
    let ds_ids: Vec<&str> = cfg.datasets.iter().map(|d| d.id.as_str()).collect();
    let mut detectors: Vec<&str> = Vec::new();
    for r in records {
        if !detectors.contains(&r.detector_id.as_str()) {
            detectors.push(&r.detector_id);
        }
    }
    let mut md = String::from("# Detector comparison\n\n");
    let _ = writeln!(
        md,
        "Target: {}>{}. Positions: {}. Rule: {}. Entries are `Fpc / ArlP (parameters)`.\n",
        e.target.from.map_or("*".into(), |p| p.to_string()),
        e.target.to,
        name(&e.position),
        name(&e.rule)
    );
    let _ = writeln!(md, "## Best run per dataset (Fpc <= {})\n", e.cap_per_dataset);
    let _ = writeln!(md, "| detector | {} |", ds_ids.join(" | "));
    let _ = writeln!(md, "|---|{}", "---|".repeat(ds_ids.len()));
    for det in &detectors {
        let cells: Vec<String> = ds_ids
            .iter()
            .map(|ds| cell(per.iter().find(|s| s.detector_id == *det && s.dataset_id.as_deref() == Some(*ds))))
            .collect();
        let _ = writeln!(md, "| {det} | {} |", cells.join(" | "));
    }
    let _ = writeln!(
        md,
        "\n## Best run over all datasets (summed Fpc <= {}, mean ArlP)\n",
        e.cap_overall
    );
    md.push_str("| detector | result |\n|---|---|\n");
    for det in &detectors {
        let _ = writeln!(md, "| {det} | {} |", cell(overall.iter().find(|s| s.detector_id == *det)));
    }
    let mut rows = selection_rows("per_dataset", &per);
    rows.extend(selection_rows("overall", &overall));
    for (i, subset) in e.subsets.iter().enumerate() {
        let sel = select_best(records, &Scope::Subset(subset.clone()), Some(e.cap_subset), e.rule);
        let _ = writeln!(
            md,
            "\n## Subset {} ({}; summed Fpc <= {})\n",
            i + 1,
            subset.join(", "),
            e.cap_subset
        );
        md.push_str("| detector | result |\n|---|---|\n");
        for det in &detectors {
            let _ = writeln!(md, "| {det} | {} |", cell(sel.iter().find(|s| s.detector_id == *det)));
        }
        rows.extend(selection_rows(&format!("subset{}", i + 1), &sel));
    }
    let flags = validity_flags(records);
    if !flags.is_empty() {
        md.push_str("\n## Grid points outside the useful range\n\n");
        for f in &flags {
            let _ = writeln!(md, "- {} [{}]: {}", f.detector_id, f.params_id, f.reason);
        }
    }
    let failed: Vec<&EvalRecord> = records.iter().filter(|r| r.error.is_some()).collect();
    if !failed.is_empty() {
        md.push_str("\n## Failed runs\n\n");
        for r in failed {
            let _ = writeln!(
                md,
                "- {} {} [{}]: {}",
                r.dataset_id,
                r.detector_id,
                r.params_id,
                r.error.as_deref().unwrap_or("")
            );
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scope", "dataset", "detector", "params", "fpc", "arlp", "diagnostic"])
        .expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8");
    (md, csv)
}

pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(cfg.output_path("metrics.csv"))
        .map_err(|e| Error::Config(format!("cannot read metrics.csv: {e}; run `grid` first")))?;
    let mut records = io::parse_metrics(&text)?;
    let random = random_records(cfg, &records)?;
    records.extend(random);
    let (md, csv) = render_report(cfg, &records);
    io::write(&cfg.output_path("report.md"), &md)?;
    io::write(&cfg.output_path("selection.csv"), &csv)?;
    Ok(vec![format!("report written to {}", cfg.output_path("report.md").display())])
}

pub fn cmd_plot(
    cfg: &ExperimentConfig,
    dataset: Option<String>,
    detector: Option<String>,
    params: Option<String>,
) -> Result<Vec<String>> {
    let plot = cfg.plot.as_ref();
    let dataset = dataset
        .or_else(|| plot.map(|p| p.dataset.clone()))
        .ok_or_else(|| Error::Config("no dataset given for plot".into()))?;
    let detector = detector
        .or_else(|| plot.map(|p| p.detector.clone()))
        .ok_or_else(|| Error::Config("no detector given for plot".into()))?;
    let params = params
        .or_else(|| plot.map(|p| p.params.clone()))
        .unwrap_or_else(|| "default".into());
    let svg = plot.is_none_or(|p| p.svg);
    let series = cfg.dataset(cfg.dataset_index(&dataset)?)?;
    let point = default_points(cfg)?
        .into_iter()
        .chain(cfg.grid_points()?)
        .find(|p| p.detector_id == detector && p.params_id == params)
        .ok_or_else(|| Error::Config(format!("no run {detector} [{params}]")))?;
    let out = point.spec.run(series.values(), true)?;
    let dets = tag(out.detections, &point);
    let stem = format!("{dataset}_{detector}");
    let dir = cfg.output_path("plot");
    io::write(&dir.join(format!("{stem}_series.csv")), &io::format_dataset(&series))?;
    io::write(&dir.join(format!("{stem}_trace.csv")), &io::format_trace(&out.trace, out.threshold))?;
    let rows: Vec<(String, Detection)> = dets.iter().map(|d| (dataset.clone(), d.clone())).collect();
    io::write(&dir.join(format!("{stem}_detections.csv")), &io::format_detections(&rows))?;
    if svg {
        io::write(
            &dir.join(format!("{stem}.svg")),
            &render_svg(&series, &out.trace, out.threshold, &dets),
        )?;
    }
    Ok(vec![format!("{} detections; plot data in {}", dets.len(), dir.display())])
}

/// Two stacked panels: the series with labels and detections, then the chart
/// statistic with its threshold (dashed).
pub fn render_svg(
    series: &LabeledSeries,
    trace: &[crate::cusum::TracePoint],
    threshold: Option<f64>,
    detections: &[Detection],
) -> String {
    let n = series.len().max(2) as f64;
    let panels = if trace.is_empty() { 1.0 } else { 2.0 };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        SVG_H * panels
    );
    let values: Vec<(f64, f64)> = series.values().iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
    let top = Panel::new(0.0, n, &values, None);
    s.push_str("<text x=\"30\" y=\"18\">series</text>\n");
    s.push_str(&top.polyline(&values, "#333"));
    for l in series.cp_labels() {
        s.push_str(&top.vline(l.time as f64, "#2a7", true));
    }
    for d in detections {
        s.push_str(&top.vline(d.detect_time as f64, "#c33", false));
    }
    if !trace.is_empty() {
        let stat: Vec<(f64, f64)> = trace.iter().map(|p| (p.time as f64, p.statistic)).collect();
        let bottom = Panel::new(SVG_H, n, &stat, threshold);
        let _ = writeln!(s, "<text x=\"30\" y=\"{}\">chart statistic</text>", SVG_H + 18.0);
        s.push_str(&bottom.polyline(&stat, "#236"));
        if let Some(thr) = threshold {
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" x2=\"{:.1}\" y1=\"{2:.1}\" y2=\"{2:.1}\" stroke=\"#c33\" stroke-dasharray=\"6 4\"/>",
                bottom.x(stat[0].0),
                bottom.x(stat[stat.len() - 1].0),
                bottom.y(thr)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

const SVG_W: f64 = 900.0;
const SVG_H: f64 = 220.0;
const SVG_PAD: f64 = 30.0;

struct Panel {
    top: f64,
    n: f64,
    lo: f64,
    span: f64,
}

impl Panel {
    fn new(top: f64, n: f64, pts: &[(f64, f64)], extra: Option<f64>) -> Self {
        let init = extra.map_or((f64::INFINITY, f64::NEG_INFINITY), |e| (e.min(0.0), e));
        let (lo, hi) = pts.iter().fold(init, |(a, b), p| (a.min(p.1), b.max(p.1)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        Self { top, n, lo, span }
    }

    fn x(&self, t: f64) -> f64 {
        SVG_PAD + (SVG_W - 2.0 * SVG_PAD) * t / (self.n - 1.0)
    }

    fn y(&self, v: f64) -> f64 {
        self.top + SVG_H - SVG_PAD - (SVG_H - 2.0 * SVG_PAD) * (v - self.lo) / self.span
    }

    fn polyline(&self, pts: &[(f64, f64)], color: &str) -> String {
        let step = (pts.len() / 3000).max(1);
        let coords: Vec<String> = pts
            .iter()
            .step_by(step)
            .map(|&(t, v)| format!("{:.1},{:.1}", self.x(t), self.y(v)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    }

    fn vline(&self, t: f64, color: &str, dashed: bool) -> String {
        let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
        format!(
            "<line x1=\"{0:.1}\" x2=\"{0:.1}\" y1=\"{1:.1}\" y2=\"{2:.1}\" stroke=\"{color}\"{dash}/>\n",
            self.x(t),
            self.top + SVG_PAD,
            self.top + SVG_H - SVG_PAD
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["trendcpd", "nonsense"]), 1);
        assert_eq!(main_with_args(["trendcpd", "detect"]), 1);
    }

    #[test]
    fn missing_config_is_a_data_error() {
        assert_eq!(main_with_args(["trendcpd", "detect", "--config", "/nonexistent/x.toml"]), 2);
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Untrainable("x".into())), 3);
    }
}
