//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! `cargo test --release --test acceptance`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use clap::Parser;

use trendcpd::cli::{exit_code, run, Cli};
use trendcpd::config::ExperimentConfig;
use trendcpd::cusum::{CusumParams, CusumState, Direction, TargetMode};
use trendcpd::detector::DetectorSpec;
use trendcpd::eval::{arlp, attribute, score, Position, TargetSpec};
use trendcpd::io::parse_metrics;
use trendcpd::lstm::{relative_error, LstmNet};
use trendcpd::pnc::{PncConfig, PncDetector};
use trendcpd::predict::arima::{auto_arima, fit_arima};
use trendcpd::predict::{fit, PredictorKind, PredictorSpec, Training};
use trendcpd::refdet::bayes::{NigPrior, RunLengthPosterior};
use trendcpd::refdet::ocd::{self, OcdParams};
use trendcpd::refdet::ClassicCusum;
use trendcpd::simulate::{poisson_draw, sample_step_series, stream_rng};
use trendcpd::standardize::{estimate_trend, standardize, Mode};
use trendcpd::{Detection, LabeledSeries};

const DEMO: &str = include_str!("../configs/demo.toml");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Name, runtime limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("cusum oracle equivalence", 10, c1_oracle),
        ("first-alarm monotonicity", 30, c2_monotone),
        ("standardization moments", 60, c3_standardize),
        ("lstm gradient check", 10, c4_gradient),
        ("arima recovery", 60, c5_arima),
        ("threshold-matched comparison", 60, c6_threshold_matched),
        ("metric fidelity", 1, c7_metrics),
        ("bayesian evidence exactness", 30, c8_bayes),
        ("end-to-end wear scenario", 600, c9_wear),
        ("determinism", 600, c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*limit);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.2} s, limit {limit} s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 ----------------------------------------------------------------------

fn c1_oracle() -> Outcome {
    let mut rng = stream_rng(1, 0);
    let dyadic = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(-64i32..=64) as f64 / 8.0;
    let mut mismatches = 0;
    let mut alarms = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=200);
        let k = rng.random_range(0..=8) as f64 / 8.0;
        let thr = rng.random_range(1..=80) as f64 / 8.0;
        let down = rng.random_bool(0.5);
        let mut params = CusumParams::new(k, thr).unwrap();
        if down {
            params.direction = Direction::Down;
        }
        let mut chart = CusumState::new(params, 0);
        let mut since_reset: Vec<f64> = Vec::new();
        for _ in 0..n {
            let x = dyadic(&mut rng);
            let target = dyadic(&mut rng);
            let alarm = chart.step(x, target);
            since_reset.push(if down { x - target + k } else { x - target - k });
            // S_j from scratch: extreme suffix sum since the last reset
            let mut s = 0.0f64;
            for i in 0..since_reset.len() {
                let tail: f64 = since_reset[i..].iter().sum();
                s = if down { s.min(tail) } else { s.max(tail) };
            }
            let expect_alarm = if down { s < -thr } else { s > thr };
            if chart.statistic() != s || alarm != expect_alarm {
                mismatches += 1;
            }
            if alarm {
                alarms += 1;
                chart.reset();
                since_reset.clear();
            }
        }
    }
    outcome(mismatches == 0, format!("1000 streams, {alarms} alarms, {mismatches} mismatching steps"))
}

// 2 ----------------------------------------------------------------------

fn first_alarm(d: &[Detection]) -> usize {
    d.first().map_or(usize::MAX, |d| d.detect_time)
}

fn c2_monotone() -> Outcome {
    let thresholds: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    let mut violations = 0;
    let mut sweeps = 0;
    for seed in 0..100 {
        let s = sample_step_series(0.0, 1.5, 1.0, 150, 300, seed).unwrap();
        let v = s.values();
        let ar = fit(&PredictorSpec::new(PredictorKind::Ar { p: 1 }, 20, 5).unwrap(), Training::History(&v[..100])).unwrap();
        let detectors: Vec<Box<dyn Fn(f64) -> usize>> = vec![
            Box::new(|t| first_alarm(&ClassicCusum::new(CusumParams::new(0.5, t).unwrap(), TargetMode::Constant { theta: 0.0 }).unwrap().detect(v))),
            Box::new(|t| first_alarm(&ClassicCusum::new(CusumParams::new(0.5, t).unwrap(), TargetMode::RunningMean { window: 20 }).unwrap().detect(v))),
            Box::new(|t| {
                let det = PncDetector::new(Box::new(ar.clone()), PncConfig::new(20, 5, CusumParams::new(0.5, t).unwrap())).unwrap();
                first_alarm(&det.run_stream(v).unwrap().detections)
            }),
            Box::new(|t| {
                let det = PncDetector::new(Box::new(ar.clone()), PncConfig::new(20, 5, CusumParams::new(0.25, t).unwrap().down())).unwrap();
                first_alarm(&det.run_stream(v).unwrap().detections)
            }),
            Box::new(|t| {
                let p = OcdParams { diag: 2.0 * t, off_diag: 2.0 * t, h_tail: 30, baseline: 50 };
                first_alarm(&ocd::detect(&p, v).unwrap())
            }),
        ];
        for d in &detectors {
            sweeps += 1;
            let firsts: Vec<usize> = thresholds.iter().map(|&t| d(t)).collect();
            if firsts.windows(2).any(|w| w[1] < w[0]) {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{sweeps} sweeps of 10 thresholds, {violations} with an earlier alarm at a higher threshold"))
}

// 3 ----------------------------------------------------------------------

fn tail_moments(z: &[f64]) -> (f64, f64) {
    trendcpd::numeric::mean_var(&z[z.len() / 2..])
}

fn c3_standardize() -> Outcome {
    let n = 50_000;
    let mut ok_offline = 0;
    let mut ok_online = 0;
    let mut nu_ok = 0;
    let mut nus = Vec::new();
    let mut moments = Vec::new();
    for seed in 0..20 {
        let mut rng = stream_rng(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| poisson_draw(&mut rng, 4.0)).collect();
        let s = LabeledSeries::unlabeled(xs.clone()).unwrap();
        let inside = |(m, v): (f64, f64)| (-0.1..=0.1).contains(&m) && (0.8..=1.2).contains(&v);
        let off = tail_moments(standardize(&s, 0, Mode::Offline).unwrap().series.values());
        let on = tail_moments(standardize(&s, 0, Mode::Online).unwrap().series.values());
        ok_offline += inside(off) as usize;
        ok_online += inside(on) as usize;
        moments.push(off);
        let nu = estimate_trend(&xs, 0, n).unwrap().nu_hat;
        nu_ok += (nu.abs() <= 0.05) as usize;
        nus.push(nu);
    }
    let quad: Vec<f64> = (1..=n).map(|t| (2 * t - 1) as f64).collect();
    let nu_quad = estimate_trend(&quad, 0, n).unwrap().nu_hat;
    let quad_ok = (nu_quad - 1.0).abs() <= 0.05;
    let mean_nu = nus.iter().sum::<f64>() / nus.len() as f64;
    let mean_m = moments.iter().map(|m| m.0).sum::<f64>() / 20.0;
    let mean_v = moments.iter().map(|m| m.1).sum::<f64>() / 20.0;
    outcome(
        ok_offline >= 18 && nu_ok == 20 && quad_ok,
        format!(
            "moments in range offline {ok_offline}/20 (mean {mean_m:.3}, var {mean_v:.3}), online {ok_online}/20; \
             nu within 0.05 of 0 in {nu_ok}/20 (mean {mean_nu:.4}); quadratic nu {nu_quad:.4}"
        ),
    )
}

// 4 ----------------------------------------------------------------------

fn c4_gradient() -> Outcome {
    let mut rng = stream_rng(4, 0);
    let mut worst = 0.0f64;
    // five-point stencil: truncation O(h^4) lets h be large enough that
    // roundoff stays well below the smallest gradients
    let h = 3e-3;
    for case in 0..10u64 {
        let mut net = LstmNet::init(6, 2, 4, 40 + case).unwrap();
        for v in net.params_mut() {
            *v *= 3.0;
        }
        let x: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (_, g) = net.backward(&x, &y).unwrap();
        for (i, &gi) in g.iter().enumerate() {
            let loss = |d: f64| {
                let mut moved = net.clone();
                moved.params_mut()[i] += d;
                moved.backward(&x, &y).unwrap().0
            };
            let num = (loss(-2.0 * h) - 8.0 * loss(-h) + 8.0 * loss(h) - loss(2.0 * h)) / (12.0 * h);
            worst = worst.max(relative_error(gi, num));
        }
    }
    let n = LstmNet::param_count(2, 4);
    outcome(worst < 1e-4, format!("{n} parameters x 10 inputs, max relative error {worst:.2e} (limit 1e-4)"))
}

// 5 ----------------------------------------------------------------------

fn c5_arima() -> Outcome {
    let mut close = 0;
    let mut phis = Vec::new();
    for seed in 0..10 {
        let mut rng = stream_rng(500 + seed, 0);
        let mut x = vec![0.0f64; 2000];
        for t in 1..2000 {
            let e: f64 = rng.sample(StandardNormal);
            x[t] = 0.5 * x[t - 1] + e;
        }
        let phi = fit_arima(&x, 1, 0, 0).unwrap().phi[0];
        close += ((phi - 0.5).abs() <= 0.1) as usize;
        phis.push(format!("{phi:.3}"));
    }
    let ramp: Vec<f64> = (0..300).map(|i| 2.0 + 0.25 * i as f64).collect();
    let d = auto_arima(&ramp).unwrap().d;
    outcome(close >= 9 && d >= 1, format!("phi within 0.1 in {close}/10 ({}); ramp order d = {d}", phis.join(" ")))
}

// 6 ----------------------------------------------------------------------

/// (false positives, first detection time at or after the change) on a step at index `cp`.
fn fp_and_hit(dets: &[Detection], cp: usize, n: usize) -> (usize, Option<usize>) {
    let a = attribute(dets, cp, cp..n, Position::Located);
    (a.fpc(), a.target.map(|d| d.detect_time))
}

/// Seeds (out of 20) where the threshold-matched comparison favours P&C, with
/// the classic chart's target drawn from `classic_target(training stretch)`.
fn c6_count(classic_target: fn(&[f64]) -> TargetMode) -> (usize, BTreeMap<&'static str, usize>) {
    let (cp, n, l, b) = (100, 200, 20, 5);
    let thresholds: Vec<f64> = (2..=80).map(|i| i as f64 * 0.25).collect();
    let mut passed = 0;
    let mut notes = BTreeMap::<&str, usize>::new();
    for seed in 0..20 {
        let s = sample_step_series(0.0, 2.0, 1.0, cp, n, 600 + seed).unwrap();
        let v = s.values();
        let train = &v[..60];
        let model = fit(&PredictorSpec::new(PredictorKind::Ar { p: 1 }, l, b).unwrap(), Training::History(train)).unwrap();
        let target = classic_target(train);
        let pnc = |t: f64| {
            let det = PncDetector::new(Box::new(model.clone()), PncConfig::new(l, b, CusumParams::new(0.5, t).unwrap())).unwrap();
            fp_and_hit(&det.run_stream(v).unwrap().detections, cp, n)
        };
        let classic = |t: f64| {
            let det = ClassicCusum::new(CusumParams::new(0.5, t).unwrap(), target.clone()).unwrap();
            fp_and_hit(&det.detect(v), cp, n)
        };
        // most sensitive threshold where P&C is clean and detects within 30 steps
        let Some((thr, pnc_hit)) = thresholds.iter().find_map(|&t| match pnc(t) {
            (0, Some(h)) if h <= cp + 30 => Some((t, h)),
            _ => None,
        }) else {
            *notes.entry("no clean P&C threshold").or_default() += 1;
            continue;
        };
        if classic(thr).0 == 0 {
            *notes.entry("classic also clean at that threshold").or_default() += 1;
            continue;
        }
        let clean_classic = thresholds.iter().find_map(|&t| match classic(t) {
            (0, Some(h)) => Some(h),
            _ => None,
        });
        match clean_classic {
            Some(h) if h <= pnc_hit => *notes.entry("clean classic detects as early").or_default() += 1,
            _ => passed += 1,
        }
    }
    (passed, notes)
}

fn c6_threshold_matched() -> Outcome {
    // the textbook target: in-control mean of the training stretch
    let (passed, notes) = c6_count(|train| TargetMode::Constant {
        theta: train.iter().sum::<f64>() / train.len() as f64,
    });
    // same comparison against a running-mean target, reported only
    let (running, _) = c6_count(|_| TargetMode::RunningMean { window: 20 });
    let why: Vec<String> = notes.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    outcome(
        passed >= 16,
        format!(
            "{passed}/20 seeds (need 16); {}; running-mean target variant {running}/20",
            if why.is_empty() { "-".into() } else { why.join(", ") }
        ),
    )
}

// 7 ----------------------------------------------------------------------

fn c7_metrics() -> Outcome {
    let phase = 3158.0;
    let detection = 3476.0;
    let label = detection - 0.0732 * phase;
    let a = arlp(detection, label, phase).unwrap();
    let arlp_ok = (a - 7.32).abs() < 0.005;
    let dets = [
        Detection::new(1200, 1200),
        Detection::new(2100, 2100),
        Detection::new(3476, 3476),
        Detection::new(3600, 3600),
        Detection::new(3900, 3890),
    ];
    let region = 3245..3245 + 3158;
    let att = attribute(&dets, 3245, region.clone(), Position::Located);
    let dropped = att.fpc() == 2 && att.target.as_ref().map(|d| d.detect_time) == Some(3476);
    let no_dets = attribute(&[], 3245, region, Position::Located);
    let empty_ok = no_dets.fpc() == 0 && no_dets.target.is_none();
    outcome(
        arlp_ok && dropped && empty_ok,
        format!("arlp {a:.4} at label {label:.2}; fpc {} with two post-target detections ignored", att.fpc()),
    )
}

// 8 ----------------------------------------------------------------------

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn brute_force(xs: &[f64], h: f64, prior: &NigPrior) -> f64 {
    let n = xs.len();
    let mut terms = Vec::with_capacity(1 << (n - 1));
    for mask in 0u32..(1 << (n - 1)) {
        let mut lp = 0.0;
        let mut start = 0;
        for gap in 0..n - 1 {
            if mask & (1 << gap) != 0 {
                lp += h.ln() + prior.log_marginal(&xs[start..=gap]);
                start = gap + 1;
            } else {
                lp += (1.0 - h).ln();
            }
        }
        terms.push(lp + prior.log_marginal(&xs[start..]));
    }
    log_sum_exp(&terms)
}

fn c8_bayes() -> Outcome {
    let priors = [
        NigPrior::default(),
        NigPrior { mu0: 1.0, kappa0: 0.5, alpha0: 2.0, beta0: 0.5 },
    ];
    let mut rng = stream_rng(8, 0);
    let mut worst_ev = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut cases = 0;
    for len in 1..=12 {
        for &hazard in &[0.01, 0.1, 0.5] {
            for prior in &priors {
                let shift = if len > 4 { 3.0 } else { 0.0 };
                let xs: Vec<f64> = (0..len)
                    .map(|i| rng.sample::<f64, _>(StandardNormal) + if i >= len / 2 { shift } else { 0.0 })
                    .collect();
                let mut post = RunLengthPosterior::new(hazard, *prior).unwrap();
                for &x in &xs {
                    post.update(x);
                    worst_norm = worst_norm.max((post.probs().iter().sum::<f64>() - 1.0).abs());
                }
                let bf = brute_force(&xs, hazard, prior);
                worst_ev = worst_ev.max((post.log_evidence() - bf).abs() / bf.abs().max(f64::MIN_POSITIVE));
                cases += 1;
            }
        }
    }
    outcome(
        worst_ev <= 1e-8 && worst_norm <= 1e-12,
        format!("{cases} series, max relative evidence error {worst_ev:.1e}, max |sum - 1| {worst_norm:.1e}"),
    )
}

// 9 ----------------------------------------------------------------------

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text.replace("output_dir = \"../out/demo\"", "output_dir = \"out\"")).unwrap();
    path
}

/// Exit code of one command; its progress lines are dropped to keep the summary readable.
fn cli(cmd: &str, config: &Path) -> i32 {
    let parsed = Cli::try_parse_from(["trendcpd", cmd, "-c", &config.display().to_string()]).expect("valid command line");
    match run(&parsed.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("{cmd}: {e}");
            exit_code(&e)
        }
    }
}

fn c9_wear() -> Outcome {
    let scratch = tempfile::tempdir().unwrap();
    let mut hits = 0;
    let mut fpcs = Vec::new();
    for seed in 0..20u64 {
        let cfg = ExperimentConfig::parse(DEMO, scratch.path(), Some(seed)).unwrap();
        let z = cfg.dataset(cfg.dataset_index("wear-1").unwrap()).unwrap();
        let entry = cfg.detectors.iter().find(|d| d.id == "pnc-ar").unwrap();
        let spec: &DetectorSpec = &entry.params;
        let out = spec.run(z.values(), false).unwrap();
        let rec = score("wear-1", "pnc-ar", "default", &z, out.detections, TargetSpec::default(), Position::Located).unwrap();
        hits += (rec.target_found && rec.fpc <= 10.0) as usize;
        fpcs.push(rec.fpc as usize);
    }

    let start = Instant::now();
    let config = write_config(scratch.path(), DEMO);
    let codes: Vec<i32> = ["simulate", "grid", "report"].iter().map(|c| cli(c, &config)).collect();
    let took = start.elapsed().as_secs_f64();
    let out = scratch.path().join("out");
    let metrics = fs::read_to_string(out.join("metrics.csv")).ok().and_then(|t| parse_metrics(&t).ok()).unwrap_or_default();
    let mut points = BTreeMap::<&str, std::collections::BTreeSet<&str>>::new();
    for r in &metrics {
        points.entry(&r.detector_id).or_default().insert(&r.params_id);
    }
    let datasets: std::collections::BTreeSet<&str> = metrics.iter().map(|r| r.dataset_id.as_str()).collect();
    let rich = points.values().filter(|p| p.len() >= 5).count();
    let report = fs::read_to_string(out.join("report.md")).unwrap_or_default();
    let grid_ok = codes.iter().all(|&c| c == 0) && rich >= 3 && datasets.len() >= 3 && report.contains("## Best run per dataset") && took < 600.0;
    outcome(
        hits >= 18 && grid_ok,
        format!(
            "target found with fpc <= 10 in {hits}/20 seeds (fpc {fpcs:?}); grid {} detectors with >= 5 points x {} datasets in {took:.1} s, report {}",
            rich,
            datasets.len(),
            if report.is_empty() { "missing" } else { "written" }
        ),
    )
}

// 10 ---------------------------------------------------------------------

const LSTM_EXTRA: &str = r#"
[train_lstm]
dataset = "wear-1"
nh = 50
nz = 10
train_len = 1200
stride = 4
output = "models/lstm.txt"
[train_lstm.train]
epochs = 4
hidden = 8

[[detectors]]
id = "pnc-lstm"
[detectors.params]
method = "pnc"
predictor = { kind = "lstm", model = "out/models/lstm.txt" }
l = 50
b = 10
desInt = 5.0
"#;

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for e in entries {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_determinism() -> Outcome {
    let commands = ["simulate", "standardize", "train-lstm", "detect", "eval", "grid", "report", "plot"];
    let scratch = tempfile::tempdir().unwrap();
    let config = write_config(scratch.path(), &format!("{DEMO}\n{LSTM_EXTRA}"));
    let out = scratch.path().join("out");
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for _ in 0..2 {
        for c in commands {
            let code = cli(c, &config);
            if code != 0 {
                failures.push(format!("{c} exited {code}"));
            }
        }
        runs.push(snapshot(&out));
        let _ = fs::remove_dir_all(&out);
    }
    let differing: Vec<String> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .chain(runs[1].keys().filter(|k| !runs[0].contains_key(*k)).map(|k| k.display().to_string()))
        .collect();
    outcome(
        failures.is_empty() && differing.is_empty() && !runs[0].is_empty(),
        format!(
            "{} commands run twice, {} files compared, {} differ{}",
            commands.len(),
            runs[0].len(),
            differing.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}
