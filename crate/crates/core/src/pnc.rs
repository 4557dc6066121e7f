//! Predict-and-compare: forecast each hopping prediction window from its input
//! window and run a CUSUM of observation against forecast through the window.
//!
//! The chart carries over from one window to the next. After an alarm it is
//! reset, the current window is dropped, and monitoring resumes at the next
//! grid anchor after the alarm. With an on-detection refit policy the model is
//! refitted on `refit_warmup` points starting at the located change point, and
//! monitoring resumes once those points exist.

use serde::{Deserialize, Serialize};

use crate::cusum::{CusumParams, CusumState, TracePoint};
use crate::error::{Error, Result};
use crate::predict::{refit_on_detection, Predictor, PredictorSpec, Refit, RefitPolicy};
use crate::series::{next_anchor, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PncConfig {
    pub l: usize,
    pub b: usize,
    pub cusum: CusumParams,
    /// Points after the located change point a refit uses.
    pub refit_warmup: usize,
    /// Start every window with a fresh chart instead of carrying it over.
    #[serde(default)]
    pub reset_each_window: bool,
}

impl PncConfig {
    pub fn new(l: usize, b: usize, cusum: CusumParams) -> Self {
        Self {
            l,
            b,
            cusum,
            refit_warmup: 100,
            reset_each_window: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.b == 0 {
            return Err(Error::param("l/b", "window lengths must be positive"));
        }
        self.cusum.validate()
    }
}

/// A configured detector: trained model plus chart settings.
#[derive(Debug)]
pub struct PncDetector {
    predictor: Box<dyn Predictor>,
    /// Present when the model is refitted after detections.
    refit: Option<PredictorSpec>,
    config: PncConfig,
    detector_id: String,
    params_id: String,
}

impl PncDetector {
    pub fn new(predictor: Box<dyn Predictor>, config: PncConfig) -> Result<Self> {
        config.validate()?;
        if predictor.input_len() != config.l {
            return Err(Error::ShapeMismatch {
                expected: config.l,
                actual: predictor.input_len(),
            });
        }
        if predictor.horizon() != config.b {
            return Err(Error::ShapeMismatch {
                expected: config.b,
                actual: predictor.horizon(),
            });
        }
        Ok(Self {
            predictor,
            refit: None,
            config,
            detector_id: "pnc".into(),
            params_id: String::new(),
        })
    }

    /// Refits with `spec` after each detection when its policy asks for it.
    pub fn with_refit(mut self, spec: PredictorSpec) -> Result<Self> {
        if spec.l != self.config.l || spec.b != self.config.b {
            return Err(Error::param("refit", "refit spec window lengths differ from the detector's"));
        }
        self.refit = (spec.refit_policy == RefitPolicy::OnDetection).then_some(spec);
        Ok(self)
    }

    pub fn tagged(mut self, detector_id: &str, params_id: &str) -> Self {
        self.detector_id = detector_id.into();
        self.params_id = params_id.into();
        self
    }

    pub fn config(&self) -> &PncConfig {
        &self.config
    }

    pub fn predictor(&self) -> &dyn Predictor {
        self.predictor.as_ref()
    }

    /// Runs the whole series through a fresh stream.
    pub fn run_stream(self, values: &[f64]) -> Result<PncRun> {
        self.run(values, false)
    }

    /// Like [`run_stream`](Self::run_stream), keeping the chart trace.
    pub fn run_traced(self, values: &[f64]) -> Result<PncRun> {
        self.run(values, true)
    }

    fn run(self, values: &[f64], trace: bool) -> Result<PncRun> {
        let l = self.config.l;
        if values.len() <= l {
            return Err(Error::InsufficientHistory {
                needed: l,
                available: values.len(),
            });
        }
        let mut stream = PncStream::with_history(self, &values[..l])?.record_trace(trace);
        for &x in &values[l..] {
            stream.push(x)?;
        }
        Ok(stream.finish())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunEvent {
    /// Forecast failed or was not finite; the window was not compared.
    WindowSkipped { anchor: usize, reason: String },
    Refitted { at: usize, located: usize },
    RefitKept { at: usize, located: usize, reason: String },
    /// A refit was still waiting for post-change data when the stream ended.
    RefitPending { located: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PncRun {
    pub detections: Vec<Detection>,
    pub events: Vec<RunEvent>,
    pub trace: Vec<TracePoint>,
}

struct Window {
    anchor: usize,
    forecast: Vec<f64>,
}

/// Incremental form of [`PncDetector::run_stream`].
pub struct PncStream {
    det: PncDetector,
    history: Vec<f64>,
    chart: CusumState,
    window: Option<Window>,
    next_anchor: usize,
    pending_refit: Option<usize>,
    record_trace: bool,
    out: PncRun,
}

impl PncStream {
    /// Starts monitoring after `history`, which must hold at least `l` points.
    pub fn with_history(det: PncDetector, history: &[f64]) -> Result<Self> {
        let l = det.config.l;
        if history.len() < l {
            return Err(Error::InsufficientHistory {
                needed: l,
                available: history.len(),
            });
        }
        if history.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stream history"));
        }
        let chart = CusumState::new(det.config.cusum, history.len());
        Ok(Self {
            next_anchor: next_anchor(l, det.config.b, history.len()),
            det,
            history: history.to_vec(),
            chart,
            window: None,
            pending_refit: None,
            record_trace: false,
            out: PncRun {
                detections: Vec::new(),
                events: Vec::new(),
                trace: Vec::new(),
            },
        })
    }

    /// Keep per-step chart values for plotting.
    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn detections(&self) -> &[Detection] {
        &self.out.detections
    }

    /// Consumes one observation; returns the detection it triggers, if any.
    pub fn push(&mut self, x: f64) -> Result<Option<Detection>> {
        if !x.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        self.open_window();
        let i = self.history.len();
        self.history.push(x);
        let mut found = None;
        if let Some(w) = &self.window {
            let j = i - w.anchor;
            let target = w.forecast[j];
            let last_in_window = j + 1 == w.forecast.len();
            let alarm = self.chart.step(x, target);
            if self.record_trace {
                self.out.trace.push(TracePoint {
                    time: i,
                    value: x,
                    target,
                    statistic: self.chart.statistic(),
                    alarm,
                });
            }
            if alarm {
                let located = self.chart.locate()?;
                let det = Detection::new(i, located).tagged(&self.det.detector_id, &self.det.params_id);
                self.out.detections.push(det.clone());
                found = Some(det);
                self.chart.reset();
                self.window = None;
                let mut resume = i + 1;
                if self.det.refit.is_some() {
                    self.pending_refit = Some(located);
                    resume = resume.max(located + self.det.config.refit_warmup);
                }
                self.next_anchor = next_anchor(self.det.config.l, self.det.config.b, resume);
            } else if last_in_window {
                self.window = None;
            }
        }
        Ok(found)
    }

    /// Opens the window anchored at the current length, just before its first observation.
    fn open_window(&mut self) {
        let n = self.history.len();
        if self.window.is_some() || n != self.next_anchor {
            return;
        }
        let cfg = &self.det.config;
        let (l, b) = (cfg.l, cfg.b);
        if let Some(located) = self.pending_refit.take() {
            let spec = self.det.refit.as_ref().expect("pending refit implies a spec");
            match refit_on_detection(spec, &self.history, located, cfg.refit_warmup) {
                Refit::Replaced(m) => {
                    self.det.predictor = Box::new(m);
                    self.out.events.push(RunEvent::Refitted { at: n, located });
                }
                Refit::Kept { reason } => self.out.events.push(RunEvent::RefitKept { at: n, located, reason }),
            }
        }
        self.next_anchor = n + b;
        let forecast = self
            .det
            .predictor
            .forecast(&self.history[n - l..n])
            .and_then(|f| {
                if f.len() != b {
                    Err(Error::ShapeMismatch {
                        expected: b,
                        actual: f.len(),
                    })
                } else if f.iter().any(|v| !v.is_finite()) {
                    Err(Error::NonFinite("forecast"))
                } else {
                    Ok(f)
                }
            });
        match forecast {
            Ok(forecast) => {
                if self.det.config.reset_each_window {
                    self.chart.reset();
                }
                self.chart.skip_to(n);
                self.window = Some(Window { anchor: n, forecast });
            }
            Err(e) => self.out.events.push(RunEvent::WindowSkipped {
                anchor: n,
                reason: e.to_string(),
            }),
        }
    }

    pub fn finish(mut self) -> PncRun {
        if let Some(located) = self.pending_refit {
            self.out.events.push(RunEvent::RefitPending { located });
        }
        self.out
    }
}
