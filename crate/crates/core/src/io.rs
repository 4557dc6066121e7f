//! File formats. Times are 1-based in every file and 0-based in memory.
//!
//! Dataset CSV: header `time,value,phase,cp`. `phase` is one of B/E/K/A/V or
//! empty; `cp` is empty or a `from>to` marker on the first row of a new phase.
//! Labels may instead come from a sidecar CSV with header `time,cp`.

use std::fs;
use std::path::Path;

use crate::cusum::TracePoint;
use crate::error::{Error, Result};
use crate::eval::EvalRecord;
use crate::lstm::LstmNet;
use crate::predict::Trained;
use crate::series::{CpLabel, Detection, LabeledSeries, Phase};

const DATASET_HEADER: [&str; 4] = ["time", "value", "phase", "cp"];
const DETECTIONS_HEADER: [&str; 5] = ["dataset", "detector", "params", "detect_time", "located_time"];
const METRICS_HEADER: [&str; 8] = [
    "dataset",
    "detector",
    "params",
    "n_detections",
    "fpc",
    "arlp",
    "target_found",
    "error",
];
const TRACE_HEADER: [&str; 6] = ["time", "value", "target", "statistic", "threshold", "alarm"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

/// Rows as string vectors with their line numbers, after checking the header.
fn rows(text: &str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = reader(text);
    let mut out = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if !seen_header {
            let got: Vec<&str> = rec.iter().collect();
            if got != header {
                return Err(Error::parse(line, format!("expected header `{}`", header.join(","))));
            }
            seen_header = true;
            continue;
        }
        out.push((line, rec));
    }
    if !seen_header {
        return Err(Error::parse(1, "empty file"));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} `{s}`")))
}

fn parse_marker(line: usize, s: &str) -> Result<(Phase, Phase)> {
    let (a, b) = s
        .split_once('>')
        .ok_or_else(|| Error::parse(line, format!("change point marker `{s}` is not of the form from>to")))?;
    let p = |x: &str| x.parse::<Phase>().map_err(|e| Error::parse(line, e.to_string()));
    Ok((p(a)?, p(b)?))
}

fn time_index(line: usize, t: usize) -> Result<usize> {
    t.checked_sub(1)
        .ok_or_else(|| Error::parse(line, "times start at 1"))
}

/// Parses a dataset. Times must run 1, 2, ... without gaps; values must be finite.
pub fn parse_dataset(text: &str) -> Result<LabeledSeries> {
    let mut values = Vec::new();
    let mut phases = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rows(text, &DATASET_HEADER)? {
        let t: usize = field(line, &rec, 0, "time")?;
        if t != values.len() + 1 {
            return Err(Error::parse(line, format!("expected time {}, found {t}", values.len() + 1)));
        }
        let v: f64 = field(line, &rec, 1, "value")?;
        if !v.is_finite() {
            return Err(Error::parse(line, "missing or non-finite value"));
        }
        values.push(v);
        match &rec[2] {
            "" => phases.push(None),
            s => phases.push(Some(s.parse::<Phase>().map_err(|e| Error::parse(line, e.to_string()))?)),
        }
        if !rec[3].is_empty() {
            let (from, to) = parse_marker(line, &rec[3])?;
            labels.push(CpLabel::new(t - 1, from, to));
        }
    }
    let tags = if phases.iter().all(Option::is_none) {
        None
    } else if phases.iter().all(Option::is_some) {
        Some(phases.into_iter().map(Option::unwrap).collect())
    } else {
        return Err(Error::InvalidSeries("phase column must be filled on every row or on none".into()));
    };
    LabeledSeries::new(values, tags, labels)
}

/// Parses a `time,cp` sidecar into labels.
pub fn parse_labels(text: &str) -> Result<Vec<CpLabel>> {
    rows(text, &["time", "cp"])?
        .into_iter()
        .map(|(line, rec)| {
            let t = time_index(line, field(line, &rec, 0, "time")?)?;
            let (from, to) = parse_marker(line, &rec[1])?;
            Ok(CpLabel::new(t, from, to))
        })
        .collect()
}

/// Replaces the labels of an untagged series with sidecar labels, deriving
/// phases when the first label names the initial phase.
pub fn apply_labels(series: &LabeledSeries, labels: Vec<CpLabel>) -> Result<LabeledSeries> {
    if !series.cp_labels().is_empty() {
        return Err(Error::InvalidSeries("dataset already carries labels; a sidecar is not allowed".into()));
    }
    match labels.first() {
        Some(first) => LabeledSeries::from_labels(series.values().to_vec(), first.from, labels),
        None => Ok(series.clone()),
    }
}

pub fn format_dataset(series: &LabeledSeries) -> String {
    let mut out = DATASET_HEADER.join(",");
    out.push('\n');
    let mut labels = series.cp_labels().iter().peekable();
    for (i, v) in series.values().iter().enumerate() {
        let phase = series.phases().map_or(String::new(), |p| p[i].to_string());
        let cp = match labels.peek() {
            Some(l) if l.time == i => {
                let l = labels.next().expect("peeked");
                format!("{}>{}", l.from, l.to)
            }
            _ => String::new(),
        };
        out.push_str(&format!("{},{v},{phase},{cp}\n", i + 1));
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<LabeledSeries> {
    parse_dataset(&fs::read_to_string(path)?).map_err(|e| with_path(e, path))
}

pub fn write_dataset(path: &Path, series: &LabeledSeries) -> Result<()> {
    write(path, &format_dataset(series))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::InvalidSeries(m) => Error::InvalidSeries(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Writes a file, creating parent directories.
pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
}

/// One row per detection, tagged with its dataset.
pub fn format_detections(rows: &[(String, Detection)]) -> String {
    to_csv(
        &DETECTIONS_HEADER,
        rows.iter().map(|(ds, d)| {
            vec![
                ds.clone(),
                d.detector_id.clone(),
                d.params_id.clone(),
                (d.detect_time + 1).to_string(),
                (d.located_time + 1).to_string(),
            ]
        }),
    )
}

pub fn parse_detections(text: &str) -> Result<Vec<(String, Detection)>> {
    rows(text, &DETECTIONS_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let detect = time_index(line, field(line, &rec, 3, "detect_time")?)?;
            let located = time_index(line, field(line, &rec, 4, "located_time")?)?;
            if located > detect {
                return Err(Error::parse(line, "located_time after detect_time"));
            }
            Ok((rec[0].to_string(), Detection::new(detect, located).tagged(&rec[1], &rec[2])))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn format_metrics(records: &[EvalRecord]) -> String {
    to_csv(
        &METRICS_HEADER,
        records.iter().map(|r| {
            vec![
                r.dataset_id.clone(),
                r.detector_id.clone(),
                r.params_id.clone(),
                r.n_detections.to_string(),
                r.fpc.to_string(),
                opt(r.arlp),
                r.target_found.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn parse_metrics(text: &str) -> Result<Vec<EvalRecord>> {
    rows(text, &METRICS_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(EvalRecord {
                dataset_id: rec[0].to_string(),
                detector_id: rec[1].to_string(),
                params_id: rec[2].to_string(),
                n_detections: field(line, &rec, 3, "n_detections")?,
                fpc: field(line, &rec, 4, "fpc")?,
                arlp: if rec[5].is_empty() { None } else { Some(field(line, &rec, 5, "arlp")?) },
                target_found: field(line, &rec, 6, "target_found")?,
                error: (!rec[7].is_empty()).then(|| rec[7].to_string()),
                detections: Vec::new(),
            })
        })
        .collect()
}

/// Chart trajectory for plotting; `threshold` repeated on every row.
pub fn format_trace(trace: &[TracePoint], threshold: Option<f64>) -> String {
    to_csv(
        &TRACE_HEADER,
        trace.iter().map(|p| {
            vec![
                (p.time + 1).to_string(),
                p.value.to_string(),
                p.target.to_string(),
                p.statistic.to_string(),
                opt(threshold),
                (p.alarm as u8).to_string(),
            ]
        }),
    )
}

pub fn parse_trace(text: &str) -> Result<(Vec<TracePoint>, Option<f64>)> {
    let mut threshold = None;
    let pts = rows(text, &TRACE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            if !rec[4].is_empty() {
                threshold = Some(field(line, &rec, 4, "threshold")?);
            }
            Ok(TracePoint {
                time: time_index(line, field(line, &rec, 0, "time")?)?,
                value: field(line, &rec, 1, "value")?,
                target: field(line, &rec, 2, "target")?,
                statistic: field(line, &rec, 3, "statistic")?,
                alarm: field::<u8>(line, &rec, 5, "alarm")? == 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pts, threshold))
}

/// A trained model file of either family, told apart by its header line.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Lstm(LstmNet),
    Linear(Trained),
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.starts_with("trendcpd-lstm") {
        LstmNet::from_text(text).map(ModelFile::Lstm)
    } else if first.starts_with("trendcpd-linear") {
        Trained::from_text(text).map(ModelFile::Linear)
    } else {
        Err(Error::parse(1, "unrecognized model file header"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled() -> LabeledSeries {
        LabeledSeries::from_labels(
            vec![1.0, 2.5, 0.1, 3.0, 1e-17, 7.0],
            Phase::E,
            vec![CpLabel::new(2, Phase::E, Phase::K), CpLabel::new(4, Phase::K, Phase::A)],
        )
        .unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let s = labeled();
        let text = format_dataset(&s);
        assert!(text.starts_with("time,value,phase,cp\n1,1,E,\n"));
        assert!(text.contains("\n3,0.1,K,E>K\n"));
        assert_eq!(parse_dataset(&text).unwrap(), s);
        let u = LabeledSeries::unlabeled(vec![0.1 + 0.2, -3.0]).unwrap();
        assert_eq!(parse_dataset(&format_dataset(&u)).unwrap(), u);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "time,value,phase,cp\n1,1,K,\n2,x,K,\n";
        match parse_dataset(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let gap = "time,value,phase,cp\n1,1,K,\n3,1,K,\n";
        assert!(matches!(parse_dataset(gap), Err(Error::Parse { line: 3, .. })));
        let missing = "time,value,phase,cp\n1,,K,\n";
        assert!(matches!(parse_dataset(missing), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("t,v\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn inconsistent_phases_rejected() {
        let text = "time,value,phase,cp\n1,1,K,\n2,1,A,\n";
        assert!(matches!(parse_dataset(text), Err(Error::InvalidSeries(_))));
    }

    #[test]
    fn sidecar_labels() {
        let s = parse_dataset("time,value,phase,cp\n1,1,,\n2,1,,\n3,5,,\n").unwrap();
        let l = parse_labels("time,cp\n3,K>A\n").unwrap();
        let s = apply_labels(&s, l).unwrap();
        assert_eq!(s.cp_labels(), &[CpLabel::new(2, Phase::K, Phase::A)]);
        assert_eq!(s.phases().unwrap(), &[Phase::K, Phase::K, Phase::A]);
    }

    #[test]
    fn detections_and_metrics_round_trip() {
        let d = vec![
            ("ds 1".to_string(), Detection::new(5, 3).tagged("pnc", "desInt=4;k=0.5")),
            ("ds,2".to_string(), Detection::new(0, 0).tagged("c", "default")),
        ];
        assert_eq!(parse_detections(&format_detections(&d)).unwrap(), d);
        let m = vec![EvalRecord {
            dataset_id: "a".into(),
            detector_id: "b".into(),
            params_id: "x=1".into(),
            n_detections: 4,
            fpc: 2.5,
            arlp: Some(7.32),
            target_found: true,
            error: None,
            detections: Vec::new(),
        }];
        assert_eq!(parse_metrics(&format_metrics(&m)).unwrap(), m);
    }

    #[test]
    fn trace_round_trip() {
        let t = vec![TracePoint {
            time: 9,
            value: 1.5,
            target: 0.25,
            statistic: 3.0,
            alarm: true,
        }];
        assert_eq!(parse_trace(&format_trace(&t, Some(4.0))).unwrap(), (t, Some(4.0)));
    }

    #[test]
    fn model_dispatch() {
        let net = LstmNet::init(3, 2, 2, 1).unwrap();
        assert_eq!(parse_model(&net.to_text()).unwrap(), ModelFile::Lstm(net));
        assert!(parse_model("something else").is_err());
    }
}
