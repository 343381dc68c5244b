//! Score fusion across committee members: rescale each member's scores to
//! `[0, 1]`, add them up, and take the argmax.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::svm::{argmax, ScoreVector};

/// How raw scores are mapped to `[0, 1]` before summation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum NormalizeMode {
    /// Min-max over the C scores of each image.
    #[default]
    PerImage,
    /// Min-max over every score a network produced on the test set.
    PerNetwork,
}

/// One network's scores over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub network_id: String,
    pub rows: Vec<ScoreVector>,
    pub image_ids: Vec<u64>,
}

impl ScoreTable {
    pub fn new(network_id: impl Into<String>, rows: Vec<ScoreVector>, image_ids: Vec<u64>) -> Result<Self> {
        let network_id = network_id.into();
        if network_id.is_empty() || network_id.chars().any(char::is_whitespace) {
            return Err(Error::Format(format!("network id {network_id:?} must be a single token")));
        }
        if rows.len() != image_ids.len() {
            return Err(Error::Dim(format!("{} rows for {} image ids", rows.len(), image_ids.len())));
        }
        if let Some(first) = rows.first() {
            if first.is_empty() || rows.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Dim("score rows differ in class count".into()));
            }
        }
        Ok(Self {
            network_id,
            rows,
            image_ids,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.rows.first().map_or(0, ScoreVector::len)
    }

    pub fn is_normalized(&self) -> bool {
        self.rows.iter().all(|r| r.normalized)
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax(&r.scores)).collect()
    }

    pub fn normalized(&self, mode: NormalizeMode) -> ScoreTable {
        let rows = match mode {
            NormalizeMode::PerImage => self.rows.iter().map(minmax_normalize).collect(),
            NormalizeMode::PerNetwork => {
                let all = self.rows.iter().flat_map(|r| r.scores.iter().copied());
                let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                self.rows.iter().map(|r| rescale(&r.scores, lo, hi)).collect()
            }
        };
        ScoreTable {
            network_id: self.network_id.clone(),
            rows,
            image_ids: self.image_ids.clone(),
        }
    }
}

fn rescale(scores: &[f64], lo: f64, hi: f64) -> ScoreVector {
    let span = hi - lo;
    let scores = if span > 0.0 {
        scores.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; scores.len()]
    };
    ScoreVector {
        scores,
        normalized: true,
    }
}

/// `(s - min) / (max - min)`; an all-equal vector maps to zeros.
pub fn minmax_normalize(s: &ScoreVector) -> ScoreVector {
    let (lo, hi) = s
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    rescale(&s.scores, lo, hi)
}

/// Elementwise sum of normalized tables covering the same images.
pub fn sum_scores(tables: &[ScoreTable]) -> Result<ScoreTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Contract("committee needs at least one table".into()))?;
    for t in tables {
        if !t.is_normalized() {
            return Err(Error::Contract(format!("table {} is not normalized", t.network_id)));
        }
        if t.image_ids != first.image_ids {
            return Err(Error::Alignment(format!(
                "{} and {} cover different images",
                first.network_id, t.network_id
            )));
        }
        if t.n_classes() != first.n_classes() {
            return Err(Error::Alignment(format!(
                "{} has {} classes, {} has {}",
                first.network_id,
                first.n_classes(),
                t.network_id,
                t.n_classes()
            )));
        }
    }
    let c = first.n_classes();
    let rows = (0..first.rows.len())
        .map(|i| {
            let mut acc = vec![0.0; c];
            for t in tables {
                for (a, v) in acc.iter_mut().zip(&t.rows[i].scores) {
                    *a += v;
                }
            }
            ScoreVector::raw(acc)
        })
        .collect();
    ScoreTable::new("committee", rows, first.image_ids.clone())
}

pub fn committee_predict(tables: &[ScoreTable]) -> Result<Vec<usize>> {
    Ok(sum_scores(tables)?.predictions())
}

/// Normalizes raw member tables with `mode` and predicts.
pub fn committee_predict_raw(tables: &[ScoreTable], mode: NormalizeMode) -> Result<Vec<usize>> {
    let normalized: Vec<ScoreTable> = tables.iter().map(|t| t.normalized(mode)).collect();
    committee_predict(&normalized)
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Dim(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Text form: `scores v1 <network_id> <C>` then `<image_id> <s_1> ... <s_C>`
/// per image. Floats use the shortest decimal that parses back exactly.
pub fn format_score_file(table: &ScoreTable) -> String {
    let mut out = format!("scores v1 {} {}\n", table.network_id, table.n_classes());
    for (id, row) in table.image_ids.iter().zip(&table.rows) {
        write!(out, "{id}").unwrap();
        for v in &row.scores {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a score file. Rows are flagged normalized only if every value lies
/// in `[0, 1]`.
pub fn parse_score_file(text: &str) -> Result<ScoreTable> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty score file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "scores" {
        return Err(Error::Format(format!("bad score header {header:?}")));
    }
    if fields[1] != "v1" {
        return Err(Error::Format(format!("unsupported score file version {}", fields[1])));
    }
    let c: usize = fields[3]
        .parse()
        .map_err(|_| Error::Format(format!("bad class count {:?}", fields[3])))?;
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut tok = line.split_whitespace();
        let id: u64 = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Format(format!("line {}: bad image id", n + 2)))?;
        let scores = tok
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("line {}: bad score {t:?}", n + 2))))
            .collect::<Result<Vec<_>>>()?;
        if scores.len() != c {
            return Err(Error::Format(format!("line {}: {} scores, expected {c}", n + 2, scores.len())));
        }
        let normalized = scores.iter().all(|v| (0.0..=1.0).contains(v));
        rows.push(ScoreVector { scores, normalized });
        ids.push(id);
    }
    ScoreTable::new(fields[2], rows, ids)
}

pub fn write_score_file(path: impl AsRef<Path>, table: &ScoreTable) -> Result<()> {
    fs::write(path, format_score_file(table))?;
    Ok(())
}

pub fn read_score_file(path: impl AsRef<Path>) -> Result<ScoreTable> {
    parse_score_file(&fs::read_to_string(path)?)
}
