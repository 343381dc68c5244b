//! Fold-based evaluation: train each network and its SVM per fold, score
//! the test set, fuse the scores, and summarize accuracies.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use crate::committee::{accuracy, committee_predict_raw, write_score_file, NormalizeMode, ScoreTable};
use crate::config::{NetworkConfig, SvmSettings};
use crate::error::{Error, Result};
use crate::network::{extract_descriptors, train_network_with_descriptors};
use crate::stl10::{FoldPlan, LabeledImage};
use crate::svm::{select_reg_c, stack, train_ova_svm_with, SvmParams};

pub const CV_FOLDS: usize = 5;

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub svm: SvmSettings,
    pub normalize: NormalizeMode,
    /// Directory for per-fold score files and the report.
    pub out_dir: Option<PathBuf>,
    /// Restrict evaluation to these fold indices.
    pub only_folds: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracySeries {
    pub name: String,
    /// `(fold, accuracy)` pairs in fold order.
    pub per_fold: Vec<(usize, f64)>,
    pub mean: f64,
    pub std: f64,
}

impl AccuracySeries {
    pub fn new(name: impl Into<String>, per_fold: Vec<(usize, f64)>) -> Self {
        let values: Vec<f64> = per_fold.iter().map(|p| p.1).collect();
        let (mean, std) = mean_std(&values);
        Self {
            name: name.into(),
            per_fold,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub networks: Vec<AccuracySeries>,
    pub committee: AccuracySeries,
    pub members: Vec<String>,
}

/// Arithmetic mean and sample standard deviation (`n - 1`); the deviation
/// of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,network,accuracy\n");
        for series in self.networks.iter().chain(std::iter::once(&self.committee)) {
            for (fold, acc) in &series.per_fold {
                writeln!(out, "{fold},{},{acc}", series.name).unwrap();
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, s: &AccuracySeries| {
            let folds: Vec<String> = s.per_fold.iter().map(|(f, a)| format!("{f}:{:.4}", a)).collect();
            writeln!(
                out,
                "{:<12} mean {:.2}%  std {:.2}  [{}]",
                s.name,
                100.0 * s.mean,
                100.0 * s.std,
                folds.join(" ")
            )
            .unwrap();
        };
        writeln!(out, "[networks]").unwrap();
        for s in &self.networks {
            line(&mut out, s);
        }
        writeln!(out, "\n[committee]").unwrap();
        writeln!(out, "members = {}", self.members.join(", ")).unwrap();
        line(&mut out, &self.committee);
        out
    }
}

/// The training images of fold `f`.
pub fn fold_images(train: &[LabeledImage], folds: &FoldPlan, f: usize) -> Result<Vec<LabeledImage>> {
    let fold = folds
        .folds()
        .get(f)
        .ok_or_else(|| Error::Config(format!("fold {f} does not exist")))?;
    fold.iter()
        .map(|&i| {
            train
                .get(i)
                .cloned()
                .ok_or_else(|| Error::Dim(format!("fold {f} references missing image {i}")))
        })
        .collect()
}

/// Raw SVM scores of one network on the test set, plus the fitted `reg_c`.
pub fn run_network_on_fold(
    cfg: &NetworkConfig,
    train: &[LabeledImage],
    test: &[LabeledImage],
    svm: &SvmSettings,
) -> Result<ScoreTable> {
    let (network, train_desc, train_labels) = train_network_with_descriptors(cfg, train)?;
    let x = stack(&train_desc)?;
    let reg_c = match &svm.cv_grid {
        Some(grid) => select_reg_c(&x, &train_labels, grid, CV_FOLDS)?,
        None => svm.reg_c,
    };
    let (model, _) = train_ova_svm_with(&x, &train_labels, &SvmParams::with_c(reg_c))?;
    drop(x);
    let test_desc = extract_descriptors(&network, test)?;
    let rows = test_desc
        .iter()
        .map(|d| model.score(d))
        .collect::<Result<Vec<_>>>()?;
    ScoreTable::new(cfg.name.clone(), rows, (0..test.len() as u64).collect())
}

/// Trains every network on every selected fold, scores `test`, and reports
/// per-network and committee accuracy. Score files are written as
/// `fold<k>_<network>.scores` when an output directory is set.
pub fn evaluate_protocol(
    cfgs: &[NetworkConfig],
    train: &[LabeledImage],
    test: &[LabeledImage],
    folds: &FoldPlan,
    opts: &EvalOptions,
) -> Result<ExperimentReport> {
    if cfgs.is_empty() {
        return Err(Error::Config("no networks to evaluate".into()));
    }
    for c in cfgs {
        c.validate()?;
    }
    let fold_ids: Vec<usize> = match &opts.only_folds {
        Some(ids) => {
            if let Some(&bad) = ids.iter().find(|&&f| f >= folds.len()) {
                return Err(Error::Config(format!("fold {bad} does not exist")));
            }
            ids.clone()
        }
        None => (0..folds.len()).collect(),
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
    }
    let test_labels: Vec<usize> = test.iter().map(|i| i.label).collect();
    let mut per_net: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cfgs.len()];
    let mut committee = Vec::new();
    for &f in &fold_ids {
        let fold_images = fold_images(train, folds, f)?;
        let mut tables = Vec::with_capacity(cfgs.len());
        for (n, cfg) in cfgs.iter().enumerate() {
            let table = run_network_on_fold(cfg, &fold_images, test, &opts.svm)?;
            if let Some(dir) = &opts.out_dir {
                write_score_file(dir.join(format!("fold{f}_{}.scores", cfg.name)), &table)?;
            }
            per_net[n].push((f, accuracy(&table.predictions(), &test_labels)?));
            tables.push(table);
        }
        let votes = committee_predict_raw(&tables, opts.normalize)?;
        committee.push((f, accuracy(&votes, &test_labels)?));
    }
    let report = ExperimentReport {
        networks: cfgs
            .iter()
            .zip(per_net)
            .map(|(c, acc)| AccuracySeries::new(c.name.clone(), acc))
            .collect(),
        committee: AccuracySeries::new("committee", committee),
        members: cfgs.iter().map(|c| c.name.clone()).collect(),
    };
    if let Some(dir) = &opts.out_dir {
        fs::write(dir.join("report.txt"), report.to_text())?;
        fs::write(dir.join("report.csv"), report.to_csv())?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_fold_statistics() {
        let (m, s) = mean_std(&[0.60, 0.62]);
        assert!((m - 0.61).abs() < 1e-12);
        assert!((s - 0.014142135623730963).abs() < 1e-12);
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn csv_layout() {
        let r = ExperimentReport {
            networks: vec![AccuracySeries::new("N1", vec![(0, 0.5), (1, 0.75)])],
            committee: AccuracySeries::new("committee", vec![(0, 0.6), (1, 0.8)]),
            members: vec!["N1".into()],
        };
        assert_eq!(
            r.to_csv(),
            "fold,network,accuracy\n0,N1,0.5\n1,N1,0.75\n0,committee,0.6\n1,committee,0.8\n"
        );
        assert!(r.to_text().contains("members = N1"));
    }
}
