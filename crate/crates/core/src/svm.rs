//! One-vs-all linear SVMs with squared hinge loss, trained by dual
//! coordinate descent on standardized descriptors.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Flattened feature-extractor output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Array1<f64>,
    pub image_id: u64,
}

impl Descriptor {
    pub fn new(values: Array1<f64>, image_id: u64) -> Self {
        Self { values, image_id }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-class classifier outputs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub normalized: bool,
}

impl ScoreVector {
    pub fn raw(scores: Vec<f64>) -> Self {
        Self {
            scores,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// `classes x dim`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub reg_c: f64,
    pub feature_mean: Array1<f64>,
    pub feature_std: Array1<f64>,
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn standardize(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        (&x - &self.feature_mean) / &self.feature_std
    }

    pub fn score(&self, d: &Descriptor) -> Result<ScoreVector> {
        if d.dim() != self.dim() {
            return Err(Error::Dim(format!(
                "descriptor has {} values, model expects {}",
                d.dim(),
                self.dim()
            )));
        }
        let z = self.standardize(d.values.view());
        Ok(ScoreVector::raw((self.weights.dot(&z) + &self.biases).to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    /// Loss weight. The loss is averaged over training points, so
    /// duplicating every point leaves the optimum unchanged.
    pub reg_c: f64,
    /// Stop once every projected gradient in an epoch is below this.
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            reg_c: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
        }
    }
}

impl SvmParams {
    pub fn with_c(reg_c: f64) -> Self {
        Self {
            reg_c,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    /// Dual objective at the end of each epoch, per class.
    pub objective_history: Vec<Vec<f64>>,
    pub epochs: Vec<usize>,
}

pub fn stack(descs: &[Descriptor]) -> Result<Array2<f64>> {
    let dim = descs
        .first()
        .ok_or_else(|| Error::Dim("no descriptors".into()))?
        .dim();
    if descs.iter().any(|d| d.dim() != dim) {
        return Err(Error::Dim("descriptors differ in dimension".into()));
    }
    let mut x = Array2::zeros((descs.len(), dim));
    for (mut row, d) in x.axis_iter_mut(Axis(0)).zip(descs) {
        row.assign(&d.values);
    }
    Ok(x)
}

pub fn train_ova_svm(descs: &[Descriptor], labels: &[usize], reg_c: f64) -> Result<SvmModel> {
    Ok(train_ova_svm_with(&stack(descs)?, labels, &SvmParams::with_c(reg_c))?.0)
}

/// Trains one binary problem per class over the rows of `x`.
pub fn train_ova_svm_with(
    x: &Array2<f64>,
    labels: &[usize],
    params: &SvmParams,
) -> Result<(SvmModel, TrainStats)> {
    let (n, dim) = x.dim();
    if labels.len() != n {
        return Err(Error::Dim(format!("{n} descriptors but {} labels", labels.len())));
    }
    if !(params.reg_c > 0.0) || !(params.tol > 0.0) || params.max_epochs == 0 {
        return Err(Error::Config(format!("invalid SVM parameters {params:?}")));
    }
    let first = *labels.first().ok_or(Error::DegenerateLabels)?;
    if labels.iter().all(|&l| l == first) {
        return Err(Error::DegenerateLabels);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("descriptors hold non-finite values".into()));
    }
    let n_classes = labels.iter().max().copied().unwrap_or(0) + 1;

    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let var = x.var_axis(Axis(0), 0.0);
    let std = var.mapv(|v| v.sqrt().max(STD_FLOOR));
    // standardized features with a trailing constant for the bias
    let mut z = Array2::ones((n, dim + 1));
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let mut zr = z.row_mut(i);
        for j in 0..dim {
            zr[j] = (row[j] - mean[j]) / std[j];
        }
    }
    let sq_norms: Vec<f64> = z.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let per_point_c = params.reg_c / n as f64;

    let solved: Vec<(Array1<f64>, Vec<f64>, usize)> = (0..n_classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            solve_binary(&z, &sq_norms, &y, per_point_c, params)
        })
        .collect();

    let mut weights = Array2::zeros((n_classes, dim));
    let mut biases = Array1::zeros(n_classes);
    let mut stats = TrainStats::default();
    for (c, (w, hist, epochs)) in solved.into_iter().enumerate() {
        weights.row_mut(c).assign(&w.slice(ndarray::s![..dim]));
        biases[c] = w[dim];
        stats.objective_history.push(hist);
        stats.epochs.push(epochs);
    }
    Ok((
        SvmModel {
            weights,
            biases,
            reg_c: params.reg_c,
            feature_mean: mean,
            feature_std: std,
        },
        stats,
    ))
}

/// Dual coordinate descent for `min 1/2 |w|^2 + c sum max(0, 1 - y w.x)^2`,
/// visiting points in order.
fn solve_binary(
    z: &Array2<f64>,
    sq_norms: &[f64],
    y: &[f64],
    c: f64,
    params: &SvmParams,
) -> (Array1<f64>, Vec<f64>, usize) {
    let n = z.nrows();
    let diag = 1.0 / (2.0 * c);
    let mut alpha = vec![0.0; n];
    let mut w = Array1::<f64>::zeros(z.ncols());
    let mut history = Vec::new();
    let mut epochs = 0;
    for _ in 0..params.max_epochs {
        epochs += 1;
        let mut max_pg = 0.0f64;
        for i in 0..n {
            let xi = z.row(i);
            let g = y[i] * w.dot(&xi) - 1.0 + diag * alpha[i];
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            max_pg = max_pg.max(pg.abs());
            if pg.abs() > 1e-14 {
                let old = alpha[i];
                alpha[i] = (old - g / (sq_norms[i] + diag)).max(0.0);
                let step = (alpha[i] - old) * y[i];
                w.scaled_add(step, &xi);
            }
        }
        let objective = 0.5 * w.dot(&w) + 0.5 * diag * alpha.iter().map(|a| a * a).sum::<f64>()
            - alpha.iter().sum::<f64>();
        history.push(objective);
        if max_pg < params.tol {
            break;
        }
    }
    (w, history, epochs)
}

/// Argmax with ties going to the lowest index.
pub fn predict(s: &ScoreVector) -> usize {
    argmax(&s.scores)
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn score(model: &SvmModel, d: &Descriptor) -> Result<ScoreVector> {
    model.score(d)
}

/// Picks the `reg_c` from `grid` with the best `n_folds`-fold accuracy.
/// Fold `f` holds the rows whose index is `f` modulo `n_folds`; ties favour
/// the earlier grid entry.
pub fn select_reg_c(x: &Array2<f64>, labels: &[usize], grid: &[f64], n_folds: usize) -> Result<f64> {
    if grid.is_empty() || n_folds < 2 {
        return Err(Error::Config("cross-validation needs a grid and at least 2 folds".into()));
    }
    let n = x.nrows();
    let mut best = (grid[0], -1.0);
    for &c in grid {
        let mut correct = 0usize;
        for f in 0..n_folds {
            let train: Vec<usize> = (0..n).filter(|i| i % n_folds != f).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % n_folds == f).collect();
            let tl: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let (model, _) = match train_ova_svm_with(&x.select(Axis(0), &train), &tl, &SvmParams::with_c(c)) {
                Ok(m) => m,
                Err(Error::DegenerateLabels) => continue,
                Err(e) => return Err(e),
            };
            for &i in &test {
                let d = Descriptor::new(x.row(i).to_owned(), i as u64);
                if predict(&model.score(&d)?) == labels[i] {
                    correct += 1;
                }
            }
        }
        let acc = correct as f64 / n as f64;
        if acc > best.1 {
            best = (c, acc);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn toy() -> (Array2<f64>, Vec<usize>) {
        // two lines separated by a margin of 1 around x + y = 0
        let pts = [
            (1.0, 1.0), (2.0, 0.5), (0.5, 2.0), (3.0, 1.0), (1.5, 1.5),
            (-1.0, -1.0), (-2.0, -0.5), (-0.5, -2.0), (-3.0, -1.0), (-1.5, -1.5),
        ];
        let x = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { pts[i].0 } else { pts[i].1 });
        let y = (0..10).map(|i| if i < 5 { 0 } else { 1 }).collect();
        (x, y)
    }

    fn descs(x: &Array2<f64>) -> Vec<Descriptor> {
        x.axis_iter(Axis(0))
            .enumerate()
            .map(|(i, r)| Descriptor::new(r.to_owned(), i as u64))
            .collect()
    }

    #[test]
    fn separable_toy_is_fit() {
        let (x, y) = toy();
        let ds = descs(&x);
        let m = train_ova_svm(&ds, &y, 10.0).unwrap();
        for (d, &l) in ds.iter().zip(&y) {
            assert_eq!(predict(&m.score(d).unwrap()), l);
        }
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = toy();
        assert!(matches!(
            train_ova_svm(&descs(&x), &[2; 10], 1.0),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn duplicated_data_same_decision_function() {
        let mut rng = SeededRng::new(8);
        let n = 40;
        let x = Array2::from_shape_fn((n, 3), |_| rng.normal());
        let y: Vec<usize> = (0..n).map(|i| (x[[i, 0]] + 0.3 * rng.normal() > 0.0) as usize).collect();
        let params = SvmParams { reg_c: 1.0, tol: 1e-11, max_epochs: 100_000 };
        let (a, _) = train_ova_svm_with(&x, &y, &params).unwrap();
        let xx = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let yy: Vec<usize> = y.iter().chain(&y).copied().collect();
        let (b, _) = train_ova_svm_with(&xx, &yy, &params).unwrap();
        for i in 0..20 {
            let probe = Descriptor::new(Array1::from_shape_fn(3, |_| rng.normal()), i);
            let (sa, sb) = (a.score(&probe).unwrap(), b.score(&probe).unwrap());
            for (p, q) in sa.scores.iter().zip(&sb.scores) {
                assert!((p - q).abs() < 1e-6, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn score_examples() {
        let model = SvmModel {
            weights: Array2::zeros((3, 2)),
            biases: Array1::from(vec![0.5, -1.0, 2.0]),
            reg_c: 1.0,
            feature_mean: Array1::zeros(2),
            feature_std: Array1::ones(2),
        };
        let d = Descriptor::new(Array1::from(vec![4.0, 5.0]), 0);
        assert_eq!(model.score(&d).unwrap().scores, vec![0.5, -1.0, 2.0]);

        let mut onehot = model.clone();
        onehot.weights[[1, 1]] = 1.0;
        assert_eq!(onehot.score(&d).unwrap().scores[1], 4.0);

        let bad = Descriptor::new(Array1::zeros(3), 0);
        assert!(matches!(model.score(&bad), Err(Error::Dim(_))));
    }

    #[test]
    fn score_matches_dot_products() {
        let mut rng = SeededRng::new(12);
        let model = SvmModel {
            weights: Array2::from_shape_fn((4, 6), |_| rng.normal()),
            biases: Array1::from_shape_fn(4, |_| rng.normal()),
            reg_c: 1.0,
            feature_mean: Array1::from_shape_fn(6, |_| rng.normal()),
            feature_std: Array1::from_shape_fn(6, |_| 0.5 + rng.next_f64()),
        };
        let d = Descriptor::new(Array1::from_shape_fn(6, |_| rng.normal()), 0);
        let s = model.score(&d).unwrap();
        for c in 0..4 {
            let mut e = model.biases[c];
            for j in 0..6 {
                e += model.weights[[c, j]] * (d.values[j] - model.feature_mean[j]) / model.feature_std[j];
            }
            assert!((s.scores[c] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&ScoreVector::raw(vec![0.1, 0.9, 0.3])), 1);
        assert_eq!(predict(&ScoreVector::raw(vec![0.5, 0.5])), 0);
        assert_eq!(predict(&ScoreVector::raw(vec![7.0])), 0);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = SeededRng::new(13);
        let x = Array2::from_shape_fn((60, 5), |_| rng.normal());
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let (_, stats) = train_ova_svm_with(&x, &y, &SvmParams::with_c(5.0)).unwrap();
        for h in &stats.objective_history {
            for w in h.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn cv_selects_from_grid() {
        let (x, y) = toy();
        let c = select_reg_c(&x, &y, &[0.01, 0.1, 1.0, 10.0], 5).unwrap();
        assert!([0.01, 0.1, 1.0, 10.0].contains(&c));
    }

    proptest! {
        #[test]
        fn predict_ignores_monotone_transforms(xs in proptest::collection::vec(-10.0..10.0f64, 1..12), a in 0.1..5.0f64, b in -3.0..3.0f64) {
            let s = ScoreVector::raw(xs.clone());
            let t = ScoreVector::raw(xs.iter().map(|v| (a * v + b).exp()).collect());
            prop_assert_eq!(predict(&s), predict(&t));
        }
    }
}
