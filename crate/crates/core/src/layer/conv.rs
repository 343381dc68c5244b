use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::kmeans::FilterBank;
use crate::patch::{copy_patch, normalize_in_place};
use crate::tensor::FeatureMapSet;

/// Every valid `p x p` volume patch as a row, in row-major position order.
fn dense_patches(input: &FeatureMapSet, p: usize) -> Array2<f64> {
    let oh = input.height() - p + 1;
    let ow = input.width() - p + 1;
    let d = p * p * input.depth();
    let mut rows = Array2::zeros((oh * ow, d));
    for (pos, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
        copy_patch(input, p, pos / ow, pos % ow, row.as_slice_mut().expect("row-major"));
    }
    rows
}

/// Dot product of every filter with every valid patch (stride 1).
///
/// With `dense_preprocess`, each patch is normalized and whitened with the
/// bank's transform first. The whitening is folded into the filters:
/// `u . W (x - m) = (W u) . x - (W u) . m` since `W` is symmetric.
pub fn convolve_valid(
    input: &FeatureMapSet,
    bank: &FilterBank,
    dense_preprocess: bool,
) -> Result<FeatureMapSet> {
    if input.depth() != bank.depth {
        return Err(Error::Dim(format!(
            "input depth {} does not match filter depth {}",
            input.depth(),
            bank.depth
        )));
    }
    let p = bank.patch_side;
    if p > input.height() || p > input.width() {
        return Err(Error::InvalidPatchSize {
            patch: p,
            height: input.height(),
            width: input.width(),
        });
    }
    let oh = input.height() - p + 1;
    let ow = input.width() - p + 1;
    let mut patches = dense_patches(input, p);
    let responses = if dense_preprocess {
        patches
            .axis_iter_mut(Axis(0))
            .for_each(|row| normalize_in_place(row));
        let folded = bank.whitening.matrix.dot(&bank.filters);
        let offset = bank.whitening.mean.dot(&folded);
        patches.dot(&folded) - &offset
    } else {
        patches.dot(&bank.filters)
    };
    // (positions, K) -> (K, oh, ow)
    let maps = responses
        .reversed_axes()
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((bank.k(), oh, ow))
        .map_err(|e| Error::Dim(e.to_string()))?;
    FeatureMapSet::new(maps, input.source_image_id())
}

pub fn rectify_abs(x: &FeatureMapSet) -> FeatureMapSet {
    FeatureMapSet::new(x.maps().mapv(f64::abs), x.source_image_id())
        .expect("abs keeps values finite")
}

/// Splits each map into `max(0, x)` at depth `2i` and `max(0, -x)` at `2i + 1`.
pub fn rectify_on_off(x: &FeatureMapSet) -> FeatureMapSet {
    let (d, h, w) = x.maps().dim();
    let maps = Array3::from_shape_fn((2 * d, h, w), |(k, r, c)| {
        let v = x.maps()[[k / 2, r, c]];
        if k % 2 == 0 {
            v.max(0.0)
        } else {
            (-v).max(0.0)
        }
    });
    FeatureMapSet::new(maps, x.source_image_id()).expect("rectification keeps values finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::{normalize_patch, ZcaTransform};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn random_set(rng: &mut SeededRng, d: usize, h: usize, w: usize) -> FeatureMapSet {
        FeatureMapSet::new(Array3::from_shape_fn((d, h, w), |_| rng.normal()), 0).unwrap()
    }

    fn bank(filters: Array2<f64>, p: usize, depth: usize) -> FilterBank {
        let d = filters.nrows();
        FilterBank::new(filters, p, depth, ZcaTransform::identity(d), 1).unwrap()
    }

    /// Oracle: explicit loops over output position, filter, depth and window.
    fn brute_conv(x: &FeatureMapSet, f: &Array2<f64>, p: usize) -> Array3<f64> {
        let (dep, h, w) = x.maps().dim();
        let k = f.ncols();
        let mut out = Array3::zeros((k, h - p + 1, w - p + 1));
        for kk in 0..k {
            for i in 0..h - p + 1 {
                for j in 0..w - p + 1 {
                    let mut s = 0.0;
                    for dd in 0..dep {
                        for a in 0..p {
                            for b in 0..p {
                                s += x.maps()[[dd, i + a, j + b]] * f[[dd * p * p + a * p + b, kk]];
                            }
                        }
                    }
                    out[[kk, i, j]] = s;
                }
            }
        }
        out
    }

    #[test]
    fn delta_filter_reads_top_left() {
        let mut rng = SeededRng::new(1);
        let x = random_set(&mut rng, 1, 6, 5);
        let mut f = Array2::zeros((9, 1));
        f[[0, 0]] = 1.0;
        let y = convolve_valid(&x, &bank(f, 3, 1), false).unwrap();
        assert_eq!(y.maps().dim(), (1, 4, 3));
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(y.maps()[[0, i, j]], x.maps()[[0, i, j]]);
            }
        }
    }

    #[test]
    fn constant_input_sums_filter() {
        let mut rng = SeededRng::new(2);
        let f = Array2::from_shape_fn((8, 2), |_| rng.normal());
        let x = FeatureMapSet::new(Array3::ones((2, 4, 4)), 0).unwrap();
        let y = convolve_valid(&x, &bank(f.clone(), 2, 2), false).unwrap();
        for k in 0..2 {
            let s = f.column(k).sum();
            assert!(y.map(k).iter().all(|&v| (v - s).abs() < 1e-12));
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = SeededRng::new(3);
        let x = random_set(&mut rng, 1, 5, 5);
        let f = Array2::from_shape_fn((9, 1), |_| rng.normal());
        let y = convolve_valid(&x, &bank(f.clone(), 3, 1), false).unwrap();
        let o = brute_conv(&x, &f, 3);
        for (a, b) in y.maps().iter().zip(o.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn preprocessing_matches_explicit_route() {
        let mut rng = SeededRng::new(4);
        let x = random_set(&mut rng, 2, 5, 6);
        let d = 8;
        let f = Array2::from_shape_fn((d, 3), |_| rng.normal());
        let a = Array2::from_shape_fn((d, d), |_| rng.normal());
        let w = a.t().dot(&a) * 0.1 + Array2::<f64>::eye(d);
        let mean = ndarray::Array1::from_shape_fn(d, |_| rng.normal());
        let b = FilterBank::new(f.clone(), 2, 2, ZcaTransform { mean: mean.clone(), matrix: w.clone(), epsilon: 0.1 }, 1).unwrap();
        let y = convolve_valid(&x, &b, true).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut patch = vec![0.0; d];
                copy_patch(&x, 2, i, j, &mut patch);
                let z = ndarray::Array1::from(normalize_patch(&patch));
                let white = w.dot(&(&z - &mean));
                for k in 0..3 {
                    let e = white.dot(&f.column(k));
                    assert!((y.maps()[[k, i, j]] - e).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn depth_mismatch() {
        let x = FeatureMapSet::new(Array3::zeros((2, 4, 4)), 0).unwrap();
        assert!(matches!(
            convolve_valid(&x, &bank(Array2::ones((4, 1)), 2, 1), false),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn rectifier_examples() {
        let x = FeatureMapSet::new(Array3::from_shape_vec((1, 1, 2), vec![-1.0, 2.0]).unwrap(), 0).unwrap();
        assert_eq!(rectify_abs(&x).flatten(), vec![1.0, 2.0]);
        let oo = rectify_on_off(&x);
        assert_eq!(oo.depth(), 2);
        assert_eq!(oo.flatten(), vec![0.0, 2.0, 1.0, 0.0]);

        let three = FeatureMapSet::new(Array3::from_elem((1, 1, 1), 3.0), 0).unwrap();
        assert_eq!(rectify_on_off(&three).flatten(), vec![3.0, 0.0]);
        let neg = FeatureMapSet::new(Array3::from_elem((1, 1, 1), -2.0), 0).unwrap();
        assert_eq!(rectify_on_off(&neg).flatten(), vec![0.0, 2.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn linear_without_preprocessing(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let mut rng = SeededRng::new(seed);
            let x = random_set(&mut rng, 2, 6, 7);
            let y = random_set(&mut rng, 2, 6, 7);
            let f = Array2::from_shape_fn((18, 4), |_| rng.normal());
            let bk = bank(f, 3, 2);
            let mix = FeatureMapSet::new(x.maps() * a + y.maps() * b, 0).unwrap();
            let lhs = convolve_valid(&mix, &bk, false).unwrap();
            let rhs = convolve_valid(&x, &bk, false).unwrap().maps() * a
                + convolve_valid(&y, &bk, false).unwrap().maps() * b;
            for (l, r) in lhs.maps().iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() < 1e-10);
            }
        }

        #[test]
        fn on_off_identities(seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let x = random_set(&mut rng, 3, 4, 4);
            let oo = rectify_on_off(&x);
            let ab = rectify_abs(&x);
            for d in 0..3 {
                for ((&on, &off), (&v, &m)) in oo.map(2 * d).iter().zip(oo.map(2 * d + 1).iter())
                    .zip(x.map(d).iter().zip(ab.map(d).iter()))
                {
                    prop_assert!(on >= 0.0 && off >= 0.0);
                    prop_assert_eq!(on * off, 0.0);
                    prop_assert_eq!(on - off, v);
                    prop_assert_eq!(on + off, m);
                }
            }
            let neg = FeatureMapSet::new(-x.maps(), 0).unwrap();
            prop_assert_eq!(rectify_abs(&neg), ab);
        }
    }
}
