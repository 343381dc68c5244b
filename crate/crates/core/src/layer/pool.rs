use ndarray::{s, Array3};

use crate::error::{Error, Result};
use crate::tensor::FeatureMapSet;

/// Output side for a `side x side` window at `stride`, dropping partial
/// windows.
pub fn pooled_len(dim: usize, side: usize, stride: usize) -> usize {
    (dim - side) / stride + 1
}

/// `(sum x^alpha)^(1/alpha)` over each window. `alpha = 1` is a plain sum;
/// other exponents pool magnitudes and are evaluated relative to the window
/// maximum so large exponents do not overflow.
pub fn pool(x: &FeatureMapSet, side: usize, stride: usize, alpha: f64) -> Result<FeatureMapSet> {
    if side == 0 || stride == 0 {
        return Err(Error::InvalidWindow("pool side and stride must be positive".into()));
    }
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidWindow(format!("pool exponent {alpha} must be >= 1")));
    }
    let (d, h, w) = x.maps().dim();
    if side > h || side > w {
        return Err(Error::InvalidWindow(format!("pool window {side} exceeds map {h}x{w}")));
    }
    let oh = pooled_len(h, side, stride);
    let ow = pooled_len(w, side, stride);
    let maps = x.maps();
    let out = Array3::from_shape_fn((d, oh, ow), |(k, i, j)| {
        let win = maps.slice(s![k, i * stride..i * stride + side, j * stride..j * stride + side]);
        if alpha == 1.0 {
            return win.sum();
        }
        let peak = win.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return 0.0;
        }
        let acc: f64 = win.iter().map(|v| (v.abs() / peak).powf(alpha)).sum();
        peak * acc.powf(1.0 / alpha)
    });
    FeatureMapSet::new(out, x.source_image_id())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn window(vals: &[f64]) -> FeatureMapSet {
        FeatureMapSet::new(Array3::from_shape_vec((1, 2, 2), vals.to_vec()).unwrap(), 0).unwrap()
    }

    #[test]
    fn formula_values() {
        let w = window(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pool(&w, 2, 2, 1.0).unwrap().flatten(), vec![10.0]);
        let m = pool(&w, 2, 2, 64.0).unwrap().flatten()[0];
        assert!((m - 4.0).abs() < 0.05);
        let l2 = pool(&w, 2, 2, 2.0).unwrap().flatten()[0];
        assert!((l2 - 30f64.sqrt()).abs() < 1e-12);
        assert!((l2 - 5.4772).abs() < 1e-4);
    }

    #[test]
    fn shapes_drop_partial_windows() {
        let x = FeatureMapSet::new(Array3::ones((2, 81, 81)), 0).unwrap();
        assert_eq!(pool(&x, 12, 12, 1.0).unwrap().maps().dim(), (2, 6, 6));
        assert_eq!(pool(&x, 12, 8, 1.0).unwrap().maps().dim(), (2, 9, 9));
        assert_eq!(pool(&x, 9, 9, 1.0).unwrap().maps().dim(), (2, 9, 9));
    }

    #[test]
    fn oversized_window() {
        let x = FeatureMapSet::new(Array3::ones((1, 3, 3)), 0).unwrap();
        assert!(matches!(pool(&x, 4, 1, 1.0), Err(Error::InvalidWindow(_))));
    }

    proptest! {
        #[test]
        fn alpha_one_is_sum_and_large_alpha_is_max(seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let x = FeatureMapSet::new(Array3::from_shape_fn((3, 6, 6), |_| rng.next_f64() * 5.0), 0).unwrap();
            let sum = pool(&x, 3, 3, 1.0).unwrap();
            let max = pool(&x, 3, 3, 64.0).unwrap();
            for k in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        let win = x.maps().slice(s![k, 3 * i..3 * i + 3, 3 * j..3 * j + 3]);
                        prop_assert!((sum.maps()[[k, i, j]] - win.sum()).abs() < 1e-12);
                        let m = win.iter().fold(0.0f64, |a, &b| a.max(b));
                        prop_assert!((max.maps()[[k, i, j]] - m).abs() <= 0.05 * m.max(1.0));
                    }
                }
            }
        }

        #[test]
        fn monotone_in_each_input(seed in any::<u64>(), alpha in 1.0..8.0f64, bump in 0.0..2.0f64, at in 0usize..16) {
            let mut rng = SeededRng::new(seed);
            let base = Array3::from_shape_fn((1, 4, 4), |_| rng.next_f64());
            let mut raised = base.clone();
            raised[[0, at / 4, at % 4]] += bump;
            let a = pool(&FeatureMapSet::new(base, 0).unwrap(), 2, 1, alpha).unwrap();
            let b = pool(&FeatureMapSet::new(raised, 0).unwrap(), 2, 1, alpha).unwrap();
            for (p, q) in a.maps().iter().zip(b.maps().iter()) {
                prop_assert!(q + 1e-12 >= *p);
            }
        }
    }
}
