//! Local contrast normalization: subtract a Gaussian-weighted local mean
//! taken across all maps, then divide by the matching local standard
//! deviation floored at its image-wide mean. Borders use reflect padding
//! (index -1 reads index 1).

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::tensor::FeatureMapSet;

/// Normalized 1D Gaussian of odd length `window`.
pub fn gaussian_1d(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let raw: Vec<f64> = (0..window)
        .map(|i| {
            let t = i as f64 - half;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Full weighting window over (map, row, col) for `depth` maps; sums to 1.
pub fn gaussian_window(window: usize, sigma: f64, depth: usize) -> Array3<f64> {
    let g = gaussian_1d(window, sigma);
    Array3::from_shape_fn((depth, window, window), |(_, p, q)| g[p] * g[q] / depth as f64)
}

fn check_window(x: &FeatureMapSet, window: usize, sigma: f64) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidWindow(format!("LCN window {window} must be odd")));
    }
    let limit = x.height().min(x.width());
    if window > limit {
        return Err(Error::InvalidWindow(format!(
            "LCN window {window} exceeds map size {}x{}",
            x.height(),
            x.width()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidWindow(format!("LCN sigma {sigma} must be positive")));
    }
    Ok(())
}

#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Depth-averaged map filtered by the separable Gaussian.
fn weighted_local_sum(maps: &Array3<f64>, g: &[f64]) -> Array2<f64> {
    let (depth, h, w) = maps.dim();
    let avg = maps.sum_axis(Axis(0)) / depth as f64;
    let half = (g.len() / 2) as isize;
    let mut rows = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut s = 0.0;
            for (q, &wq) in g.iter().enumerate() {
                s += wq * avg[[r, reflect(c as isize + q as isize - half, w)]];
            }
            rows[[r, c]] = s;
        }
    }
    let mut out = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut s = 0.0;
            for (p, &wp) in g.iter().enumerate() {
                s += wp * rows[[reflect(r as isize + p as isize - half, h), c]];
            }
            out[[r, c]] = s;
        }
    }
    out
}

pub fn lcn_subtractive(x: &FeatureMapSet, window: usize, sigma: f64) -> Result<FeatureMapSet> {
    check_window(x, window, sigma)?;
    let g = gaussian_1d(window, sigma);
    let local = weighted_local_sum(x.maps(), &g);
    let v = x.maps() - &local.insert_axis(Axis(0));
    FeatureMapSet::new(v, x.source_image_id())
}

pub fn lcn_divisive(v: &FeatureMapSet, window: usize, sigma: f64) -> Result<FeatureMapSet> {
    check_window(v, window, sigma)?;
    let g = gaussian_1d(window, sigma);
    let sigma_map = weighted_local_sum(&v.maps().mapv(|a| a * a), &g).mapv(|s| s.max(0.0).sqrt());
    let floor = sigma_map.mean().unwrap_or(0.0);
    if floor == 0.0 {
        return FeatureMapSet::new(Array3::zeros(v.maps().dim()), v.source_image_id());
    }
    let denom = sigma_map.mapv(|s| s.max(floor));
    let y = v.maps() / &denom.insert_axis(Axis(0));
    FeatureMapSet::new(y, v.source_image_id())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn set(maps: Array3<f64>) -> FeatureMapSet {
        FeatureMapSet::new(maps, 0).unwrap()
    }

    /// Oracle: explicit (i, p, q) triple sum with the full weighting window.
    fn direct_local(x: &Array3<f64>, w: &Array3<f64>) -> Array2<f64> {
        let (depth, h, wd) = x.dim();
        let s = w.dim().1;
        let half = (s / 2) as isize;
        Array2::from_shape_fn((h, wd), |(j, k)| {
            let mut acc = 0.0;
            for i in 0..depth {
                for p in 0..s {
                    for q in 0..s {
                        let r = reflect(j as isize + p as isize - half, h);
                        let c = reflect(k as isize + q as isize - half, wd);
                        acc += w[[i, p, q]] * x[[i, r, c]];
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn window_sums_to_one() {
        let w = gaussian_window(9, 2.25, 5);
        assert!((w.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_input_vanishes() {
        let v = lcn_subtractive(&set(Array3::from_elem((3, 10, 10), 4.2)), 5, 1.25).unwrap();
        assert!(v.maps().iter().all(|a| a.abs() <= 1e-10));
    }

    #[test]
    fn impulse_minus_kernel() {
        let mut x = Array3::zeros((1, 11, 11));
        x[[0, 5, 5]] = 1.0;
        let v = lcn_subtractive(&set(x.clone()), 5, 1.25).unwrap();
        let w = gaussian_window(5, 1.25, 1);
        let oracle = &x.index_axis(Axis(0), 0) - &direct_local(&x, &w);
        for (a, b) in v.map(0).iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // kernel centred on the impulse
        assert!((v.maps()[[0, 5, 5]] - (1.0 - w[[0, 2, 2]])).abs() < 1e-12);
        assert!((v.maps()[[0, 4, 5]] + w[[0, 1, 2]]).abs() < 1e-12);
    }

    #[test]
    fn divisive_matches_direct_oracle() {
        let mut rng = SeededRng::new(21);
        let x = Array3::from_shape_fn((2, 8, 8), |_| rng.normal());
        let (s, sg) = (5, 1.25);
        let y = lcn_divisive(&set(x.clone()), s, sg).unwrap();
        let w = gaussian_window(s, sg, 2);
        let sig = direct_local(&x.mapv(|a| a * a), &w).mapv(f64::sqrt);
        let c = sig.sum() / sig.len() as f64;
        for ((i, j, k), &got) in y.maps().indexed_iter() {
            let e = x[[i, j, k]] / c.max(sig[[j, k]]);
            assert!((got - e).abs() < 1e-12);
        }
    }

    #[test]
    fn subtractive_matches_direct_oracle_multi_map() {
        let mut rng = SeededRng::new(22);
        let x = Array3::from_shape_fn((3, 9, 7), |_| rng.normal());
        let v = lcn_subtractive(&set(x.clone()), 7, 1.75).unwrap();
        let local = direct_local(&x, &gaussian_window(7, 1.75, 3));
        for ((i, j, k), &got) in v.maps().indexed_iter() {
            assert!((got - (x[[i, j, k]] - local[[j, k]])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_stays_zero() {
        let y = lcn_divisive(&set(Array3::zeros((2, 6, 6))), 3, 0.75).unwrap();
        assert!(y.maps().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn bad_windows() {
        let x = set(Array3::zeros((1, 6, 6)));
        assert!(matches!(lcn_subtractive(&x, 4, 1.0), Err(Error::InvalidWindow(_))));
        assert!(matches!(lcn_subtractive(&x, 7, 1.0), Err(Error::InvalidWindow(_))));
        assert!(matches!(lcn_divisive(&x, 8, 1.0), Err(Error::InvalidWindow(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn subtractive_ignores_offsets(seed in any::<u64>(), shift in -50.0..50.0f64) {
            let mut rng = SeededRng::new(seed);
            let x = Array3::from_shape_fn((2, 7, 8), |_| rng.normal());
            let a = lcn_subtractive(&set(x.clone()), 3, 0.75).unwrap();
            let b = lcn_subtractive(&set(x + shift), 3, 0.75).unwrap();
            for (p, q) in a.maps().iter().zip(b.maps().iter()) {
                prop_assert!((p - q).abs() < 1e-10);
            }
        }

        #[test]
        fn divisive_is_contrast_invariant(seed in any::<u64>(), lambda in 0.01..100.0f64) {
            let mut rng = SeededRng::new(seed);
            let x = Array3::from_shape_fn((2, 6, 6), |_| rng.normal());
            let a = lcn_divisive(&set(x.clone()), 3, 0.75).unwrap();
            let b = lcn_divisive(&set(x * lambda), 3, 0.75).unwrap();
            // the floor scales with the input, so the whole map is invariant
            for (p, q) in a.maps().iter().zip(b.maps().iter()) {
                prop_assert!((p - q).abs() < 1e-9 * (1.0 + p.abs()));
            }
        }
    }
}
