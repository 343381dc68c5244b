//! Synthetic oriented-stripe images for smoke tests and demos.

use ndarray::Array2;

use crate::rng::SeededRng;
use crate::stl10::LabeledImage;

/// Noisy sinusoidal stripes: label 0 runs horizontally, label 1 vertically.
/// Period, phase and contrast vary per image; pixel noise is Gaussian with
/// standard deviation `noise`, and values are clipped to `[0, 1]`.
pub fn stripe_image(rng: &mut SeededRng, side: usize, label: usize, noise: f64) -> LabeledImage {
    let period = 6.0 + 8.0 * rng.next_f64();
    let phase = 2.0 * std::f64::consts::PI * rng.next_f64();
    let contrast = 0.2 + 0.3 * rng.next_f64();
    let pixels = Array2::from_shape_fn((side, side), |(r, c)| {
        let t = if label == 0 { r } else { c } as f64;
        let wave = (2.0 * std::f64::consts::PI * t / period + phase).sin();
        (0.5 + contrast * wave + noise * rng.normal()).clamp(0.0, 1.0)
    });
    LabeledImage::new(pixels, label)
}

/// `n` images alternating between the two classes.
pub fn stripe_dataset(seed: u64, n: usize, side: usize, noise: f64) -> Vec<LabeledImage> {
    let mut rng = SeededRng::new(seed);
    (0..n).map(|i| stripe_image(&mut rng, side, i % 2, noise)).collect()
}
