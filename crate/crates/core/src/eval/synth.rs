//! Synthetic 10-class glyph images in the MNIST format envelope.
//!
//! Ten fixed stroke skeletons (digit-like polylines on the unit square) are
//! rasterized with a Gaussian pen after a random rotation, scale, and
//! translation per sample, then lightly noised. The result is a deterministic,
//! easily learnable stand-in for handwritten-digit data: grayscale images in
//! `[0, 1]` with real intra-class variability, usable anywhere IDX digit data
//! is, without shipping datasets.

use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Generation parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub side: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { side: 28, train_per_class: 200, test_per_class: 100 }
    }
}

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Stroke {
    (0..=n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Fixed skeletons per class, coordinates in the unit square (y grows down).
fn glyph_strokes(class: usize) -> Vec<Stroke> {
    match class {
        0 => vec![ellipse(0.5, 0.5, 0.24, 0.33, 20)],
        1 => vec![vec![(0.42, 0.25), (0.52, 0.15), (0.52, 0.85)]],
        2 => vec![vec![
            (0.29, 0.30),
            (0.33, 0.19),
            (0.50, 0.15),
            (0.67, 0.20),
            (0.70, 0.33),
            (0.30, 0.84),
            (0.74, 0.84),
        ]],
        3 => vec![vec![
            (0.31, 0.19),
            (0.62, 0.15),
            (0.71, 0.29),
            (0.58, 0.46),
            (0.44, 0.50),
            (0.60, 0.54),
            (0.72, 0.69),
            (0.62, 0.84),
            (0.30, 0.81),
        ]],
        4 => vec![
            vec![(0.56, 0.15), (0.27, 0.57), (0.76, 0.57)],
            vec![(0.63, 0.38), (0.63, 0.85)],
        ],
        5 => vec![vec![
            (0.71, 0.15),
            (0.31, 0.16),
            (0.30, 0.47),
            (0.55, 0.44),
            (0.71, 0.55),
            (0.70, 0.71),
            (0.54, 0.84),
            (0.30, 0.79),
        ]],
        6 => vec![vec![
            (0.64, 0.15),
            (0.42, 0.31),
            (0.31, 0.55),
            (0.35, 0.77),
            (0.54, 0.85),
            (0.69, 0.72),
            (0.64, 0.56),
            (0.45, 0.52),
            (0.33, 0.61),
        ]],
        7 => vec![vec![(0.27, 0.16), (0.73, 0.15), (0.45, 0.85)]],
        8 => vec![
            ellipse(0.5, 0.33, 0.17, 0.16, 16),
            ellipse(0.5, 0.67, 0.20, 0.17, 16),
        ],
        9 => vec![
            ellipse(0.52, 0.34, 0.18, 0.17, 16),
            vec![(0.70, 0.36), (0.66, 0.85)],
        ],
        _ => unreachable!("classes are 0..10"),
    }
}

struct Jitter {
    cos: f64,
    sin: f64,
    scale: f64,
    tx: f64,
    ty: f64,
    pen: f64,
    brightness: f64,
}

impl Jitter {
    fn draw(rng: &mut Rng) -> Self {
        let theta = rng.next_range(-0.14, 0.14);
        Jitter {
            cos: theta.cos(),
            sin: theta.sin(),
            scale: rng.next_range(0.88, 1.10),
            tx: rng.next_range(-0.07, 0.07),
            ty: rng.next_range(-0.07, 0.07),
            pen: rng.next_range(0.042, 0.058),
            brightness: rng.next_range(0.85, 1.0),
        }
    }

    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (x, y) = (p.0 - 0.5, p.1 - 0.5);
        let (rx, ry) = (self.cos * x - self.sin * y, self.sin * x + self.cos * y);
        (0.5 + self.scale * rx + self.tx, 0.5 + self.scale * ry + self.ty)
    }
}

fn segment_distance_sq(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let len_sq = abx * abx + aby * aby;
    let t = if len_sq == 0.0 { 0.0 } else { ((apx * abx + apy * aby) / len_sq).clamp(0.0, 1.0) };
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    dx * dx + dy * dy
}

/// Renders one jittered glyph into a `side*side` buffer.
fn render_glyph(class: usize, side: usize, rng: &mut Rng) -> Vec<f64> {
    let jitter = Jitter::draw(rng);
    let strokes: Vec<Stroke> = glyph_strokes(class)
        .into_iter()
        .map(|s| s.into_iter().map(|p| jitter.apply(p)).collect())
        .collect();
    let two_pen_sq = 2.0 * jitter.pen * jitter.pen;
    let mut pixels = vec![0.0f64; side * side];
    for row in 0..side {
        for col in 0..side {
            let p = ((col as f64 + 0.5) / side as f64, (row as f64 + 0.5) / side as f64);
            let mut best = f64::INFINITY;
            for stroke in &strokes {
                for seg in stroke.windows(2) {
                    let d = segment_distance_sq(p, seg[0], seg[1]);
                    if d < best {
                        best = d;
                    }
                }
            }
            let ink = jitter.brightness * (-best / two_pen_sq).exp();
            pixels[row * side + col] = ink;
        }
    }
    // Light pixel noise, clipped back to [0, 1] like quantized image data.
    for v in &mut pixels {
        *v = (*v + 0.02 * rng.next_gaussian()).clamp(0.0, 1.0);
    }
    pixels
}

/// `per_class` samples of every class in shuffled order, flattened `[n, side²]`.
pub fn synth_digits<S: Scalar>(
    per_class: usize,
    side: usize,
    rng: &mut Rng,
) -> Result<(Tensor<S>, Vec<usize>)> {
    if per_class == 0 || side < 8 {
        return Err(Error::parameter("need per_class >= 1 and side >= 8"));
    }
    let n = per_class * 10;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut data = vec![S::zero(); n * side * side];
    let mut labels = vec![0usize; n];
    for (seq, &slot) in order.iter().enumerate() {
        let class = seq / per_class;
        let pixels = render_glyph(class, side, rng);
        labels[slot] = class;
        let dst = &mut data[slot * side * side..(slot + 1) * side * side];
        for (d, v) in dst.iter_mut().zip(&pixels) {
            *d = S::from_f(*v);
        }
    }
    Ok((Tensor::new(&[n, side * side], data)?, labels))
}

/// Full train/test split using independent split seeds.
pub fn synth_dataset<S: Scalar>(spec: &SynthSpec, rng: &mut Rng) -> Result<Dataset<S>> {
    let mut train_rng = rng.split();
    let mut test_rng = rng.split();
    let (train_x, train_y) = synth_digits(spec.train_per_class, spec.side, &mut train_rng)?;
    let (test_x, test_y) = synth_digits(spec.test_per_class, spec.side, &mut test_rng)?;
    Ok(Dataset { train_x, train_y, test_x, test_y, classes: 10 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generates_balanced_shuffled_labels_in_unit_range() {
        let mut rng = Rng::seed_from(77);
        let (x, y) = synth_digits::<f64>(20, 28, &mut rng).unwrap();
        assert_eq!(x.shape(), &[200, 784]);
        for class in 0..10 {
            assert_eq!(y.iter().filter(|&&l| l == class).count(), 20);
        }
        assert!(x.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Shuffled: the first twenty samples are not all class zero.
        assert!(y[..20].iter().any(|&l| l != 0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let gen = || synth_digits::<f64>(5, 28, &mut Rng::seed_from(123)).unwrap();
        let (xa, ya) = gen();
        let (xb, yb) = gen();
        assert_eq!(xa, xb);
        assert_eq!(ya, yb);
    }

    #[test]
    fn classes_are_visually_distinct() {
        // Mean per-class images should differ pairwise by a sizable margin.
        let mut rng = Rng::seed_from(5);
        let (x, y) = synth_digits::<f64>(30, 28, &mut rng).unwrap();
        let mut means = vec![vec![0.0f64; 784]; 10];
        for (i, &label) in y.iter().enumerate() {
            for (m, &v) in means[label].iter_mut().zip(x.row(i)) {
                *m += v / 30.0;
            }
        }
        for a in 0..10 {
            for b in (a + 1)..10 {
                let dist: f64 = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 1.0, "classes {a} and {b} too similar: {dist}");
            }
        }
    }
}
