//! 2-D ring distributions for the visualization task.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform annuli around a set of centers.
///
/// Defaults follow the 2-D task: three rings of inner radius 0.6 and
/// thickness 0.1 centered at (−1, 1), (1, 1), (1, −1), 1000 samples each.
#[derive(Debug, Clone, PartialEq)]
pub struct RingSpec {
    pub centers: Vec<[f64; 2]>,
    pub inner_radius: f64,
    pub thickness: f64,
    pub samples_per_ring: usize,
}

impl Default for RingSpec {
    fn default() -> Self {
        RingSpec {
            centers: vec![[-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]],
            inner_radius: 0.6,
            thickness: 0.1,
            samples_per_ring: 1000,
        }
    }
}

impl RingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::parameter("at least one ring center required"));
        }
        if self.inner_radius <= 0.0 || self.thickness <= 0.0 {
            return Err(Error::parameter("inner_radius and thickness must be > 0"));
        }
        if self.samples_per_ring == 0 {
            return Err(Error::parameter("samples_per_ring must be >= 1"));
        }
        Ok(())
    }

    pub fn outer_radius(&self) -> f64 {
        self.inner_radius + self.thickness
    }
}

/// Samples points uniform in area over each annulus; label = ring index.
pub fn sample_rings<S: Scalar>(spec: &RingSpec, rng: &mut Rng) -> Result<(Tensor<S>, Vec<usize>)> {
    spec.validate()?;
    let n = spec.centers.len() * spec.samples_per_ring;
    let (r0sq, r1sq) = (spec.inner_radius.powi(2), spec.outer_radius().powi(2));
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for (ring, center) in spec.centers.iter().enumerate() {
        for _ in 0..spec.samples_per_ring {
            // Area-uniform radius: r = sqrt(U(r0², r1²)).
            let r = rng.next_range(r0sq, r1sq).sqrt();
            let theta = rng.next_range(0.0, std::f64::consts::TAU);
            data.push(S::from_f(center[0] + r * theta.cos()));
            data.push(S::from_f(center[1] + r * theta.sin()));
            labels.push(ring);
        }
    }
    Ok((Tensor::new(&[n, 2], data)?, labels))
}

/// Distance from a point to the annulus band (zero inside the band).
pub fn annulus_distance(spec: &RingSpec, center: &[f64; 2], p: &[f64; 2]) -> f64 {
    let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
    if d < spec.inner_radius {
        spec.inner_radius - d
    } else if d > spec.outer_radius() {
        d - spec.outer_radius()
    } else {
        0.0
    }
}

/// Rejection-samples `count` points uniform over `bounds` that stay at least
/// `min_gap` away from every annulus (this includes the ring interiors).
pub fn sample_background<S: Scalar>(
    spec: &RingSpec,
    count: usize,
    min_gap: f64,
    bounds: [f64; 4],
    rng: &mut Rng,
) -> Result<Tensor<S>> {
    spec.validate()?;
    let [x0, x1, y0, y1] = bounds;
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::parameter("background bounds out of order"));
    }
    let mut data = Vec::with_capacity(count * 2);
    let mut found = 0;
    let mut budget = count.saturating_mul(10_000);
    while found < count {
        if budget == 0 {
            return Err(Error::parameter(
                "background sampling rejection budget exhausted; loosen min_gap or bounds",
            ));
        }
        budget -= 1;
        let p = [rng.next_range(x0, x1), rng.next_range(y0, y1)];
        let clear = spec
            .centers
            .iter()
            .all(|c| annulus_distance(spec, c, &p) >= min_gap);
        if clear {
            data.push(S::from_f(p[0]));
            data.push(S::from_f(p[1]));
            found += 1;
        }
    }
    Tensor::new(&[count, 2], data)
}
