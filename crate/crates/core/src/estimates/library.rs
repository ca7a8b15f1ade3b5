use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{RadialField, RadialGrid};

/// A named test field.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub field: RadialField,
}

/// `C^∞` step: 1 below 0, 0 above 1.
fn smooth_step(x: f64) -> f64 {
    let bump = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = bump(1.0 - x);
    let b = bump(x);
    a / (a + b)
}

/// The default twelve-field library: Gaussians, shifted bumps, compact
/// plateaus and oscillatory bumps, three of each.
///
/// With a seed, every shape parameter is jittered by up to ±10%.
pub fn sample_library(grid: &Arc<RadialGrid>, seed: Option<u64>) -> Result<Vec<Sample>> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut jitter = |x: f64| match rng.as_mut() {
        Some(r) => x * (1.0 + r.random_range(-0.1..0.1)),
        None => x,
    };
    let mut out = Vec::with_capacity(12);
    for sigma in [0.5, 1.0, 2.0] {
        let s = jitter(sigma);
        out.push(Sample {
            id: format!("gauss_{sigma}"),
            field: RadialField::from_fn(grid.clone(), |r| (-r * r / (2.0 * s * s)).exp())?,
        });
    }
    for center in [1.0, 2.0, 3.0] {
        let c = jitter(center);
        out.push(Sample {
            id: format!("shifted_{center}"),
            field: RadialField::from_fn(grid.clone(), |r| (-(r - c) * (r - c)).exp())?,
        });
    }
    for radius in [1.0, 2.0, 3.0] {
        let a = jitter(radius);
        out.push(Sample {
            id: format!("plateau_{radius}"),
            field: RadialField::from_fn(grid.clone(), |r| smooth_step(r - a))?,
        });
    }
    for k in [2.0, 3.0, 5.0] {
        let w = jitter(k);
        out.push(Sample {
            id: format!("oscillatory_{k}"),
            field: RadialField::from_fn(grid.clone(), |r| (-r * r / 2.0).exp() * (w * r).cos())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_has_twelve_distinct_fields() {
        let g = Arc::new(RadialGrid::new(3, 12.0, 24, 8).unwrap());
        let lib = sample_library(&g, None).unwrap();
        assert_eq!(lib.len(), 12);
        for (i, a) in lib.iter().enumerate() {
            assert!(a.field.max_abs() > 0.5, "{}", a.id);
            for b in &lib[i + 1..] {
                assert!(a.field.sub(&b.field).unwrap().max_abs() > 1e-3);
            }
        }
    }

    #[test]
    fn seeded_library_is_reproducible_and_differs_from_default() {
        let g = Arc::new(RadialGrid::new(2, 12.0, 24, 8).unwrap());
        let a = sample_library(&g, Some(7)).unwrap();
        let b = sample_library(&g, Some(7)).unwrap();
        let c = sample_library(&g, None).unwrap();
        assert_eq!(a[0].field, b[0].field);
        assert_ne!(a[0].field, c[0].field);
    }

    #[test]
    fn plateau_is_flat_then_zero() {
        assert_eq!(smooth_step(-0.5), 1.0);
        assert_eq!(smooth_step(1.5), 0.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }
}
