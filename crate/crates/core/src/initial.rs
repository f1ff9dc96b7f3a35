//! Initial data: seeded random trigonometric fields and shifted bubbles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::torus::{Grid, Point};
use crate::Field;

/// `Σ a_k cos(2π k·x) + b_k sin(2π k·x)` over `1 ≤ |k|∞ ≤ modes`, coefficients uniform in
/// `[−1, 1]` damped by `1/|k|²`, scaled so the maximum modulus equals `amplitude`.
pub fn random_smooth_field(grid: Grid, modes: usize, amplitude: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = modes as i64;
    let mut terms = Vec::new();
    for kx in -m..=m {
        for ky in 0..=m {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            let a: f64 = rng.gen_range(-1.0..1.0) / k2;
            let b: f64 = rng.gen_range(-1.0..1.0) / k2;
            terms.push((kx as f64, ky as f64, a, b));
        }
    }
    let f = Field::from_fn(grid, |x, y| {
        terms
            .iter()
            .map(|&(kx, ky, a, b)| {
                let ph = 2.0 * PI * (kx * x + ky * y);
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    });
    let peak = f.max_abs();
    if peak > 0.0 {
        f.map(|v| v * amplitude / peak)
    } else {
        f
    }
}

/// `−2 log(r² + λ²) + shift` around `center`, `r` the periodic distance.
pub fn bubble_field(grid: Grid, center: Point, lambda: f64, shift: f64) -> Field {
    Field::from_fn(grid, |x, y| {
        let r = center.dist(Point::new(x, y));
        -2.0 * (r * r + lambda * lambda).ln() + shift
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_fields_are_reproducible() {
        let g = Grid::new(32).unwrap();
        let a = random_smooth_field(g, 3, 0.7, 11);
        let b = random_smooth_field(g, 3, 0.7, 11);
        let c = random_smooth_field(g, 3, 0.7, 12);
        assert_eq!(a.values(), b.values());
        assert!((&a - &c).max_abs() > 1e-3);
        assert!((a.max_abs() - 0.7).abs() < 1e-12);
        assert!(a.mean().abs() < 1e-12);
    }

    #[test]
    fn bubble_peaks_at_center() {
        let g = Grid::new(32).unwrap();
        let u = bubble_field(g, Point::new(0.25, 0.5), 0.1, -1.0);
        let (_, k) = u.argmax();
        assert_eq!(g.coords(k), (8, 16));
        assert!((u.max() - (-4.0 * 0.1f64.ln() - 1.0)).abs() < 1e-12);
    }
}
