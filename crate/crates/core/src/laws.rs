//! Discrete laws used by the collection rules, drawn by sequential
//! inversion of the cumulative probabilities.

use crate::error::{Error, Result};
use crate::oracle::{exp_tail, log_tail};
use crate::rng::RandomSource;

const MAX_STEPS: usize = 1_000_000;

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

/// Walks `k = start, start+1, ...` with unnormalized weights produced by
/// `next(k, w_k) = w_{k+1}` until the cumulative mass passes `v * total`.
fn invert(rng: &mut RandomSource, start: u64, first: f64, total: f64, next: impl Fn(u64, f64) -> f64) -> u64 {
    let target = rng.unit() * total;
    let mut k = start;
    let mut w = first;
    let mut acc = w;
    let mut steps = 0;
    while acc <= target && steps < MAX_STEPS {
        let nw = next(k, w);
        k += 1;
        // rounding can leave the last ulps of mass unreachable
        if nw == 0.0 && w == 0.0 {
            break;
        }
        w = nw;
        acc += w;
        steps += 1;
    }
    k
}

/// Poisson(λ): `P(k) = e^{-λ} λ^k / k!`.
pub fn draw_poisson(lambda: f64, rng: &mut RandomSource) -> Result<u64> {
    draw_poisson_at_least(lambda, 0, rng)
}

/// Poisson(λ) conditioned on `k >= min`.
pub fn draw_poisson_at_least(lambda: f64, min: u32, rng: &mut RandomSource) -> Result<u64> {
    if !(0.0..700.0).contains(&lambda) {
        return Err(domain(format!("Poisson parameter {lambda} outside [0, 700)")));
    }
    if lambda == 0.0 {
        if min == 0 {
            return Ok(0);
        }
        return Err(domain("Poisson(0) conditioned on a positive count".into()));
    }
    let first = (1..=min).fold(1.0, |t, j| t * lambda / j as f64);
    let total = exp_tail(lambda, min);
    Ok(invert(rng, min as u64, first, total, |k, w| w * lambda / (k + 1) as f64))
}

/// Geometric: `P(k) = (1 - p) p^k`, `k >= 0`.
pub fn draw_geometric(p: f64, rng: &mut RandomSource) -> Result<u64> {
    if !(0.0..1.0).contains(&p) {
        return Err(domain(format!("geometric parameter {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(0);
    }
    Ok(invert(rng, 0, 1.0 - p, 1.0, |_, w| w * p))
}

/// Logarithmic law: `P(k) = λ^k / (k ln(1/(1-λ)))`, `k >= 1`.
pub fn draw_loglaw(lambda: f64, rng: &mut RandomSource) -> Result<u64> {
    draw_loglaw_at_least(lambda, 1, rng)
}

/// Logarithmic law conditioned on `k >= min` (`min >= 1`).
pub fn draw_loglaw_at_least(lambda: f64, min: u32, rng: &mut RandomSource) -> Result<u64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(domain(format!("logarithmic parameter {lambda} outside (0, 1)")));
    }
    let min = min.max(1);
    let first = lambda.powi(min as i32) / min as f64;
    let total = log_tail(lambda, min);
    Ok(invert(rng, min as u64, first, total, |k, w| w * lambda * k as f64 / (k + 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freq(n: usize, mut draw: impl FnMut(&mut RandomSource) -> u64) -> Vec<f64> {
        let mut rng = RandomSource::new(11);
        let mut h = vec![0usize; 64];
        for _ in 0..n {
            let k = draw(&mut rng) as usize;
            h[k.min(63)] += 1;
        }
        h.into_iter().map(|c| c as f64 / n as f64).collect()
    }

    #[test]
    fn poisson_zero_is_zero() {
        let mut rng = RandomSource::new(0);
        for _ in 0..100 {
            assert_eq!(draw_poisson(0.0, &mut rng).unwrap(), 0);
        }
        assert!(draw_poisson(-1.0, &mut rng).is_err());
        assert!(draw_poisson_at_least(0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn poisson_frequencies() {
        let f = freq(100_000, |r| draw_poisson(0.5, r).unwrap());
        assert!((f[0] - (-0.5f64).exp()).abs() < 0.005);
        assert!((f[1] - 0.5 * (-0.5f64).exp()).abs() < 0.005);
        let f = freq(50_000, |r| draw_poisson_at_least(0.5, 2, r).unwrap());
        assert_eq!(f[0] + f[1], 0.0);
        // P(2 | >= 2) = (λ²/2) / (e^λ - 1 - λ)
        let p2 = 0.125 / (0.5f64.exp() - 1.5);
        assert!((f[2] - p2).abs() < 0.01);
    }

    #[test]
    fn geometric_frequencies() {
        let f = freq(100_000, |r| draw_geometric(0.5, r).unwrap());
        assert!((f[0] - 0.5).abs() < 0.005);
        assert!((f[1] - 0.25).abs() < 0.005);
        let mut rng = RandomSource::new(0);
        assert_eq!(draw_geometric(0.0, &mut rng).unwrap(), 0);
        assert!(draw_geometric(1.0, &mut rng).is_err());
    }

    #[test]
    fn loglaw_frequencies() {
        let p1 = 0.5 / 2f64.ln();
        assert!((p1 - 0.7213).abs() < 1e-4);
        let f = freq(100_000, |r| draw_loglaw(0.5, r).unwrap());
        assert_eq!(f[0], 0.0);
        assert!((f[1] - p1).abs() < 0.005);
        assert!((f[2] - 0.125 / 2f64.ln()).abs() < 0.005);
        let f = freq(50_000, |r| draw_loglaw_at_least(0.5, 3, r).unwrap());
        assert_eq!(f[1] + f[2], 0.0);
        let mut rng = RandomSource::new(0);
        assert!(draw_loglaw(0.0, &mut rng).is_err());
        assert!(draw_loglaw(1.0, &mut rng).is_err());
    }
}
