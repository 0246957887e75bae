//! Composite Gauss–Legendre quadrature with step-halving error control.

use std::sync::OnceLock;

const ORDER: usize = 10;

/// Nodes and weights of the 10-point rule on [-1, 1], computed once by
/// Newton iteration on the Legendre polynomial.
fn rule() -> &'static [(f64, f64); ORDER] {
    static RULE: OnceLock<[(f64, f64); ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut out = [(0.0, 0.0); ORDER];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            out[i] = (-z, w);
            out[n - 1 - i] = (z, w);
        }
        out
    })
}

/// One Gauss–Legendre panel on `[a, b]`.
pub fn gl_panel<E>(f: &mut impl FnMut(f64) -> Result<f64, E>, a: f64, b: f64) -> Result<f64, E> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for &(z, w) in rule() {
        sum += w * f(mid + half * z)?;
    }
    Ok(sum * half)
}

/// Integral over `[a, b]` with an error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Integrates `f` on `[a, b]` with `panels` equal panels, halving the step
/// until two successive estimates differ by less than `tol`.
pub fn integrate<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    max_halvings: usize,
) -> Result<Quadrature, E> {
    let composite = |f: &mut dyn FnMut(f64) -> Result<f64, E>, k: usize| -> Result<f64, E> {
        let h = (b - a) / k as f64;
        let mut total = 0.0;
        let mut g = |x: f64| f(x);
        for i in 0..k {
            total += gl_panel(&mut g, a + i as f64 * h, a + (i + 1) as f64 * h)?;
        }
        Ok(total)
    };
    let mut k = panels.max(1);
    let mut coarse = composite(&mut f, k)?;
    let mut error = f64::INFINITY;
    for _ in 0..max_halvings {
        k *= 2;
        let fine = composite(&mut f, k)?;
        error = (fine - coarse).abs();
        coarse = fine;
        if error < tol {
            break;
        }
    }
    Ok(Quadrature { value: coarse, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn rule_is_symmetric_and_normalized() {
        let r = rule();
        let wsum: f64 = r.iter().map(|p| p.1).sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        for i in 0..ORDER {
            assert!((r[i].0 + r[ORDER - 1 - i].0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_on_polynomials_up_to_degree_19() {
        let mut f = |x: f64| Ok::<_, Infallible>(x.powi(19) + 3.0 * x.powi(18));
        let got = gl_panel(&mut f, 0.0, 1.0).unwrap();
        assert!((got - (1.0 / 20.0 + 3.0 / 19.0)).abs() < 1e-14);
    }

    #[test]
    fn halving_converges() {
        let q = integrate(|x: f64| Ok::<_, Infallible>(x.sin()), 0.0, std::f64::consts::PI, 1, 1e-13, 10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-13);
        assert!(q.error < 1e-13);
    }
}
