use serde::{Deserialize, Serialize};

use crate::bessel::{j0, j0_zero, xi0};
use crate::error::{Error, Result};

/// `(T1 + T2) J / pi` as a function of `r = lambda2 / lambda1`:
/// `1 / |J0(xi0 r)| + 1 / |J0(xi0 / r)|`.
pub fn period_factor(r: f64) -> f64 {
    let x = xi0();
    1.0 / j0(x * r).abs() + 1.0 / j0(x / r).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalRatio {
    pub ratio: f64,
    /// `period_factor(ratio)`; the period is `pi / J` times this.
    pub period_factor: f64,
}

const DOMAIN: (f64, f64) = (0.1, 1.0);
const TOLERANCE: f64 = 1e-10;

/// Poles of [`period_factor`] inside the search domain: `r = xi0 / j_k`
/// (and `r = j_k / xi0`, which only reaches the domain at `r = 1`).
fn poles() -> Vec<f64> {
    let x = xi0();
    let mut poles = vec![DOMAIN.1];
    for k in 2.. {
        let r = x / j0_zero(k);
        if r <= DOMAIN.0 {
            break;
        }
        poles.push(r);
    }
    poles.sort_by(f64::total_cmp);
    poles
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimizes [`period_factor`] over `r` in `(0.1, 1)`. The domain is cut at
/// every pole and each pole-free piece is searched separately.
pub fn optimize_ratio() -> Result<OptimalRatio> {
    let mut edges = vec![DOMAIN.0];
    edges.extend(poles());
    let mut best: Option<OptimalRatio> = None;
    for w in edges.windows(2) {
        // Stay clear of the poles themselves.
        let margin = 1e-9 * (w[1] - w[0]);
        let r = golden_section(period_factor, w[0] + margin, w[1] - margin);
        let value = period_factor(r);
        if value.is_finite() && best.is_none_or(|b| value < b.period_factor) {
            best = Some(OptimalRatio {
                ratio: r,
                period_factor: value,
            });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no pole-free bracket in the search domain".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_location_and_value() {
        let opt = optimize_ratio().unwrap();
        assert!((opt.ratio - 0.590218).abs() < 1e-5, "{}", opt.ratio);
        assert!((opt.period_factor - 4.35383525).abs() < 1e-6);
    }

    #[test]
    fn symmetric_under_inversion() {
        let opt = optimize_ratio().unwrap();
        assert!((period_factor(opt.ratio) - period_factor(1.0 / opt.ratio)).abs() < 1e-12);
    }

    #[test]
    fn neighbours_are_worse() {
        let opt = optimize_ratio().unwrap();
        assert!(period_factor(0.5) > opt.period_factor);
        assert!(period_factor(0.7) > opt.period_factor);
        assert!(period_factor(opt.ratio + 1e-4) >= opt.period_factor);
        assert!(period_factor(opt.ratio - 1e-4) >= opt.period_factor);
    }

    #[test]
    fn poles_lie_in_domain() {
        let p = poles();
        assert!(p.iter().all(|&r| r > DOMAIN.0 && r <= DOMAIN.1));
        assert!((p[p.len() - 2] - xi0() / j0_zero(2)).abs() < 1e-15);
    }
}
