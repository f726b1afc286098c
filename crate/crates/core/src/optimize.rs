//! Quasi-Newton ascent with Armijo backtracking. Evaluation failures (the
//! objective leaving its domain) are treated like a failed Armijo test.

use crate::error::{Error, Result};

pub(crate) const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once `max |g_i| <= gtol`.
    pub gtol: f64,
    /// Stop once the relative objective change falls below this.
    pub ftol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 200,
            gtol: 1e-8,
            ftol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
#[allow(dead_code)]
pub(crate) struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes `f`, which returns the value and gradient. The returned value is
/// never below `f(x0)`.
pub(crate) fn maximize<F>(mut f: F, x0: Vec<f64>, opts: BfgsOptions) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut value, mut grad) = f(&x0)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteGradient { index: 0 });
    }
    let mut x = x0;
    let mut iterations = 0;
    if n == 0 {
        return Ok(Maximum {
            x,
            value,
            grad,
            iterations,
        });
    }
    // inverse of the negated Hessian, row-major
    let identity_scaled = |scale: f64| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = scale;
        }
        h
    };
    let mut h = identity_scaled(1.0 / max_abs(&grad).max(1.0));
    let mut fresh = true;

    while iterations < opts.max_iter {
        if max_abs(&grad) <= opts.gtol {
            break;
        }
        iterations += 1;
        let dir: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &grad)).collect();
        let slope = dot(&grad, &dir);
        if !(slope > 0.0) {
            h = identity_scaled(1.0 / max_abs(&grad).max(1.0));
            fresh = true;
            continue;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Ok((v, g)) = f(&trial) {
                if v.is_finite()
                    && g.iter().all(|c| c.is_finite())
                    && v >= value + 1e-4 * step * slope
                {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, v_new, g_new)) = accepted else {
            if fresh {
                if iterations == 1 && max_abs(&grad) > 1e-4 * value.abs().max(1.0) {
                    return Err(Error::LineSearch(MAX_HALVINGS));
                }
                // no ascent direction left at working precision
                break;
            }
            h = identity_scaled(1.0 / max_abs(&grad).max(1.0));
            fresh = true;
            continue;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let change = v_new - value;
        x = x_new;
        grad = g_new;
        value = v_new;

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity_scaled(scale);
            }
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        if change.abs() <= opts.ftol * value.abs().max(1.0) {
            break;
        }
    }
    Ok(Maximum {
        x,
        value,
        grad,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_quadratic() {
        // f = -(x-1)^2 - 10 (y+2)^2 - x y
        let f = |v: &[f64]| {
            let (x, y) = (v[0], v[1]);
            Ok((
                -(x - 1.0).powi(2) - 10.0 * (y + 2.0).powi(2) - x * y,
                vec![-2.0 * (x - 1.0) - y, -20.0 * (y + 2.0) - x],
            ))
        };
        let m = maximize(f, vec![5.0, 5.0], BfgsOptions::default()).unwrap();
        // stationary point: 2x + y = 2, x + 20 y = -40
        let y = (-40.0 - 1.0) / (20.0 - 0.5);
        let x = (2.0 - y) / 2.0;
        assert!(
            (m.x[0] - x).abs() < 1e-7 && (m.x[1] - y).abs() < 1e-7,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn respects_domain() {
        // log barrier: maximize ln(x) - x, optimum at 1, undefined for x <= 0
        let f = |v: &[f64]| {
            if v[0] <= 0.0 {
                return Err(Error::ConstraintDomain {
                    family: "t".into(),
                    value: v[0],
                });
            }
            Ok((v[0].ln() - v[0], vec![1.0 / v[0] - 1.0]))
        };
        let m = maximize(f, vec![0.01], BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn never_descends() {
        let f = |v: &[f64]| Ok((-(v[0].powi(4)), vec![-4.0 * v[0].powi(3)]));
        let start = f(&[3.0]).unwrap().0;
        let m = maximize(f, vec![3.0], BfgsOptions::default()).unwrap();
        assert!(m.value >= start);
    }
}
