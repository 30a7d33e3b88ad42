//! Posterior mode by BFGS with a backtracking line search.

use crate::error::{Error, Result};

/// Maximises `f` (value and gradient) from `start`.
pub fn maximize<F: Fn(&[f64], &mut [f64]) -> f64>(f: F, start: &[f64]) -> Result<Vec<f64>> {
    let dim = start.len();
    let mut x = start.to_vec();
    let mut g = vec![0.0; dim];
    let mut fx = -f(&x, &mut g);
    if !fx.is_finite() {
        return Err(Error::Fit("log density is not finite at the optimiser start".into()));
    }
    // minimise -f; gradient of -f is -g
    g.iter_mut().for_each(|v| *v = -*v);
    let mut h = identity(dim);
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    for _ in 0..2000 {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < 1e-9 {
            return Ok(x);
        }
        let mut dir: Vec<f64> = (0..dim)
            .map(|i| -(0..dim).map(|j| h[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            h = identity(dim);
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..dim {
                x_new[i] = x[i] + t * dir[i];
            }
            let f_new = -f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * t * slope {
                g_new.iter_mut().for_each(|v| *v = -*v);
                let s: Vec<f64> = (0..dim).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..dim).map(|i| g_new[i] - g[i]).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-12 {
                    bfgs_update(&mut h, &s, &y, sy);
                }
                let converged = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1.0)
                    && s.iter().all(|v| v.abs() < 1e-12);
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                if converged {
                    return Ok(x);
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further progress possible at machine precision
            return Ok(x);
        }
    }
    Ok(x)
}

fn identity(dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse-Hessian update `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..dim {
        for j in 0..dim {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
