//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use glmlab::families::FamilyKind;
use glmlab::links::LinkFunction;
use statrs::function::gamma::{gamma, ln_gamma};

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let t = d * (sn + 0.12 + 0.11 / sn);
    if t < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// KS statistic of sorted draws against CDF values at those draws.
pub fn ks_statistic(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Nelder–Mead minimiser with restarts.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64) -> Vec<f64> {
    let mut best = start.to_vec();
    let mut best_f = f(&best);
    for _restart in 0..20 {
        let (x, fx) = nelder_mead_once(&f, &best, step);
        let improved = best_f - fx;
        best = x;
        best_f = fx;
        if improved.abs() < 1e-13 {
            break;
        }
    }
    best
}

fn nelder_mead_once<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], step: f64) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| safe(f, p)).collect();
    for _ in 0..20_000 {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < 1e-14 && size < 1e-10 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect()
        };
        let xr = along(-1.0);
        let fr = safe(f, &xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = safe(f, &xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = safe(f, &x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = safe(f, &x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = (0..n)
                        .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                        .collect();
                    values[i] = safe(f, &shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let i = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[i].clone(), values[i])
}

fn safe<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Solves the symmetric positive-definite system `a x = b` (Cholesky).
pub fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let l = cholesky(a);
    let n = b.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    l
}

pub fn inverse_spd(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve_spd(a, &e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// `XᵀX` and `Xᵀy` for a row-major design.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in x.iter().zip(y) {
        for a in 0..k {
            xty[a] += row[a] * yi;
            for b in 0..k {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    (xtx, xty)
}

pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let (xtx, xty) = normal_equations(x, y);
    solve_spd(&xtx, &xty)
}

/// Gamma regression with log link by iteratively reweighted least squares.
/// The working weights are constant for this family/link pair, so every
/// step is an ordinary least-squares solve on the working response.
pub fn irls_gamma_log(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut beta = vec![0.0; k];
    beta[0] = (y.iter().sum::<f64>() / y.len() as f64).ln();
    for _ in 0..100 {
        let z: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(row, &yi)| {
                let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
                let mu = eta.exp();
                eta + (yi - mu) / mu
            })
            .collect();
        let next = ols(x, &z);
        let change = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if change < 1e-12 {
            break;
        }
    }
    beta
}

pub fn inverse_link(link: LinkFunction, eta: f64) -> f64 {
    match link {
        LinkFunction::Logit => 1.0 / (1.0 + (-eta).exp()),
        LinkFunction::Cauchit => 0.5 + eta.atan() / PI,
        LinkFunction::Cloglog => 1.0 - (-(eta.exp())).exp(),
        LinkFunction::Log => eta.exp(),
        LinkFunction::Softplus => {
            if eta > 30.0 {
                eta + (-eta).exp()
            } else {
                eta.exp().ln_1p()
            }
        }
    }
}

fn link(link: LinkFunction, y: f64) -> f64 {
    match link {
        LinkFunction::Logit => (y / (1.0 - y)).ln(),
        LinkFunction::Cauchit => (PI * (y - 0.5)).tan(),
        LinkFunction::Cloglog => (-(1.0 - y).ln()).ln(),
        LinkFunction::Log => y.ln(),
        LinkFunction::Softplus => y.exp_m1().ln(),
    }
}

fn ln_link_derivative(link: LinkFunction, y: f64) -> f64 {
    match link {
        LinkFunction::Logit => -(y * (1.0 - y)).ln(),
        LinkFunction::Cauchit => PI.ln() - 2.0 * (PI * (y - 0.5)).cos().abs().ln(),
        LinkFunction::Cloglog => -((1.0 - y) * -(1.0 - y).ln()).ln(),
        LinkFunction::Log => -y.ln(),
        LinkFunction::Softplus => y - y.exp_m1().ln(),
    }
}

/// Family auxiliary parameter from its unconstrained coordinate.
pub fn aux_from_u(family: FamilyKind, u: f64) -> f64 {
    if family == FamilyKind::Frechet {
        1.0 + u.exp()
    } else {
        u.exp()
    }
}

/// Textbook log density at location `m` (mean or median, per family) and
/// auxiliary parameter `phi`.
pub fn log_density(family: FamilyKind, response_link: LinkFunction, m: f64, phi: f64, y: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    match family {
        FamilyKind::Beta => {
            let (a, b) = (m * phi, (1.0 - m) * phi);
            ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln()
        }
        FamilyKind::Kumaraswamy => {
            let a = phi;
            let b = -ln2 / (1.0 - m.powf(a)).ln();
            a.ln() + b.ln() + (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y.powf(a)).ln()
        }
        FamilyKind::Simplex => {
            let d = (y - m).powi(2) / (y * (1.0 - y) * m * m * (1.0 - m) * (1.0 - m));
            -0.5 * (2.0 * PI * phi * (y * (1.0 - y)).powi(3)).ln() - d / (2.0 * phi)
        }
        FamilyKind::TransformedNormalUnit | FamilyKind::TransformedNormalPositive => {
            let z = (link(response_link, y) - link(response_link, m)) / phi;
            -0.5 * (2.0 * PI).ln() - phi.ln() - 0.5 * z * z + ln_link_derivative(response_link, y)
        }
        FamilyKind::Gamma => {
            let (a, rate) = (phi, phi / m);
            a * rate.ln() - ln_gamma(a) + (a - 1.0) * y.ln() - rate * y
        }
        FamilyKind::Weibull => {
            let k = phi;
            let lambda = m / gamma(1.0 + 1.0 / k);
            k.ln() - lambda.ln() + (k - 1.0) * (y / lambda).ln() - (y / lambda).powf(k)
        }
        FamilyKind::Frechet => {
            let nu = phi;
            let s = m / gamma(1.0 - 1.0 / nu);
            nu.ln() - s.ln() - (1.0 + nu) * (y / s).ln() - (y / s).powf(-nu)
        }
        FamilyKind::BetaPrime => {
            let (a, b) = (m * (1.0 + phi), 2.0 + phi);
            (a - 1.0) * y.ln() - (a + b) * y.ln_1p() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
        }
        FamilyKind::Gompertz => {
            let b = phi;
            let eta = ln2 / ((b * m).exp() - 1.0);
            b.ln() + eta.ln() + b * y + eta - eta * (b * y).exp()
        }
    }
}

/// χ² upper-tail probability.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(df).unwrap().cdf(x)
}
