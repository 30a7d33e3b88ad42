mod common;
use glmlab::dgp::{generate_dataset, Dataset, DgpConfig, EffectRegime};
use glmlab::engine::{Formula, LogLik};
use glmlab::families::{FamilyKind, Shape};
use glmlab::links::LinkFunction;
use glmlab::metrics::psis_loo;
use glmlab::presets::PresetTable;
use glmlab::seeds;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{Continuous, StudentsT};

fn design(data: &Dataset) -> Vec<Vec<f64>> {
    (0..data.len()).map(|i| std::iter::once(1.0).chain(Formula::Ideal.covariates().iter().map(|&c| data.column(c)[i])).collect()).collect()
}
/// Flat-prior normal linear model on ln y.
struct Conj { b: Vec<f64>, s2: f64, df: f64, cov: Vec<Vec<f64>> }
fn conj(x: &[Vec<f64>], z: &[f64]) -> Conj {
    let b = common::ols(x, z);
    let rss: f64 = x.iter().zip(z).map(|(r, zi)| (zi - r.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()).powi(2)).sum();
    let df = (x.len() - b.len()) as f64;
    let (xtx, _) = common::normal_equations(x, z);
    Conj { b, s2: rss / df, df, cov: common::inverse_spd(&xtx) }
}

/// Exact LOO of the lognormal regression: Student-t predictive on ln y.
fn exact_loo(x: &[Vec<f64>], z: &[f64]) -> f64 {
    let n = z.len();
    (0..n)
        .map(|i| {
            let xs: Vec<Vec<f64>> = (0..n).filter(|&j| j != i).map(|j| x[j].clone()).collect();
            let zs: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| z[j]).collect();
            let c = conj(&xs, &zs);
            let m: f64 = x[i].iter().zip(&c.b).map(|(a, b)| a * b).sum();
            let p = x[i].len();
            let q: f64 = (0..p).map(|a| (0..p).map(|b| x[i][a] * c.cov[a][b] * x[i][b]).sum::<f64>()).sum();
            let t = StudentsT::new(m, (c.s2 * (1.0 + q)).sqrt(), c.df).unwrap();
            t.ln_pdf(z[i]) - z[i]
        })
        .sum()
}

/// Pointwise log-likelihood under `draws` exact posterior draws.
fn exact_log_lik(x: &[Vec<f64>], z: &[f64], draws: usize, seed: u64) -> LogLik {
    let c = conj(x, z);
    let l = common::cholesky(&c.cov);
    let mut rng = seeds::rng(seed);
    let n = z.len();
    let mut values = vec![0.0; draws * n];
    for d in 0..draws {
        let chi: f64 = ChiSquared::new(c.df).unwrap().sample(&mut rng);
        let s2 = c.df * c.s2 / chi;
        let e: Vec<f64> = (0..c.b.len()).map(|_| rng.sample(StandardNormal)).collect();
        let beta: Vec<f64> = (0..e.len())
            .map(|i| c.b[i] + s2.sqrt() * (0..=i).map(|k| l[i][k] * e[k]).sum::<f64>())
            .collect();
        for i in 0..n {
            let m: f64 = x[i].iter().zip(&beta).map(|(a, b)| a * b).sum();
            values[d * n + i] =
                -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (z[i] - m).powi(2) / (2.0 * s2) - z[i];
        }
    }
    LogLik { draws, points: n, values }
}

#[test]
fn psis_matches_analytic_loo_of_conjugate_model() {
    let mut cfg = DgpConfig::from_table(
        &PresetTable::builtin(),
        FamilyKind::TransformedNormalPositive,
        LinkFunction::Log,
        Shape::ThinTail,
        EffectRegime::Positive,
    )
    .unwrap();
    cfg.n_obs = 40;
    cfg.n_test = 1;
    for rep in 0..4u64 {
        let data = generate_dataset(&cfg, 100 + rep).unwrap().train;
        let x = design(&data);
        let z: Vec<f64> = data.y.iter().map(|y| y.ln()).collect();
        let exact = exact_loo(&x, &z);
        let loo = psis_loo(&exact_log_lik(&x, &z, 20_000, 7 + rep));
        assert!(
            (loo.elpd_loo - exact).abs() < 0.05,
            "rep {rep}: psis {} vs exact {exact} (k̂ max {})",
            loo.elpd_loo,
            loo.k_max()
        );
    }
}

