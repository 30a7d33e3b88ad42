mod common;

use glmlab::dgp::{generate_dataset, Covariate, Dataset, DgpConfig, Domain, EffectRegime};
use glmlab::engine::{find_mode, Formula};
use glmlab::families::{FamilyKind, FamilySpec};
use glmlab::presets::PresetTable;
use glmlab::runner::smoke_scenario;

fn negative_log_lik(data: &Dataset, family: FamilyKind, link: glmlab::links::LinkFunction, p: &[f64]) -> f64 {
    let covs = Formula::Ideal.covariates();
    let phi = common::aux_from_u(family, p[p.len() - 1]);
    let mut total = 0.0;
    for i in 0..data.len() {
        let mut eta = p[0];
        for (j, c) in covs.iter().enumerate() {
            eta += p[j + 1] * data.column(*c)[i];
        }
        let m = common::inverse_link(link, eta);
        total -= common::log_density(family, link, m, phi, data.y[i]);
    }
    total
}

#[test]
fn posterior_mode_matches_independent_mle() {
    let table = PresetTable::builtin();
    for domain in [Domain::DoubleBounded, Domain::LowerBounded] {
        let (family, link, shape) = smoke_scenario(domain);
        let cfg = DgpConfig::from_table(&table, family, link, shape, EffectRegime::Positive).unwrap();
        let data = generate_dataset(&cfg, 11).unwrap().train;
        assert_eq!(Formula::Ideal.covariates()[0], Covariate::X);
        for &fit_family in domain.families() {
            let spec = FamilySpec::new(fit_family, link).unwrap();
            let mode = find_mode(&data, spec, link, Formula::Ideal).unwrap();
            let mle = common::nelder_mead(|p| negative_log_lik(&data, fit_family, link, p), &mode_start(&mode), 0.2);
            let at_mode = negative_log_lik(&data, fit_family, link, &mode);
            let at_mle = negative_log_lik(&data, fit_family, link, &mle);
            let gap = mode.iter().zip(&mle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(
                gap < 1e-3,
                "{fit_family}/{link}: mode {mode:?} vs mle {mle:?} (nll {at_mode} vs {at_mle})"
            );
        }
    }
}

/// Independent starting point away from the engine's answer.
fn mode_start(mode: &[f64]) -> Vec<f64> {
    mode.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.3 } else { -0.3 }).collect()
}
