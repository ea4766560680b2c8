use moe_robust::em::{estep, initial_params};
use moe_robust::{
    fit, fit_from, loglik, reference_params, simulate, Algorithm, ExpertParams, Family, FitConfig, MoEParams,
    SigmaUpdate, SimSpec,
};

fn small_fit_config(seed: u64) -> FitConfig {
    FitConfig {
        n_restarts: 2,
        max_em_iters: 300,
        rng_seed: seed,
        ..Default::default()
    }
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "log-likelihood dropped from {} to {}", w[0], w[1]);
    }
}

#[test]
fn traces_are_monotone_for_every_variant() {
    for seed in 0..6u64 {
        for family in [Family::Normal, Family::StudentT] {
            let data = simulate(&SimSpec::new(reference_params(family), 60, seed)).unwrap().data;
            for (algorithm, sigma_update) in [
                (Algorithm::Em, SigmaUpdate::Standard),
                (Algorithm::Ecm, SigmaUpdate::Standard),
                (Algorithm::Em, SigmaUpdate::ModifiedDivisor),
            ] {
                let cfg = FitConfig {
                    algorithm,
                    sigma_update,
                    ..small_fit_config(seed)
                };
                let res = fit(&data, family, 2, &cfg).unwrap();
                assert_monotone(&res.loglik_trace);
            }
        }
    }
}

#[test]
fn final_trace_entry_is_the_returned_likelihood() {
    for family in [Family::Normal, Family::StudentT] {
        let data = simulate(&SimSpec::new(reference_params(family), 150, 11)).unwrap().data;
        let res = fit(&data, family, 2, &small_fit_config(3)).unwrap();
        let recomputed = loglik(&data, &res.params).unwrap();
        assert!((recomputed - res.loglik_trace.last().unwrap()).abs() <= 1e-9, "{recomputed} vs {}", res.loglik);
        assert!((recomputed - res.loglik).abs() <= 1e-9);
    }
}

fn as_student(params: &MoEParams, nu: f64) -> MoEParams {
    let experts = params
        .experts
        .iter()
        .map(|e| ExpertParams::student_t(e.beta.as_slice().to_vec(), e.sigma2, nu))
        .collect();
    MoEParams::new(Family::StudentT, params.gating.clone(), experts).unwrap()
}

#[test]
fn huge_nu_responsibilities_match_normal_ones() {
    let normal = reference_params(Family::Normal);
    let data = simulate(&SimSpec::new(normal.clone(), 300, 5)).unwrap().data;
    let a = estep(&data, &normal).unwrap();
    let b = estep(&data, &as_student(&normal, 1e8)).unwrap();
    let gap = (&a.tau - &b.tau).amax();
    assert!(gap <= 1e-6, "τ gap {gap}");
    assert!((a.loglik - b.loglik).abs() <= 1e-4);
}

#[test]
fn pinned_nu_fit_reproduces_normal_fit() {
    let data = simulate(&SimSpec::new(reference_params(Family::Normal), 200, 8)).unwrap().data;
    let cfg = FitConfig {
        n_restarts: 1,
        ..Default::default()
    };
    let init = initial_params(&data, Family::Normal, 2, &cfg, 0).unwrap();
    let normal = fit_from(&data, &init, &cfg).unwrap();

    let pinned = FitConfig {
        nu_bracket: (1e8, 1e8),
        nu_init_range: (1e8, 1e8),
        ..cfg
    };
    let student = fit_from(&data, &as_student(&init, 1e8), &pinned).unwrap();

    let (a, b) = (&normal.params, &student.params);
    let mut gap = (a.gating.alpha() - b.gating.alpha()).amax();
    for (ea, eb) in a.experts.iter().zip(&b.experts) {
        gap = gap.max((&ea.beta - &eb.beta).amax()).max((ea.sigma2 - eb.sigma2).abs());
        assert_eq!(eb.nu, Some(1e8));
    }
    assert!(gap <= 1e-4, "parameter gap {gap}");
    assert!((normal.loglik - student.loglik).abs() <= 1e-6 * normal.loglik.abs().max(1.0));
}

#[test]
fn identical_seeds_give_identical_traces() {
    let data = simulate(&SimSpec::new(reference_params(Family::StudentT), 120, 2)).unwrap().data;
    let cfg = small_fit_config(77);
    let a = fit(&data, Family::StudentT, 2, &cfg).unwrap();
    let b = fit(&data, Family::StudentT, 2, &cfg).unwrap();
    let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loglik_trace), bits(&b.loglik_trace));
    assert_eq!(a.params, b.params);
}

#[test]
fn student_fit_resists_outliers_where_normal_fit_bends() {
    let spec = SimSpec {
        outlier_prob: 0.05,
        ..SimSpec::new(reference_params(Family::Normal), 500, 21)
    };
    let data = simulate(&spec).unwrap().data;
    let truth = reference_params(Family::Normal);
    let cfg = small_fit_config(1);
    let slope_err = |p: &MoEParams| {
        let mut got: Vec<f64> = p.experts.iter().map(|e| e.beta[1]).collect();
        let mut want: Vec<f64> = truth.experts.iter().map(|e| e.beta[1]).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max)
    };
    let t = fit(&data, Family::StudentT, 2, &cfg).unwrap();
    let n = fit(&data, Family::Normal, 2, &cfg).unwrap();
    assert!(slope_err(&t.params) < 0.15, "t slopes off by {}", slope_err(&t.params));
    assert!(slope_err(&n.params) > slope_err(&t.params));
}
