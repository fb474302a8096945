use approx::assert_abs_diff_eq;

use super::*;
use crate::distribution::Atom;
use crate::special::normal_pdf;

fn gm(cs: &[(f64, f64, f64)]) -> GaussianMixture {
    GaussianMixture::new(cs.iter().map(|&(p, mu, var)| Component::new(p, mu, var)).collect()).unwrap()
}

fn no_aitken() -> EmConfig {
    EmConfig {
        aitken: false,
        ..EmConfig::default()
    }
}

/// Textbook sample EM on equally weighted points, written out directly.
fn sample_em_step(xs: &[f64], theta: &[(f64, f64, f64)]) -> (Vec<(f64, f64, f64)>, f64) {
    let n = xs.len() as f64;
    let m = theta.len();
    let mut resp = vec![vec![0.0; m]; xs.len()];
    let mut loglik = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        let dens: Vec<f64> = theta.iter().map(|&(p, mu, v)| p * normal_pdf(x, mu, v)).collect();
        let total: f64 = dens.iter().sum();
        loglik += total.ln();
        for i in 0..m {
            resp[j][i] = dens[i] / total;
        }
    }
    let next = (0..m)
        .map(|i| {
            let nk: f64 = resp.iter().map(|r| r[i]).sum();
            let mu = resp.iter().zip(xs).map(|(r, x)| r[i] * x).sum::<f64>() / nk;
            let var = resp.iter().zip(xs).map(|(r, x)| r[i] * (x - mu).powi(2)).sum::<f64>() / nk;
            (nk / n, mu, var)
        })
        .collect();
    (next, -loglik / n)
}

fn as_tuples(g: &GaussianMixture) -> Vec<(f64, f64, f64)> {
    g.components().iter().map(|c| (c.p, c.mu, c.var)).collect()
}

#[test]
fn quantile_initialization_examples() {
    let cfg = EmConfig::default();
    let n = DistributionSpec::gaussian(0.0, 1.0).unwrap();
    let g = init_mixture(&n, 1, &InitStrategy::Quantile, &cfg).unwrap();
    assert_abs_diff_eq!(g.components()[0].mu, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(g.components()[0].var, 1.0, epsilon = 1e-8);

    let u = DistributionSpec::uniform(0.0, 1.0).unwrap();
    let g = init_mixture(&u, 2, &InitStrategy::Quantile, &cfg).unwrap();
    assert_eq!(g.weights(), vec![0.5, 0.5]);
    assert_abs_diff_eq!(g.means()[0], 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(g.means()[1], 0.75, epsilon = 1e-15);

    let e = DistributionSpec::exponential(1.0).unwrap();
    let g = init_mixture(&e, 3, &InitStrategy::Quantile, &cfg).unwrap();
    let want = [-(5.0f64 / 6.0).ln(), 2f64.ln(), 6f64.ln()];
    for (got, want) in g.means().iter().zip(want) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
    }
}

#[test]
fn random_initialization_is_seeded() {
    let cfg = EmConfig::default();
    let e = DistributionSpec::exponential(1.0).unwrap();
    let a = init_mixture(&e, 3, &InitStrategy::Random { seed: 7 }, &cfg).unwrap();
    let b = init_mixture(&e, 3, &InitStrategy::Random { seed: 7 }, &cfg).unwrap();
    let c = init_mixture(&e, 3, &InitStrategy::Random { seed: 8 }, &cfg).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn step_at_own_distribution_is_a_fixed_point() {
    let truth = gm(&[(0.3, -2.0, 1.0), (0.7, 3.0, 0.25)]);
    let next = em_step(&truth.to_spec(), &truth, &EmConfig::default()).unwrap();
    for (a, b) in truth.components().iter().zip(next.components()) {
        assert_abs_diff_eq!(a.p, b.p, epsilon = 1e-8);
        assert_abs_diff_eq!(a.mu, b.mu, epsilon = 1e-8);
        assert_abs_diff_eq!(a.var, b.var, epsilon = 1e-8);
    }
}

#[test]
fn single_component_step_is_moment_matching() {
    let n = DistributionSpec::gaussian(0.0, 1.0).unwrap();
    let next = em_step(&n, &gm(&[(1.0, 5.0, 2.0)]), &EmConfig::default()).unwrap();
    assert_abs_diff_eq!(next.components()[0].mu, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(next.components()[0].var, 1.0, epsilon = 1e-8);
}

#[test]
fn empirical_step_equals_sample_em() {
    let xs = [-1.3, -0.2, 0.1, 0.9, 2.4, 3.0];
    let spec = DistributionSpec::empirical(&xs, None).unwrap();
    let theta = [(0.4, -0.5, 1.0), (0.6, 2.0, 0.5)];
    let next = em_step(&spec, &gm(&theta), &EmConfig::default()).unwrap();
    let (oracle, _) = sample_em_step(&xs, &theta);
    for (a, b) in as_tuples(&next).iter().zip(&oracle) {
        assert_abs_diff_eq!(a.0, b.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-14);
        assert_abs_diff_eq!(a.2, b.2, epsilon = 1e-14);
    }
}

#[test]
fn fit_gaussian_with_one_component() {
    let n = DistributionSpec::gaussian(0.0, 1.0).unwrap();
    let r = em_fit(&n, 1, &EmConfig::default()).unwrap();
    let c = r.mixture.components()[0];
    assert_abs_diff_eq!(c.mu, 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(c.var, 1.0, epsilon = 1e-8);
    assert!(r.converged);
    assert!(r.relative_entropy.unwrap() <= 1e-6);
}

#[test]
fn one_component_fit_is_the_moment_matching_gaussian() {
    let e = DistributionSpec::exponential(1.0).unwrap();
    let cfg = EmConfig::default();
    let init = init_mixture(&e, 1, &InitStrategy::Quantile, &cfg).unwrap();
    let first = em_step(&e, &init, &cfg).unwrap();
    assert_abs_diff_eq!(first.components()[0].mu, 1.0, epsilon = 1e-8);
    assert_abs_diff_eq!(first.components()[0].var, 1.0, epsilon = 1e-8);
    let r = em_fit(&e, 1, &cfg).unwrap();
    for (a, b) in as_tuples(&r.mixture).iter().zip(as_tuples(&first)) {
        assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-12);
        assert_abs_diff_eq!(a.2, b.2, epsilon = 1e-12);
    }
}

#[test]
fn recovers_a_two_component_mixture() {
    let truth = gm(&[(0.3, -2.0, 1.0), (0.7, 3.0, 0.25)]);
    let r = em_fit(&truth.to_spec(), 2, &EmConfig::default()).unwrap();
    assert!(r.converged, "{:?}", r.flags);
    let mut got = as_tuples(&r.mixture);
    got.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (g, t) in got.iter().zip(as_tuples(&truth)) {
        assert_abs_diff_eq!(g.0, t.0, epsilon = 0.01);
        assert_abs_diff_eq!(g.1, t.1, epsilon = 0.02);
        assert!((g.2 / t.2 - 1.0).abs() < 0.05);
    }
    assert!(r.fixed_point_residual <= 1e-6);
}

#[test]
fn three_components_beat_one_on_the_exponential() {
    let e = DistributionSpec::exponential(1.0).unwrap();
    let cfg = EmConfig::default();
    let one = em_fit(&e, 1, &cfg).unwrap();
    let three = em_fit(&e, 3, &cfg).unwrap();
    assert!(three.relative_entropy.unwrap() < one.relative_entropy.unwrap());
}

#[test]
fn trace_is_monotone_and_converges_to_a_fixed_point() {
    let tol = 10.0 * 1e-8;
    for spec in [
        DistributionSpec::exponential(1.0).unwrap(),
        DistributionSpec::uniform(0.0, 1.0).unwrap(),
        DistributionSpec::triangular(0.0, 0.3, 1.0).unwrap(),
    ] {
        for m in 1..=3 {
            // Triangular fits with m ≥ 3 converge slowly; allow them to finish.
            let cfg = EmConfig { max_iterations: 10_000, ..EmConfig::default() };
            let r = em_fit(&spec, m, &cfg).unwrap();
            for w in r.d0_trace.windows(2) {
                assert!(w[1] <= w[0] + tol, "m = {m}: {} -> {}", w[0], w[1]);
            }
            assert!(r.converged, "m = {m}: {:?}", r.flags);
            assert!(r.fixed_point_residual <= 1e-6);
        }
    }
}

#[test]
fn aitken_does_not_change_the_answer() {
    let e = DistributionSpec::exponential(1.0).unwrap();
    let with = em_fit(&e, 2, &EmConfig::default()).unwrap();
    let without = em_fit(&e, 2, &no_aitken()).unwrap();
    assert_abs_diff_eq!(with.d0(), without.d0(), epsilon = 1e-8);
    assert!(with.iterations <= without.iterations);
}

#[test]
fn empirical_fit_tracks_sample_em() {
    let xs: Vec<f64> = gm(&[(0.4, -1.0, 0.5), (0.6, 2.0, 1.0)]).sample(50, 3);
    let spec = DistributionSpec::empirical(&xs, None).unwrap();
    let init = gm(&[(0.5, -0.5, 1.0), (0.5, 1.5, 1.0)]);
    let cfg = EmConfig {
        max_iterations: 15,
        convergence_tol: 1e-300,
        fixed_point_tol: 1e-300,
        init_strategy: InitStrategy::User { mixture: init.clone() },
        ..no_aitken()
    };
    let r = em_fit(&spec, 2, &cfg).unwrap();
    let mut theta = as_tuples(&init);
    for k in 0..15 {
        let (next, d0) = sample_em_step(&xs, &theta);
        assert_abs_diff_eq!(r.d0_trace[k], d0, epsilon = 1e-12);
        theta = next;
    }
    for (a, b) in as_tuples(&r.mixture).iter().zip(&theta) {
        assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-12);
    }
}

#[test]
fn relabeled_start_permutes_the_result() {
    let e = DistributionSpec::exponential(1.0).unwrap();
    let start = [(0.2, 0.1, 0.05), (0.5, 0.8, 0.3), (0.3, 2.5, 1.5)];
    let fit = |order: [usize; 3]| {
        let mixture = gm(&order.map(|i| start[i]));
        em_fit(&e, 3, &EmConfig { init_strategy: InitStrategy::User { mixture }, ..EmConfig::default() }).unwrap()
    };
    let a = fit([0, 1, 2]);
    let b = fit([2, 0, 1]);
    for x in [0.01, 0.3, 1.0, 2.0, 5.0] {
        assert_abs_diff_eq!(a.mixture.density(x), b.mixture.density(x), epsilon = 1e-12);
    }
}

#[test]
fn affine_map_of_the_input_maps_the_fit() {
    let (scale, shift) = (3.0, -2.0);
    let x = DistributionSpec::triangular(0.0, 0.3, 1.0).unwrap();
    let y = DistributionSpec::triangular(shift, shift + 0.3 * scale, shift + scale).unwrap();
    let fx = em_fit(&x, 2, &EmConfig::default()).unwrap();
    let fy = em_fit(&y, 2, &EmConfig::default()).unwrap();
    for (a, b) in fx.mixture.components().iter().zip(fy.mixture.components()) {
        assert_abs_diff_eq!(a.p, b.p, epsilon = 1e-6);
        assert_abs_diff_eq!(scale * a.mu + shift, b.mu, epsilon = 1e-6);
        assert_abs_diff_eq!(scale * scale * a.var, b.var, epsilon = 1e-6);
    }
}

#[test]
fn dead_component_triggers_one_restart() {
    let spec = DistributionSpec::empirical(&[-1.0, 0.0, 0.5, 1.0, 2.0], None).unwrap();
    let mixture = gm(&[(0.5, 0.5, 1.0), (0.5, 1e4, 1.0)]);
    let cfg = EmConfig {
        init_strategy: InitStrategy::User { mixture },
        ..EmConfig::default()
    };
    let r = em_fit(&spec, 2, &cfg).unwrap();
    assert!(r.flags[0].starts_with(flags::RESTARTED), "{:?}", r.flags);
}

#[test]
fn atoms_in_the_input_are_point_terms() {
    let spec = DistributionSpec::exponential(1.0)
        .unwrap()
        .with_atoms(vec![Atom { x: 0.0, mass: 0.3 }])
        .unwrap();
    let r = em_fit(&spec, 2, &EmConfig::default()).unwrap();
    assert!(r.relative_entropy.is_none());
    // One component collapses onto the atom.
    let narrow = r.mixture.components().iter().map(|c| c.var).fold(f64::INFINITY, f64::min);
    assert!(narrow < 1e-3, "{:?}", r.mixture);
}

#[test]
fn fast_fit_recovers_a_true_mixture() {
    let truth = gm(&[(0.3, -2.0, 1.0), (0.7, 3.0, 0.25)]);
    let r = fast_fit_two(&truth.to_spec(), &EmConfig::default()).unwrap();
    assert_eq!(r.flags, vec![flags::FAST_FIT.to_string()]);
    let mut got = as_tuples(&r.mixture);
    got.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (g, t) in got.iter().zip(as_tuples(&truth)) {
        assert_abs_diff_eq!(g.0, t.0, epsilon = 1e-4);
        assert_abs_diff_eq!(g.1, t.1, epsilon = 1e-4);
        assert_abs_diff_eq!(g.2, t.2, epsilon = 1e-4);
    }
}

#[test]
fn fast_fit_of_a_gaussian_is_degenerate() {
    let n = DistributionSpec::gaussian(0.0, 1.0).unwrap();
    let r = fast_fit_two(&n, &EmConfig::default()).unwrap();
    for i in 0..20 {
        let x = -4.0 + 0.4 * i as f64;
        assert_abs_diff_eq!(r.mixture.density(x), normal_pdf(x, 0.0, 1.0), epsilon = 1e-6);
    }
}

#[test]
fn fast_fit_of_the_uniform_matches_moments_or_falls_back() {
    let u = DistributionSpec::uniform(0.0, 1.0).unwrap();
    let r = fast_fit_two(&u, &EmConfig::default()).unwrap();
    if r.flags.contains(&flags::FAST_FIT.to_string()) {
        for k in 1..=5u32 {
            let want = 1.0 / (k as f64 + 1.0);
            assert!((r.mixture.raw_moment(k) / want - 1.0).abs() < 1e-6, "moment {k}");
        }
    } else {
        assert!(r.flags.contains(&flags::FAST_FIT_FALLBACK.to_string()));
    }
}

#[test]
fn report_json_shape() {
    let r = em_fit(&DistributionSpec::gaussian(0.0, 1.0).unwrap(), 1, &EmConfig::default()).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in ["mixture", "d0_trace", "relative_entropy", "iterations", "converged", "fixed_point_residual", "flags"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let cfg: EmConfig = serde_json::from_str(r#"{"init_strategy":{"kind":"random","seed":5}}"#).unwrap();
    assert_eq!(cfg.init_strategy, InitStrategy::Random { seed: 5 });
    assert_eq!(cfg.max_iterations, 500);
}
