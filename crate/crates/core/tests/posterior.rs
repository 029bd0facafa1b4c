use rand::Rng;
use rand_distr::StandardNormal;
use visperf_core::fit::fit;
use visperf_core::model::params::chol_from_free;
use visperf_core::model::simulate::draw_zib;
use visperf_core::model::*;
use visperf_core::posterior::*;
use visperf_core::rng::{indexed_rng, stream_rng};
use visperf_core::sampler::SamplerConfig;

fn lp(mu: f64, phi: f64, pi: f64) -> LinkedParams {
    LinkedParams { mu, phi, pi }
}

/// A posterior whose draws are `draws` for a model over `n_vis` charts and
/// `n_participants` people.
fn posterior(config: ModelConfig, draws: Vec<ParamVector>) -> Posterior {
    let ids = (0..config.n_participants).map(|p| format!("p{p}")).collect();
    Posterior::new(config, ids, draws).unwrap()
}

/// Random natural-scale parameters with moderate values.
fn random_params(config: &ModelConfig, rng: &mut impl Rng) -> ParamVector {
    let v = config.n_vis;
    let k = config.n_offsets();
    let mut n = |s: f64, m: f64| m + s * rng.sample::<f64, _>(StandardNormal);
    let beta_mu = (0..v).map(|_| n(0.5, -2.3)).collect();
    let beta_phi = (0..v).map(|_| n(0.5, 2.0)).collect();
    let beta_pi = (0..v).map(|_| n(0.5, -1.5)).collect();
    let sigma = (0..k).map(|_| n(0.1, 0.4).abs()).collect();
    let free: Vec<f64> = (0..k * k.saturating_sub(1) / 2).map(|_| n(0.3, 0.0)).collect();
    let z = (0..k * config.n_participants).map(|_| n(1.0, 0.0)).collect();
    ParamVector { beta_mu, beta_phi, beta_pi, sigma, corr_chol: chol_from_free(k, &free).0, z, resid_sd: None }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn expected_error_matches_monte_carlo() {
    let params = lp(0.1, 20.0, 0.25);
    assert!((expected_abs_error(params) - 0.075).abs() < 1e-15);
    let mut rng = stream_rng(5, 0);
    let n = 1_000_000;
    let mean = (0..n).map(|_| draw_zib(params, &mut rng)).sum::<f64>() / n as f64;
    assert!((mean - 0.075).abs() < 0.001, "{mean}");
}

#[test]
fn cdf_matches_integrated_density() {
    for &(mu, phi, pi, e) in &[(0.1, 30.0, 0.2, 0.05), (0.3, 8.0, 0.1, 0.2), (0.05, 60.0, 0.4, 0.12), (0.5, 4.0, 0.0, 0.5)] {
        let a: f64 = mu * phi;
        let b: f64 = (1.0 - mu) * phi;
        let ln_beta = statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(b)
            - statrs::function::gamma::ln_gamma(a + b);
        let pdf = |y: f64| if y <= 0.0 { 0.0 } else { ((a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_beta).exp() };
        let oracle = pi + (1.0 - pi) * simpson(pdf, 0.0, e, 20_000);
        assert!((zib_cdf(lp(mu, phi, pi), e) - oracle).abs() < 1e-8, "{mu} {phi} {pi} {e}");
    }
}

#[test]
fn cdf_bands_are_well_formed() {
    let cfg = ModelConfig::final_model(4, 3);
    let mut rng = stream_rng(11, 0);
    let draws: Vec<_> = (0..300).map(|_| random_params(&cfg, &mut rng)).collect();
    let post = posterior(cfg, draws);
    let grid = error_grid();
    for who in [Who::AverageParticipant, Who::Participant("p1".into())] {
        let est = predictive_cdf(&post, 2, &grid, &who).unwrap();
        for (d, curve) in est.per_draw.iter().enumerate() {
            let pi = post.linked(2, &who).unwrap()[d].pi;
            assert_eq!(curve[0], pi);
            assert!(curve.iter().all(|c| (0.0..=1.0).contains(c)));
            assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        }
        for b in &est.bands {
            assert!(b.lo95 <= b.lo66 && b.lo66 <= b.median && b.median <= b.hi66 && b.hi66 <= b.hi95);
        }
    }
    let err = predictive_cdf(&post, 0, &grid, &Who::Participant("nobody".into())).unwrap_err();
    assert!(err.to_string().contains("nobody"));
    let same = cdf_difference(&post, 1, 1, &grid).unwrap();
    assert!(same.per_draw.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn beta_one_one_cdf() {
    let cfg = ModelConfig::final_model(1, 1);
    let mut p = ParamVector::zeros(&cfg);
    p.beta_mu = vec![0.0];
    p.beta_phi = vec![2f64.ln()];
    p.beta_pi = vec![logit(0.2)];
    let post = posterior(cfg, vec![p]);
    let est = predictive_cdf(&post, 0, &[0.0, 0.3], &Who::AverageParticipant).unwrap();
    assert!((est.per_draw[0][0] - 0.2).abs() < 1e-15);
    assert!((est.per_draw[0][1] - 0.44).abs() < 1e-12);
}

#[test]
fn zero_sd_population_is_the_average_participant() {
    let cfg = ModelConfig::final_model(4, 1);
    let mut p = random_params(&cfg, &mut stream_rng(2, 0));
    p.sigma = vec![0.0; 12];
    let pop = simulate_population(&p, &cfg, 50, &mut stream_rng(3, 0)).unwrap();
    let avg: Vec<f64> = (0..4).map(|v| expected_abs_error(link_with_offsets(&p, &cfg, v, &[]))).collect();
    for e in &pop.expected_error {
        assert_eq!(e, &avg);
    }
    let post = posterior(cfg, vec![p; 5]);
    let sd = between_person_sd(&post, 100, 1).unwrap();
    assert!(sd.per_draw.iter().flatten().all(|&s| s == 0.0));
}

#[test]
fn population_correlation_matches_the_draw() {
    let cfg = ModelConfig::final_model(4, 1);
    let p = random_params(&cfg, &mut stream_rng(8, 0));
    let n = 50_000;
    let pop = simulate_population(&p, &cfg, n, &mut stream_rng(9, 0)).unwrap();
    let k = 12;
    let c = p.correlation();
    let mean: Vec<f64> = (0..k).map(|i| pop.offsets.iter().map(|u| u[i]).sum::<f64>() / n as f64).collect();
    let cov = |i: usize, j: usize| {
        pop.offsets.iter().map(|u| (u[i] - mean[i]) * (u[j] - mean[j])).sum::<f64>() / (n - 1) as f64
    };
    for i in 0..k {
        for j in 0..k {
            let r = cov(i, j) / (cov(i, i) * cov(j, j)).sqrt();
            assert!((r - c[i * k + j]).abs() < 0.02, "({i},{j}) {r} vs {}", c[i * k + j]);
        }
    }
}

#[test]
fn population_mean_matches_quadrature() {
    // Two charts, offsets on the mean submodel only.
    let re = RandomEffects { mean: true, precision: false, zeros: false };
    let cfg = ModelConfig::final_model(2, 1).with_random_effects(re);
    let rho: f64 = 0.3;
    let p = ParamVector {
        beta_mu: vec![-2.0, -1.2],
        beta_phi: vec![2.0, 2.5],
        beta_pi: vec![-1.0, -2.0],
        sigma: vec![0.5, 0.8],
        corr_chol: vec![1.0, 0.0, rho, (1.0 - rho * rho).sqrt()],
        z: vec![0.0, 0.0],
        resid_sd: None,
    };
    let n = 50_000;
    let pop = simulate_population(&p, &cfg, n, &mut stream_rng(4, 0)).unwrap();
    for v in 0..2 {
        let pi = inv_logit(p.beta_pi[v]);
        let s = p.sigma[v];
        let phi_n = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let oracle = (1.0 - pi) * simpson(|x| inv_logit(p.beta_mu[v] + s * x) * phi_n(x), -12.0, 12.0, 4000);
        let xs: Vec<f64> = pop.expected_error.iter().map(|e| e[v]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let se = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        assert!((m - oracle).abs() < 3.0 * se, "vis {v}: {m} vs {oracle} (se {se})");
    }
}

#[test]
fn between_person_sd_is_stable_in_population_size() {
    let cfg = ModelConfig::final_model(4, 1);
    let p = random_params(&cfg, &mut stream_rng(21, 0));
    // Identical draws: the spread across draws is pure Monte Carlo noise.
    let post = posterior(cfg, vec![p; 200]);
    let a = between_person_sd(&post, 2000, 1).unwrap();
    let b = between_person_sd(&post, 4000, 2).unwrap();
    for v in 0..4 {
        let col = |s: &BetweenPersonSd| s.per_draw.iter().map(|d| d[v]).collect::<Vec<f64>>();
        let se = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
            1.2533 * sd / (xs.len() as f64).sqrt()
        };
        let (ca, cb) = (col(&a), col(&b));
        let bound = 2.0 * (se(&ca).powi(2) + se(&cb).powi(2)).sqrt() * 100.0;
        let diff = (a.summary_pp[v].median - b.summary_pp[v].median).abs();
        assert!(diff < bound, "vis {v}: {diff} vs {bound}");
    }
}

#[test]
fn correlation_blocks() {
    let cfg = ModelConfig::final_model(4, 1);
    let mut rng = stream_rng(13, 0);
    let draws: Vec<_> = (0..50).map(|_| random_params(&cfg, &mut rng)).collect();
    let post = posterior(cfg, draws);
    for s in Submodel::ALL {
        let rows = offset_correlations(&post, s).unwrap();
        assert_eq!(rows.len(), 16);
        for r in &rows {
            if r.vis_a == r.vis_b {
                assert!(r.per_draw.iter().all(|&x| x == 1.0));
            }
            let t = rows.iter().find(|t| t.vis_a == r.vis_b && t.vis_b == r.vis_a).unwrap();
            assert_eq!(r.per_draw, t.per_draw);
        }
    }
    let re = RandomEffects { mean: true, precision: false, zeros: false };
    let cfg = ModelConfig::final_model(2, 1).with_random_effects(re);
    let post = posterior(cfg.clone(), vec![random_params(&cfg, &mut rng)]);
    assert!(offset_correlations(&post, Submodel::Zeros).is_err());
}

#[test]
fn degenerate_rankings() {
    let cfg = ModelConfig::final_model(4, 1);
    let mut p = random_params(&cfg, &mut stream_rng(1, 1));
    p.sigma = vec![0.0; 12];
    p.beta_mu = vec![-3.0, -2.5, -2.0, -1.5];
    p.beta_pi = vec![-2.0; 4];
    let post = posterior(cfg, vec![p; 10]);
    let dist = ranking_distribution(&post, 500, 3).unwrap();
    assert_eq!(dist.labels[0], "bar<pie<stacked_bar<bubble");
    for d in &dist.per_draw {
        assert_eq!(d[0], 1.0);
        assert!(d[1..].iter().all(|&x| x == 0.0));
    }
    assert_eq!(dist.summary[0].median, 1.0);
}

#[test]
fn ranking_proportions_partition_the_population() {
    let cfg = ModelConfig::final_model(4, 1);
    let mut rng = stream_rng(17, 0);
    let draws: Vec<_> = (0..40).map(|_| random_params(&cfg, &mut rng)).collect();
    let post = posterior(cfg, draws);
    let dist = ranking_distribution(&post, 777, 5).unwrap();
    assert_eq!(dist.orderings.len(), 24);
    for d in &dist.per_draw {
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.iter().all(|&x| x >= 0.0));
    }
    // Reproducible regardless of thread scheduling.
    assert_eq!(dist, ranking_distribution(&post, 777, 5).unwrap());

    let cfg6 = ModelConfig::final_model(6, 1);
    let post6 = posterior(cfg6.clone(), vec![random_params(&cfg6, &mut rng)]);
    assert!(ranking_distribution(&post6, 10, 1).is_err());
}

#[test]
fn average_score_is_the_zero_offset_path() {
    let cfg = ModelConfig::final_model(4, 3);
    let mut rng = stream_rng(23, 0);
    let mut draws: Vec<_> = (0..100).map(|_| random_params(&cfg, &mut rng)).collect();
    // Participant p1 has all offsets pinned to zero.
    for d in &mut draws {
        d.z[12..24].iter_mut().for_each(|z| *z = 0.0);
    }
    let post = posterior(cfg, draws);
    let avg = score(&post, &Who::AverageParticipant, &[]).unwrap();
    let pinned = score_participant(&post, "p1", &[]).unwrap();
    assert_eq!(avg.expected_pp, pinned.expected_pp);
    assert_eq!(avg.ranking_probabilities, pinned.ranking_probabilities);
    let direct = expected_error_draws(&post, &Who::AverageParticipant).unwrap();
    for v in 0..4 {
        let xs: Vec<f64> = direct.iter().map(|d| d[v]).collect();
        assert_eq!(avg.expected_pp[v], visperf_core::stats::IntervalSummary::from_samples(&xs).scaled(100.0));
    }
    let total: f64 = avg.ranking_probabilities.iter().map(|r| r.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(score_participant(&post, "nobody", &[]).is_err());
    let with_data = score_participant(&post, "p0", &[(0, 0.02), (0, 0.04), (2, 0.1)]).unwrap();
    assert_eq!(with_data.empirical_mean_pp[0], Some(3.0));
    assert_eq!(with_data.empirical_mean_pp[1], None);
}

/// Data for `n_people` people where everyone shares the same chart effects
/// except participant 0, who is much worse on stacked bars, and participants
/// 1 and 2, who have identical data.
fn planted_study(n_people: usize, seed: u64) -> (ModelConfig, Vec<Observation>) {
    let cfg = ModelConfig::final_model(4, n_people);
    let truth = PopulationParams {
        beta_mu: vec![-2.6, -2.5, -2.4, -2.3],
        beta_phi: vec![2.5; 4],
        beta_pi: vec![-1.5; 4],
        sigma: vec![0.25; 12],
        corr: None,
    };
    let mut params = truth.realize(&cfg, &mut stream_rng(seed, 7)).unwrap();
    // A large positive mean offset on stacked bars for participant 0.
    params.z[..12].iter_mut().for_each(|z| *z = 0.0);
    params.z[2] = 6.0;
    let mut obs = simulate_dataset(&params, &cfg, 30, seed).unwrap();
    obs.retain(|o| o.participant != 2);
    let copies: Vec<_> = obs.iter().filter(|o| o.participant == 1).map(|o| Observation { participant: 2, ..*o }).collect();
    obs.extend(copies);
    (cfg, obs)
}

#[test]
fn planted_individual_effects_are_recovered() {
    let (cfg, obs) = planted_study(12, 31);
    let sampler = SamplerConfig { n_chains: 2, warmup: 500, samples: 500, seed: 4, ..Default::default() };
    let out = fit(&cfg, &obs, &sampler).unwrap();
    let ids: Vec<String> = (0..12).map(|p| format!("p{p}")).collect();
    let post = Posterior::from_draws(cfg, ids, &out.draws).unwrap();

    let planted = score_participant(&post, "p0", &[]).unwrap();
    let avg = score(&post, &Who::AverageParticipant, &[]).unwrap();
    let sb = planted.expected_pp[2];
    assert!(sb.lo95 > avg.expected_pp[2].median);
    for v in [0, 1, 3] {
        assert!(sb.lo95 > planted.expected_pp[v].hi95, "vis {v}");
    }

    let a = score_participant(&post, "p1", &[]).unwrap();
    let b = score_participant(&post, "p2", &[]).unwrap();
    for v in 0..4 {
        let width = a.expected_pp[v].hi95 - a.expected_pp[v].lo95;
        assert!((a.expected_pp[v].median - b.expected_pp[v].median).abs() < width);
    }
}

#[test]
fn ordered_charts_give_one_signed_cdf_difference() {
    // Bar errors are stochastically smaller than bubble errors.
    let cfg = ModelConfig::final_model(2, 10);
    let truth = PopulationParams {
        beta_mu: vec![-3.0, -2.0],
        beta_phi: vec![2.5, 2.5],
        beta_pi: vec![-1.0, -2.0],
        sigma: vec![0.2; 6],
        corr: None,
    };
    let params = truth.realize(&cfg, &mut stream_rng(3, 7)).unwrap();
    let obs = simulate_dataset(&params, &cfg, 40, 3).unwrap();
    let sampler = SamplerConfig { n_chains: 2, warmup: 500, samples: 500, seed: 6, ..Default::default() };
    let out = fit(&cfg, &obs, &sampler).unwrap();
    let post = Posterior::from_draws(cfg, (0..10).map(|p| format!("p{p}")).collect(), &out.draws).unwrap();
    let diff = cdf_difference(&post, 0, 1, &error_grid()).unwrap();
    let ok = diff.per_draw.iter().filter(|c| c.iter().all(|&x| x >= 0.0)).count();
    assert!(ok as f64 >= 0.95 * diff.per_draw.len() as f64, "{ok} of {}", diff.per_draw.len());
}

/// Between-person SD implied by known parameters, from a very large
/// simulated population.
fn true_between_person_sd(params: &ParamVector, cfg: &ModelConfig) -> Vec<f64> {
    let pop = simulate_population(params, cfg, 200_000, &mut stream_rng(99, 0)).unwrap();
    (0..cfg.n_vis)
        .map(|v| {
            let xs: Vec<f64> = pop.expected_error.iter().map(|e| e[v]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        })
        .collect()
}

#[test]
fn between_person_sd_recovers_known_spread() {
    let re = RandomEffects { mean: true, precision: false, zeros: false };
    let cfg = ModelConfig::final_model(1, 30).with_random_effects(re);
    let pop = PopulationParams {
        beta_mu: vec![-2.3],
        beta_phi: vec![2.5],
        beta_pi: vec![-1.5],
        sigma: vec![0.4],
        corr: None,
    };
    let one = ModelConfig::final_model(1, 1).with_random_effects(re);
    let target = true_between_person_sd(&pop.realize(&one, &mut stream_rng(0, 0)).unwrap(), &one)[0];
    let mut covered = 0;
    for rep in 0..100u64 {
        let params = pop.realize(&cfg, &mut indexed_rng(rep, 1)).unwrap();
        let obs = simulate_dataset(&params, &cfg, 20, rep).unwrap();
        let sampler = SamplerConfig { n_chains: 2, warmup: 300, samples: 300, seed: rep, ..Default::default() };
        let out = fit(&cfg, &obs, &sampler).unwrap();
        let post = Posterior::from_draws(cfg.clone(), (0..30).map(|p| format!("p{p}")).collect(), &out.draws).unwrap();
        let sd = between_person_sd(&post, 1000, rep).unwrap();
        if sd.summary_pp[0].contains95(100.0 * target) {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered} of 100");
}
