use rand::Rng;
use visperf_core::model::density::{lkj_log_norm_const, zib_logpdf};
use visperf_core::model::params::{chol_from_free, offset_index};
use visperf_core::model::{
    inv_logit, log_jacobian, log_posterior, log_prior, simulate_dataset, Model, ModelConfig, Observation,
    ParamLayout, ParamVector, RandomEffects, Submodel,
};
use visperf_core::rng::stream_rng;

fn synthetic(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Observation> {
    let mut rng = stream_rng(seed, 9);
    (0..n)
        .map(|i| Observation {
            value: if i % 4 == 0 { 0.0 } else { rng.random_range(0.001..0.6) },
            vis: i % cfg.n_vis,
            participant: (i / cfg.n_vis) % cfg.n_participants,
        })
        .collect()
}

/// Uniform on [-1, 1]^dim. Wider boxes reach offsets that saturate the link
/// clamp, where the density is ~1e7 and central differences lose every digit
/// to cancellation.
fn random_theta(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn fd_grad(model: &Model, theta: &[f64], h: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + h;
            let up = model.log_density(&x);
            x[i] = theta[i] - h;
            let down = model.log_density(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let cfg = ModelConfig::final_model(2, 3);
    let model = Model::new(cfg, &synthetic(&ModelConfig::final_model(2, 3), 30, 1)).unwrap();
    let mut rng = stream_rng(11, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let theta = random_theta(model.dim(), &mut rng);
        let mut g = vec![0.0; theta.len()];
        model.log_density_grad(&theta, &mut g);
        let fd = fd_grad(&model, &theta, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn gradient_is_right_for_ladder_restrictions() {
    let restrictions = [
        RandomEffects { mean: true, precision: false, zeros: false },
        RandomEffects { mean: true, precision: true, zeros: false },
        RandomEffects { mean: false, precision: false, zeros: true },
    ];
    let mut rng = stream_rng(12, 0);
    for re in restrictions {
        let cfg = ModelConfig::final_model(2, 3).with_random_effects(re);
        let model = Model::new(cfg.clone(), &synthetic(&cfg, 30, 2)).unwrap();
        for _ in 0..10 {
            let theta = random_theta(model.dim(), &mut rng);
            let mut g = vec![0.0; theta.len()];
            model.log_density_grad(&theta, &mut g);
            for (a, b) in g.iter().zip(&fd_grad(&model, &theta, 1e-5)) {
                assert!(rel_err(*a, *b) < 1e-5, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn normal_baseline_gradient_and_mle() {
    let cfg = ModelConfig::normal_baseline(2, 3);
    let obs: Vec<Observation> = [(0.1, 0), (0.3, 0), (0.2, 1), (0.6, 1), (0.7, 1)]
        .iter()
        .enumerate()
        .map(|(i, &(value, vis))| Observation { value, vis, participant: i % 3 })
        .collect();
    let model = Model::new(cfg, &obs).unwrap();
    let theta = [0.2, 0.5, -1.0];
    let mut g = vec![0.0; 3];
    model.log_density_grad(&theta, &mut g);
    for (a, b) in g.iter().zip(&fd_grad(&model, &theta, 1e-5)) {
        assert!(rel_err(*a, *b) < 1e-6);
    }
    // Maximum likelihood coefficients are the per-chart sample means.
    let mle = [0.2, 0.5, ((0.01 + 0.01 + 0.09 + 0.01 + 0.04) / 5.0f64).sqrt().ln()];
    model.log_density_grad(&mle, &mut g);
    assert!(g.iter().all(|x| x.abs() < 1e-9), "{g:?}");
}

/// Straightforward per-observation summation of the natural-scale posterior.
fn brute_force_posterior(p: &ParamVector, obs: &[Observation], cfg: &ModelConfig) -> f64 {
    let k = p.sigma.len();
    let norm = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut lp = 0.0;
    for v in 0..cfg.n_vis {
        lp += norm(p.beta_mu[v], -2.0, 1.0) + norm(p.beta_pi[v], -2.5, 1.25);
        let t = p.beta_phi[v] / 10.0;
        lp += statrs::function::gamma::ln_gamma(3.0) - statrs::function::gamma::ln_gamma(2.5)
            - 0.5 * (5.0 * std::f64::consts::PI).ln()
            - 10f64.ln()
            - 3.0 * (1.0 + t * t / 5.0).ln();
    }
    for &s in &p.sigma {
        lp += 2f64.ln() + norm(s, 0.0, 0.5);
    }
    let det: f64 = (0..k).map(|i| p.chol(i, i).powi(2)).product();
    lp += 3.0 * det.ln() - lkj_log_norm_const(k, 4.0);
    lp += p.z.iter().map(|&z| norm(z, 0.0, 1.0)).sum::<f64>();
    for o in obs {
        // Centered evaluation: plug U straight into the predictors.
        let u: Vec<f64> = (0..k)
            .map(|i| p.sigma[i] * (0..=i).map(|j| p.chol(i, j) * p.z[o.participant * k + j]).sum::<f64>())
            .collect();
        let off = |s| offset_index(cfg, s, o.vis).map_or(0.0, |i| u[i]);
        let mu = inv_logit(p.beta_mu[o.vis] + off(Submodel::Mean));
        let phi = (p.beta_phi[o.vis] + off(Submodel::Precision)).exp();
        let pi = inv_logit(p.beta_pi[o.vis] + off(Submodel::Zeros));
        lp += zib_logpdf(o.value, mu, phi, pi).unwrap();
    }
    lp
}

#[test]
fn posterior_matches_brute_force_and_centered_form() {
    let cfg = ModelConfig::final_model(2, 3);
    let obs = synthetic(&cfg, 10, 3);
    let mut rng = stream_rng(13, 0);
    for _ in 0..20 {
        let theta: Vec<f64> = random_theta(ParamLayout::new(&cfg).dim(), &mut rng);
        let p = ParamVector::from_unconstrained(&cfg, &theta);
        let fast = log_posterior(&p, &obs, &cfg).unwrap();
        let slow = brute_force_posterior(&p, &obs, &cfg);
        assert!((fast - slow).abs() <= 1e-10 * slow.abs(), "{fast} vs {slow}");
        // The unconstrained density adds exactly the Jacobian terms.
        let model = Model::new(cfg.clone(), &obs).unwrap();
        let d = model.log_density(&theta) - (fast + log_jacobian(&p, &cfg));
        assert!(d.abs() < 1e-9 * fast.abs().max(1.0), "{d}");
    }
}

#[test]
fn prior_at_mode_matches_term_oracle() {
    let cfg = ModelConfig::final_model(4, 2);
    let mut p = ParamVector::zeros(&cfg);
    p.beta_mu = vec![-2.0; 4];
    p.beta_pi = vec![-2.5; 4];
    p.sigma = vec![0.5; 12];
    let n = |s: f64| -s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let t_mode = statrs::function::gamma::ln_gamma(3.0)
        - statrs::function::gamma::ln_gamma(2.5)
        - 0.5 * (5.0 * std::f64::consts::PI).ln()
        - 10f64.ln();
    let half_normal = 2f64.ln() + n(0.5) - 0.5;
    let expect = 4.0 * (n(1.0) + t_mode + n(1.25)) + 12.0 * half_normal - lkj_log_norm_const(12, 4.0) + 24.0 * n(1.0);
    assert!((log_prior(&p, &cfg) - expect).abs() < 1e-10);
}

/// Numeric check of the free -> correlation Jacobian: map the free
/// coordinates to the strictly-lower entries of C and take log|det| of the
/// finite-difference Jacobian.
#[test]
fn cholesky_jacobian_matches_numeric_determinant() {
    let k = 4;
    let m = k * (k - 1) / 2;
    let mut rng = stream_rng(14, 0);
    for _ in 0..10 {
        let free: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let corr_lower = |f: &[f64]| {
            let (l, _) = chol_from_free(k, f);
            let mut out = Vec::new();
            for i in 1..k {
                for j in 0..i {
                    out.push((0..=j).map(|t| l[i * k + t] * l[j * k + t]).sum::<f64>());
                }
            }
            out
        };
        let h = 1e-6;
        let mut jac = vec![0.0; m * m];
        for c in 0..m {
            let mut up = free.clone();
            let mut dn = free.clone();
            up[c] += h;
            dn[c] -= h;
            let (a, b) = (corr_lower(&up), corr_lower(&dn));
            for r in 0..m {
                jac[r * m + c] = (a[r] - b[r]) / (2.0 * h);
            }
        }
        let numeric = log_abs_det(&mut jac, m);
        let (l, jac_free) = chol_from_free(k, &free);
        let analytic = jac_free + (1..k).map(|i| (k - i - 1) as f64 * l[i * k + i].ln()).sum::<f64>();
        assert!((numeric - analytic).abs() < 1e-6, "{numeric} vs {analytic}");
    }
}

fn log_abs_det(a: &mut [f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs())).unwrap();
        if piv != c {
            for j in 0..n {
                a.swap(c * n + j, piv * n + j);
            }
        }
        let d = a[c * n + c];
        acc += d.abs().ln();
        for r in c + 1..n {
            let f = a[r * n + c] / d;
            for j in c..n {
                a[r * n + j] -= f * a[c * n + j];
            }
        }
    }
    acc
}

#[test]
fn likelihood_normalizes() {
    let mut rng = stream_rng(15, 0);
    for _ in 0..50 {
        let mu = rng.random_range(0.05..0.95);
        let phi = rng.random_range(2.0..60.0);
        let pi = rng.random_range(0.0..0.9);
        let mass = adaptive_simpson(&|y| zib_logpdf(y, mu, phi, pi).unwrap().exp(), 1e-12, 1.0 - 1e-12, 1e-10, 40);
        assert!((pi + mass - 1.0).abs() < 1e-6, "mu {mu} phi {phi} pi {pi}: {}", pi + mass);
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, whole: f64, m: f64, fm: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, depth)
}

#[test]
fn simulation_rates_match_parameters() {
    let cfg = ModelConfig::final_model(1, 1);
    let mut p = ParamVector::zeros(&cfg);
    p.sigma = vec![0.0; 3];
    p.beta_pi = vec![(0.25f64 / 0.75).ln()];
    p.beta_mu = vec![(0.1f64 / 0.9).ln()];
    p.beta_phi = vec![50f64.ln()];
    let obs = simulate_dataset(&p, &cfg, 10_000, 4).unwrap();
    let zeros = obs.iter().filter(|o| o.value == 0.0).count() as f64 / 1e4;
    assert!((zeros - 0.25).abs() < 0.015, "{zeros}");
    let nz: Vec<f64> = obs.iter().map(|o| o.value).filter(|&v| v > 0.0).collect();
    let m = nz.iter().sum::<f64>() / nz.len() as f64;
    assert!((m - 0.1).abs() < 0.005, "{m}");
    assert_eq!(obs, simulate_dataset(&p, &cfg, 10_000, 4).unwrap());
}

/// Coordinate-wise Newton ascent driven only by finite differences of the
/// density; the analytic gradient must vanish at the point it converges to.
#[test]
fn gradient_vanishes_at_coordinate_ascent_optimum() {
    let cfg = ModelConfig::final_model(2, 2).with_random_effects(RandomEffects { mean: true, precision: false, zeros: false });
    let model = Model::new(cfg.clone(), &synthetic(&cfg, 40, 5)).unwrap();
    let mut x = vec![0.0; model.dim()];
    let mut f = model.log_density(&x);
    for _ in 0..5_000 {
        let start = x.clone();
        let mut biggest: f64 = 0.0;
        for i in 0..x.len() {
            let x0 = x[i];
            let at = |x: &mut Vec<f64>, v: f64| {
                x[i] = v;
                model.log_density(x)
            };
            let g = (at(&mut x, x0 + 1e-5) - at(&mut x, x0 - 1e-5)) / 2e-5;
            let curv = (at(&mut x, x0 + 1e-3) - 2.0 * f + at(&mut x, x0 - 1e-3)) / 1e-6;
            biggest = biggest.max(g.abs());
            let mut step = if curv < 0.0 { -g / curv } else { 0.1 * g.signum() };
            step = step.clamp(-0.5, 0.5);
            loop {
                x[i] = x0 + step;
                let fx = model.log_density(&x);
                // Close to the optimum the density changes by less than one
                // ulp per step, so plain Newton on the difference quotient
                // takes over.
                if fx >= f || (g.abs() < 1e-4 && curv < 0.0) {
                    f = fx;
                    break;
                }
                step *= 0.5;
                if step.abs() < 1e-14 {
                    x[i] = x0;
                    break;
                }
            }
        }
        if biggest < 1e-10 {
            break;
        }
        // Pattern move along the sweep's net displacement.
        let d: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let ft = model.log_density(&trial);
            if ft <= f {
                break;
            }
            x = trial;
            f = ft;
            t *= 2.0;
        }
    }
    let mut g = vec![0.0; x.len()];
    model.log_density_grad(&x, &mut g);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "gradient norm {norm} at the optimum");
}
