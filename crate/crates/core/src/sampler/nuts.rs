//! No-U-turn Hamiltonian Monte Carlo with a diagonal Euclidean metric,
//! multinomial sampling across the trajectory and the generalized turning
//! criterion, including the checks across merged subtrees.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    pub fn new<D: LogDensity + ?Sized>(density: &D, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = density.log_density_grad(&q, &mut grad);
        PhasePoint { p: vec![0.0; q.len()], q, logp, grad }
    }

    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        let kinetic: f64 = self.p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum();
        let h = -self.logp + 0.5 * kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

fn sharp(p: &[f64], inv_metric: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_metric).map(|(a, b)| a * b).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn no_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

pub fn sample_momentum<R: Rng + ?Sized>(z: &mut PhasePoint, inv_metric: &[f64], rng: &mut R) {
    for (p, m) in z.p.iter_mut().zip(inv_metric) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / m.sqrt();
    }
}

/// One leapfrog step of size `eps` (negative to integrate backwards).
pub fn leapfrog<D: LogDensity + ?Sized>(density: &D, z: &mut PhasePoint, inv_metric: &[f64], eps: f64) {
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_metric) {
        *q += eps * m * p;
    }
    z.logp = density.log_density_grad(&z.q, &mut z.grad);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
}

/// Outcome of one NUTS transition.
#[derive(Debug, Clone, Copy)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
    pub energy: f64,
}

struct Tree<'a, D: ?Sized, R: ?Sized> {
    density: &'a D,
    inv_metric: &'a [f64],
    eps: f64,
    h0: f64,
    rng: &'a mut R,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Per-subtree bookkeeping for momentum ends and their metric-weighted
/// ("sharp") versions.
struct Ends {
    p_beg: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_end: Vec<f64>,
    p_sharp_end: Vec<f64>,
}

impl<D: LogDensity + ?Sized, R: Rng + ?Sized> Tree<'_, D, R> {
    /// Extends the trajectory from `z` by `2^depth` steps. `rho` accumulates
    /// the momentum sum, `log_sum_weight` the multinomial weights.
    fn build(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        rho: &mut Vec<f64>,
        log_sum_weight: &mut f64,
    ) -> Option<Ends> {
        if depth == 0 {
            leapfrog(self.density, z, self.inv_metric, self.eps);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_metric);
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let w = self.h0 - h;
            *log_sum_weight = log_sum_exp(*log_sum_weight, w);
            self.sum_metro_prob += if w > 0.0 { 1.0 } else { w.exp() };
            z_propose.clone_from(z);
            *rho = add(rho, &z.p);
            if self.divergent {
                return None;
            }
            let ps = sharp(&z.p, self.inv_metric);
            return Some(Ends { p_beg: z.p.clone(), p_sharp_beg: ps.clone(), p_end: z.p.clone(), p_sharp_end: ps });
        }

        let dim = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut rho_init = vec![0.0; dim];
        let init = self.build(depth - 1, z, z_propose, &mut rho_init, &mut lsw_init)?;

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut rho_final = vec![0.0; dim];
        let fin = self.build(depth - 1, z, &mut z_propose_final, &mut rho_final, &mut lsw_final)?;

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || self.rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *z_propose = z_propose_final;
        }

        let rho_subtree = add(&rho_init, &rho_final);
        *rho = add(rho, &rho_subtree);

        let mut persist = no_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho_subtree);
        persist &= no_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &add(&rho_init, &fin.p_beg));
        persist &= no_turn(&init.p_sharp_end, &fin.p_sharp_end, &add(&rho_final, &init.p_end));
        persist.then_some(Ends {
            p_beg: init.p_beg,
            p_sharp_beg: init.p_sharp_beg,
            p_end: fin.p_end,
            p_sharp_end: fin.p_sharp_end,
        })
    }
}

/// One NUTS transition from `current`, which is replaced by the selected
/// state. The momentum of `current` is resampled.
pub fn transition<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    density: &D,
    current: &mut PhasePoint,
    inv_metric: &[f64],
    eps: f64,
    max_depth: usize,
    rng: &mut R,
) -> TransitionInfo {
    sample_momentum(current, inv_metric, rng);
    let h0 = current.hamiltonian(inv_metric);

    let mut z_fwd = current.clone();
    let mut z_bck = current.clone();
    let mut z_sample = current.clone();
    let mut z_propose = current.clone();

    let p0 = current.p.clone();
    let ps0 = sharp(&p0, inv_metric);
    // Outermost momenta of the whole trajectory and of its innermost ends.
    let (mut p_fwd_fwd, mut p_sharp_fwd_fwd) = (p0.clone(), ps0.clone());
    let (mut p_fwd_bck, mut p_sharp_fwd_bck) = (p0.clone(), ps0.clone());
    let (mut p_bck_fwd, mut p_sharp_bck_fwd) = (p0.clone(), ps0.clone());
    let (mut p_bck_bck, mut p_sharp_bck_bck) = (p0.clone(), ps0.clone());
    let mut rho = p0;
    let mut log_sum_weight = 0.0;

    let mut tree = Tree {
        density,
        inv_metric,
        eps,
        h0,
        rng,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let mut depth = 0;

    while depth < max_depth {
        let dim = rho.len();
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut lsw_subtree = f64::NEG_INFINITY;

        let forward = tree.rng.random::<f64>() > 0.5;
        let ends = if forward {
            // The existing trajectory becomes the backward part.
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_fwd);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_fwd);
            tree.eps = eps;
            let e = tree.build(depth, &mut z_fwd, &mut z_propose, &mut rho_fwd, &mut lsw_subtree);
            if let Some(e) = &e {
                p_fwd_bck.clone_from(&e.p_beg);
                p_sharp_fwd_bck.clone_from(&e.p_sharp_beg);
                p_fwd_fwd.clone_from(&e.p_end);
                p_sharp_fwd_fwd.clone_from(&e.p_sharp_end);
            }
            e
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_bck);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_bck);
            tree.eps = -eps;
            let e = tree.build(depth, &mut z_bck, &mut z_propose, &mut rho_bck, &mut lsw_subtree);
            if let Some(e) = &e {
                p_bck_fwd.clone_from(&e.p_beg);
                p_sharp_bck_fwd.clone_from(&e.p_sharp_beg);
                p_bck_bck.clone_from(&e.p_end);
                p_sharp_bck_bck.clone_from(&e.p_sharp_end);
            }
            e
        };
        if ends.is_none() {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight || tree.rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
            z_sample.clone_from(&z_propose);
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = no_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        persist &= no_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &add(&rho_bck, &p_fwd_bck));
        persist &= no_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &add(&rho_fwd, &p_bck_fwd));
        if !persist {
            break;
        }
    }

    let info = TransitionInfo {
        accept_stat: if tree.n_leapfrog > 0 { tree.sum_metro_prob / tree.n_leapfrog as f64 } else { 0.0 },
        n_leapfrog: tree.n_leapfrog,
        depth,
        divergent: tree.divergent,
        energy: z_sample.hamiltonian(inv_metric),
    };
    *current = z_sample;
    info
}

/// Step size heuristic: double or halve until the one-step acceptance
/// probability crosses 0.8.
pub fn find_reasonable_step<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    density: &D,
    start: &PhasePoint,
    inv_metric: &[f64],
    initial: f64,
    rng: &mut R,
) -> f64 {
    let mut eps = initial;
    let mut z = start.clone();
    let one_step = |eps: f64, z: &mut PhasePoint, rng: &mut R| {
        z.clone_from(start);
        sample_momentum(z, inv_metric, rng);
        let h0 = z.hamiltonian(inv_metric);
        leapfrog(density, z, inv_metric, eps);
        h0 - z.hamiltonian(inv_metric)
    };
    let log08 = 0.8f64.ln();
    let up = one_step(eps, &mut z, rng) > log08;
    for _ in 0..100 {
        let dh = one_step(eps, &mut z, rng);
        if up && !(dh > log08) || !up && !(dh < log08) {
            break;
        }
        eps = if up { 2.0 * eps } else { 0.5 * eps };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::sampler::FnDensity;

    fn std_normal(dim: usize) -> FnDensity<impl Fn(&[f64], &mut [f64]) -> f64 + Sync> {
        FnDensity::new(dim, |x: &[f64], g: &mut [f64]| {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = -xi;
            }
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        })
    }

    #[test]
    fn leapfrog_is_reversible() {
        let d = std_normal(3);
        let mut z = PhasePoint::new(&d, vec![0.3, -1.0, 2.0]);
        z.p = vec![1.0, 0.5, -0.2];
        let start = z.clone();
        for _ in 0..10 {
            leapfrog(&d, &mut z, &[1.0; 3], 0.1);
        }
        for _ in 0..10 {
            leapfrog(&d, &mut z, &[1.0; 3], -0.1);
        }
        for (a, b) in z.q.iter().zip(&start.q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_moves_and_reports() {
        let d = std_normal(2);
        let mut z = PhasePoint::new(&d, vec![0.0, 0.0]);
        let mut rng = stream_rng(1, 1);
        let info = transition(&d, &mut z, &[1.0, 1.0], 0.5, 10, &mut rng);
        assert!(info.n_leapfrog >= 1 && info.depth >= 1);
        assert!(!info.divergent);
        assert!((0.0..=1.0).contains(&info.accept_stat));
    }
}
