//! Warmup adaptation: dual averaging of the step size and windowed estimation
//! of a diagonal inverse metric.

/// Nesterov dual averaging toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64, initial_step: f64) -> Self {
        let mut da = DualAveraging {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        };
        da.restart(initial_step);
        da
    }

    /// Resets the averages and recentres the shrinkage point on `10 * step`.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Returns the next step size after observing `accept_stat`.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let w = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Final adapted step size.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Streaming mean and variance.
#[derive(Debug, Clone)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variance (divisor `n - 1`).
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
    }
}

/// Slow-window schedule: an initial fast buffer, metric windows that double in
/// length, and a terminal fast buffer. The last window is stretched to meet
/// the terminal buffer.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window_end: usize,
    counter: usize,
    enabled: bool,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75, 50, 25);
        let enabled = warmup >= 20;
        if enabled && init + base + term > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.1 * warmup as f64) as usize;
            base = warmup - (init + term);
        }
        WindowSchedule {
            warmup,
            init_buffer: init,
            term_buffer: term,
            window_size: base,
            next_window_end: init + base - 1,
            counter: 0,
            enabled,
        }
    }

    fn in_window(&self) -> bool {
        self.enabled
            && self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn window_ends(&self) -> bool {
        self.enabled && self.counter == self.next_window_end && self.counter != self.warmup
    }

    fn advance_window(&mut self) {
        let last = self.warmup - self.term_buffer - 1;
        if self.next_window_end == last {
            return;
        }
        self.window_size *= 2;
        self.next_window_end = self.counter + self.window_size;
        if self.next_window_end != last && self.next_window_end + 2 * self.window_size >= self.warmup - self.term_buffer {
            self.next_window_end = last;
        }
    }
}

/// Diagonal metric adaptation over a [`WindowSchedule`].
#[derive(Debug, Clone)]
pub struct MetricAdaptation {
    schedule: WindowSchedule,
    estimator: Welford,
}

impl MetricAdaptation {
    pub fn new(dim: usize, warmup: usize) -> Self {
        MetricAdaptation { schedule: WindowSchedule::new(warmup), estimator: Welford::new(dim) }
    }

    /// Feeds one warmup position. Returns `true` when a window closed and
    /// `inv_metric` was replaced by the regularized window variance.
    pub fn observe(&mut self, q: &[f64], inv_metric: &mut [f64]) -> bool {
        let s = &mut self.schedule;
        if s.in_window() {
            self.estimator.add(q);
        }
        if s.window_ends() {
            s.advance_window();
            let n = self.estimator.count() as f64;
            for (m, v) in inv_metric.iter_mut().zip(self.estimator.variance()) {
                *m = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
            }
            self.estimator.reset();
            s.counter += 1;
            return true;
        }
        s.counter += 1;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_ends(warmup: usize) -> Vec<usize> {
        let mut m = MetricAdaptation::new(1, warmup);
        let mut inv = [1.0];
        (0..warmup).filter(|&i| m.observe(&[i as f64], &mut inv)).collect()
    }

    #[test]
    fn default_schedule_for_1000() {
        // 75 fast, then windows of 25, 50, 100, 200 and a stretched 500, then 50 fast.
        assert_eq!(window_ends(1000), vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        // 15% / 10% buffers, one window in between.
        assert_eq!(window_ends(100), vec![89]);
        assert!(window_ends(10).is_empty());
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.0];
        let mut w = Welford::new(1);
        xs.iter().for_each(|x| w.add(&[*x]));
        let m = xs.iter().sum::<f64>() / 5.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!((w.variance()[0] - v).abs() < 1e-12);
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        // Always accepting means the step can grow.
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(1.0);
        }
        assert!(eps > 1.0 && da.final_step() > 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            eps = da.update(0.1);
        }
        assert!(eps < 1.0);
    }
}
