//! Static-trajectory Hamiltonian Monte Carlo with a diagonal metric, dual
//! averaging of the step size and windowed metric adaptation during warmup.

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcSettings {
    pub warmup: usize,
    pub kept: usize,
    pub target_accept: f64,
    /// Mean integration time; the number of leapfrog steps is drawn uniformly
    /// from `1..=round(2 · integration_time / ε)`.
    pub integration_time: f64,
    pub max_leapfrog: usize,
    /// Energy error above which a transition is flagged divergent.
    pub divergence_threshold: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        HmcSettings {
            warmup: 500,
            kept: 2000,
            target_accept: 0.8,
            integration_time: 1.5,
            max_leapfrog: 256,
            divergence_threshold: 1000.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Post-warmup positions, one vector per iteration.
    pub draws: Vec<Vec<f64>>,
    /// Divergent post-warmup transitions.
    pub divergences: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub mean_accept: f64,
}

struct DualAveraging {
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(step: f64, delta: f64) -> Self {
        DualAveraging {
            mu: (10.0 * step).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            delta,
        }
    }

    fn learn(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let w = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance (Welford).
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for ((xi, mean), m2) in x.iter().zip(&mut self.mean).zip(&mut self.m2) {
            let d = xi - *mean;
            *mean += d / self.n as f64;
            *m2 += d * (xi - *mean);
        }
    }

    /// Sample variance shrunk towards `1e-3`.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|m2| (n / (n + 5.0)) * m2 / (n - 1.0) + 1e-3 * (5.0 / (n + 5.0)))
            .collect()
    }
}

/// Slow adaptation windows `[start, end)` for a warmup of the given length.
fn adaptation_windows(warmup: usize) -> Vec<(usize, usize)> {
    let (mut init, mut term, mut base) = (75, 50, 25);
    if warmup < 20 {
        return Vec::new();
    }
    if init + term + base > warmup {
        init = warmup * 15 / 100;
        term = warmup / 10;
        base = warmup - init - term;
    }
    let end = warmup - term;
    let mut windows = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < end {
        let mut stop = start + size;
        // absorb a final window that would be too short to double
        if stop + 2 * size > end {
            stop = end;
        }
        windows.push((start, stop));
        start = stop;
        size *= 2;
    }
    windows
}

struct State {
    q: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
}

pub struct Sampler<'a, F> {
    logp: &'a F,
    settings: HmcSettings,
    inv_metric: Vec<f64>,
    step: f64,
}

impl<'a, F: Fn(&[f64], &mut [f64]) -> f64> Sampler<'a, F> {
    pub fn new(logp: &'a F, dim: usize, settings: HmcSettings) -> Self {
        Sampler {
            logp,
            settings,
            inv_metric: vec![1.0; dim],
            step: 1.0,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_metric)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    fn momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
            .collect()
    }

    /// Runs `steps` leapfrog steps from `state`. Returns the end state, its
    /// momentum, and whether the trajectory diverged.
    fn integrate(&self, state: &State, p0: &[f64], step: f64, steps: usize) -> (State, Vec<f64>, bool) {
        let h0 = -state.lp + self.kinetic(p0);
        let mut q = state.q.clone();
        let mut p = p0.to_vec();
        let mut grad = state.grad.clone();
        let mut lp = state.lp;
        for _ in 0..steps {
            for i in 0..q.len() {
                p[i] += 0.5 * step * grad[i];
                q[i] += step * self.inv_metric[i] * p[i];
            }
            lp = (self.logp)(&q, &mut grad);
            if !lp.is_finite() {
                return (State { q, lp, grad }, p, true);
            }
            for i in 0..q.len() {
                p[i] += 0.5 * step * grad[i];
            }
            let h = -lp + self.kinetic(&p);
            if !(h - h0 <= self.settings.divergence_threshold) {
                return (State { q, lp, grad }, p, true);
            }
        }
        (State { q, lp, grad }, p, false)
    }

    /// Doubles or halves the step size until the one-step acceptance
    /// probability crosses 0.8.
    fn init_step_size<R: Rng + ?Sized>(&mut self, state: &State, rng: &mut R) {
        let threshold = 0.8f64.ln();
        let mut direction = 0i32;
        for _ in 0..100 {
            let p = self.momentum(rng);
            let h0 = -state.lp + self.kinetic(&p);
            let (end, p1, _) = self.integrate(state, &p, self.step, 1);
            let dh = h0 - (-end.lp + self.kinetic(&p1));
            let dh = if dh.is_nan() { f64::NEG_INFINITY } else { dh };
            if direction == 0 {
                direction = if dh > threshold { 1 } else { -1 };
            }
            if (direction == 1 && !(dh > threshold)) || (direction == -1 && !(dh < threshold)) {
                break;
            }
            self.step *= 2f64.powi(direction);
            if self.step > 1e7 || self.step < 1e-12 {
                break;
            }
        }
    }

    /// One transition. Returns the acceptance probability and divergence flag.
    fn transition<R: Rng + ?Sized>(&self, state: &mut State, rng: &mut R) -> (f64, bool) {
        let max_steps = ((2.0 * self.settings.integration_time / self.step).round() as usize)
            .clamp(1, self.settings.max_leapfrog);
        let steps = rng.random_range(1..=max_steps);
        let p0 = self.momentum(rng);
        let h0 = -state.lp + self.kinetic(&p0);
        let (proposal, p1, divergent) = self.integrate(state, &p0, self.step, steps);
        if divergent {
            return (0.0, true);
        }
        let h1 = -proposal.lp + self.kinetic(&p1);
        let accept = (h0 - h1).exp().min(1.0);
        let u: f64 = rng.random();
        if u < accept {
            *state = proposal;
        }
        (accept, false)
    }

    /// Runs warmup followed by the kept iterations from `init`, which must
    /// have a finite log density.
    pub fn run<R: Rng + ?Sized>(mut self, init: Vec<f64>, rng: &mut R) -> ChainOutput {
        let dim = init.len();
        let mut grad = vec![0.0; dim];
        let lp = (self.logp)(&init, &mut grad);
        let mut state = State { q: init, lp, grad };
        let warmup = self.settings.warmup;
        let windows = adaptation_windows(warmup);
        self.init_step_size(&state, rng);
        let mut dual = DualAveraging::new(self.step, self.settings.target_accept);
        let mut welford = Welford::new(dim);
        let mut window_idx = 0;
        for it in 0..warmup {
            let (accept, _) = self.transition(&mut state, rng);
            self.step = dual.learn(accept);
            if let Some(&(start, stop)) = windows.get(window_idx) {
                if it >= start && it < stop {
                    welford.add(&state.q);
                }
                if it + 1 == stop {
                    self.inv_metric = welford.regularized();
                    welford = Welford::new(dim);
                    window_idx += 1;
                    self.init_step_size(&state, rng);
                    dual = DualAveraging::new(self.step, self.settings.target_accept);
                }
            }
        }
        if warmup > 0 {
            self.step = dual.final_step();
        }
        let mut draws = Vec::with_capacity(self.settings.kept);
        let mut divergences = 0;
        let mut accept_sum = 0.0;
        for _ in 0..self.settings.kept {
            let (accept, divergent) = self.transition(&mut state, rng);
            divergences += divergent as usize;
            accept_sum += accept;
            draws.push(state.q.clone());
        }
        ChainOutput {
            draws,
            divergences,
            step_size: self.step,
            inv_metric: self.inv_metric,
            mean_accept: accept_sum / self.settings.kept.max(1) as f64,
        }
    }
}
