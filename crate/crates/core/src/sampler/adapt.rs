//! Warmup adaptation: dual-averaging step size and windowed diagonal mass.

use super::SamplerConfig;

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            log_eps: eps.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance shrunk toward 1e-3.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

pub(crate) struct MassUpdate {
    pub inv_mass: Option<Vec<f64>>,
}

/// Slow-window schedule: fast initial buffer, doubling variance windows,
/// fast terminal buffer.
struct Windows {
    init_buffer: usize,
    adapt_end: usize,
    window_end: usize,
    window_size: usize,
}

impl Windows {
    fn new(warmup: usize) -> Option<Self> {
        let (mut init, mut term, mut base) = (75usize, 50usize, 25usize);
        if warmup < 20 {
            return None;
        }
        if init + term + base > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.1 * warmup as f64) as usize;
            base = warmup - init - term;
        }
        Some(Self {
            init_buffer: init,
            adapt_end: warmup - term,
            window_end: init + base,
            window_size: base,
        })
    }

    fn in_slow_window(&self, it: usize) -> bool {
        it >= self.init_buffer && it < self.adapt_end
    }

    fn at_window_end(&self, it: usize) -> bool {
        it + 1 == self.window_end && it < self.adapt_end
    }

    fn advance(&mut self) {
        self.window_size *= 2;
        let mut next_end = self.window_end + self.window_size;
        if next_end + 2 * self.window_size > self.adapt_end {
            next_end = self.adapt_end;
        }
        self.window_end = next_end;
    }
}

pub(crate) struct Adapter {
    da: DualAveraging,
    target: f64,
    windows: Option<Windows>,
    welford: Welford,
    dim: usize,
}

impl Adapter {
    pub fn new(dim: usize, config: &SamplerConfig, initial_eps: f64) -> Self {
        Self {
            da: DualAveraging::new(initial_eps, config.target_accept),
            target: config.target_accept,
            windows: if config.adapt_mass {
                Windows::new(config.warmup)
            } else {
                None
            },
            welford: Welford::new(dim),
            dim,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.da.log_eps.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        if self.da.t > 0.0 {
            self.da.log_eps_bar.exp()
        } else {
            self.step_size()
        }
    }

    pub fn restart(&mut self, eps: f64) {
        self.da = DualAveraging::new(eps, self.target);
    }

    pub fn observe(&mut self, it: usize, position: &[f64], accept: f64) -> Option<MassUpdate> {
        self.da.update(accept);
        let windows = self.windows.as_mut()?;
        if !windows.in_slow_window(it) {
            return None;
        }
        self.welford.push(position);
        if windows.at_window_end(it) {
            let inv_mass = self.welford.regularized_variance();
            self.welford = Welford::new(self.dim);
            windows.advance();
            return Some(MassUpdate {
                inv_mass: Some(inv_mass),
            });
        }
        None
    }
}
