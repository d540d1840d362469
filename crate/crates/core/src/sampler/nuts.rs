use rand::Rng as _;
use rand_distr::{Distribution as _, StandardNormal};

use super::LogDensity;
use crate::rng::Rng;

const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Tree {
    left: Point,
    right: Point,
    proposal: Point,
    log_weight: f64,
    rho: Vec<f64>,
    sum_accept: f64,
    n_leapfrog: usize,
    diverging: bool,
    turning: bool,
}

pub(crate) struct TransitionStats {
    pub accept_stat: f64,
    pub diverging: bool,
}

pub(crate) struct Nuts<'a, T: ?Sized> {
    target: &'a T,
    current: Point,
    inv_mass: Vec<f64>,
    step_size: f64,
    max_depth: usize,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a, T: LogDensity + ?Sized> Nuts<'a, T> {
    pub fn new(target: &'a T, q: Vec<f64>, max_depth: usize) -> Self {
        let dim = q.len();
        let mut grad = vec![0.0; dim];
        let logp = target.log_density_grad(&q, &mut grad);
        Self {
            target,
            current: Point {
                q,
                p: vec![0.0; dim],
                grad,
                logp,
            },
            inv_mass: vec![1.0; dim],
            step_size: 1.0,
            max_depth,
        }
    }

    pub fn position(&self) -> &[f64] {
        &self.current.q
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn set_step_size(&mut self, eps: f64) {
        self.step_size = eps;
    }

    pub fn set_inv_mass(&mut self, inv_mass: Vec<f64>) {
        self.inv_mass = inv_mass;
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_mass)
            .map(|(pi, m)| pi * pi * m)
            .sum::<f64>()
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_mass).map(|(a, m)| a * m).collect()
    }

    fn sample_momentum(&self, rng: &mut Rng) -> Vec<f64> {
        self.inv_mass
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                z / m.sqrt()
            })
            .collect()
    }

    fn leapfrog(&self, from: &Point, eps: f64) -> Point {
        let mut p: Vec<f64> = from
            .p
            .iter()
            .zip(&from.grad)
            .map(|(p, g)| p + 0.5 * eps * g)
            .collect();
        let q: Vec<f64> = from
            .q
            .iter()
            .zip(p.iter().zip(&self.inv_mass))
            .map(|(q, (p, m))| q + eps * m * p)
            .collect();
        let mut grad = vec![0.0; q.len()];
        let logp = self.target.log_density_grad(&q, &mut grad);
        for (pi, g) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * g;
        }
        Point { q, p, grad, logp }
    }

    fn hamiltonian(&self, pt: &Point) -> f64 {
        -pt.logp + self.kinetic(&pt.p)
    }

    /// Doubles/halves the step size until a single leapfrog step's acceptance
    /// probability crosses 0.8.
    pub fn initial_step_size(&mut self, rng: &mut Rng) -> f64 {
        let mut eps = if self.step_size.is_finite() && self.step_size > 0.0 {
            self.step_size
        } else {
            1.0
        };
        let mut start = self.current.clone();
        start.p = self.sample_momentum(rng);
        let h0 = self.hamiltonian(&start);
        let delta = |s: &Self, eps: f64| {
            let next = s.leapfrog(&start, eps);
            let h = s.hamiltonian(&next);
            if h.is_finite() {
                h0 - h
            } else {
                f64::NEG_INFINITY
            }
        };
        let ln_target = 0.8_f64.ln();
        let direction = if delta(self, eps) > ln_target {
            1.0
        } else {
            -1.0
        };
        for _ in 0..100 {
            let next = eps * 2f64.powf(direction);
            let d = delta(self, next);
            if (direction > 0.0 && !(d > ln_target)) || (direction < 0.0 && d > ln_target) {
                if direction < 0.0 {
                    eps = next;
                }
                break;
            }
            eps = next;
        }
        eps.clamp(1e-10, 1e3)
    }

    /// True when the trajectory between the two ends keeps moving apart.
    fn no_turn(&self, p_left: &[f64], p_right: &[f64], rho: &[f64]) -> bool {
        dot(&self.p_sharp(p_left), rho) > 0.0 && dot(&self.p_sharp(p_right), rho) > 0.0
    }

    /// Turning criterion for the concatenation `left ++ right`, including the
    /// checks across the join.
    fn merged_turning(&self, left: &Tree, right: &Tree, rho: &[f64]) -> bool {
        let across_l: Vec<f64> = left
            .rho
            .iter()
            .zip(&right.left.p)
            .map(|(a, b)| a + b)
            .collect();
        let across_r: Vec<f64> = right
            .rho
            .iter()
            .zip(&left.right.p)
            .map(|(a, b)| a + b)
            .collect();
        !(self.no_turn(&left.left.p, &right.right.p, rho)
            && self.no_turn(&left.left.p, &right.left.p, &across_l)
            && self.no_turn(&left.right.p, &right.right.p, &across_r))
    }

    fn leaf(&self, from: &Point, eps: f64, h0: f64) -> Tree {
        let next = self.leapfrog(from, eps);
        let h = self.hamiltonian(&next);
        let (log_weight, diverging, accept) = if h.is_finite() {
            let d = h0 - h;
            (d, -d > MAX_ENERGY_ERROR, d.exp().min(1.0))
        } else {
            (f64::NEG_INFINITY, true, 0.0)
        };
        Tree {
            rho: next.p.clone(),
            left: next.clone(),
            right: next.clone(),
            proposal: next,
            log_weight,
            sum_accept: accept,
            n_leapfrog: 1,
            diverging,
            turning: false,
        }
    }

    fn build(&self, from: &Point, depth: usize, forward: bool, h0: f64, rng: &mut Rng) -> Tree {
        let eps = if forward {
            self.step_size
        } else {
            -self.step_size
        };
        if depth == 0 {
            return self.leaf(from, eps, h0);
        }
        let first = self.build(from, depth - 1, forward, h0, rng);
        if first.diverging || first.turning {
            return first;
        }
        let edge = if forward { &first.right } else { &first.left };
        let second = self.build(edge, depth - 1, forward, h0, rng);
        let sum_accept = first.sum_accept + second.sum_accept;
        let n_leapfrog = first.n_leapfrog + second.n_leapfrog;
        if second.diverging || second.turning {
            return Tree {
                sum_accept,
                n_leapfrog,
                ..second
            };
        }
        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let take_second = rng.random::<f64>().ln() < second.log_weight - log_weight;
        let rho: Vec<f64> = first
            .rho
            .iter()
            .zip(&second.rho)
            .map(|(a, b)| a + b)
            .collect();
        let (l, r) = if forward {
            (&first, &second)
        } else {
            (&second, &first)
        };
        let turning = self.merged_turning(l, r, &rho);
        let (left, right) = (l.left.clone(), r.right.clone());
        let proposal = if take_second {
            second.proposal
        } else {
            first.proposal
        };
        Tree {
            left,
            right,
            proposal,
            log_weight,
            rho,
            sum_accept,
            n_leapfrog,
            diverging: false,
            turning,
        }
    }

    pub fn transition(&mut self, rng: &mut Rng) -> TransitionStats {
        let mut start = self.current.clone();
        start.p = self.sample_momentum(rng);
        let h0 = self.hamiltonian(&start);
        let mut tree = Tree {
            rho: start.p.clone(),
            left: start.clone(),
            right: start.clone(),
            proposal: start,
            log_weight: 0.0,
            sum_accept: 0.0,
            n_leapfrog: 0,
            diverging: false,
            turning: false,
        };
        let mut diverging = false;
        for depth in 0..self.max_depth {
            let forward = rng.random::<bool>();
            let edge = if forward { &tree.right } else { &tree.left };
            let sub = self.build(edge, depth, forward, h0, rng);
            tree.sum_accept += sub.sum_accept;
            tree.n_leapfrog += sub.n_leapfrog;
            if sub.diverging {
                diverging = true;
                break;
            }
            if sub.turning {
                break;
            }
            // biased progressive sampling favours the new subtree
            if rng.random::<f64>().ln() < sub.log_weight - tree.log_weight {
                tree.proposal = sub.proposal.clone();
            }
            tree.log_weight = log_add_exp(tree.log_weight, sub.log_weight);
            let rho: Vec<f64> = tree.rho.iter().zip(&sub.rho).map(|(a, b)| a + b).collect();
            let turning = if forward {
                self.merged_turning(&tree, &sub, &rho)
            } else {
                self.merged_turning(&sub, &tree, &rho)
            };
            if forward {
                tree.right = sub.right;
            } else {
                tree.left = sub.left;
            }
            tree.rho = rho;
            if turning {
                break;
            }
        }
        self.current = tree.proposal;
        TransitionStats {
            accept_stat: if tree.n_leapfrog > 0 {
                tree.sum_accept / tree.n_leapfrog as f64
            } else {
                0.0
            },
            diverging,
        }
    }
}
