//! Brute-force grid minimax of the Hamiltonian, used to cross-check the
//! closed-form saddle points.
//!
//! Unbounded portfolio or consumption axes are handled by compact exhaustion:
//! search on a truncated box, double the truncation radius, and stop once the
//! grid argmax sits strictly inside the truncation and has stopped moving.

use alloc::vec::Vec;

use crate::error::Error;
use crate::num::golden_max;
use crate::saddle::{consumption_max, f_value, g_value};
use crate::scenario::{Scenario, UncertaintySet};

const MAX_DOUBLINGS: u32 = 20;
/// Largest axis the exhaustion loop will tabulate.
const MAX_NODES: f64 = 2e7;

/// Grid resolution. Axes for the portfolio and consumption are given by step,
/// so the number of points grows with the truncation radius; the market axes
/// are given by point counts over their compact ranges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub pi_step: f64,
    pub c_step: f64,
    pub n_mu: usize,
    pub n_sigma: usize,
}

impl GridSpec {
    /// Halves the steps and refines the market axes so every old node is kept.
    pub fn refined(self) -> Self {
        GridSpec {
            pi_step: 0.5 * self.pi_step,
            c_step: 0.5 * self.c_step,
            n_mu: 2 * self.n_mu - 1,
            n_sigma: 2 * self.n_sigma - 1,
        }
    }
}

/// Market parameters on the grid: drift and squared volatility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarketPoint {
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSaddle {
    /// Maximin portfolio on the grid.
    pub pi: f64,
    /// Grid maximizer of the consumption part.
    pub c: f64,
    /// Minimax market on the grid.
    pub market: MarketPoint,
    pub maxmin: f64,
    pub minmax: f64,
    pub gap: f64,
    /// Portfolio after golden-section polish of `pi -> min_market g`.
    pub pi_polished: f64,
    /// Investment value `min_market g` at the polished portfolio.
    pub g_polished: f64,
    /// Consumption part maximized by golden-section polish.
    pub f_polished: f64,
    pub pi_nodes: Vec<f64>,
    pub c_nodes: Vec<f64>,
    pub market_nodes: Vec<MarketPoint>,
}

impl GridSaddle {
    pub fn value_polished(&self) -> f64 {
        self.f_polished + self.g_polished
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return alloc::vec![lo];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * (i as f64 / last) })
        .collect()
}

fn stepped(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = libm::ceil((hi - lo) / step) as usize + 1;
    linspace(lo, hi, n.max(11))
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Market grid of the scenario's uncertainty set.
pub fn market_grid(s: &Scenario, n_mu: usize, n_sigma: usize) -> Vec<MarketPoint> {
    match s.uncertainty {
        UncertaintySet::Rect { mu_lo, mu_hi, sigma_lo, sigma_hi } => {
            let mus = linspace(mu_lo, mu_hi, n_mu);
            let vars = linspace(sigma_lo * sigma_lo, sigma_hi * sigma_hi, n_sigma);
            let mut out = Vec::with_capacity(mus.len() * vars.len());
            for &mu in &mus {
                for &sigma2 in &vars {
                    out.push(MarketPoint { mu, sigma2 });
                }
            }
            out
        }
        UncertaintySet::Correlated { mu_lo, sigma_lo, k, q_exp, alpha_hi } => {
            linspace(0.0, alpha_hi, n_mu)
                .into_iter()
                .map(|a| MarketPoint {
                    mu: mu_lo + a,
                    sigma2: sigma_lo * sigma_lo + k * libm::pow(a, q_exp),
                })
                .collect()
        }
    }
}

/// Searches `lo..hi` (either may be infinite) for the maximizer of a concave
/// `f`, truncating infinite ends at a radius around `center` that doubles
/// until the argmax settles. Returns the final nodes.
fn exhaust<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    center: f64,
    start_radius: f64,
    step: f64,
) -> Result<Vec<f64>, Error> {
    let mut radius = start_radius;
    let mut prev: Option<f64> = None;
    for _ in 0..=MAX_DOUBLINGS {
        let a = lo.max(center - radius);
        let b = hi.min(center + radius);
        if (b - a) / step > MAX_NODES {
            return Err(Error::ExhaustionDiverged);
        }
        let nodes = stepped(a, b, step);
        let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        let i = argmax(&values);
        let at_cut = (i == 0 && a > lo) || (i + 1 == nodes.len() && b < hi);
        let cell = nodes.get(1).map_or(0.0, |x| x - nodes[0]);
        let settled = prev.is_none_or(|p| (p - nodes[i]).abs() <= cell);
        if !at_cut && settled {
            return Ok(nodes);
        }
        if a <= lo && b >= hi {
            return Ok(nodes);
        }
        prev = Some(nodes[i]);
        radius *= 2.0;
    }
    Err(Error::ExhaustionDiverged)
}

/// Grid maximin and minimax of `F = f(x_q; c) + g(pi; mu, sigma2)`.
pub fn grid_minimax_oracle(x_q: f64, s: &Scenario, spec: GridSpec) -> Result<GridSaddle, Error> {
    let s = s.checked()?;
    let p = s.utility.risk_exponent();
    let rates = s.rates;
    let market_nodes = market_grid(&s, spec.n_mu.max(11), spec.n_sigma.max(11));
    let g = |pi: f64, m: &MarketPoint| g_value(p, &rates, pi, m.mu, m.sigma2);
    let worst = |pi: f64| market_nodes.iter().map(|m| g(pi, m)).fold(f64::INFINITY, f64::min);

    let b = &s.constraints;
    let pi_nodes = exhaust(worst, b.pi_lo.as_f64(), b.pi_hi.as_f64(), 0.5, 2.0, spec.pi_step)?;
    let inner: Vec<f64> = pi_nodes.iter().map(|&x| worst(x)).collect();
    let i = argmax(&inner);
    let maxmin_g = inner[i];
    let mut j_best = 0;
    let mut minmax_g = f64::INFINITY;
    for (j, m) in market_nodes.iter().enumerate() {
        let top = pi_nodes.iter().map(|&x| g(x, m)).fold(f64::NEG_INFINITY, f64::max);
        if top < minmax_g {
            minmax_g = top;
            j_best = j;
        }
    }

    let kind = s.utility.kind;
    let lambda = s.utility.lambda;
    let f = |c: f64| f_value(&kind, lambda, x_q, c);
    let unconstrained = consumption_max(&kind, lambda, 0.0, f64::INFINITY, x_q)
        .map(|o| o.c_star)
        .unwrap_or(1.0);
    let c_radius = (4.0 * unconstrained).max(1.0);
    let c_nodes = exhaust(f, b.c_lo, b.c_hi.as_f64(), 0.0, c_radius, spec.c_step)?;
    let f_vals: Vec<f64> = c_nodes.iter().map(|&c| f(c)).collect();
    let ci = argmax(&f_vals);
    let f_max = f_vals[ci];

    let cell = |nodes: &[f64], at: usize| {
        let lo = nodes[at.saturating_sub(1)];
        let hi = nodes[(at + 1).min(nodes.len() - 1)];
        (lo, hi)
    };
    let (a, z) = cell(&pi_nodes, i);
    let (pi_polished, g_polished) = golden_max(worst, a, z, 1e-13);
    let (a, z) = cell(&c_nodes, ci);
    let (_, f_polished) = golden_max(f, a, z, 1e-13);

    Ok(GridSaddle {
        pi: pi_nodes[i],
        c: c_nodes[ci],
        market: market_nodes[j_best],
        maxmin: f_max + maxmin_g,
        minmax: f_max + minmax_g,
        gap: (minmax_g - maxmin_g).abs(),
        pi_polished,
        g_polished: g_polished.max(maxmin_g),
        f_polished: f_polished.max(f_max),
        pi_nodes,
        c_nodes,
        market_nodes,
    })
}

/// Largest violation of the saddle inequalities
/// `F(pi*, c*; m) >= F(pi*, c*; m*) >= F(pi, c; m*)` over the grid nodes.
/// Non-positive means the candidate is a saddle point on the grid.
pub fn saddle_violation(
    x_q: f64,
    s: &Scenario,
    grid: &GridSaddle,
    pi_star: f64,
    c_star: f64,
    market_star: MarketPoint,
) -> f64 {
    let p = s.utility.risk_exponent();
    let g = |pi: f64, m: &MarketPoint| g_value(p, &s.rates, pi, m.mu, m.sigma2);
    let f = |c: f64| f_value(&s.utility.kind, s.utility.lambda, x_q, c);
    let at_star = g(pi_star, &market_star);
    let nature = grid
        .market_nodes
        .iter()
        .map(|m| at_star - g(pi_star, m))
        .fold(f64::NEG_INFINITY, f64::max);
    let invest = grid
        .pi_nodes
        .iter()
        .map(|&x| g(x, &market_star) - at_star)
        .fold(f64::NEG_INFINITY, f64::max);
    let f_star = f(c_star);
    let consume = grid.c_nodes.iter().map(|&c| f(c) - f_star).fold(f64::NEG_INFINITY, f64::max);
    nature.max(invest + consume)
}
