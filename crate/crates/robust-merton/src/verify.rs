//! Monte Carlo checks of the closed forms and deterministic comparative-statics sweeps.
//!
//! Wealth is simulated with an exponential Euler step on `ln X`, so it stays
//! positive. Path `i` draws its normals from a ChaCha8 stream seeded with
//! `seed ^ splitmix64(i)`, and every policy compared in one run sees the same
//! normals. Per-path results are collected in path order and reduced by
//! pairwise summation, which makes estimates independent of thread count.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use robust_merton_core::{
    build_schedule_log, build_schedule_power, solve, ConsumptionSchedule, Error as CoreError,
    ExtReal, OpportunitySolution, Scenario, Solution, UncertaintySet, UtilityKind,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("simulation config: {0}")]
    Config(&'static str),
    #[error("inadmissible perturbation `{label}`: {reason}")]
    Inadmissible { label: String, reason: String },
    #[error("sweep of {param} at {value}: {reason}")]
    GridValue { param: &'static str, value: f64, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.n_paths < 1000 {
            return Err(VerifyError::Config("n_paths must be at least 1000"));
        }
        if self.n_steps < 100 {
            return Err(VerifyError::Config("n_steps must be at least 100"));
        }
        Ok(())
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn path_normals(seed: u64, path: usize, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ splitmix64(path as u64));
    for z in out.iter_mut() {
        *z = StandardNormal.sample(&mut rng);
    }
}

/// Pairwise summation in a fixed order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// A `-inf` sample (utility of zero consumption or wealth) makes the mean
    /// `-inf`; the standard error is then reported as zero.
    pub fn from_samples(x: &[f64]) -> Self {
        if x.iter().all(|&v| v == x[0]) {
            return McEstimate { mean: x[0], stderr: 0.0 };
        }
        let n = x.len() as f64;
        let mean = pairwise_sum(x) / n;
        if !mean.is_finite() {
            return McEstimate { mean, stderr: 0.0 };
        }
        let dev: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1.0).max(1.0);
        McEstimate { mean, stderr: (var / n).sqrt() }
    }
}

/// A deterministic function of time.
#[derive(Clone)]
pub struct Schedule(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Schedule(Arc::new(move |_| v))
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Schedule(Arc::new(f))
    }

    /// `before` on `[0, cut)`, `after` from `cut` on.
    pub fn switch(before: f64, cut: f64, after: f64) -> Self {
        Schedule(Arc::new(move |t| if t < cut { before } else { after }))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Schedule(..)")
    }
}

/// Investor controls together with the market parameters they face.
#[derive(Clone, Debug)]
pub struct Controls {
    pub pi: Schedule,
    pub c: Schedule,
    pub mu: Schedule,
    pub sigma: Schedule,
}

pub fn consumption_schedule(s: &Scenario, sol: &Solution) -> Result<ConsumptionSchedule, CoreError> {
    match &sol.opportunity {
        OpportunitySolution::Power(q) => build_schedule_power(q, s),
        OpportunitySolution::Log(l) => build_schedule_log(l, s),
    }
}

impl Controls {
    /// Optimal portfolio and consumption against the worst-case market.
    pub fn optimal(s: &Scenario, sol: &Solution) -> Result<Self, VerifyError> {
        let schedule = consumption_schedule(s, sol)?;
        Ok(Controls {
            pi: Schedule::constant(sol.saddle.pi_star),
            c: Schedule::from_fn(move |t| schedule.eval(t)),
            mu: Schedule::constant(sol.saddle.mu_star),
            sigma: Schedule::constant(sol.saddle.sigma_star),
        })
    }
}

/// Controls sampled on the simulation grid.
struct Table {
    pi: Vec<f64>,
    ln_c: Vec<f64>,
    c_mid: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

struct Engine<'a> {
    s: &'a Scenario,
    cfg: SimConfig,
    dt: f64,
    times: Vec<f64>,
    weight: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario, cfg: SimConfig) -> Result<Self, VerifyError> {
        cfg.validate()?;
        let n = cfg.n_steps;
        let dt = s.horizon / n as f64;
        let times: Vec<f64> =
            (0..=n).map(|k| if k == n { s.horizon } else { k as f64 * dt }).collect();
        let lambda = s.utility.lambda;
        let weight = times.iter().map(|t| lambda * (-s.utility.rho * t).exp()).collect();
        Ok(Engine { s, cfg, dt, times, weight })
    }

    fn table(&self, c: &Controls) -> Table {
        let cs: Vec<f64> = self.times.iter().map(|&t| c.c.eval(t)).collect();
        Table {
            pi: self.times.iter().map(|&t| c.pi.eval(t)).collect(),
            ln_c: cs.iter().map(|v| v.ln()).collect(),
            c_mid: cs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            mu: self.times.iter().map(|&t| c.mu.eval(t)).collect(),
            sigma: self.times.iter().map(|&t| c.sigma.eval(t)).collect(),
        }
    }

    fn utility(&self, ln_w: f64) -> f64 {
        match self.s.utility.kind {
            UtilityKind::Power { p } => (p * ln_w).exp() / p,
            UtilityKind::Log => ln_w,
        }
    }

    /// `ln X` increment over step `k` for normal draw `z`.
    fn step(&self, t: &Table, k: usize, z: f64) -> f64 {
        let r = &self.s.rates;
        let pi = t.pi[k];
        let sig = t.sigma[k];
        let bank = 1.0 - pi;
        let carry = if bank >= 0.0 { r.lend * bank } else { r.borrow * bank };
        let drift = t.mu[k] * pi + carry - t.c_mid[k] - 0.5 * pi * pi * sig * sig;
        drift * self.dt + pi * sig * self.dt.sqrt() * z
    }

    /// Realized utility of one path: trapezoid integral of discounted
    /// consumption utility plus discounted terminal utility.
    fn payoff(&self, t: &Table, z: &[f64]) -> f64 {
        let ln_x0 = self.s.x0.ln();
        let mut ln_x = ln_x0;
        let mut prev = self.weight[0] * self.utility(t.ln_c[0] + ln_x);
        let mut integral = 0.0;
        for (k, &zk) in z.iter().enumerate() {
            ln_x += self.step(t, k, zk);
            let next = self.weight[k + 1] * self.utility(t.ln_c[k + 1] + ln_x);
            integral += 0.5 * self.dt * (prev + next);
            prev = next;
        }
        let terminal = (-self.s.utility.rho * self.s.horizon).exp() * self.utility(ln_x);
        integral + terminal
    }

    /// Per-path payoffs of every policy, on common random numbers.
    fn payoffs(&self, policies: &[Controls]) -> Vec<Vec<f64>> {
        let tables: Vec<Table> = policies.iter().map(|c| self.table(c)).collect();
        let per_path: Vec<Vec<f64>> = (0..self.cfg.n_paths)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.cfg.n_steps],
                |z, i| {
                    path_normals(self.cfg.seed, i, z);
                    tables.iter().map(|t| self.payoff(t, z)).collect()
                },
            )
            .collect();
        (0..policies.len()).map(|j| per_path.iter().map(|row| row[j]).collect()).collect()
    }
}

/// Simulated wealth paths on the uniform grid `t_k = k T / n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct WealthEnsemble {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

/// Full wealth paths. Memory grows as `n_paths * n_steps`; the estimators
/// below stream instead.
pub fn simulate_wealth(s: &Scenario, controls: &Controls, cfg: SimConfig) -> Result<WealthEnsemble, VerifyError> {
    let e = Engine::new(s, cfg)?;
    let t = e.table(controls);
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut z = vec![0.0; cfg.n_steps];
            path_normals(cfg.seed, i, &mut z);
            wealth_path(&e, &t, &z)
        })
        .collect();
    Ok(WealthEnsemble { times: e.times.clone(), paths })
}

fn wealth_path(e: &Engine<'_>, t: &Table, z: &[f64]) -> Vec<f64> {
    let mut ln_x = e.s.x0.ln();
    let mut out = Vec::with_capacity(z.len() + 1);
    out.push(e.s.x0);
    for (k, &zk) in z.iter().enumerate() {
        ln_x += e.step(t, k, zk);
        out.push(ln_x.exp());
    }
    out
}

/// Expected discounted utility of the controls.
pub fn mc_value(s: &Scenario, controls: &Controls, cfg: SimConfig) -> Result<McEstimate, VerifyError> {
    let e = Engine::new(s, cfg)?;
    Ok(McEstimate::from_samples(&e.payoffs(std::slice::from_ref(controls))[0]))
}

/// Per-path payoffs of several policies under common random numbers.
pub fn crn_payoffs(s: &Scenario, policies: &[Controls], cfg: SimConfig) -> Result<Vec<Vec<f64>>, VerifyError> {
    Ok(Engine::new(s, cfg)?.payoffs(policies))
}

/// Estimated value of `a` minus value of `b` under common random numbers.
pub fn crn_gap(s: &Scenario, a: &Controls, b: &Controls, cfg: SimConfig) -> Result<McEstimate, VerifyError> {
    let pay = crn_payoffs(s, &[a.clone(), b.clone()], cfg)?;
    let diff: Vec<f64> = pay[0].iter().zip(&pay[1]).map(|(x, y)| x - y).collect();
    Ok(McEstimate::from_samples(&diff))
}

/// A deviation from the saddle point on one side of the game.
#[derive(Clone, Debug)]
pub enum Perturbation {
    /// Investor deviates; the market stays at the worst case.
    Strategy { label: String, pi: Schedule, c: Schedule },
    /// Market deviates; the investor keeps the optimal controls.
    Market { label: String, mu: Schedule, sigma: Schedule },
}

impl Perturbation {
    pub fn label(&self) -> &str {
        match self {
            Perturbation::Strategy { label, .. } | Perturbation::Market { label, .. } => label,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Deviating investor does no better than the optimum.
    StrategyAtMost,
    /// Deviating market does the investor no harm.
    MarketAtLeast,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::StrategyAtMost => "value <= optimal",
            Side::MarketAtLeast => "value >= optimal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaddleCheck {
    pub description: String,
    pub side: Side,
    pub mc_value: f64,
    pub stderr: f64,
    /// Perturbed minus optimal, per path on common random numbers.
    pub gap: f64,
    pub gap_stderr: f64,
    pub pass: bool,
}

/// Mean of `J_{t_to} - J_{t_from}` along the optimal controls.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementCheck {
    pub t_from: f64,
    pub t_to: f64,
    pub mean: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expected {
    Nondecreasing,
    Nonincreasing,
    Independent,
    NonMonotone,
}

impl Expected {
    pub fn name(self) -> &'static str {
        match self {
            Expected::Nondecreasing => "nondecreasing",
            Expected::Nonincreasing => "nonincreasing",
            Expected::Independent => "independent",
            Expected::NonMonotone => "non_monotone",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observed {
    Nondecreasing,
    Nonincreasing,
    Constant,
    Mixed,
}

impl Observed {
    pub fn name(self) -> &'static str {
        match self {
            Observed::Nondecreasing => "nondecreasing",
            Observed::Nonincreasing => "nonincreasing",
            Observed::Constant => "constant",
            Observed::Mixed => "mixed",
        }
    }

    fn join(self, other: Observed) -> Observed {
        use Observed::*;
        match (self, other) {
            (Constant, x) | (x, Constant) => x,
            (a, b) if a == b => a,
            _ => Mixed,
        }
    }

    fn satisfies(self, e: Expected) -> bool {
        match e {
            Expected::Nondecreasing => matches!(self, Observed::Nondecreasing | Observed::Constant),
            Expected::Nonincreasing => matches!(self, Observed::Nonincreasing | Observed::Constant),
            Expected::Independent => self == Observed::Constant,
            Expected::NonMonotone => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCheck {
    pub parameter: &'static str,
    pub output: &'static str,
    pub observed: Observed,
    pub expected: Expected,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub closed_value: f64,
    pub mc_value: f64,
    pub mc_stderr: f64,
    pub value_pass: bool,
    pub saddle_checks: Vec<SaddleCheck>,
    pub martingale: Vec<IncrementCheck>,
    pub sweeps: Vec<SweepCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.value_pass
            && self.saddle_checks.iter().all(|c| c.pass)
            && self.martingale.iter().all(|c| c.pass)
            && self.sweeps.iter().all(|c| c.pass)
    }
}

const SLACK: f64 = 1e-12;

fn check_admissible(s: &Scenario, p: &Perturbation, times: &[f64]) -> Result<(), VerifyError> {
    let fail = |reason: String| VerifyError::Inadmissible { label: p.label().to_string(), reason };
    let inside = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo - SLACK && v <= hi + SLACK;
    match p {
        Perturbation::Strategy { pi, c, .. } => {
            let b = &s.constraints;
            for &t in times {
                let (x, y) = (pi.eval(t), c.eval(t));
                if !inside(x, b.pi_lo.as_f64(), b.pi_hi.as_f64()) {
                    return Err(fail(format!("pi = {x} at t = {t} leaves the portfolio bounds")));
                }
                if !inside(y, b.c_lo, b.c_hi.as_f64()) {
                    return Err(fail(format!("c = {y} at t = {t} leaves the consumption bounds")));
                }
            }
        }
        Perturbation::Market { mu, sigma, .. } => {
            for &t in times {
                let (m, v) = (mu.eval(t), sigma.eval(t));
                let ok = match s.uncertainty {
                    UncertaintySet::Rect { mu_lo, mu_hi, sigma_lo, sigma_hi } => {
                        inside(m, mu_lo, mu_hi) && inside(v, sigma_lo, sigma_hi)
                    }
                    UncertaintySet::Correlated { mu_lo, sigma_lo, k, q_exp, alpha_hi } => {
                        let a = m - mu_lo;
                        let curve = sigma_lo * sigma_lo + k * a.max(0.0).powf(q_exp);
                        inside(a, 0.0, alpha_hi) && (v * v - curve).abs() <= 1e-12 * curve.max(1.0)
                    }
                };
                if !ok {
                    return Err(fail(format!("(mu, sigma) = ({m}, {v}) at t = {t} leaves the uncertainty set")));
                }
            }
        }
    }
    Ok(())
}

/// Market point of the correlated family at shift `alpha`.
pub fn correlated_market(s: &Scenario, alpha: f64) -> Option<(f64, f64)> {
    match s.uncertainty {
        UncertaintySet::Correlated { mu_lo, sigma_lo, k, q_exp, .. } => {
            Some((mu_lo + alpha, (sigma_lo * sigma_lo + k * alpha.powf(q_exp)).sqrt()))
        }
        UncertaintySet::Rect { .. } => None,
    }
}

/// Six investor deviations and six market deviations around the saddle point.
pub fn default_perturbations(s: &Scenario, sol: &Solution) -> Result<Vec<Perturbation>, VerifyError> {
    let b = s.constraints;
    let sd = &sol.saddle;
    let half = 0.5 * s.horizon;
    // Shifts that would be clamped away are taken in the opposite direction.
    let nudge = |d: f64| {
        let up = b.clamp_pi(sd.pi_star + d);
        if (up - sd.pi_star).abs() > 1e-12 { up } else { b.clamp_pi(sd.pi_star - d) }
    };
    let schedule = consumption_schedule(s, sol)?;
    let moves = |f: f64| {
        (0..=20).any(|j| {
            let t = s.horizon * j as f64 / 20.0;
            let c = schedule.eval(t);
            (b.clamp_c(f * c) - c).abs() > 1e-12
        })
    };
    let scaled = |f: f64, fallback: f64| {
        let f = if moves(f) { f } else { fallback };
        let sc = schedule.clone();
        (f, Schedule::from_fn(move |t| b.clamp_c(f * sc.eval(t))))
    };
    let (_, c_opt) = scaled(1.0, 1.0);
    let strat = |label: String, p: f64, c: Schedule| Perturbation::Strategy {
        label,
        pi: Schedule::constant(p),
        c,
    };
    let shifted = |d: f64| format!("pi_star {:+.3}", d);
    let (p1, p2, p3) = (nudge(0.1), nudge(-0.2), nudge(-0.3));
    let (f1, c1) = scaled(0.8, 1.25);
    let (f2, c2) = scaled(1.25, 0.6);
    let (f3, c3) = scaled(0.9, 1.1);
    let mut out = vec![
        strat(shifted(p1 - sd.pi_star), p1, c_opt.clone()),
        strat(shifted(p2 - sd.pi_star), p2, c_opt.clone()),
        Perturbation::Strategy {
            label: format!("{} before T/2", shifted(p3 - sd.pi_star)),
            pi: Schedule::switch(p3, half, sd.pi_star),
            c: c_opt.clone(),
        },
        strat(format!("c_star * {f1:.3}"), sd.pi_star, c1),
        strat(format!("c_star * {f2:.3}"), sd.pi_star, c2),
        strat(format!("{}, c_star * {f3:.3}", shifted(p2 - sd.pi_star)), p2, c3),
    ];
    let market = |label: &str, m: Schedule, v: Schedule| Perturbation::Market { label: label.into(), mu: m, sigma: v };
    match s.uncertainty {
        UncertaintySet::Rect { mu_lo, mu_hi, sigma_lo, sigma_hi } => {
            let c = Schedule::constant;
            out.extend([
                market("mu_hi, sigma_star", c(mu_hi), c(sd.sigma_star)),
                market("mu_lo, sigma_lo", c(mu_lo), c(sigma_lo)),
                market("mid mu, sigma_star", c(0.5 * (mu_lo + mu_hi)), c(sd.sigma_star)),
                market("mu_star, mid sigma", c(sd.mu_star), c(0.5 * (sigma_lo + sigma_hi))),
                market("mu_hi, sigma_lo", c(mu_hi), c(sigma_lo)),
                market("mu_star then mu_hi after T/2", Schedule::switch(sd.mu_star, half, mu_hi), c(sd.sigma_star)),
            ]);
        }
        UncertaintySet::Correlated { alpha_hi, .. } => {
            let a_star = sd.mu_star - match s.uncertainty {
                UncertaintySet::Correlated { mu_lo, .. } => mu_lo,
                UncertaintySet::Rect { .. } => unreachable!(),
            };
            let at = |a: f64| correlated_market(s, a).expect("correlated scenario");
            for (label, a) in [
                ("alpha = 0", 0.0),
                ("alpha = alpha_hi", alpha_hi),
                ("alpha = alpha_hi / 2", 0.5 * alpha_hi),
                ("alpha = alpha_star / 2", 0.5 * a_star),
                ("alpha midway to alpha_hi", 0.5 * (a_star + alpha_hi)),
            ] {
                let (m, v) = at(a);
                out.push(market(label, Schedule::constant(m), Schedule::constant(v)));
            }
            let (m0, v0) = at(a_star);
            let (m1, v1) = at(alpha_hi);
            out.push(market(
                "alpha_star then alpha_hi after T/2",
                Schedule::switch(m0, half, m1),
                Schedule::switch(v0, half, v1),
            ));
        }
    }
    Ok(out)
}

/// Monte Carlo check of the saddle inequalities and of the closed-form value.
pub fn check_saddle_mc(
    s: &Scenario,
    perturbations: &[Perturbation],
    cfg: SimConfig,
) -> Result<VerificationReport, VerifyError> {
    let sol = solve(s)?;
    let e = Engine::new(s, cfg)?;
    for p in perturbations {
        check_admissible(s, p, &e.times)?;
    }
    let opt = Controls::optimal(s, &sol)?;
    let mut policies = vec![opt.clone()];
    for p in perturbations {
        policies.push(match p {
            Perturbation::Strategy { pi, c, .. } => Controls { pi: pi.clone(), c: c.clone(), ..opt.clone() },
            Perturbation::Market { mu, sigma, .. } => {
                Controls { mu: mu.clone(), sigma: sigma.clone(), ..opt.clone() }
            }
        });
    }
    let pay = e.payoffs(&policies);
    let base = McEstimate::from_samples(&pay[0]);
    let saddle_checks = perturbations
        .iter()
        .zip(&pay[1..])
        .map(|(p, v)| {
            let est = McEstimate::from_samples(v);
            let diff: Vec<f64> = v.iter().zip(&pay[0]).map(|(a, b)| a - b).collect();
            let gap = McEstimate::from_samples(&diff);
            let (side, pass) = match p {
                Perturbation::Strategy { .. } => {
                    (Side::StrategyAtMost, gap.mean <= 3.0 * gap.stderr || gap.mean == f64::NEG_INFINITY)
                }
                Perturbation::Market { .. } => (Side::MarketAtLeast, gap.mean >= -3.0 * gap.stderr),
            };
            SaddleCheck {
                description: p.label().to_string(),
                side,
                mc_value: est.mean,
                stderr: est.stderr,
                gap: gap.mean,
                gap_stderr: gap.stderr,
                pass,
            }
        })
        .collect();
    let martingale = martingale_increments(s, &sol, cfg)?;
    Ok(VerificationReport {
        closed_value: sol.value,
        mc_value: base.mean,
        mc_stderr: base.stderr,
        value_pass: (base.mean - sol.value).abs() <= 3.0 * base.stderr,
        saddle_checks,
        martingale,
        sweeps: Vec::new(),
    })
}

/// Increments of the value process along the optimal controls over five
/// consecutive windows; each should have mean zero.
pub fn martingale_increments(s: &Scenario, sol: &Solution, cfg: SimConfig) -> Result<Vec<IncrementCheck>, VerifyError> {
    let e = Engine::new(s, cfg)?;
    let t = e.table(&Controls::optimal(s, sol)?);
    let n = cfg.n_steps;
    let marks: Vec<usize> = (0..=5).map(|j| (2 * j * n + 5) / 10).collect();
    let rho = s.utility.rho;
    // Deterministic factors of the value process at each mark.
    let (scale, offset): (Vec<f64>, Vec<f64>) = marks
        .iter()
        .map(|&m| {
            let tm = e.times[m];
            let q = sol.opportunity.q(tm);
            let off = match &sol.opportunity {
                OpportunitySolution::Log(l) => l.big_q(tm),
                OpportunitySolution::Power(_) => 0.0,
            };
            ((q - rho * tm).exp(), off)
        })
        .unzip();
    let value_at = |j: usize, integral: f64, ln_x: f64| e.utility_scaled(integral, scale[j], ln_x) + offset[j];
    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |z, i| {
                path_normals(cfg.seed, i, z);
                let mut ln_x = s.x0.ln();
                let mut prev = e.weight[0] * e.utility(t.ln_c[0] + ln_x);
                let mut integral = 0.0;
                let mut js = Vec::with_capacity(marks.len());
                js.push(value_at(0, 0.0, ln_x));
                for k in 0..n {
                    ln_x += e.step(&t, k, z[k]);
                    let next = e.weight[k + 1] * e.utility(t.ln_c[k + 1] + ln_x);
                    integral += 0.5 * e.dt * (prev + next);
                    prev = next;
                    if let Some(j) = marks.iter().position(|&m| m == k + 1) {
                        js.push(value_at(j, integral, ln_x));
                    }
                }
                js.windows(2).map(|w| w[1] - w[0]).collect()
            },
        )
        .collect();
    Ok((0..5)
        .map(|j| {
            let inc: Vec<f64> = per_path.iter().map(|r| r[j]).collect();
            let est = McEstimate::from_samples(&inc);
            IncrementCheck {
                t_from: e.times[marks[j]],
                t_to: e.times[marks[j + 1]],
                mean: est.mean,
                stderr: est.stderr,
                pass: est.mean.abs() <= 3.0 * est.stderr + 1e-12,
            }
        })
        .collect())
}

impl Engine<'_> {
    /// Value process without its deterministic offset: running consumption
    /// utility plus `scale` times the utility of current wealth.
    fn utility_scaled(&self, integral: f64, scale: f64, ln_x: f64) -> f64 {
        integral + scale * self.utility(ln_x)
    }
}

/// Parameters swept in the comparative-statics tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    BorrowRate,
    PiLo,
    PiHi,
    CLo,
    CHi,
    MuLo,
    MuHi,
    SigmaLo,
    SigmaHi,
}

impl SweepParam {
    pub const ALL: [SweepParam; 9] = [
        SweepParam::BorrowRate,
        SweepParam::PiLo,
        SweepParam::PiHi,
        SweepParam::CLo,
        SweepParam::CHi,
        SweepParam::MuLo,
        SweepParam::MuHi,
        SweepParam::SigmaLo,
        SweepParam::SigmaHi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::BorrowRate => "R",
            SweepParam::PiLo => "pi_lo",
            SweepParam::PiHi => "pi_hi",
            SweepParam::CLo => "c_lo",
            SweepParam::CHi => "c_hi",
            SweepParam::MuLo => "mu_lo",
            SweepParam::MuHi => "mu_hi",
            SweepParam::SigmaLo => "sigma_lo",
            SweepParam::SigmaHi => "sigma_hi",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == text)
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&p| p == self).expect("listed")
    }

    /// The base scenario with this parameter set to `v`.
    pub fn apply(self, base: &Scenario, v: f64) -> Result<Scenario, String> {
        let mut s = *base;
        let b = &mut s.constraints;
        let UncertaintySet::Rect { mu_lo, mu_hi, sigma_lo, sigma_hi } = &mut s.uncertainty else {
            return Err("sweeps need rectangular uncertainty".into());
        };
        match self {
            SweepParam::BorrowRate => s.rates.borrow = v,
            SweepParam::PiLo => b.pi_lo = ExtReal::from(v),
            SweepParam::PiHi => b.pi_hi = ExtReal::from(v),
            SweepParam::CLo => b.c_lo = v,
            SweepParam::CHi => b.c_hi = ExtReal::from(v),
            SweepParam::MuLo => *mu_lo = v,
            SweepParam::MuHi => *mu_hi = v,
            SweepParam::SigmaLo => *sigma_lo = v,
            SweepParam::SigmaHi => *sigma_hi = v,
        }
        s.checked().map_err(|e| e.to_string())
    }
}

/// Outputs whose response to each parameter is tabulated.
pub const OUTPUTS: [&str; 4] = ["mu_star", "sigma_star", "pi_star", "c_star"];

/// Expected direction of `output` (an entry of [`OUTPUTS`]) in `param`.
///
/// The consumption row for power utility holds for `0 < p < 1`. With `p < 0`
/// the opportunity exponent responds to the investment factor the other way,
/// so the cells driven by it flip and the floor becomes non-monotone.
pub fn expected_direction(kind: &UtilityKind, param: SweepParam, output: &str) -> Expected {
    use Expected::{Independent as O, NonMonotone as NM, Nondecreasing as U, Nonincreasing as D};
    const MU: [Expected; 9] = [O, O, O, O, O, U, U, O, O];
    const SIGMA: [Expected; 9] = [O, O, O, O, O, O, O, O, U];
    const PI: [Expected; 9] = [D, U, U, O, O, U, U, O, D];
    const C_POWER: [Expected; 9] = [U, U, D, U, NM, D, U, O, U];
    const C_POWER_NEG: [Expected; 9] = [D, D, U, NM, NM, U, D, O, D];
    const C_LOG: [Expected; 9] = [O, O, O, U, U, O, O, O, O];
    let row = match output {
        "mu_star" => &MU,
        "sigma_star" => &SIGMA,
        "pi_star" => &PI,
        _ => match kind {
            UtilityKind::Log => &C_LOG,
            UtilityKind::Power { p } if *p < 0.0 => &C_POWER_NEG,
            UtilityKind::Power { .. } => &C_POWER,
        },
    };
    row[param.index()]
}

/// Sample times for consumption, as fractions of the horizon.
pub const C_SAMPLES: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mu_star: f64,
    pub sigma_star: f64,
    pub pi_star: f64,
    /// Optimal consumption at `t = j T / (C_SAMPLES - 1)`.
    pub c_star: Vec<f64>,
}

pub fn linear_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![from];
    }
    let last = (steps - 1) as f64;
    (0..steps).map(|i| if i + 1 == steps { to } else { from + (to - from) * i as f64 / last }).collect()
}

/// Recomputes the saddle and the consumption schedule at each grid value.
pub fn sweep_comparative_statics(base: &Scenario, param: SweepParam, grid: &[f64]) -> Result<Vec<SweepRow>, VerifyError> {
    grid.iter()
        .map(|&v| {
            let bad = |reason: String| VerifyError::GridValue { param: param.name(), value: v, reason };
            let s = param.apply(base, v).map_err(bad)?;
            let sol = solve(&s).map_err(|e| bad(e.to_string()))?;
            let sc = consumption_schedule(&s, &sol).map_err(|e| bad(e.to_string()))?;
            let c_star = (0..C_SAMPLES)
                .map(|j| sc.eval(s.horizon * j as f64 / (C_SAMPLES - 1) as f64))
                .collect();
            Ok(SweepRow {
                value: v,
                mu_star: sol.saddle.mu_star,
                sigma_star: sol.saddle.sigma_star,
                pi_star: sol.saddle.pi_star,
                c_star,
            })
        })
        .collect()
}

const SWEEP_TOL: f64 = 1e-10;

fn observe(series: impl Iterator<Item = f64>) -> Observed {
    let v: Vec<f64> = series.collect();
    let mut up = false;
    let mut down = false;
    for w in v.windows(2) {
        let d = w[1] - w[0];
        up |= d > SWEEP_TOL;
        down |= d < -SWEEP_TOL;
    }
    match (up, down) {
        (false, false) => Observed::Constant,
        (true, false) => Observed::Nondecreasing,
        (false, true) => Observed::Nonincreasing,
        (true, true) => Observed::Mixed,
    }
}

/// Compares the observed direction of every output with the table.
pub fn assess_sweep(base: &Scenario, param: SweepParam, rows: &[SweepRow]) -> Vec<SweepCheck> {
    let c_observed = (0..C_SAMPLES)
        .map(|j| observe(rows.iter().map(|r| r.c_star[j])))
        .fold(Observed::Constant, Observed::join);
    let observed = [
        observe(rows.iter().map(|r| r.mu_star)),
        observe(rows.iter().map(|r| r.sigma_star)),
        observe(rows.iter().map(|r| r.pi_star)),
        c_observed,
    ];
    OUTPUTS
        .iter()
        .zip(observed)
        .map(|(&output, observed)| {
            let expected = expected_direction(&base.utility.kind, param, output);
            SweepCheck { parameter: param.name(), output, observed, expected, pass: observed.satisfies(expected) }
        })
        .collect()
}
