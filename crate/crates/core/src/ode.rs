//! Opportunity exponents: the deterministic functions `q(t)` with
//! `J(t, x) = e^{q(t) - rho t} U(x) + ...` that carry the whole time dependence
//! of the value function.
//!
//! For power utility `q` solves `q' = rho - p (f*(q) + k)`, `q(T) = 0`, where
//! `f*` is the maximized consumption part. Depending on whether optimal
//! consumption sits at the cap, strictly inside the box or at the floor, the
//! equation is linear in `e^q` or in `(e^q / lambda)^{1/(1-p)}`, so each regime
//! has an exact solution. The full solution is pasted together backward from
//! the horizon, one regime at a time.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::num::{adaptive_simpson, bisect, expm1_ratio, rk4_backward, DEGENERATE};
use crate::saddle::{consumption_max, solve_portfolio, Clamp, PortfolioSaddle};
use crate::scenario::{Scenario, UtilityKind};

/// Relative tolerance for deciding that the terminal consumption peak sits on a bound.
const ON_BOUND: f64 = 1e-12;

/// Which exact solution is in force on a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    /// Consumption at the cap.
    Q1,
    /// Consumption strictly inside the box.
    Q2,
    /// Consumption at the floor.
    Q3,
}

impl SegmentKind {
    pub fn digit(self) -> char {
        match self {
            SegmentKind::Q1 => '1',
            SegmentKind::Q2 => '2',
            SegmentKind::Q3 => '3',
        }
    }

    pub fn regime(self) -> Clamp {
        match self {
            SegmentKind::Q1 => Clamp::AtUpper,
            SegmentKind::Q2 => Clamp::Interior,
            SegmentKind::Q3 => Clamp::AtLower,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentKind::Q1 => "Q1",
            SegmentKind::Q2 => "Q2",
            SegmentKind::Q3 => "Q3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QSegment {
    pub t_lo: f64,
    pub t_hi: f64,
    pub kind: SegmentKind,
    /// `q(t_hi)`: 0 at the horizon, the regime threshold at a pasting point.
    pub q_end: f64,
    /// Integration constant `e^{q(t_hi)} / lambda` (`1/lambda` at the horizon).
    pub a: f64,
    pub consumption_regime: Clamp,
}

/// Segment kinds listed backward from the horizon, printed as `q_123` etc.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchLabel(pub Vec<SegmentKind>);

impl BranchLabel {
    pub fn parse(text: &str) -> Option<Self> {
        let digits = text.strip_prefix("q_")?;
        let kinds: Option<Vec<_>> = digits
            .chars()
            .map(|ch| match ch {
                '1' => Some(SegmentKind::Q1),
                '2' => Some(SegmentKind::Q2),
                '3' => Some(SegmentKind::Q3),
                _ => None,
            })
            .collect();
        kinds.filter(|k| !k.is_empty()).map(BranchLabel)
    }

    /// True when `self` is the first part of `other`: a short horizon cuts
    /// off the segments that a long horizon would reach.
    pub fn is_prefix_of(&self, other: &BranchLabel) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("q_")?;
        for k in &self.0 {
            write!(f, "{}", k.digit())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingTime {
    /// `T12`, `T123`, `T21`, ...: the kinds met walking back from the horizon.
    pub name: String,
    pub t: f64,
}

/// Coefficients of the power-utility opportunity ODE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerOde {
    pub p: f64,
    pub lambda: f64,
    pub rho: f64,
    pub k: f64,
    pub c_lo: f64,
    /// May be `+inf`.
    pub c_hi: f64,
}

impl PowerOde {
    pub fn new(s: &Scenario, k: f64) -> Result<Self, Error> {
        let UtilityKind::Power { p } = s.utility.kind else {
            return Err(Error::WrongVariant("power utility"));
        };
        if p < 0.0 && s.constraints.c_hi.as_f64() == 0.0 && s.utility.lambda > 0.0 {
            return Err(Error::UnboundedBelow);
        }
        Ok(PowerOde {
            p,
            lambda: s.utility.lambda,
            rho: s.utility.rho,
            k,
            c_lo: s.constraints.c_lo,
            c_hi: s.constraints.c_hi.as_f64(),
        })
    }

    /// `rho - p k`, the drift of `q` that does not depend on consumption.
    pub fn net_discount(&self) -> f64 {
        self.rho - self.p * self.k
    }

    /// Unconstrained optimal consumption at the horizon, `lambda^{1/(1-p)}`.
    pub fn terminal_peak(&self) -> f64 {
        libm::pow(self.lambda, 1.0 / (1.0 - self.p))
    }

    /// Right-hand side `q'(t) = rho - p (f*(q) + k)`.
    pub fn rhs(&self, q: f64) -> f64 {
        let kind = UtilityKind::Power { p: self.p };
        match consumption_max(&kind, self.lambda, self.c_lo, self.c_hi, q) {
            Ok(o) => self.rho - self.p * (o.f_value + self.k),
            Err(_) => f64::NAN,
        }
    }

    fn bound_value(&self, b: Bound) -> f64 {
        match b {
            Bound::Upper => self.c_hi,
            Bound::Lower => self.c_lo,
        }
    }

    fn reachable(&self, b: Bound) -> bool {
        match b {
            Bound::Upper => self.c_hi.is_finite(),
            Bound::Lower => self.c_lo > 0.0,
        }
    }

    /// Level of `q` at which the unconstrained consumption equals `c`.
    fn threshold(&self, c: f64) -> f64 {
        (self.p - 1.0) * libm::log(c) + libm::log(self.lambda)
    }

    fn interior_rate(&self) -> f64 {
        let b = self.net_discount();
        if b.abs() < DEGENERATE {
            0.0
        } else {
            b / (1.0 - self.p)
        }
    }

    /// `q` at `t_hi + tau` (`tau <= 0`) on a segment of the given kind ending at `q_end`.
    fn eval(&self, kind: SegmentKind, q_end: f64, tau: f64) -> f64 {
        if tau == 0.0 {
            return q_end;
        }
        match kind {
            SegmentKind::Q1 => self.eval_clamped(self.c_hi, q_end, tau),
            SegmentKind::Q3 => self.eval_clamped(self.c_lo, q_end, tau),
            SegmentKind::Q2 => {
                let kappa = self.interior_rate();
                let z = self.interior_state(q_end) * libm::exp(kappa * tau) - expm1_ratio(kappa, tau);
                libm::log(self.lambda) + (1.0 - self.p) * libm::log(z)
            }
        }
    }

    /// Consumption fixed at `c`: `w = e^q` solves `w' = a w - lambda c^p`.
    fn eval_clamped(&self, c: f64, q_end: f64, tau: f64) -> f64 {
        let a = self.rho + self.p * c - self.p * self.k;
        let a = if a.abs() < DEGENERATE { 0.0 } else { a };
        let w = libm::exp(q_end + a * tau) - self.lambda * libm::pow(c, self.p) * expm1_ratio(a, tau);
        libm::log(w)
    }

    /// `z = 1 / c_hat = (e^q / lambda)^{1/(1-p)}`, which solves `z' = kappa z - 1`.
    fn interior_state(&self, q: f64) -> f64 {
        libm::exp((q - libm::log(self.lambda)) / (1.0 - self.p))
    }

    fn derivative(&self, kind: SegmentKind, q: f64) -> f64 {
        match kind {
            SegmentKind::Q1 | SegmentKind::Q3 => {
                let c = if kind == SegmentKind::Q1 { self.c_hi } else { self.c_lo };
                self.rho + self.p * c - self.p * self.k
                    - self.lambda * libm::pow(c, self.p) * libm::exp(-q)
            }
            SegmentKind::Q2 => self.net_discount() - (1.0 - self.p) / self.interior_state(q),
        }
    }

    /// Offset `tau < 0` back from the segment end at which the regime hits bound `b`.
    fn hit(&self, kind: SegmentKind, b: Bound, q_end: f64) -> Option<f64> {
        let c = self.bound_value(b);
        let tau = match kind {
            SegmentKind::Q1 | SegmentKind::Q3 => {
                let a = self.rho + self.p * c - self.p * self.k;
                let load = self.lambda * libm::pow(c, self.p);
                let w0 = libm::exp(q_end);
                let target = self.lambda * libm::pow(c, self.p - 1.0);
                if a.abs() < DEGENERATE {
                    (w0 - target) / load
                } else {
                    log_ratio(a * target - load, a * w0 - load, a * (target - w0))? / a
                }
            }
            SegmentKind::Q2 => {
                let kappa = self.interior_rate();
                let z0 = self.interior_state(q_end);
                let target = 1.0 / c;
                if kappa == 0.0 {
                    z0 - target
                } else {
                    log_ratio(kappa * target - 1.0, kappa * z0 - 1.0, kappa * (target - z0))?
                        / kappa
                }
            }
        };
        (tau.is_finite() && tau < 0.0).then_some(tau)
    }

    /// Regime in force just before the horizon, and the bound it starts on, if any.
    fn terminal_regime(&self) -> (SegmentKind, Option<Bound>) {
        let peak = self.terminal_peak();
        let slope = self.net_discount() - (1.0 - self.p) * peak;
        let on = |c: f64| (peak - c).abs() <= ON_BOUND * peak.max(c);
        if self.c_hi.is_finite() && on(self.c_hi) {
            if slope < -DEGENERATE {
                (SegmentKind::Q2, Some(Bound::Upper))
            } else {
                (SegmentKind::Q1, Some(Bound::Upper))
            }
        } else if self.c_lo > 0.0 && on(self.c_lo) {
            if slope > DEGENERATE {
                (SegmentKind::Q2, Some(Bound::Lower))
            } else {
                (SegmentKind::Q3, Some(Bound::Lower))
            }
        } else if peak > self.c_hi {
            (SegmentKind::Q1, None)
        } else if peak < self.c_lo {
            (SegmentKind::Q3, None)
        } else {
            (SegmentKind::Q2, None)
        }
    }
}

/// `ln(num / den)` where `diff = num - den` is known more accurately than the
/// difference of the rounded values; `None` unless the ratio is positive.
fn log_ratio(num: f64, den: f64, diff: f64) -> Option<f64> {
    let ratio = num / den;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return None;
    }
    if (ratio - 1.0).abs() < 0.5 {
        Some(libm::log1p(diff / den))
    } else {
        Some(libm::log(ratio))
    }
}

/// Piecewise exact solution of the power-utility opportunity ODE.
#[derive(Clone, Debug, PartialEq)]
pub struct QSolution {
    /// Ascending in time, covering `[0, T]`.
    pub segments: Vec<QSegment>,
    pub label: BranchLabel,
    pub switching_times: Vec<SwitchingTime>,
    pub k: f64,
    pub horizon: f64,
    pub ode: PowerOde,
}

impl QSolution {
    pub fn segment_at(&self, t: f64) -> &QSegment {
        self.segments
            .iter()
            .find(|s| t <= s.t_hi)
            .unwrap_or_else(|| self.segments.last().expect("at least one segment"))
    }

    pub fn q(&self, t: f64) -> f64 {
        let s = self.segment_at(t);
        self.ode.eval(s.kind, s.q_end, t - s.t_hi)
    }

    /// Analytic `q'(t)` from the segment's regime.
    pub fn dq(&self, t: f64) -> f64 {
        let s = self.segment_at(t);
        self.ode.derivative(s.kind, self.q(t))
    }

    pub fn q0(&self) -> f64 {
        self.q(0.0)
    }

    /// Optimal consumption rate at `t`.
    pub fn consumption(&self, t: f64) -> f64 {
        let o = &self.ode;
        consumption_max(&UtilityKind::Power { p: o.p }, o.lambda, o.c_lo, o.c_hi, self.q(t))
            .map(|x| x.c_star)
            .unwrap_or(f64::NAN)
    }

    /// `|q(t-) - q(t+)|` at every pasting time.
    pub fn pasting_residuals(&self) -> Vec<f64> {
        self.segments
            .windows(2)
            .map(|w| {
                let right = self.ode.eval(w[1].kind, w[1].q_end, w[1].t_lo - w[1].t_hi);
                (w[0].q_end - right).abs()
            })
            .collect()
    }
}

/// Closed-form `q` for power utility given the investment factor `k`.
pub fn solve_qp(s: &Scenario, k: f64) -> Result<QSolution, Error> {
    let s = s.checked()?;
    let ode = PowerOde::new(&s, k)?;
    let horizon = s.horizon;

    // Backward from the horizon: (t_lo, t_hi, kind, q_end), latest first.
    let mut pieces: Vec<(f64, f64, SegmentKind, f64)> = Vec::new();
    if s.fixed_consumption().is_some() {
        pieces.push((0.0, horizon, SegmentKind::Q1, 0.0));
    } else {
        let (mut kind, mut entry) = ode.terminal_regime();
        let (mut t_hi, mut q_end) = (horizon, 0.0);
        loop {
            let exits: &[Bound] = match kind {
                SegmentKind::Q1 => &[Bound::Upper],
                SegmentKind::Q2 => &[Bound::Upper, Bound::Lower],
                SegmentKind::Q3 => &[Bound::Lower],
            };
            let next = exits
                .iter()
                .filter(|&&b| Some(b) != entry && ode.reachable(b))
                .filter_map(|&b| ode.hit(kind, b, q_end).map(|tau| (tau, b)))
                .filter(|(tau, _)| t_hi + tau > 0.0)
                .max_by(|x, y| x.0.total_cmp(&y.0));
            match next {
                Some((tau, b)) => {
                    let t_lo = t_hi + tau;
                    pieces.push((t_lo, t_hi, kind, q_end));
                    kind = match (kind, b) {
                        (SegmentKind::Q2, Bound::Upper) => SegmentKind::Q1,
                        (SegmentKind::Q2, Bound::Lower) => SegmentKind::Q3,
                        _ => SegmentKind::Q2,
                    };
                    entry = Some(b);
                    q_end = ode.threshold(ode.bound_value(b));
                    t_hi = t_lo;
                }
                None => {
                    pieces.push((0.0, t_hi, kind, q_end));
                    break;
                }
            }
            if pieces.len() > 3 {
                return Err(Error::BranchSelection(format!(
                    "more than three regimes before t = {t_hi}"
                )));
            }
        }
    }

    let label = BranchLabel(pieces.iter().map(|p| p.2).collect());
    let mut switching_times = Vec::new();
    for i in 1..pieces.len() {
        let mut name = String::from("T");
        for p in &pieces[..=i] {
            name.push(p.2.digit());
        }
        switching_times.push(SwitchingTime { name, t: pieces[i].1 });
    }
    let segments: Vec<QSegment> = pieces
        .iter()
        .rev()
        .map(|&(t_lo, t_hi, kind, q_end)| QSegment {
            t_lo,
            t_hi,
            kind,
            q_end,
            a: libm::exp(q_end) / ode.lambda,
            consumption_regime: kind.regime(),
        })
        .collect();
    let sol = QSolution { segments, label, switching_times, k, horizon, ode };
    for seg in &sol.segments {
        let q = sol.ode.eval(seg.kind, seg.q_end, seg.t_lo - seg.t_hi);
        if !q.is_finite() {
            return Err(Error::BranchSelection(format!(
                "{} segment on [{}, {}] evaluates to {q} at its left end",
                seg.kind.name(),
                seg.t_lo,
                seg.t_hi
            )));
        }
    }
    Ok(sol)
}

/// Classification of the long-horizon solution by the ordering of the
/// consumption bounds against `lambda^{1/(1-p)}` (rows) and of `rho - p k`
/// against `(1-p) c_lo`, `(1-p) c_hi` (columns).
pub fn long_horizon_label(ode: &PowerOde) -> BranchLabel {
    use SegmentKind::*;
    let peak = ode.terminal_peak();
    let (lo, hi) = (ode.c_lo, ode.c_hi);
    let on = |c: f64| (peak - c).abs() <= ON_BOUND * peak.max(c);
    let row = if hi.is_finite() && on(hi) {
        1
    } else if lo > 0.0 && on(lo) {
        3
    } else if hi < peak {
        0
    } else if peak < lo {
        4
    } else {
        2
    };
    let b = ode.net_discount();
    let (b_lo, b_hi) = ((1.0 - ode.p) * lo, (1.0 - ode.p) * hi);
    let col = if (b - b_lo).abs() <= DEGENERATE {
        1
    } else if b < b_lo {
        0
    } else if hi.is_finite() && (b - b_hi).abs() <= DEGENERATE {
        3
    } else if b < b_hi {
        2
    } else {
        4
    };
    let table: [[&[SegmentKind]; 5]; 5] = [
        [&[Q1, Q2, Q3], &[Q1, Q2], &[Q1, Q2], &[Q1], &[Q1]],
        [&[Q2, Q3], &[Q2], &[Q2], &[Q1], &[Q1]],
        [&[Q2, Q3], &[Q2], &[Q2], &[Q2], &[Q2, Q1]],
        [&[Q3], &[Q3], &[Q2], &[Q2], &[Q2, Q1]],
        [&[Q3], &[Q3], &[Q3, Q2], &[Q3, Q2], &[Q3, Q2, Q1]],
    ];
    let mut kinds: Vec<SegmentKind> = table[row][col].to_vec();
    if lo == 0.0 {
        kinds.retain(|&k| k != Q3);
    }
    BranchLabel(kinds)
}

/// Fourth-order Runge-Kutta reference for the power ODE, sampled at `t_k = k T / n`.
pub fn solve_qp_oracle(s: &Scenario, k: f64, n_steps: usize) -> Result<Vec<f64>, Error> {
    let s = s.checked()?;
    let ode = PowerOde::new(&s, k)?;
    Ok(rk4_backward(|q| ode.rhs(q), s.horizon, 0.0, n_steps.max(1)))
}

/// Opportunity exponents for log utility: `q_L` in closed form and the
/// additive term `Q_L(0)` by quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogQSolution {
    pub lambda: f64,
    pub rho: f64,
    pub k: f64,
    pub horizon: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    pub q0: f64,
    pub big_q0: f64,
}

impl LogQSolution {
    /// `q_L(t) = ln[e^{-rho (T-t)} + lambda (1 - e^{-rho (T-t)}) / rho]`,
    /// reading `ln(1 + lambda (T-t))` at `rho = 0`.
    pub fn q(&self, t: f64) -> f64 {
        let left = self.horizon - t;
        let growth = if self.rho == 0.0 {
            left
        } else {
            -libm::expm1(-self.rho * left) / self.rho
        };
        libm::log(libm::exp(-self.rho * left) + self.lambda * growth)
    }

    pub fn dq(&self, t: f64) -> f64 {
        self.rho - self.lambda * libm::exp(-self.q(t))
    }

    pub fn unclamped_consumption(&self, t: f64) -> f64 {
        self.lambda * libm::exp(-self.q(t))
    }

    pub fn consumption(&self, t: f64) -> f64 {
        self.unclamped_consumption(t).max(self.c_lo).min(self.c_hi)
    }

    /// Time in `(0, T)` at which unconstrained consumption crosses `c`, if any.
    pub fn crossing(&self, c: f64) -> Option<f64> {
        if !(c > 0.0) || !c.is_finite() || self.rho == self.lambda {
            return None;
        }
        let inside = |t: f64| (t > 0.0 && t < self.horizon).then_some(t);
        if self.rho > 0.0 && c != self.rho {
            let arg = self.lambda * (self.rho - c) / (c * (self.rho - self.lambda));
            return if arg > 0.0 {
                inside(self.horizon + libm::log(arg) / self.rho)
            } else {
                None
            };
        }
        let target = libm::log(self.lambda / c);
        let f = |t: f64| self.q(t) - target;
        let (f0, f1) = (f(0.0), f(self.horizon));
        if f0 == 0.0 || f1 == 0.0 || (f0 > 0.0) == (f1 > 0.0) {
            return None;
        }
        let g = |t: f64| if f0 < 0.0 { f(t) } else { -f(t) };
        bisect(g, 0.0, self.horizon, 0.0, 0.0).ok().and_then(inside)
    }

    /// Where unconstrained consumption crosses the cap.
    pub fn upper_switch(&self) -> Option<f64> {
        self.crossing(self.c_hi)
    }

    /// Where unconstrained consumption crosses the floor.
    pub fn lower_switch(&self) -> Option<f64> {
        self.crossing(self.c_lo)
    }

    fn hamiltonian(&self, x_q: f64) -> f64 {
        match consumption_max(&UtilityKind::Log, self.lambda, self.c_lo, self.c_hi, x_q) {
            Ok(o) => o.f_value + self.k,
            Err(_) => f64::NAN,
        }
    }

    /// `Q_L(t) = int_t^T e^{q_L(s) - rho s} G_L(q_L(s)) ds`, split at the
    /// consumption switching times so every panel is smooth.
    pub fn big_q(&self, t: f64) -> f64 {
        let mut cuts: Vec<f64> = Vec::with_capacity(4);
        cuts.push(t);
        for s in [self.upper_switch(), self.lower_switch()].into_iter().flatten() {
            if s > t {
                cuts.push(s);
            }
        }
        cuts.push(self.horizon);
        cuts.sort_by(f64::total_cmp);
        let integrand = |s: f64| {
            let q = self.q(s);
            libm::exp(q - self.rho * s) * self.hamiltonian(q)
        };
        let tol = 1e-12 / cuts.len() as f64;
        cuts.windows(2).map(|w| adaptive_simpson(&integrand, w[0], w[1], tol)).sum()
    }
}

/// Closed-form `q_L` and quadrature `Q_L(0)` for log utility given `k`.
pub fn solve_ql(s: &Scenario, k: f64) -> Result<LogQSolution, Error> {
    let s = s.checked()?;
    if !s.utility.is_log() {
        return Err(Error::WrongVariant("log utility"));
    }
    if s.utility.lambda <= 0.0 {
        return Err(Error::Precondition("log utility needs lambda > 0".into()));
    }
    if s.constraints.c_hi.as_f64() == 0.0 {
        return Err(Error::UnboundedBelow);
    }
    let mut sol = LogQSolution {
        lambda: s.utility.lambda,
        rho: s.utility.rho,
        k,
        horizon: s.horizon,
        c_lo: s.constraints.c_lo,
        c_hi: s.constraints.c_hi.as_f64(),
        q0: 0.0,
        big_q0: 0.0,
    };
    sol.q0 = sol.q(0.0);
    sol.big_q0 = sol.big_q(0.0);
    Ok(sol)
}

/// Either opportunity solution, matching the scenario's utility.
#[derive(Clone, Debug, PartialEq)]
pub enum OpportunitySolution {
    Power(QSolution),
    Log(LogQSolution),
}

impl OpportunitySolution {
    pub fn q(&self, t: f64) -> f64 {
        match self {
            OpportunitySolution::Power(s) => s.q(t),
            OpportunitySolution::Log(s) => s.q(t),
        }
    }

    pub fn consumption(&self, t: f64) -> f64 {
        match self {
            OpportunitySolution::Power(s) => s.consumption(t),
            OpportunitySolution::Log(s) => s.consumption(t),
        }
    }
}

/// Value at time 0 and initial wealth `x0`.
pub fn value_function(s: &Scenario, sol: &OpportunitySolution) -> Result<f64, Error> {
    match (s.utility.kind, sol) {
        (UtilityKind::Power { p }, OpportunitySolution::Power(q)) => {
            Ok(libm::pow(s.x0, p) / p * libm::exp(q.q0()))
        }
        (UtilityKind::Log, OpportunitySolution::Log(l)) => {
            Ok(libm::exp(l.q0) * libm::log(s.x0) + l.big_q0)
        }
        _ => Err(Error::WrongVariant("a solution of the scenario's utility kind")),
    }
}

/// Everything the closed forms give for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub saddle: PortfolioSaddle,
    pub opportunity: OpportunitySolution,
    pub value: f64,
}

/// Portfolio saddle, opportunity exponent and value in one call.
pub fn solve(s: &Scenario) -> Result<Solution, Error> {
    let saddle = solve_portfolio(s)?;
    let opportunity = if s.utility.is_log() {
        OpportunitySolution::Log(solve_ql(s, saddle.k)?)
    } else {
        OpportunitySolution::Power(solve_qp(s, saddle.k)?)
    };
    let value = value_function(s, &opportunity)?;
    Ok(Solution { saddle, opportunity, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::ExtReal;
    use crate::scenario::fixtures::rect_power;
    use crate::scenario::UtilitySpec;
    use proptest::prelude::*;

    fn power(p: f64, lambda: f64, rho: f64, c_lo: f64, c_hi: f64, horizon: f64) -> Scenario {
        let mut s = rect_power(p);
        s.utility = UtilitySpec::power(p, lambda, rho);
        s.constraints.c_lo = c_lo;
        s.constraints.c_hi = ExtReal::from_f64(c_hi).unwrap();
        s.horizon = horizon;
        s
    }

    fn log_scenario(lambda: f64, rho: f64, c_lo: f64, c_hi: f64, horizon: f64) -> Scenario {
        let mut s = power(0.5, lambda, rho, c_lo, c_hi, horizon);
        s.utility = UtilitySpec::log(lambda, rho);
        s
    }

    fn max_oracle_gap(s: &Scenario, k: f64, n: usize) -> f64 {
        let sol = solve_qp(s, k).unwrap();
        let rk = solve_qp_oracle(s, k, n).unwrap();
        rk.iter()
            .enumerate()
            .map(|(i, q)| (sol.q(s.horizon * i as f64 / n as f64) - q).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cap_binds_throughout() {
        let s = power(0.5, 1.0, 0.1, 0.02, 0.05, 5.0);
        let sol = solve_qp(&s, 0.03).unwrap();
        assert_eq!(sol.label.to_string(), "q_1");
        assert_eq!(sol.segments.len(), 1);
        assert_eq!(sol.segments[0].a, 1.0);
        let a: f64 = 0.11;
        let w = libm::exp(-5.0 * a) - libm::sqrt(0.05) * libm::expm1(-5.0 * a) / a;
        assert!((sol.q0() - libm::log(w)).abs() < 1e-15);
        assert!((sol.q0() - 0.3625031).abs() < 1e-7);
        assert!(max_oracle_gap(&s, 0.03, 100_000) < 1e-8);
        let v = value_function(&s, &OpportunitySolution::Power(sol)).unwrap();
        assert!((v - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn balanced_discount_freezes_q() {
        // peak = 1 inside [0.5, 2]; rho - p k = (1 - p) * 1.
        let s = power(0.5, 1.0, 0.5 + 0.5 * 0.04, 0.5, 2.0, 7.0);
        let sol = solve_qp(&s, 0.04).unwrap();
        for i in 0..=70 {
            assert!(sol.q(i as f64 * 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_consumption_matches_linear_ode() {
        let c0: f64 = 0.07;
        let (p, lambda, rho, k) = (-1.0, 0.8, 0.03, 0.05);
        let s = power(p, lambda, rho, c0, c0, 10.0);
        let sol = solve_qp(&s, k).unwrap();
        assert_eq!(sol.label.to_string(), "q_1");
        let reference = rk4_backward(
            |q| rho - p * k - (lambda * libm::exp(-q) * libm::pow(c0, p) - p * c0),
            10.0,
            0.0,
            20_000,
        );
        for (i, q) in reference.iter().enumerate() {
            assert!((sol.q(10.0 * i as f64 / 20_000.0) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weight_fixed_consumption_is_linear() {
        let mut s = power(0.5, 1.0, 0.1, 0.04, 0.04, 3.0);
        s.utility.lambda = 0.0;
        let sol = solve_qp(&s, 0.02).unwrap();
        let a = 0.1 + 0.5 * 0.04 - 0.5 * 0.02;
        assert!((sol.q0() + 3.0 * a).abs() < 1e-14);
        assert_eq!(sol.consumption(1.0), 0.04);
    }

    #[test]
    fn rk4_error_drops_fourth_order() {
        // Single regime, so the right-hand side is smooth along the path.
        let s = power(-1.0, 1.0, 1.5, 0.1, 0.6, 40.0);
        let sol = solve_qp(&s, 0.05).unwrap();
        assert_eq!(sol.label.to_string(), "q_1");
        let e1 = max_oracle_gap(&s, 0.05, 100);
        let e2 = max_oracle_gap(&s, 0.05, 200);
        let ratio = e1 / e2;
        assert!(ratio > 10.0 && ratio < 22.0, "ratio {ratio}");
    }

    #[test]
    fn three_regimes_walk_down() {
        // peak 1 above the cap, net discount below (1-p) c_lo: cap, interior, floor.
        let s = power(0.5, 1.0, 0.01, 0.1, 0.3, 200.0);
        let sol = solve_qp(&s, 0.0).unwrap();
        assert_eq!(sol.label.to_string(), "q_123");
        assert_eq!(sol.label, long_horizon_label(&sol.ode));
        let names: Vec<_> = sol.switching_times.iter().map(|x| x.name.as_str()).collect();
        assert_eq!(names, ["T12", "T123"]);
        assert!(sol.pasting_residuals().iter().all(|r| *r < 1e-12));
        assert!(max_oracle_gap(&s, 0.0, 100_000) < 1e-8);
    }

    #[test]
    fn uncapped_consumption_never_hits_cap() {
        let s = power(0.5, 1.0, 0.5, 0.0, f64::INFINITY, 30.0);
        let sol = solve_qp(&s, 0.02).unwrap();
        assert_eq!(sol.label.to_string(), "q_2");
        assert!(max_oracle_gap(&s, 0.02, 100_000) < 1e-8);
    }

    #[test]
    fn label_parse_round_trip() {
        for text in ["q_1", "q_123", "q_32"] {
            assert_eq!(BranchLabel::parse(text).unwrap().to_string(), text);
        }
        assert!(BranchLabel::parse("q_").is_none());
        assert!(BranchLabel::parse("q_4").is_none());
    }

    #[test]
    fn log_exponent_examples() {
        let s = log_scenario(0.05, 0.1, 0.0, f64::INFINITY, 10.0);
        let l = solve_ql(&s, 0.02).unwrap();
        assert!((l.q0 - libm::log(0.5 + 0.5 * libm::exp(-1.0))).abs() < 1e-15);
        assert!((l.q0 + 0.3798855).abs() < 1e-7);
        assert_eq!(l.q(10.0), 0.0);

        let s = log_scenario(0.3, 0.3, 0.0, f64::INFINITY, 10.0);
        let l = solve_ql(&s, 0.02).unwrap();
        for i in 0..=10 {
            assert!(l.q(i as f64).abs() < 1e-15);
        }

        let s = log_scenario(0.3, 0.0, 0.0, f64::INFINITY, 10.0);
        let l = solve_ql(&s, 0.02).unwrap();
        assert!((l.q(4.0) - libm::log(1.0 + 0.3 * 6.0)).abs() < 1e-15);
    }

    #[test]
    fn log_cap_switch_time() {
        let s = log_scenario(2.0, 0.1, 0.01, 1.0, 30.0);
        let l = solve_ql(&s, 0.02).unwrap();
        let t1 = l.upper_switch().unwrap();
        assert!((t1 - (30.0 + 10.0 * libm::log(1.8 / 1.9))).abs() < 1e-12);
        assert!((t1 - 29.45933).abs() < 1e-5);
        assert!((l.q(t1) - libm::log(2.0)).abs() < 1e-12);
        assert_eq!(l.lower_switch(), None);
    }

    #[test]
    fn log_value_term_matches_ode() {
        // Q' = -e^{q - rho t} G(q); integrate backward alongside q.
        let s = log_scenario(0.5, 0.1, 0.2, 1.5, 20.0);
        let l = solve_ql(&s, 0.03).unwrap();
        let n = 20_000;
        let h = 20.0 / n as f64;
        let mut big_q = 0.0;
        let integrand = |t: f64| libm::exp(l.q(t) - 0.1 * t) * l.hamiltonian(l.q(t));
        for i in (0..n).rev() {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            big_q += h / 6.0 * (integrand(a) + 4.0 * integrand(0.5 * (a + b)) + integrand(b));
        }
        assert!((l.big_q0 - big_q).abs() < 1e-7, "{} vs {}", l.big_q0, big_q);
    }

    fn power_strategy() -> impl Strategy<Value = (Scenario, f64)> {
        (
            prop_oneof![Just(-1.0), Just(0.3), Just(0.5), Just(0.9)],
            0.05..3.0f64,
            0.0..0.3f64,
            prop_oneof![Just(0.0), 0.01..0.5f64],
            prop_oneof![Just(f64::INFINITY), 0.01..2.0f64],
            0.5..60.0f64,
            -0.1..0.3f64,
        )
            .prop_map(|(p, lambda, rho, lo, w, horizon, k)| {
                (power(p, lambda, rho, lo, lo + w, horizon), k)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn terminal_condition((s, k) in power_strategy()) {
            let sol = solve_qp(&s, k).unwrap();
            prop_assert_eq!(sol.q(s.horizon), 0.0);
        }

        #[test]
        fn residual_and_pasting((s, k) in power_strategy()) {
            let sol = solve_qp(&s, k).unwrap();
            for r in sol.pasting_residuals() {
                prop_assert!(r < 1e-12, "pasting residual {}", r);
            }
            let h = 1e-6;
            // A central difference cannot resolve better than the rounding of
            // q itself and of t, about eps (|q| + T |q'|) / h.
            let q_scale = sol.segments.iter()
                .map(|g| sol.q(g.t_lo).abs().max(g.q_end.abs()))
                .fold(0.0, f64::max);
            let slope_scale = sol.segments.iter()
                .map(|g| sol.dq(g.t_lo).abs().max(sol.dq(g.t_hi).abs()))
                .fold(0.0, f64::max);
            let tol = 1e-9 + 4.0 * f64::EPSILON * (q_scale + s.horizon * slope_scale) / h;
            for seg in &sol.segments {
                let width = seg.t_hi - seg.t_lo;
                if width < 4.0 * h { continue; }
                for i in 1..100 {
                    let t = seg.t_lo + 2.0 * h + (width - 4.0 * h) * i as f64 / 100.0;
                    let fd = (sol.q(t + h) - sol.q(t - h)) / (2.0 * h);
                    let rhs = sol.ode.rhs(sol.q(t));
                    prop_assert!((fd - rhs).abs() < tol, "t {} fd {} rhs {}", t, fd, rhs);
                    prop_assert!((sol.dq(t) - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
                }
            }
        }

        #[test]
        fn derivative_keeps_sign((s, k) in power_strategy()) {
            let sol = solve_qp(&s, k).unwrap();
            let n = 500;
            let diffs: Vec<f64> = (0..n).map(|i| {
                let t0 = s.horizon * i as f64 / n as f64;
                let t1 = s.horizon * (i + 1) as f64 / n as f64;
                sol.q(t1) - sol.q(t0)
            }).collect();
            let up = diffs.iter().all(|d| *d >= -1e-12);
            let down = diffs.iter().all(|d| *d <= 1e-12);
            prop_assert!(up || down);
        }

        #[test]
        fn label_is_prefix_of_long_horizon((s, k) in power_strategy()) {
            let sol = solve_qp(&s, k).unwrap();
            let full = long_horizon_label(&sol.ode);
            prop_assert!(sol.label.is_prefix_of(&full), "{} vs {}", sol.label, full);
        }

        #[test]
        fn q0_increases_with_k_for_positive_exponent((s, k) in power_strategy(), dk in 0.001..0.1f64) {
            let UtilityKind::Power { p } = s.utility.kind else { unreachable!() };
            let a = solve_qp(&s, k).unwrap().q0();
            let b = solve_qp(&s, k + dk).unwrap().q0();
            if p > 0.0 {
                prop_assert!(b >= a - 1e-12);
            } else {
                prop_assert!(b <= a + 1e-12);
            }
        }

        #[test]
        fn log_terminal_and_monotone(lambda in 0.01..2.0f64, rho in 0.0..1.0f64, horizon in 0.5..50.0f64) {
            let s = log_scenario(lambda, rho, 0.0, f64::INFINITY, horizon);
            let l = solve_ql(&s, 0.0).unwrap();
            prop_assert_eq!(l.q(horizon), 0.0);
            for i in 0..100 {
                let d = l.q(horizon * (i + 1) as f64 / 100.0) - l.q(horizon * i as f64 / 100.0);
                if rho >= lambda { prop_assert!(d >= -1e-14); } else { prop_assert!(d <= 1e-14); }
            }
        }
    }
}
