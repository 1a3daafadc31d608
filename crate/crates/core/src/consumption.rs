//! Optimal consumption schedules `t -> c*(t)` and their shape in time.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::ext::ExtReal;
use crate::num::DEGENERATE;
use crate::ode::{solve_qp, LogQSolution, OpportunitySolution, QSolution, SwitchingTime};
use crate::saddle::{solve_portfolio, Clamp};
use crate::scenario::{Scenario, UtilityKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    Constant,
}

impl Monotonicity {
    pub fn name(self) -> &'static str {
        match self {
            Monotonicity::Nondecreasing => "nondecreasing",
            Monotonicity::Nonincreasing => "nonincreasing",
            Monotonicity::Constant => "constant",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulePiece {
    pub t_lo: f64,
    pub t_hi: f64,
    pub regime: Clamp,
}

/// Deterministic optimal consumption rate over `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionSchedule {
    /// Ascending in time.
    pub pieces: Vec<SchedulePiece>,
    pub monotonicity: Monotonicity,
    pub switching_times: Vec<SwitchingTime>,
    pub source: OpportunitySolution,
}

impl ConsumptionSchedule {
    pub fn eval(&self, t: f64) -> f64 {
        self.source.consumption(t)
    }

    pub fn horizon(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.t_hi)
    }

    /// Regimes in forward time.
    pub fn pattern(&self) -> Vec<Clamp> {
        self.pieces.iter().map(|p| p.regime).collect()
    }
}

/// Shape of power-utility consumption in time, from where the bounds sit
/// relative to `lambda^{1/(1-p)}` and the sign of `rho - p k - (1-p) lambda^{1/(1-p)}`.
pub fn power_monotonicity(sol: &QSolution, fixed: bool) -> Monotonicity {
    let o = &sol.ode;
    if fixed || o.lambda == 0.0 {
        return Monotonicity::Constant;
    }
    let peak = o.terminal_peak();
    let tol = 1e-12 * peak;
    if o.c_hi < peak - tol {
        Monotonicity::Nondecreasing
    } else if peak < o.c_lo - tol {
        Monotonicity::Nonincreasing
    } else {
        let d = o.net_discount() - (1.0 - o.p) * peak;
        if d < -DEGENERATE {
            Monotonicity::Nondecreasing
        } else if d > DEGENERATE {
            Monotonicity::Nonincreasing
        } else {
            Monotonicity::Constant
        }
    }
}

/// Schedule read off the regimes of a power-utility opportunity solution.
pub fn build_schedule_power(qsol: &QSolution, s: &Scenario) -> Result<ConsumptionSchedule, Error> {
    if !matches!(s.utility.kind, UtilityKind::Power { .. }) {
        return Err(Error::WrongVariant("power utility"));
    }
    let pieces = qsol
        .segments
        .iter()
        .map(|g| SchedulePiece { t_lo: g.t_lo, t_hi: g.t_hi, regime: g.consumption_regime })
        .collect();
    Ok(ConsumptionSchedule {
        pieces,
        monotonicity: power_monotonicity(qsol, s.fixed_consumption().is_some()),
        switching_times: qsol.switching_times.clone(),
        source: OpportunitySolution::Power(qsol.clone()),
    })
}

/// Schedule for log utility, cut where unconstrained consumption crosses the bounds.
pub fn build_schedule_log(lsol: &LogQSolution, s: &Scenario) -> Result<ConsumptionSchedule, Error> {
    if !s.utility.is_log() {
        return Err(Error::WrongVariant("log utility"));
    }
    let mut switching_times = Vec::new();
    if let Some(t) = lsol.upper_switch() {
        switching_times.push(SwitchingTime { name: String::from("T1"), t });
    }
    if let Some(t) = lsol.lower_switch() {
        switching_times.push(SwitchingTime { name: String::from("T2"), t });
    }
    switching_times.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut cuts = Vec::with_capacity(4);
    cuts.push(0.0);
    cuts.extend(switching_times.iter().map(|x| x.t));
    cuts.push(lsol.horizon);
    let pieces = cuts
        .windows(2)
        .map(|w| {
            let c = lsol.unclamped_consumption(0.5 * (w[0] + w[1]));
            let regime = if c <= lsol.c_lo {
                Clamp::AtLower
            } else if c >= lsol.c_hi {
                Clamp::AtUpper
            } else {
                Clamp::Interior
            };
            SchedulePiece { t_lo: w[0], t_hi: w[1], regime }
        })
        .collect();
    let monotonicity = if lsol.rho > lsol.lambda {
        Monotonicity::Nonincreasing
    } else if lsol.rho < lsol.lambda {
        Monotonicity::Nondecreasing
    } else {
        Monotonicity::Constant
    };
    Ok(ConsumptionSchedule {
        pieces,
        monotonicity,
        switching_times,
        source: OpportunitySolution::Log(*lsol),
    })
}

/// Long-horizon regime pattern (forward in time) for log utility, by the
/// position of `lambda` (rows) and `rho` (columns) relative to the bounds.
pub fn long_horizon_pattern_log(lambda: f64, rho: f64, c_lo: f64, c_hi: f64) -> Vec<Clamp> {
    use Clamp::*;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    let row = if lambda <= c_lo || same(lambda, c_lo) {
        0
    } else if lambda >= c_hi || same(lambda, c_hi) {
        2
    } else {
        1
    };
    let col = if c_lo > 0.0 && same(rho, c_lo) {
        1
    } else if rho < c_lo {
        0
    } else if c_hi.is_finite() && same(rho, c_hi) {
        3
    } else if rho < c_hi {
        2
    } else {
        4
    };
    let table: [[&[Clamp]; 5]; 3] = [
        [&[AtLower], &[AtLower], &[Interior, AtLower], &[Interior, AtLower], &[AtUpper, Interior, AtLower]],
        [&[AtLower, Interior], &[Interior], &[Interior], &[Interior], &[AtUpper, Interior]],
        [&[AtLower, Interior, AtUpper], &[Interior, AtUpper], &[Interior, AtUpper], &[AtUpper], &[AtUpper]],
    ];
    table[row][col].to_vec()
}

/// Evidence that optimal consumption is not monotone in the consumption cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonMonotonicityWitness {
    pub cap_high: f64,
    pub cap_low: f64,
    pub found: bool,
    pub t_near_horizon: f64,
    pub t_near_zero: f64,
    /// Consumption under the higher cap at `t_near_horizon` and `t_near_zero`.
    pub high_cap_consumption: (f64, f64),
    /// Consumption under the lower cap at the same times.
    pub low_cap_consumption: (f64, f64),
}

/// Solves the problem under two consumption caps and checks that the higher
/// cap consumes more near the horizon but less near time 0.
///
/// Needs power utility with `c_lo < cap_low <= cap_high < lambda^{1/(1-p)}` and
/// `(1-p) c_lo < rho - p k < (1-p) cap_low`.
pub fn demo_cap_nonmonotonicity(
    base: &Scenario,
    cap_a: f64,
    cap_b: f64,
) -> Result<NonMonotonicityWitness, Error> {
    let UtilityKind::Power { p } = base.utility.kind else {
        return Err(Error::WrongVariant("power utility"));
    };
    let (cap_low, cap_high) = if cap_a <= cap_b { (cap_a, cap_b) } else { (cap_b, cap_a) };
    let k = solve_portfolio(base)?.k;
    let lambda = base.utility.lambda;
    let peak = libm::pow(lambda, 1.0 / (1.0 - p));
    let c_lo = base.constraints.c_lo;
    if !(c_lo < cap_low && cap_high < peak) {
        return Err(Error::Precondition(format!(
            "need c_lo < caps < lambda^(1/(1-p)): c_lo = {c_lo}, caps = {cap_low}, {cap_high}, peak = {peak}"
        )));
    }
    let b = base.utility.rho - p * k;
    if !((1.0 - p) * c_lo < b && b < (1.0 - p) * cap_low) {
        return Err(Error::Precondition(format!(
            "need (1-p) c_lo < rho - p k < (1-p) cap_low: rho - p k = {b}"
        )));
    }
    let solve_with = |cap: f64| {
        let mut s = *base;
        s.constraints.c_hi = ExtReal::Finite(cap);
        solve_qp(&s, k)
    };
    let high = solve_with(cap_high)?;
    let low = solve_with(cap_low)?;
    let horizon = base.horizon;
    let high_c = (high.consumption(horizon), high.consumption(0.0));
    let low_c = (low.consumption(horizon), low.consumption(0.0));
    let found = high_c.0 > low_c.0 && high_c.1 < low_c.1;
    Ok(NonMonotonicityWitness {
        cap_high,
        cap_low,
        found,
        t_near_horizon: horizon,
        t_near_zero: 0.0,
        high_cap_consumption: high_c,
        low_cap_consumption: low_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{solve_ql, solve_qp};
    use crate::scenario::fixtures::rect_power;
    use crate::scenario::UtilitySpec;

    fn power(p: f64, lambda: f64, rho: f64, c_lo: f64, c_hi: f64, horizon: f64) -> Scenario {
        let mut s = rect_power(p);
        s.utility = UtilitySpec::power(p, lambda, rho);
        s.constraints.c_lo = c_lo;
        s.constraints.c_hi = ExtReal::from_f64(c_hi).unwrap();
        s.horizon = horizon;
        s
    }

    fn log(lambda: f64, rho: f64, c_lo: f64, c_hi: f64, horizon: f64) -> Scenario {
        let mut s = power(0.5, lambda, rho, c_lo, c_hi, horizon);
        s.utility = UtilitySpec::log(lambda, rho);
        s
    }

    fn sampled_violations(sched: &ConsumptionSchedule, n: usize) -> usize {
        let t_end = sched.horizon();
        let c: Vec<f64> = (0..=n).map(|i| sched.eval(t_end * i as f64 / n as f64)).collect();
        c.windows(2)
            .filter(|w| match sched.monotonicity {
                Monotonicity::Nondecreasing => w[1] < w[0] - 1e-12,
                Monotonicity::Nonincreasing => w[1] > w[0] + 1e-12,
                Monotonicity::Constant => (w[1] - w[0]).abs() > 1e-12,
            })
            .count()
    }

    #[test]
    fn cap_binding_schedule() {
        let s = power(0.5, 1.0, 0.1, 0.02, 0.05, 5.0);
        let q = solve_qp(&s, 0.03).unwrap();
        let sched = build_schedule_power(&q, &s).unwrap();
        assert_eq!(sched.pieces.len(), 1);
        assert_eq!(sched.pieces[0].regime, Clamp::AtUpper);
        for i in 0..=50 {
            assert_eq!(sched.eval(i as f64 * 0.1), 0.05);
        }
        assert_eq!(sched.monotonicity, Monotonicity::Nondecreasing);
    }

    #[test]
    fn balanced_interior_is_constant() {
        let s = power(0.5, 1.0, 0.5 + 0.5 * 0.04, 0.5, 2.0, 7.0);
        let q = solve_qp(&s, 0.04).unwrap();
        let sched = build_schedule_power(&q, &s).unwrap();
        assert_eq!(sched.monotonicity, Monotonicity::Constant);
        assert!((sched.eval(0.0) - 1.0).abs() < 1e-14);
        assert_eq!(sampled_violations(&sched, 10_000), 0);
    }

    #[test]
    fn log_schedule_at_cap() {
        let s = log(2.0, 1.0, 0.01, 1.0, 30.0);
        let l = solve_ql(&s, 0.02).unwrap();
        let sched = build_schedule_log(&l, &s).unwrap();
        assert_eq!(sched.pattern(), [Clamp::AtUpper]);
        for i in 0..=30 {
            assert_eq!(sched.eval(i as f64), 1.0);
        }
    }

    #[test]
    fn log_balanced_is_constant() {
        let s = log(0.3, 0.3, 0.0, 0.2, 10.0);
        let l = solve_ql(&s, 0.02).unwrap();
        let sched = build_schedule_log(&l, &s).unwrap();
        assert_eq!(sched.monotonicity, Monotonicity::Constant);
        assert_eq!(sched.eval(3.0), 0.2);
    }

    #[test]
    fn log_cap_then_interior() {
        let s = log(2.0, 0.1, 0.01, 1.0, 30.0);
        let l = solve_ql(&s, 0.02).unwrap();
        let sched = build_schedule_log(&l, &s).unwrap();
        assert_eq!(sched.pattern(), [Clamp::Interior, Clamp::AtUpper]);
        assert_eq!(sched.pattern(), long_horizon_pattern_log(2.0, 0.1, 0.01, 1.0));
        let t1 = sched.switching_times[0].t;
        let interior_t = 0.5 * t1;
        assert!((sched.eval(interior_t) * libm::exp(l.q(interior_t)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cap_nonmonotonicity_witnessed() {
        let mut base = power(0.5, 1.0, 0.1, 0.02, 0.3, 50.0);
        let k = solve_portfolio(&base).unwrap().k;
        base.utility.rho = 0.08 + 0.5 * k;
        let w = demo_cap_nonmonotonicity(&base, 0.3, 0.4).unwrap();
        assert!(w.found, "{w:?}");
        assert!(w.high_cap_consumption.0 > w.low_cap_consumption.0);
        assert!(w.high_cap_consumption.1 < w.low_cap_consumption.1);

        let same = demo_cap_nonmonotonicity(&base, 0.3, 0.3).unwrap();
        assert!(!same.found);
        assert_eq!(same.high_cap_consumption, same.low_cap_consumption);

        let mut short = base;
        short.horizon = 0.5;
        assert!(!demo_cap_nonmonotonicity(&short, 0.3, 0.4).unwrap().found);

        assert!(matches!(
            demo_cap_nonmonotonicity(&base, 0.3, 1.5),
            Err(Error::Precondition(_))
        ));
    }
}
