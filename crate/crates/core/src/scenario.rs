//! Problem instances and their validation.

use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::ext::ExtReal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UtilityKind {
    /// `U(x) = x^p / p` with `p < 1`, `p != 0`.
    Power { p: f64 },
    Log,
}

/// Utility family, weight on intertemporal consumption and discount rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    pub lambda: f64,
    pub rho: f64,
}

impl UtilitySpec {
    pub fn power(p: f64, lambda: f64, rho: f64) -> Self {
        UtilitySpec { kind: UtilityKind::Power { p }, lambda, rho }
    }

    pub fn log(lambda: f64, rho: f64) -> Self {
        UtilitySpec { kind: UtilityKind::Log, lambda, rho }
    }

    /// The exponent entering the investment part: `p` for power, 0 for log.
    pub fn risk_exponent(&self) -> f64 {
        match self.kind {
            UtilityKind::Power { p } => p,
            UtilityKind::Log => 0.0,
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self.kind, UtilityKind::Log)
    }
}

/// Lending rate `lend` and borrowing rate `borrow` of the bank account.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub lend: f64,
    pub borrow: f64,
}

/// Box constraint on the portfolio fraction and the consumption rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintBox {
    pub pi_lo: ExtReal,
    pub pi_hi: ExtReal,
    pub c_lo: f64,
    pub c_hi: ExtReal,
}

impl ConstraintBox {
    pub fn unconstrained() -> Self {
        ConstraintBox {
            pi_lo: ExtReal::NegInf,
            pi_hi: ExtReal::PosInf,
            c_lo: 0.0,
            c_hi: ExtReal::PosInf,
        }
    }

    pub fn clamp_pi(&self, x: f64) -> f64 {
        x.max(self.pi_lo.as_f64()).min(self.pi_hi.as_f64())
    }

    pub fn clamp_c(&self, x: f64) -> f64 {
        x.max(self.c_lo).min(self.c_hi.as_f64())
    }
}

/// The set the adversarial market picks drift and squared volatility from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UncertaintySet {
    /// Independent intervals for drift and volatility.
    Rect { mu_lo: f64, mu_hi: f64, sigma_lo: f64, sigma_hi: f64 },
    /// Drift `mu_lo + a` comes with variance `sigma_lo^2 + k a^q_exp`, `a` in `[0, alpha_hi]`.
    Correlated { mu_lo: f64, sigma_lo: f64, k: f64, q_exp: f64, alpha_hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub utility: UtilitySpec,
    pub rates: Rates,
    pub constraints: ConstraintBox,
    pub uncertainty: UncertaintySet,
    pub horizon: f64,
    pub x0: f64,
}

impl Scenario {
    /// `Some(c)` when the consumption box is the single point `c`.
    pub fn fixed_consumption(&self) -> Option<f64> {
        match self.constraints.c_hi {
            ExtReal::Finite(c) if c == self.constraints.c_lo => Some(c),
            _ => None,
        }
    }

    /// Runs [`validate`] and turns violations into an error.
    pub fn checked(self) -> Result<Self, Error> {
        let v = validate(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(v))
        }
    }
}

/// One broken invariant: the offending field and the bound it should satisfy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub bound: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violates {}", self.field, self.bound)
    }
}

/// Every violated invariant of `s`; empty means the scenario is valid.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut need = |ok: bool, field: &'static str, bound: &'static str| {
        if !ok {
            out.push(Violation { field, bound });
        }
    };
    let fin = |x: f64| x.is_finite();

    let u = &s.utility;
    if let UtilityKind::Power { p } = u.kind {
        need(fin(p) && p < 1.0 && p != 0.0, "utility.p", "p ∈ (−∞,0) ∪ (0,1)");
    }
    need(fin(u.lambda) && u.lambda >= 0.0, "utility.lambda", "lambda ≥ 0");
    need(fin(u.rho) && u.rho >= 0.0, "utility.rho", "rho ≥ 0");

    let r = &s.rates;
    need(fin(r.lend), "rates.r", "r finite");
    need(fin(r.borrow) && r.borrow >= r.lend, "rates.R", "R ≥ r");

    let b = &s.constraints;
    need(b.pi_lo.as_f64() <= 0.0, "constraints.pi_lo", "pi_lo ≤ 0");
    need(b.pi_hi.as_f64() >= 1.0, "constraints.pi_hi", "pi_hi ≥ 1");
    need(fin(b.c_lo) && b.c_lo >= 0.0, "constraints.c_lo", "c_lo ≥ 0");
    need(b.c_hi.as_f64() >= b.c_lo, "constraints.c_hi", "c_hi ≥ c_lo");
    let single_point = b.c_hi == ExtReal::Finite(b.c_lo);
    need(
        u.lambda != 0.0 || single_point,
        "utility.lambda",
        "lambda > 0 unless c_lo = c_hi",
    );

    match s.uncertainty {
        UncertaintySet::Rect { mu_lo, mu_hi, sigma_lo, sigma_hi } => {
            need(fin(mu_lo), "uncertainty.mu_lo", "mu_lo finite");
            need(fin(mu_hi) && mu_hi >= mu_lo, "uncertainty.mu_hi", "mu_hi ≥ mu_lo");
            need(fin(sigma_lo) && sigma_lo >= 0.0, "uncertainty.sigma_lo", "sigma_lo ≥ 0");
            need(
                fin(sigma_hi) && sigma_hi >= sigma_lo,
                "uncertainty.sigma_hi",
                "sigma_hi ≥ sigma_lo",
            );
            need(sigma_hi > 0.0, "uncertainty.sigma_hi", "sigma_hi > 0");
        }
        UncertaintySet::Correlated { mu_lo, sigma_lo, k, q_exp, alpha_hi } => {
            need(fin(mu_lo), "uncertainty.mu_lo", "mu_lo finite");
            need(fin(sigma_lo) && sigma_lo >= 0.0, "uncertainty.sigma_lo", "sigma_lo ≥ 0");
            need(fin(k) && k > 0.0, "uncertainty.k", "k > 0");
            need(q_exp > 0.0 && q_exp < 1.0, "uncertainty.q_exp", "0 < q_exp < 1");
            need(fin(alpha_hi) && alpha_hi >= 0.0, "uncertainty.alpha_hi", "alpha_hi ≥ 0");
            need(
                sigma_lo > 0.0 || alpha_hi > 0.0,
                "uncertainty.alpha_hi",
                "sigma_lo > 0 or alpha_hi > 0",
            );
            need(r.borrow == r.lend, "rates.R", "R = r for correlated ambiguity");
            need(b.pi_lo == ExtReal::NegInf, "constraints.pi_lo", "pi_lo = -inf for correlated ambiguity");
            need(b.pi_hi == ExtReal::PosInf, "constraints.pi_hi", "pi_hi = inf for correlated ambiguity");
        }
    }

    need(fin(s.horizon) && s.horizon > 0.0, "T", "T > 0");
    need(fin(s.x0) && s.x0 > 0.0, "x0", "x0 > 0");
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Power utility, rect uncertainty, every bound finite.
    pub fn rect_power(p: f64) -> Scenario {
        Scenario {
            utility: UtilitySpec::power(p, 1.0, 0.1),
            rates: Rates { lend: 0.02, borrow: 0.04 },
            constraints: ConstraintBox {
                pi_lo: ExtReal::Finite(-1.0),
                pi_hi: ExtReal::Finite(2.0),
                c_lo: 0.02,
                c_hi: ExtReal::Finite(0.05),
            },
            uncertainty: UncertaintySet::Rect {
                mu_lo: 0.10,
                mu_hi: 0.12,
                sigma_lo: 0.1,
                sigma_hi: 0.2,
            },
            horizon: 5.0,
            x0: 1.0,
        }
    }

    pub fn correlated(p: f64, mu_lo: f64, sigma_lo: f64, alpha_hi: f64) -> Scenario {
        Scenario {
            utility: UtilitySpec::power(p, 1.0, 0.1),
            rates: Rates { lend: 0.02, borrow: 0.02 },
            constraints: ConstraintBox::unconstrained(),
            uncertainty: UncertaintySet::Correlated {
                mu_lo,
                sigma_lo,
                k: 1.0,
                q_exp: 0.5,
                alpha_hi,
            },
            horizon: 5.0,
            x0: 1.0,
        }
    }
}
