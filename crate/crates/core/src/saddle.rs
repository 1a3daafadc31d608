//! Saddle points of the investment part `g` and maximizers of the consumption
//! part `f` of the Hamiltonian.
//!
//! The Hamiltonian splits as `F(x_q; pi, c; mu, sigma2) = f(x_q; c) + g(pi; mu, sigma2)`,
//! so the portfolio/market saddle and the consumption maximizer are computed
//! independently.

use alloc::format;

use crate::error::Error;
use crate::ext::ExtReal;
use crate::num::bisect;
use crate::scenario::{Rates, Scenario, UncertaintySet, UtilityKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Betas {
    /// Unconstrained optimum when every long position above 1 is financed at the borrowing rate.
    pub b1: f64,
    /// Same at the lending rate, worst drift.
    pub b2: f64,
    /// Same at the lending rate, best drift (relevant for short positions).
    pub b3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortfolioRegime {
    BorrowToBuy,
    FullPosition,
    LendAndBuy,
    NoTrading,
    Shortsale,
    CorrelatedInterior,
    CorrelatedBoundary,
}

impl PortfolioRegime {
    pub fn name(self) -> &'static str {
        match self {
            PortfolioRegime::BorrowToBuy => "borrow_to_buy",
            PortfolioRegime::FullPosition => "full_position",
            PortfolioRegime::LendAndBuy => "lend_and_buy",
            PortfolioRegime::NoTrading => "no_trading",
            PortfolioRegime::Shortsale => "shortsale",
            PortfolioRegime::CorrelatedInterior => "correlated_interior",
            PortfolioRegime::CorrelatedBoundary => "correlated_boundary",
        }
    }
}

/// Which case of the worst-case drift rule fired under correlated ambiguity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaBranch {
    /// Drift below the lending rate: nature lifts it exactly to `r`, killing the trade.
    ToLendingRate,
    /// Root of the first-order condition inside the ambiguity range.
    Root,
    /// Largest admissible shift.
    Cap,
}

impl AlphaBranch {
    pub fn name(self) -> &'static str {
        match self {
            AlphaBranch::ToLendingRate => "to_lending_rate",
            AlphaBranch::Root => "root",
            AlphaBranch::Cap => "cap",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelatedDetail {
    pub alpha_star: f64,
    pub branch: AlphaBranch,
    /// Threshold on `mu_lo - r` above which the cap binds.
    pub alpha_hat: f64,
}

/// Worst-case market, optimal portfolio and the resulting investment factor `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PortfolioSaddle {
    pub pi_star: f64,
    pub mu_star: f64,
    pub sigma_star: f64,
    pub k: f64,
    pub regime: PortfolioRegime,
    /// Any drift in the ambiguity interval is worst-case; `mu_star` is a representative.
    pub mu_star_is_interval: bool,
    pub betas: Option<Betas>,
    pub correlated: Option<CorrelatedDetail>,
}

impl PortfolioSaddle {
    pub fn sigma2_star(&self) -> f64 {
        self.sigma_star * self.sigma_star
    }
}

/// Investment part `g` for exponent `p` (use 0 for log utility).
pub fn g_value(p: f64, rates: &Rates, x_pi: f64, x_mu: f64, x_sigma2: f64) -> f64 {
    let cash = 1.0 - x_pi;
    let lend = cash.max(0.0);
    let borrow = (-cash).max(0.0);
    0.5 * (p - 1.0) * x_sigma2 * x_pi * x_pi + x_mu * x_pi + rates.lend * lend
        - rates.borrow * borrow
}

/// Investment part of the Hamiltonian for the scenario's utility.
pub fn eval_g(s: &Scenario, x_pi: f64, x_mu: f64, x_sigma2: f64) -> f64 {
    g_value(s.utility.risk_exponent(), &s.rates, x_pi, x_mu, x_sigma2)
}

/// Portfolio saddle for either uncertainty variant.
pub fn solve_portfolio(s: &Scenario) -> Result<PortfolioSaddle, Error> {
    match s.uncertainty {
        UncertaintySet::Rect { .. } => saddle_rect(s),
        UncertaintySet::Correlated { .. } => saddle_correlated(s),
    }
}

/// Saddle under independent drift and volatility intervals.
pub fn saddle_rect(s: &Scenario) -> Result<PortfolioSaddle, Error> {
    let s = s.checked()?;
    let UncertaintySet::Rect { mu_lo, mu_hi, sigma_hi, .. } = s.uncertainty else {
        return Err(Error::WrongVariant("rectangular uncertainty"));
    };
    let p = s.utility.risk_exponent();
    let (r, big_r) = (s.rates.lend, s.rates.borrow);
    let var = sigma_hi * sigma_hi;
    let curv = (1.0 - p) * var;
    let betas = Betas {
        b1: (mu_lo - big_r) / curv,
        b2: (mu_lo - r) / curv,
        b3: (mu_hi - r) / curv,
    };
    let merton = |mu: f64, rate: f64| rate + (mu - rate) * (mu - rate) / (2.0 * curv);
    let corner = |pi: f64, mu: f64, rate: f64| rate + pi * (mu - rate) - 0.5 * curv * pi * pi;

    let (regime, pi_star, mu_star, k) = if betas.b1 >= 1.0 {
        match s.constraints.pi_hi {
            ExtReal::Finite(hi) if betas.b1 >= hi => {
                (PortfolioRegime::BorrowToBuy, hi, mu_lo, corner(hi, mu_lo, big_r))
            }
            _ => (PortfolioRegime::BorrowToBuy, betas.b1, mu_lo, merton(mu_lo, big_r)),
        }
    } else if betas.b2 >= 1.0 {
        (PortfolioRegime::FullPosition, 1.0, mu_lo, mu_lo - 0.5 * curv)
    } else if betas.b2 >= 0.0 {
        (PortfolioRegime::LendAndBuy, betas.b2, mu_lo, merton(mu_lo, r))
    } else if betas.b3 >= 0.0 {
        (PortfolioRegime::NoTrading, 0.0, r.max(mu_lo).min(mu_hi), r)
    } else {
        match s.constraints.pi_lo {
            ExtReal::Finite(lo) if betas.b3 <= lo => {
                (PortfolioRegime::Shortsale, lo, mu_hi, corner(lo, mu_hi, r))
            }
            _ => (PortfolioRegime::Shortsale, betas.b3, mu_hi, merton(mu_hi, r)),
        }
    };

    Ok(PortfolioSaddle {
        pi_star,
        mu_star,
        sigma_star: sigma_hi,
        k,
        regime,
        mu_star_is_interval: pi_star == 0.0,
        betas: Some(betas),
        correlated: None,
    })
}

/// Derivative-sign function of the correlated first-order condition; strictly
/// increasing in `alpha`, its root is the interior worst-case shift.
pub fn h1(alpha: f64, sigma_lo: f64, k: f64, q: f64, excess: f64) -> f64 {
    2.0 * sigma_lo * sigma_lo + k * (2.0 - q) * libm::pow(alpha, q)
        - k * q * excess * libm::pow(alpha, q - 1.0)
}

/// Saddle when drift and volatility move together along a power curve.
pub fn saddle_correlated(s: &Scenario) -> Result<PortfolioSaddle, Error> {
    let s = s.checked()?;
    let UncertaintySet::Correlated { mu_lo, sigma_lo, k, q_exp: q, alpha_hi } = s.uncertainty
    else {
        return Err(Error::WrongVariant("correlated uncertainty"));
    };
    let p = s.utility.risk_exponent();
    let r = s.rates.lend;
    let excess = mu_lo - r;
    let alpha_hat = (2.0 * sigma_lo * sigma_lo * libm::pow(alpha_hi, 1.0 - q)
        + k * (2.0 - q) * alpha_hi)
        / (k * q);

    let (alpha, branch) = if -alpha_hi < excess && excess <= 0.0 {
        (-excess, AlphaBranch::ToLendingRate)
    } else if 0.0 < excess && excess < alpha_hat {
        (interior_shift(sigma_lo, k, q, excess, alpha_hi)?, AlphaBranch::Root)
    } else {
        (alpha_hi, AlphaBranch::Cap)
    };

    let mu_star = mu_lo + alpha;
    let sigma2 = sigma_lo * sigma_lo + k * libm::pow(alpha, q);
    let pi_star = if mu_star == r {
        0.0
    } else if sigma2 > 0.0 {
        (mu_star - r) / ((1.0 - p) * sigma2)
    } else {
        return Err(Error::BranchSelection(format!(
            "zero worst-case variance with drift {mu_star} != r"
        )));
    };
    let regime = if alpha > 0.0 && alpha < alpha_hi {
        PortfolioRegime::CorrelatedInterior
    } else {
        PortfolioRegime::CorrelatedBoundary
    };
    Ok(PortfolioSaddle {
        pi_star,
        mu_star,
        sigma_star: libm::sqrt(sigma2),
        k: eval_g(&s, pi_star, mu_star, sigma2),
        regime,
        mu_star_is_interval: false,
        betas: None,
        correlated: Some(CorrelatedDetail { alpha_star: alpha, branch, alpha_hat }),
    })
}

fn interior_shift(sigma_lo: f64, k: f64, q: f64, excess: f64, alpha_hi: f64) -> Result<f64, Error> {
    let h = |a: f64| h1(a, sigma_lo, k, q, excess);
    // h1 -> -inf as alpha -> 0+, so a small enough left end always brackets.
    let mut lo = (alpha_hi * 1e-9).min(1e-14);
    while h(lo) >= 0.0 && lo > 1e-300 {
        lo *= 1e-4;
    }
    bisect(h, lo, alpha_hi, 1e-14, 0.0)
}

/// Where the consumption maximizer sits relative to the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clamp {
    AtLower,
    Interior,
    AtUpper,
}

impl Clamp {
    pub fn name(self) -> &'static str {
        match self {
            Clamp::AtLower => "at_lower",
            Clamp::Interior => "interior",
            Clamp::AtUpper => "at_upper",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsumptionOptimum {
    pub c_star: f64,
    pub f_value: f64,
    pub clamped: Clamp,
}

/// Maximizes the consumption part `f(x_q; c)` over the consumption box.
pub fn maximize_f(x_q: f64, s: &Scenario) -> Result<ConsumptionOptimum, Error> {
    let b = &s.constraints;
    consumption_max(&s.utility.kind, s.utility.lambda, b.c_lo, b.c_hi.as_f64(), x_q)
}

/// [`maximize_f`] on raw parameters; `c_hi` may be `+inf`.
pub fn consumption_max(
    kind: &UtilityKind,
    lambda: f64,
    c_lo: f64,
    c_hi: f64,
    x_q: f64,
) -> Result<ConsumptionOptimum, Error> {
    if lambda == 0.0 {
        return Ok(ConsumptionOptimum { c_star: c_lo, f_value: -c_lo, clamped: Clamp::AtLower });
    }
    let weight = lambda * libm::exp(-x_q);
    let unclamped = match *kind {
        UtilityKind::Power { p } => libm::exp((libm::log(lambda) - x_q) / (1.0 - p)),
        UtilityKind::Log => weight,
    };
    let (c, clamped) = if unclamped <= c_lo {
        (c_lo, Clamp::AtLower)
    } else if unclamped >= c_hi {
        (c_hi, Clamp::AtUpper)
    } else {
        (unclamped, Clamp::Interior)
    };
    let f_value = match (*kind, clamped) {
        (UtilityKind::Power { p }, Clamp::Interior) => (1.0 - p) / p * c,
        (UtilityKind::Log, Clamp::Interior) => c * (libm::log(c) - 1.0),
        (UtilityKind::Power { p }, _) => {
            if c == 0.0 && p < 0.0 {
                return Err(Error::UnboundedBelow);
            }
            weight / p * libm::pow(c, p) - c
        }
        (UtilityKind::Log, _) => {
            if c == 0.0 {
                return Err(Error::UnboundedBelow);
            }
            weight * libm::log(c) - c
        }
    };
    Ok(ConsumptionOptimum { c_star: c, f_value, clamped })
}

/// Consumption part `f(x_q; c)` at an arbitrary rate.
pub fn f_value(kind: &UtilityKind, lambda: f64, x_q: f64, c: f64) -> f64 {
    let weight = lambda * libm::exp(-x_q);
    match *kind {
        UtilityKind::Power { p } => weight / p * libm::pow(c, p) - c,
        UtilityKind::Log => weight * libm::log(c) - c,
    }
}
