//! Closed-form solutions for a finite-horizon robust consumption-investment
//! problem with one risky asset, a borrowing/lending spread, box constraints on
//! the portfolio fraction and consumption rate, and an ambiguous drift/volatility
//! pair chosen by an adversarial market.
//!
//! The crate is `no_std` (it needs `alloc`). Every quantity is computed in closed
//! form where one exists; the [`oracle`] module holds brute-force searches used
//! to cross-check those closed forms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod ext;
pub mod consumption;
pub mod error;
pub mod num;
pub mod ode;
pub mod oracle;
pub mod saddle;
pub mod scenario;

pub use consumption::{
    build_schedule_log, build_schedule_power, demo_cap_nonmonotonicity, long_horizon_pattern_log,
    power_monotonicity, ConsumptionSchedule, Monotonicity, NonMonotonicityWitness, SchedulePiece,
};
pub use error::Error;
pub use ext::ExtReal;
pub use ode::{
    long_horizon_label, solve, solve_ql, solve_qp, solve_qp_oracle, value_function, BranchLabel,
    LogQSolution, OpportunitySolution, PowerOde, QSegment, QSolution, SegmentKind, Solution,
    SwitchingTime,
};
pub use saddle::{
    eval_g, maximize_f, saddle_correlated, saddle_rect, solve_portfolio, AlphaBranch, Betas,
    Clamp, ConsumptionOptimum, CorrelatedDetail, PortfolioRegime, PortfolioSaddle,
};
pub use scenario::{
    validate, ConstraintBox, Rates, Scenario, UncertaintySet, UtilityKind, UtilitySpec, Violation,
};
