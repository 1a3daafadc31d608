//! Scenario documents and output artifacts.
//!
//! JSON is read through `serde_json::Value` so that missing or mistyped
//! fields can be reported by their dotted path. Every float written by this
//! module carries 17 significant digits, so a save/load cycle is lossless.

use std::fmt::Write as _;
use std::io;

use robust_merton_core::{
    ConsumptionSchedule, ConstraintBox, Error as CoreError, ExtReal, LogQSolution,
    NonMonotonicityWitness, PortfolioSaddle, QSolution, Rates, Scenario, UncertaintySet,
    UtilityKind, UtilitySpec,
};
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::verify::{SweepCheck, SweepRow, VerificationReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("field `{field}` must be {expected}")]
    Type { field: String, expected: &'static str },
    #[error("invalid scenario: {0}")]
    Invalid(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Compact JSON whose floats are written with 17 significant digits.
struct Exact;

impl serde_json::ser::Formatter for Exact {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
}

/// 17 significant digits; integral values keep a short `2.0` form.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:.16e}")
    }
}

/// Serializes a value on one line, floats at full precision.
pub fn to_json_string(v: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Exact);
    v.serialize(&mut ser).expect("serializing a Value into memory cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// A float as JSON; infinities become the tokens `"inf"` / `"-inf"`.
pub fn num(v: f64) -> Value {
    if v.is_infinite() {
        Value::from(if v > 0.0 { "inf" } else { "-inf" })
    } else {
        Value::from(v)
    }
}

fn ext(v: ExtReal) -> Value {
    num(v.as_f64())
}

struct Reader<'a> {
    root: &'a Value,
}

impl<'a> Reader<'a> {
    fn get(&self, path: &str) -> Result<&'a Value, IoError> {
        let mut node = self.root;
        for key in path.split('.') {
            node = node
                .as_object()
                .and_then(|m| m.get(key))
                .ok_or_else(|| IoError::Missing(path.to_string()))?;
        }
        Ok(node)
    }

    fn f64(&self, path: &str) -> Result<f64, IoError> {
        self.get(path)?.as_f64().ok_or(IoError::Type { field: path.into(), expected: "a number" })
    }

    fn ext(&self, path: &str) -> Result<ExtReal, IoError> {
        let bad = || IoError::Type { field: path.into(), expected: "a number, \"inf\" or \"-inf\"" };
        match self.get(path)? {
            Value::Number(n) => n.as_f64().map(ExtReal::Finite).ok_or_else(bad),
            Value::String(s) => match s.as_str() {
                "inf" | "+inf" => Ok(ExtReal::PosInf),
                "-inf" => Ok(ExtReal::NegInf),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }

    fn str(&self, path: &str) -> Result<&'a str, IoError> {
        self.get(path)?.as_str().ok_or(IoError::Type { field: path.into(), expected: "a string" })
    }
}

/// Parses a scenario document without validating it.
pub fn parse_scenario(text: &str) -> Result<Scenario, IoError> {
    let root: Value = serde_json::from_str(text)?;
    let r = Reader { root: &root };
    let lambda = r.f64("utility.lambda")?;
    let rho = r.f64("utility.rho")?;
    let utility = match r.str("utility.kind")? {
        "power" => UtilitySpec::power(r.f64("utility.p")?, lambda, rho),
        "log" => UtilitySpec::log(lambda, rho),
        _ => return Err(IoError::Type { field: "utility.kind".into(), expected: "\"power\" or \"log\"" }),
    };
    let rates = Rates { lend: r.f64("rates.r")?, borrow: r.f64("rates.R")? };
    let constraints = ConstraintBox {
        pi_lo: r.ext("constraints.pi_lo")?,
        pi_hi: r.ext("constraints.pi_hi")?,
        c_lo: r.f64("constraints.c_lo")?,
        c_hi: r.ext("constraints.c_hi")?,
    };
    let uncertainty = match r.str("uncertainty.variant")? {
        "rect" => UncertaintySet::Rect {
            mu_lo: r.f64("uncertainty.mu_lo")?,
            mu_hi: r.f64("uncertainty.mu_hi")?,
            sigma_lo: r.f64("uncertainty.sigma_lo")?,
            sigma_hi: r.f64("uncertainty.sigma_hi")?,
        },
        "correlated" => UncertaintySet::Correlated {
            mu_lo: r.f64("uncertainty.mu_lo")?,
            sigma_lo: r.f64("uncertainty.sigma_lo")?,
            k: r.f64("uncertainty.k")?,
            q_exp: r.f64("uncertainty.q_exp")?,
            alpha_hi: r.f64("uncertainty.alpha_hi")?,
        },
        _ => {
            return Err(IoError::Type {
                field: "uncertainty.variant".into(),
                expected: "\"rect\" or \"correlated\"",
            })
        }
    };
    Ok(Scenario { utility, rates, constraints, uncertainty, horizon: r.f64("T")?, x0: r.f64("x0")? })
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, IoError> {
    Ok(parse_scenario(text)?.checked()?)
}

pub fn load_scenario_file(path: &std::path::Path) -> Result<Scenario, IoError> {
    load_scenario(&std::fs::read_to_string(path)?)
}

pub fn scenario_json(s: &Scenario) -> Value {
    let mut utility = Map::new();
    match s.utility.kind {
        UtilityKind::Power { p } => {
            utility.insert("kind".into(), "power".into());
            utility.insert("p".into(), num(p));
        }
        UtilityKind::Log => {
            utility.insert("kind".into(), "log".into());
        }
    }
    utility.insert("lambda".into(), num(s.utility.lambda));
    utility.insert("rho".into(), num(s.utility.rho));
    let b = &s.constraints;
    let uncertainty = match s.uncertainty {
        UncertaintySet::Rect { mu_lo, mu_hi, sigma_lo, sigma_hi } => json!({
            "variant": "rect",
            "mu_lo": num(mu_lo),
            "mu_hi": num(mu_hi),
            "sigma_lo": num(sigma_lo),
            "sigma_hi": num(sigma_hi),
        }),
        UncertaintySet::Correlated { mu_lo, sigma_lo, k, q_exp, alpha_hi } => json!({
            "variant": "correlated",
            "mu_lo": num(mu_lo),
            "sigma_lo": num(sigma_lo),
            "k": num(k),
            "q_exp": num(q_exp),
            "alpha_hi": num(alpha_hi),
        }),
    };
    json!({
        "utility": Value::Object(utility),
        "rates": { "r": num(s.rates.lend), "R": num(s.rates.borrow) },
        "constraints": {
            "pi_lo": ext(b.pi_lo),
            "pi_hi": ext(b.pi_hi),
            "c_lo": num(b.c_lo),
            "c_hi": ext(b.c_hi),
        },
        "uncertainty": uncertainty,
        "T": num(s.horizon),
        "x0": num(s.x0),
    })
}

pub fn save_scenario(s: &Scenario) -> String {
    to_json_string(&scenario_json(s))
}

pub fn saddle_json(sd: &PortfolioSaddle) -> Value {
    let betas = sd.betas.map_or(Value::Null, |b| {
        json!({ "beta1": num(b.b1), "beta2": num(b.b2), "beta3": num(b.b3) })
    });
    let correlated = sd.correlated.map_or(Value::Null, |c| {
        json!({ "alpha_star": num(c.alpha_star), "branch": c.branch.name(), "alpha_hat": num(c.alpha_hat) })
    });
    json!({
        "regime": sd.regime.name(),
        "pi_star": num(sd.pi_star),
        "mu_star": num(sd.mu_star),
        "sigma_star": num(sd.sigma_star),
        "K": num(sd.k),
        "mu_star_is_interval": sd.mu_star_is_interval,
        "betas": betas,
        "correlated": correlated,
    })
}

pub fn qsolution_json(q: &QSolution) -> Value {
    let segments: Vec<Value> = q
        .segments
        .iter()
        .map(|g| {
            json!({
                "t_lo": num(g.t_lo),
                "t_hi": num(g.t_hi),
                "kind": g.kind.name(),
                "A": num(g.a),
                "consumption_regime": g.consumption_regime.name(),
            })
        })
        .collect();
    let times: Map<String, Value> =
        q.switching_times.iter().map(|s| (s.name.clone(), num(s.t))).collect();
    json!({
        "utility": "power",
        "branch_label": q.label.to_string(),
        "K": num(q.k),
        "T": num(q.horizon),
        "q0": num(q.q0()),
        "segments": segments,
        "switching_times": times,
    })
}

pub fn log_solution_json(l: &LogQSolution) -> Value {
    let mut times = Map::new();
    if let Some(t) = l.upper_switch() {
        times.insert("T1".into(), num(t));
    }
    if let Some(t) = l.lower_switch() {
        times.insert("T2".into(), num(t));
    }
    json!({
        "utility": "log",
        "K": num(l.k),
        "T": num(l.horizon),
        "q0": num(l.q0),
        "Q0": num(l.big_q0),
        "switching_times": Value::Object(times),
    })
}

pub fn schedule_json(sc: &ConsumptionSchedule) -> Value {
    let pattern: Vec<Value> = sc
        .pieces
        .iter()
        .map(|p| json!({ "t_lo": num(p.t_lo), "t_hi": num(p.t_hi), "regime": p.regime.name() }))
        .collect();
    let times: Map<String, Value> =
        sc.switching_times.iter().map(|s| (s.name.clone(), num(s.t))).collect();
    json!({
        "monotonicity": sc.monotonicity.name(),
        "pattern": pattern,
        "switching_times": times,
    })
}

/// `t,c_star,regime` rows on a uniform grid of `n + 1` points.
pub fn schedule_csv(sc: &ConsumptionSchedule, n: usize) -> String {
    let horizon = sc.horizon();
    let mut out = String::from("t,c_star,regime\n");
    for i in 0..=n {
        let t = if i == n { horizon } else { horizon * i as f64 / n as f64 };
        let regime = sc
            .pieces
            .iter()
            .find(|p| t <= p.t_hi)
            .or(sc.pieces.last())
            .map_or("interior", |p| p.regime.name());
        let _ = writeln!(out, "{},{},{}", fmt_f64(t), fmt_f64(sc.eval(t)), regime);
    }
    out
}

pub fn witness_json(w: &NonMonotonicityWitness) -> Value {
    json!({
        "found": w.found,
        "message": if w.found { "witness found" } else { "no witness at this horizon" },
        "cap_high": num(w.cap_high),
        "cap_low": num(w.cap_low),
        "t_near_horizon": num(w.t_near_horizon),
        "t_near_zero": num(w.t_near_zero),
        "high_cap_consumption": [num(w.high_cap_consumption.0), num(w.high_cap_consumption.1)],
        "low_cap_consumption": [num(w.low_cap_consumption.0), num(w.low_cap_consumption.1)],
    })
}

pub fn report_json(r: &VerificationReport) -> Value {
    let checks: Vec<Value> = r
        .saddle_checks
        .iter()
        .map(|c| {
            json!({
                "perturbation": c.description,
                "expected_side": c.side.name(),
                "mc_value": num(c.mc_value),
                "stderr": num(c.stderr),
                "gap": num(c.gap),
                "gap_stderr": num(c.gap_stderr),
                "pass": c.pass,
            })
        })
        .collect();
    let martingale: Vec<Value> = r
        .martingale
        .iter()
        .map(|c| {
            json!({
                "t_from": num(c.t_from),
                "t_to": num(c.t_to),
                "mean_increment": num(c.mean),
                "stderr": num(c.stderr),
                "pass": c.pass,
            })
        })
        .collect();
    json!({
        "pass": r.passed(),
        "closed_value": num(r.closed_value),
        "mc_value": num(r.mc_value),
        "mc_stderr": num(r.mc_stderr),
        "value_pass": r.value_pass,
        "saddle_checks": checks,
        "martingale": martingale,
        "sweeps": sweep_checks_json(&r.sweeps),
    })
}

pub fn sweep_checks_json(checks: &[SweepCheck]) -> Value {
    checks
        .iter()
        .map(|c| {
            json!({
                "parameter": c.parameter,
                "output": c.output,
                "observed": c.observed.name(),
                "expected": c.expected.name(),
                "pass": c.pass,
            })
        })
        .collect()
}

/// `param_value,mu_star,sigma_star,pi_star,c_star_t0,c_star_T` rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param_value,mu_star,sigma_star,pi_star,c_star_t0,c_star_T\n");
    for r in rows {
        let first = r.c_star.first().copied().unwrap_or(f64::NAN);
        let last = r.c_star.last().copied().unwrap_or(f64::NAN);
        let cells = [r.value, r.mu_star, r.sigma_star, r.pi_star, first, last].map(fmt_f64);
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn sweep_json(rows: &[SweepRow], checks: &[SweepCheck]) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "param_value": num(r.value),
                "mu_star": num(r.mu_star),
                "sigma_star": num(r.sigma_star),
                "pi_star": num(r.pi_star),
                "c_star": r.c_star.iter().map(|&c| num(c)).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "rows": rows, "checks": sweep_checks_json(checks) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "utility": {"kind": "power", "p": 0.5, "lambda": 1.0, "rho": 0.1},
        "rates": {"r": 0.02, "R": 0.04},
        "constraints": {"pi_lo": -1, "pi_hi": "inf", "c_lo": 0.02, "c_hi": 0.05},
        "uncertainty": {"variant": "rect", "mu_lo": 0.1, "mu_hi": 0.12, "sigma_lo": 0.1, "sigma_hi": 0.2},
        "T": 5, "x0": 1
    }"#;

    #[test]
    fn minimal_document_loads() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.utility.kind, UtilityKind::Power { p: 0.5 });
        assert_eq!(s.constraints.pi_hi, ExtReal::PosInf);
        assert_eq!(s.constraints.pi_lo, ExtReal::Finite(-1.0));
        assert_eq!(s.horizon, 5.0);
        assert_eq!(load_scenario(&save_scenario(&s)).unwrap(), s);
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace("\"T\": 5, ", "");
        let err = load_scenario(&text).unwrap_err();
        assert!(matches!(&err, IoError::Missing(f) if f == "T"), "{err}");
        assert!(err.to_string().contains("`T`"));
        let text = MINIMAL.replace("\"lambda\": 1.0, ", "");
        assert!(load_scenario(&text).unwrap_err().to_string().contains("utility.lambda"));
    }

    #[test]
    fn invalid_values_are_rejected_with_the_bound() {
        let text = MINIMAL.replace("\"R\": 0.04", "\"R\": 0.01");
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("R ≥ r"), "{err}");
        let text = MINIMAL.replace("\"pi_hi\": \"inf\"", "\"pi_hi\": \"huge\"");
        assert!(matches!(load_scenario(&text), Err(IoError::Type { .. })));
    }

    #[test]
    fn float_format_is_lossless() {
        assert_eq!(fmt_f64(0.0), "0.0");
        assert_eq!(fmt_f64(2.0), "2.0");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(to_json_string(&json!({"x": 0.5, "n": 3})), r#"{"x":5.0000000000000000e-1,"n":3}"#);
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        (
            prop_oneof![Just(None), (-3.0..0.99f64).prop_filter("p != 0", |p| p.abs() > 1e-3).prop_map(Some)],
            (1e-3..5.0f64, 0.0..1.0f64),
            (0.0..0.1f64, 0.0..0.1f64),
            (prop_oneof![Just(f64::NEG_INFINITY), -5.0..0.0f64], prop_oneof![Just(f64::INFINITY), 1.0..5.0f64]),
            (0.0..0.1f64, prop_oneof![Just(f64::INFINITY), 0.1..2.0f64]),
            (-0.1..0.3f64, 0.0..0.2f64, 0.0..0.3f64, 0.01..0.3f64),
            (1e-3..50.0f64, 1e-3..1e3f64),
        )
            .prop_map(|(p, (lambda, rho), (r, spread), (pl, ph), (cl, ch), (m, dm, sl, ds), (t, x0))| {
                Scenario {
                    utility: match p {
                        Some(p) => UtilitySpec::power(p, lambda, rho),
                        None => UtilitySpec::log(lambda, rho),
                    },
                    rates: Rates { lend: r, borrow: r + spread },
                    constraints: ConstraintBox {
                        pi_lo: ExtReal::from(pl),
                        pi_hi: ExtReal::from(ph),
                        c_lo: cl,
                        c_hi: ExtReal::from(ch),
                    },
                    uncertainty: UncertaintySet::Rect {
                        mu_lo: m,
                        mu_hi: m + dm,
                        sigma_lo: sl,
                        sigma_hi: sl + ds,
                    },
                    horizon: t,
                    x0,
                }
            })
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(s in arb_scenario()) {
            let text = save_scenario(&s);
            prop_assert_eq!(load_scenario(&text).unwrap(), s);
        }
    }
}
