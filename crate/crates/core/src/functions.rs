//! Named test functions on (0, c].
//!
//! Simulators integrate these exactly along growth arcs, so the set is closed
//! rather than an arbitrary closure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "lowercase")]
pub enum TestFunction {
    One,
    /// `f(x) = s`.
    Constant(f64),
    /// `f(x) = x`.
    Identity,
    /// `f(x) = x^2`.
    Square,
    /// `1{x > theta}`.
    Above(f64),
    /// `1{x = c}`.
    AtCap,
    /// `(x / c)^q`.
    Power(f64),
}

impl TestFunction {
    /// Evaluate at mass `x` for cap `c`.
    #[inline]
    pub fn eval(&self, x: f64, c: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::Constant(s) => s,
            TestFunction::Identity => x,
            TestFunction::Square => x * x,
            TestFunction::Above(theta) => f64::from(u8::from(x > theta)),
            TestFunction::AtCap => f64::from(u8::from(x >= c)),
            TestFunction::Power(q) => (x / c).powf(q),
        }
    }

    /// Points in (0, c) where `f` is discontinuous.
    pub fn breakpoints(&self, c: f64) -> Vec<f64> {
        match *self {
            TestFunction::Above(theta) if theta > 0.0 && theta < c => vec![theta],
            _ => Vec::new(),
        }
    }

    pub fn sup_norm(&self, c: f64) -> f64 {
        match *self {
            TestFunction::Square => c * c,
            TestFunction::Identity => c,
            TestFunction::Power(q) if q < 0.0 => f64::INFINITY,
            TestFunction::Constant(s) => s.abs(),
            _ => 1.0,
        }
    }

    /// `int_0^tau f(x0 e^{a s}) ds` for an arc that stays strictly below the
    /// cap, written as `(1/a) int_{x0}^{x1} f(u) du / u` with `x1 = x0 e^{a tau}`.
    pub fn arc_integral(&self, x0: f64, x1: f64, a: f64, c: f64) -> f64 {
        if x1 <= x0 {
            return 0.0;
        }
        match *self {
            TestFunction::One => (x1 / x0).ln() / a,
            TestFunction::Constant(s) => s * (x1 / x0).ln() / a,
            TestFunction::Identity => (x1 - x0) / a,
            TestFunction::Square => (x1 * x1 - x0 * x0) / (2.0 * a),
            TestFunction::Above(theta) => {
                if x1 <= theta {
                    0.0
                } else {
                    (x1 / x0.max(theta)).ln() / a
                }
            }
            TestFunction::AtCap => 0.0,
            TestFunction::Power(q) => {
                if q == 0.0 {
                    (x1 / x0).ln() / a
                } else {
                    ((x1 / c).powf(q) - (x0 / c).powf(q)) / (q * a)
                }
            }
        }
    }

    /// Default panel used by the experiments, with `q0` for the power term.
    pub fn panel(c: f64, q0: f64) -> Vec<TestFunction> {
        vec![
            TestFunction::One,
            TestFunction::Identity,
            TestFunction::Square,
            TestFunction::Above(0.5 * c),
            TestFunction::AtCap,
            TestFunction::Power(q0),
        ]
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::One => write!(f, "one"),
            TestFunction::Constant(s) => write!(f, "const:{s}"),
            TestFunction::Identity => write!(f, "identity"),
            TestFunction::Square => write!(f, "square"),
            TestFunction::Above(t) => write!(f, "indicator:{t}"),
            TestFunction::AtCap => write!(f, "atcap"),
            TestFunction::Power(q) => write!(f, "power:{q}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::InvalidArgument(format!("unknown test function '{s}'"));
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.parse::<f64>().map_err(|_| bad())?)),
            None => (s, None),
        };
        Ok(match (head, arg) {
            ("one", None) => TestFunction::One,
            ("const", Some(s)) => TestFunction::Constant(s),
            ("identity" | "x", None) => TestFunction::Identity,
            ("square", None) => TestFunction::Square,
            ("indicator", Some(t)) => TestFunction::Above(t),
            ("atcap", None) => TestFunction::AtCap,
            ("power", Some(q)) => TestFunction::Power(q),
            _ => return Err(bad()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;

    #[test]
    fn arc_integrals_match_quadrature() {
        let (a, c) = (0.7, 2.0);
        let (x0, tau) = (0.3, 1.1f64);
        let x1 = x0 * (a * tau).exp();
        for f in [
            TestFunction::One,
            TestFunction::Constant(0.3),
            TestFunction::Identity,
            TestFunction::Square,
            TestFunction::Above(0.5),
            TestFunction::Power(0.8),
            TestFunction::Power(0.0),
        ] {
            let q = integrate(|s| f.eval(x0 * (a * s).exp(), c), 0.0, tau, 1e-13, 1e-15);
            let brk = ((0.5f64 / x0).ln() / a).clamp(0.0, tau);
            let q = if matches!(f, TestFunction::Above(_)) {
                integrate(|s| f.eval(x0 * (a * s).exp(), c), brk, tau, 1e-13, 1e-15)
            } else {
                q
            };
            assert!((f.arc_integral(x0, x1, a, c) - q).abs() < 1e-12, "{f}");
        }
    }

    #[test]
    fn parse_round_trip() {
        for s in ["one", "const:0.2", "identity", "square", "indicator:0.5", "atcap", "power:0.25"] {
            let f: TestFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("power".parse::<TestFunction>().is_err());
    }
}
