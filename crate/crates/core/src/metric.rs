//! Functional distance `L_p(a, b)` between two response curves and the
//! non-inferiority decision built on its bootstrap distribution.

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::inference::{quantile, BootstrapResult};
use crate::models::ResponseCurve;
use crate::quadrature::adaptive_simpson;

/// Absolute tolerance for the integral of `|delta|^p`.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Uniform grid used to bracket sign changes of `delta`.
pub const ROOT_SCAN_POINTS: usize = 512;
/// Bracket width at which root bisection stops.
pub const ROOT_TOL: f64 = 1e-10;
/// Initial grid for the supremum norm.
pub const SUP_GRID_POINTS: usize = 1024;
/// Upper percentile used by the non-inferiority rule.
pub const NONINFERIORITY_LEVEL: f64 = 0.95;
pub const MIN_DECISION_REPLICATES: usize = 200;

/// Norm order: a real `p >= 1` or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn validate(self) -> Result<()> {
        match self {
            NormOrder::Finite(p) if p >= 1.0 && p.is_finite() => Ok(()),
            NormOrder::Finite(p) => Err(Error::InvalidSpec(format!("norm order must be >= 1, got {p}"))),
            NormOrder::Infinity => Ok(()),
        }
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "max") {
            return Ok(NormOrder::Infinity);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("cannot parse norm order `{s}`")))?;
        let order = if p.is_infinite() && p > 0.0 {
            NormOrder::Infinity
        } else {
            NormOrder::Finite(p)
        };
        order.validate()?;
        Ok(order)
    }
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormOrder::Finite(p) => serializer.serialize_f64(*p),
            NormOrder::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(p) => Ok(NormOrder::Finite(p)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub p: NormOrder,
    pub a: f64,
    pub b: f64,
    pub margin_d: Option<f64>,
}

impl MetricSpec {
    pub fn new(p: NormOrder, a: f64, b: f64) -> Result<Self> {
        let spec = Self {
            p,
            a,
            b,
            margin_d: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_margin(mut self, d: f64) -> Result<Self> {
        self.margin_d = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.p.validate()?;
        if !(self.a >= 0.0 && self.a < self.b && self.b.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "need 0 <= a < b < inf, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        if let Some(d) = self.margin_d {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidSpec(format!("margin must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub p: NormOrder,
    pub a: f64,
    pub b: f64,
    pub value: f64,
    /// `value / (b - a)`.
    pub scaled_value: f64,
    /// `value / (b - a)^(1/p)`: the p-mean of `|delta|`; equals `value` for p = inf.
    pub normalized_value: f64,
    pub quadrature_abs_error: f64,
    pub sign_change_points: Vec<f64>,
}

/// Roots of `delta` strictly inside `(a, b)`, located by a uniform scan and bisection.
pub fn find_sign_changes<F: Fn(f64) -> f64>(delta: F, a: f64, b: f64) -> Vec<f64> {
    let n = ROOT_SCAN_POINTS;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| delta(t)).collect();
    let mut roots = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        let (f0, f1) = (values[i], values[i + 1]);
        if f0 == 0.0 {
            // Exact zero on an interior node: a root only if the sign flips across it.
            if i > 0 && values[i - 1] * f1 < 0.0 && grid[i] > a && grid[i] < b {
                roots.push(grid[i]);
            }
        } else if f1 != 0.0 && f0.signum() != f1.signum() {
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            let mut f_lo = f0;
            while hi - lo > ROOT_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = delta(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == f_lo.signum() {
                    lo = mid;
                    f_lo = fm;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            if root > a && root < b {
                roots.push(root);
            }
        }
        i += 1;
    }
    roots.dedup_by(|x, y| (*x - *y).abs() < ROOT_TOL);
    roots
}

/// `L_p(a, b)` between `curve1` and `curve2`.
pub fn lp_metric(curve1: &ResponseCurve, curve2: &ResponseCurve, spec: &MetricSpec) -> Result<MetricResult> {
    spec.validate()?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let delta = |t: f64| match (curve1.eval(t), curve2.eval(t)) {
        (Ok(v1), Ok(v2)) => v2 - v1,
        (Err(e), _) | (_, Err(e)) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let (a, b) = (spec.a, spec.b);
    let roots = find_sign_changes(delta, a, b);

    let (value, abs_error) = match spec.p {
        NormOrder::Finite(p) => {
            let mut knots = Vec::with_capacity(roots.len() + 2);
            knots.push(a);
            knots.extend_from_slice(&roots);
            knots.push(b);
            let tol = QUADRATURE_TOL / (knots.len() - 1) as f64;
            let mut integral = 0.0;
            let mut err = 0.0;
            for w in knots.windows(2) {
                let piece = if p == 1.0 {
                    adaptive_simpson(|t| delta(t).abs(), w[0], w[1], tol)
                } else {
                    adaptive_simpson(|t| delta(t).abs().powf(p), w[0], w[1], tol)
                };
                integral += piece.value;
                err += piece.abs_error;
            }
            (integral.max(0.0).powf(1.0 / p), err)
        }
        NormOrder::Infinity => (sup_abs(&delta, a, b), 0.0),
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let width = b - a;
    let normalized_value = match spec.p {
        NormOrder::Finite(p) => value / width.powf(1.0 / p),
        NormOrder::Infinity => value,
    };
    Ok(MetricResult {
        p: spec.p,
        a,
        b,
        value,
        scaled_value: value / width,
        normalized_value,
        quadrature_abs_error: abs_error,
        sign_change_points: roots,
    })
}

/// Maximum of `|delta|` on `[a, b]`: grid search refined by golden section.
fn sup_abs<F: Fn(f64) -> f64>(delta: &F, a: f64, b: f64) -> f64 {
    let n = SUP_GRID_POINTS;
    let step = (b - a) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let t = if i == n - 1 { b } else { a + step * i as f64 };
        let v = delta(t).abs();
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = a + step * best_i.saturating_sub(1) as f64;
    let hi = (a + step * (best_i + 1) as f64).min(b);
    let g = |t: f64| delta(t).abs();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x0, mut x3) = (lo, hi);
    let mut x1 = x3 - inv_phi * (x3 - x0);
    let mut x2 = x0 + inv_phi * (x3 - x0);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while x3 - x0 > 1e-12 * (1.0 + x0.abs()) {
        if f1 > f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - inv_phi * (x3 - x0);
            f1 = g(x1);
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + inv_phi * (x3 - x0);
            f2 = g(x2);
        }
    }
    best.max(f1).max(f2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonInferiorityDecision {
    /// One-sided upper percentile bound of the bootstrapped metric.
    pub upper_bound: f64,
    pub margin: f64,
    pub level: f64,
    /// True when similarity is declared (the null `L > d` is rejected).
    pub reject_null: bool,
}

/// Declares similarity iff the upper 95% bootstrap percentile of `L` is at most `margin_d`.
pub fn noninferiority_decision(boot: &BootstrapResult, margin_d: f64) -> Result<NonInferiorityDecision> {
    if !(margin_d > 0.0 && margin_d.is_finite()) {
        return Err(Error::InvalidSpec(format!("margin must be positive, got {margin_d}")));
    }
    let got = boot.replicate_values.len();
    if got < MIN_DECISION_REPLICATES {
        return Err(Error::InsufficientReplicates {
            required: MIN_DECISION_REPLICATES,
            got,
        });
    }
    let upper = quantile(&boot.replicate_values, NONINFERIORITY_LEVEL)?;
    Ok(NonInferiorityDecision {
        upper_bound: upper,
        margin: margin_d,
        level: NONINFERIORITY_LEVEL,
        reject_null: upper <= margin_d,
    })
}
