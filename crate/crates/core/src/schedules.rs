//! Closed-form stepsize and trigger-threshold sequences.
//!
//! A [`Schedule`] is one of `c/tᵖ`, a constant, or zero. Values are defined
//! for `t ≥ 1`; index 0 reuses the value at 1 (`H(t)` multiplies from `k = 0`
//! and the disagreement bound references `τ(0)`).
//!
//! Series totals are never point estimates: they come back as an
//! [`Enclosure`] built from an exact partial sum plus integral-test bounds on
//! the tail.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms summed exactly before the integral-test tail takes over.
const EXACT_TERMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    /// `c / tᵖ` with `c > 0`, `p ≥ 0`.
    Power { c: f64, p: f64 },
    /// `c ≥ 0` for every `t`.
    Constant(f64),
    Zero,
}

/// What a schedule is used for; decides which assumption applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Stepsize,
    XThreshold,
    YThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    StepsizeOk,
    TauOk,
    ZetaOk,
    Violated(String),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        !matches!(self, Verdict::Violated(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::StepsizeOk => f.write_str("stepsize-ok"),
            Verdict::TauOk => f.write_str("tau-ok"),
            Verdict::ZetaOk => f.write_str("zeta-ok"),
            Verdict::Violated(why) => write!(f, "violated ({why})"),
        }
    }
}

/// Certified two-sided bound `lo ≤ value ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enclosure {
    pub lo: f64,
    pub hi: f64,
}

impl Enclosure {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Total {
    Finite(Enclosure),
    Divergent,
}

impl Total {
    pub fn finite(self) -> Option<Enclosure> {
        match self {
            Total::Finite(e) => Some(e),
            Total::Divergent => None,
        }
    }

    pub fn upper(self) -> f64 {
        self.finite().map_or(f64::INFINITY, |e| e.hi)
    }
}

/// Running sums over `t = 1..=T` and the corresponding infinite totals.
///
/// For a threshold `τ` these are `E_τ(T)`, `E_{τ,2}(T)` and `E_τ`; for `ζ`,
/// `F_ζ(T)`, `F_ζ` and `F_{ζ,3/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialSums {
    pub horizon: usize,
    pub linear: f64,
    pub squared: f64,
    /// `Σ t^{3/2} v(t)`.
    pub weighted: f64,
    pub linear_total: Total,
    pub squared_total: Total,
    pub weighted_total: Total,
}

impl Schedule {
    pub fn power(c: f64, p: f64) -> Self {
        Schedule::Power { c, p }
    }

    /// `1/√t`.
    pub fn inverse_sqrt() -> Self {
        Schedule::Power { c: 1.0, p: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Power { c, p } if !(c > 0.0 && c.is_finite()) || !(p >= 0.0 && p.is_finite()) => {
                Err(Error::invalid(format!("power schedule needs c > 0, p ≥ 0 (got c={c}, p={p})")))
            }
            Schedule::Constant(c) if !(c >= 0.0 && c.is_finite()) => {
                Err(Error::invalid(format!("constant schedule needs c ≥ 0 (got {c})")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: usize) -> f64 {
        let t = t.max(1);
        match *self {
            Schedule::Power { c, p } => {
                if p == 0.0 {
                    c
                } else {
                    c / (t as f64).powf(p)
                }
            }
            Schedule::Constant(c) => c,
            Schedule::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Schedule::Zero | Schedule::Constant(0.0))
    }

    pub fn is_inverse_sqrt(&self) -> bool {
        *self == Self::inverse_sqrt()
    }

    /// Exponent `q` of `Σ c_k t^{−q}` for the requested weighting, or `None`
    /// when the series is identically zero.
    fn series(&self, kind: SeriesKind) -> Option<(f64, f64)> {
        match *self {
            Schedule::Zero | Schedule::Constant(0.0) => None,
            Schedule::Constant(c) => Some(kind.transform(c, 0.0)),
            Schedule::Power { c, p } => Some(kind.transform(c, p)),
        }
    }

    fn total(&self, kind: SeriesKind, exact_to: usize) -> Total {
        let Some((coef, q)) = self.series(kind) else {
            return Total::Finite(Enclosure::point(0.0));
        };
        if q <= 1.0 {
            return Total::Divergent;
        }
        let n = exact_to as f64;
        let head: f64 = (1..=exact_to).rev().map(|t| coef * (t as f64).powf(-q)).sum();
        // Σ_{t>N} t^{−q} ∈ [∫_{N+1}^∞, ∫_N^∞].
        let lo = head + coef * (n + 1.0).powf(1.0 - q) / (q - 1.0);
        let hi = head + coef * n.powf(1.0 - q) / (q - 1.0);
        // Widen by a few ulps to cover summation roundoff.
        let pad = (hi.abs() + 1.0) * 1e-14;
        Total::Finite(Enclosure {
            lo: lo - pad,
            hi: hi + pad,
        })
    }

    pub fn partial_sums(&self, horizon: usize) -> PartialSums {
        let (mut linear, mut squared, mut weighted) = (0.0, 0.0, 0.0);
        for t in 1..=horizon {
            let v = self.value(t);
            linear += v;
            squared += v * v;
            weighted += (t as f64).powf(1.5) * v;
        }
        let exact_to = horizon.max(EXACT_TERMS);
        PartialSums {
            horizon,
            linear,
            squared,
            weighted,
            linear_total: self.total(SeriesKind::Linear, exact_to),
            squared_total: self.total(SeriesKind::Squared, exact_to),
            weighted_total: self.total(SeriesKind::Weighted, exact_to),
        }
    }

    /// `Σ_{t=1}^{T} v(t)` for every `T ∈ [0, horizon]`.
    pub fn cumulative(&self, horizon: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(horizon + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for t in 1..=horizon {
            acc += self.value(t);
            out.push(acc);
        }
        out
    }

    /// Certified enclosure of `Σ_{t≥1} v(t)`.
    pub fn total_sum(&self) -> Total {
        self.total(SeriesKind::Linear, EXACT_TERMS)
    }

    pub fn satisfies_assumption(&self, role: Role) -> Verdict {
        if let Err(e) = self.validate() {
            return Verdict::Violated(e.to_string());
        }
        match (role, *self) {
            (Role::Stepsize, Schedule::Power { p, .. }) if p > 0.5 && p <= 1.0 => Verdict::StepsizeOk,
            (Role::Stepsize, Schedule::Power { p, .. }) => Verdict::Violated(format!(
                "stepsize c/t^{p} needs 1/2 < p ≤ 1 (Σα = ∞ and Σα² < ∞)"
            )),
            (Role::Stepsize, _) => {
                Verdict::Violated("stepsize must be a decaying power law".into())
            }
            (Role::XThreshold, s) if s.is_zero() => Verdict::TauOk,
            (Role::XThreshold, Schedule::Power { p, .. }) if p > 1.0 => Verdict::TauOk,
            (Role::XThreshold, Schedule::Power { p, .. }) => {
                Verdict::Violated(format!("Στ diverges for p = {p} ≤ 1"))
            }
            (Role::XThreshold, _) => Verdict::Violated("constant τ is not summable".into()),
            (Role::YThreshold, s) if s.is_zero() => Verdict::ZetaOk,
            (Role::YThreshold, Schedule::Power { p, .. }) if p > 2.5 => {
                let hi = self.total_sum().upper();
                if hi < 1.0 {
                    Verdict::ZetaOk
                } else {
                    Verdict::Violated(format!("Σζ ≤ {hi:.6} is not below 1; normalize first"))
                }
            }
            (Role::YThreshold, Schedule::Power { p, .. }) => {
                Verdict::Violated(format!("Σ t^(3/2) ζ(t) diverges for p = {p} ≤ 5/2"))
            }
            (Role::YThreshold, _) => Verdict::Violated("constant ζ is not summable".into()),
        }
    }

    /// Rescales `ζ` by `1/(M + 1)`, `M` a certified upper bound on `Σζ`.
    pub fn normalize_zeta(&self) -> Result<Schedule> {
        self.validate()?;
        if self.is_zero() {
            return Ok(Schedule::Zero);
        }
        match *self {
            Schedule::Power { c, p } if p > 2.5 => {
                let m = self.total_sum().upper();
                Ok(Schedule::Power { c: c / (m + 1.0), p })
            }
            _ => Err(Error::Divergent(format!(
                "Σ t^(3/2) ζ(t) diverges for ζ = {self}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum SeriesKind {
    Linear,
    Squared,
    Weighted,
}

impl SeriesKind {
    /// `(coefficient, decay exponent)` of the transformed series.
    fn transform(self, c: f64, p: f64) -> (f64, f64) {
        match self {
            SeriesKind::Linear => (c, p),
            SeriesKind::Squared => (c * c, 2.0 * p),
            SeriesKind::Weighted => (c, p - 1.5),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Power { c, p } => write!(f, "power {c} {p}"),
            Schedule::Constant(c) => write!(f, "const {c}"),
            Schedule::Zero => f.write_str("zero"),
        }
    }
}

fn parse_number(tok: &str) -> Result<f64> {
    let bad = || Error::Config(format!("bad number `{tok}`"));
    match tok.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            Ok(n / d)
        }
        None => tok.parse().map_err(|_| bad()),
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// `power c p` | `const c` | `zero`; `c` may be written `a/b`.
    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let sched = match toks.as_slice() {
            ["zero"] => Schedule::Zero,
            ["const", c] => Schedule::Constant(parse_number(c)?),
            ["power", c, p] => Schedule::Power {
                c: parse_number(c)?,
                p: parse_number(p)?,
            },
            _ => {
                return Err(Error::Config(format!(
                    "schedule `{s}`: expected `power c p`, `const c` or `zero`"
                )))
            }
        };
        sched.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(sched)
    }
}

impl TryFrom<String> for Schedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

/// `H(t) = Π_{k=0}^{t} (1 + τ(k))` with `H(−1) = 1`, and
/// `S(t) = Σ_{s=0}^{t−1} α(s+1)/H(s)` with `S(0) = 0`.
#[derive(Debug, Clone)]
pub struct AveragingWeights {
    /// `h[k] = H(k − 1)`, `k ∈ [0, T+1]`.
    h: Vec<f64>,
    /// `s[t] = S(t)`, `t ∈ [0, T+1]`.
    s: Vec<f64>,
}

impl AveragingWeights {
    pub fn new(tau: &Schedule, alpha: &Schedule, horizon: usize) -> Self {
        let mut h = Vec::with_capacity(horizon + 2);
        let mut s = Vec::with_capacity(horizon + 2);
        h.push(1.0);
        s.push(0.0);
        for t in 0..=horizon {
            let ht = h[t] * (1.0 + tau.value(t));
            h.push(ht);
            s.push(s[t] + alpha.value(t + 1) / ht);
        }
        Self { h, s }
    }

    pub fn horizon(&self) -> usize {
        self.h.len() - 2
    }

    /// `H(t)` for `t ∈ [−1, T]`.
    pub fn h(&self, t: isize) -> f64 {
        self.h[(t + 1) as usize]
    }

    /// `S(t)` for `t ∈ [0, T+1]`.
    pub fn s(&self, t: usize) -> f64 {
        self.s[t]
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().copied().fold(1.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn values() {
        assert_eq!(Schedule::power(1.0, 0.52).value(1), 1.0);
        assert_relative_eq!(Schedule::power(1.0 / 3.0, 3.0).value(2), 1.0 / 24.0, max_relative = 1e-15);
        assert_eq!(Schedule::Zero.value(17), 0.0);
        assert_eq!(Schedule::power(2.0, 1.0).value(0), 2.0);
        assert_eq!(Schedule::Constant(0.05).value(9), 0.05);
    }

    #[test]
    fn verdicts() {
        use Role::*;
        assert_eq!(Schedule::power(1.0, 0.52).satisfies_assumption(Stepsize), Verdict::StepsizeOk);
        assert!(!Schedule::inverse_sqrt().satisfies_assumption(Stepsize).is_ok());
        assert_eq!(Schedule::power(1.0 / 3.0, 3.0).satisfies_assumption(YThreshold), Verdict::ZetaOk);
        assert!(!Schedule::power(1.0, 0.75).satisfies_assumption(XThreshold).is_ok());
        assert_eq!(Schedule::power(1.0, 1.5).satisfies_assumption(XThreshold), Verdict::TauOk);
        assert!(!Schedule::power(1.0, 3.0).satisfies_assumption(YThreshold).is_ok());
        assert!(!Schedule::power(1.0, 1.0).satisfies_assumption(YThreshold).is_ok());
        for role in [Stepsize, XThreshold, YThreshold] {
            assert!(!Schedule::Constant(0.05).satisfies_assumption(role).is_ok());
        }
        assert_eq!(Schedule::Zero.satisfies_assumption(XThreshold), Verdict::TauOk);
    }

    #[test]
    fn zero_sums() {
        let ps = Schedule::Zero.partial_sums(50);
        assert_eq!(ps.linear, 0.0);
        assert_eq!(ps.linear_total, Total::Finite(Enclosure::point(0.0)));
        assert_eq!(Schedule::Constant(0.1).partial_sums(3).linear_total, Total::Divergent);
    }

    #[test]
    fn normalize() {
        let z = Schedule::power(1.0, 3.0).normalize_zeta().unwrap();
        assert!(z.total_sum().upper() < 1.0);
        let already = Schedule::power(1.0 / 3.0, 3.0);
        let z2 = already.normalize_zeta().unwrap();
        assert!(z2.value(1) < already.value(1));
        assert!(Schedule::power(1.0, 1.0).normalize_zeta().is_err());
        assert!(Schedule::Constant(0.1).normalize_zeta().is_err());
    }

    #[test]
    fn parse_and_display() {
        let s: Schedule = "power 1/3 3".parse().unwrap();
        assert_relative_eq!(s.value(1), 1.0 / 3.0);
        assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
        assert_eq!("zero".parse::<Schedule>().unwrap(), Schedule::Zero);
        assert_eq!("const 0.05".parse::<Schedule>().unwrap(), Schedule::Constant(0.05));
        assert!("power -1 2".parse::<Schedule>().is_err());
        assert!("linear 1".parse::<Schedule>().is_err());
    }

    #[test]
    fn averaging_weights_without_trigger() {
        let w = AveragingWeights::new(&Schedule::Zero, &Schedule::inverse_sqrt(), 4);
        for t in -1..=4 {
            assert_eq!(w.h(t), 1.0);
        }
        let s4 = 1.0 + 0.5f64.sqrt() + (1.0f64 / 3.0).sqrt() + 0.5;
        assert_relative_eq!(w.s(4), s4, max_relative = 1e-15);
        assert!(w.s(4) >= 2.0);
        assert_eq!(w.s(0), 0.0);
    }
}
