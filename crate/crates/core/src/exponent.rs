//! Exact arithmetic on the extended exponent scale.
//!
//! An exponent `p` is stored through its reciprocal `rho = 1/p` as an exact
//! rational. The scale covers `p ∈ [1, ∞)` (Lebesgue), `p = ∞` (`rho = 0`)
//! and negative `p`, which stand for Hölder classes: for `p < 0` one sets
//! `s = floor(-n/p)` and `n/p̃ = s + n/p`, so `‖u‖_p = ‖∇^s u‖_{p̃}` with the
//! Hölder semi-norm of exponent `-n/p̃`, or `‖∇^s u‖_∞` when `s = -n/p`.
//!
//! Every relation between exponents used here is affine in the reciprocals,
//! so the whole module works in `Rational64` and never touches floats except
//! in the explicit `*_f64` accessors.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExponentError {
    #[error("cannot parse exponent `{0}`: expected `inf`, an integer or `a/b`")]
    Parse(String),
    #[error("p = 0 is not an exponent")]
    ZeroExponent,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("Hölder decomposition needs p < 0, got p = {0}")]
    NotNegative(ExtendedExponent),
    #[error("critical exponent: p = n = {0} has no Sobolev conjugate")]
    CriticalConjugate(u32),
    #[error("derivative orders must satisfy 1 <= j < k, got j = {j}, k = {k}")]
    DerivativeOrders { j: u32, k: u32 },
}

/// Parse `"a"`, `"a/b"` or `"-a/b"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational64, ExponentError> {
    let err = || ExponentError::Parse(text.to_string());
    let t = text.trim();
    match t.split_once('/') {
        Some((a, b)) => {
            let num: i64 = a.trim().parse().map_err(|_| err())?;
            let den: i64 = b.trim().parse().map_err(|_| err())?;
            if den == 0 {
                return Err(err());
            }
            Ok(Rational64::new(num, den))
        }
        None => t.parse::<i64>().map(Rational64::from_integer).map_err(|_| err()),
    }
}

/// Lowest-terms string form of a rational: `"3"` or `"-3/4"`.
pub fn format_rational(r: &Rational64) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `#[serde(with = "rational_serde")]` adapter writing rationals as strings.
pub mod rational_serde {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(i) => Ok(Rational64::from_integer(i)),
            Repr::Text(t) => parse_rational(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// An exponent `p` on the extended scale, stored as `rho = 1/p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedExponent {
    rho: Rational64,
}

impl ExtendedExponent {
    pub const INFINITY: ExtendedExponent = ExtendedExponent {
        rho: Rational64::new_raw(0, 1),
    };

    pub fn from_reciprocal(rho: Rational64) -> Self {
        ExtendedExponent { rho }
    }

    pub fn from_p(p: Rational64) -> Result<Self, ExponentError> {
        if p.is_zero() {
            return Err(ExponentError::ZeroExponent);
        }
        Ok(ExtendedExponent { rho: p.recip() })
    }

    pub fn integer(p: i64) -> Result<Self, ExponentError> {
        Self::from_p(Rational64::from_integer(p))
    }

    pub fn reciprocal(&self) -> Rational64 {
        self.rho
    }

    pub fn is_infinite(&self) -> bool {
        self.rho.is_zero()
    }

    /// `p` itself, `None` for `p = ∞`.
    pub fn p(&self) -> Option<Rational64> {
        if self.rho.is_zero() {
            None
        } else {
            Some(self.rho.recip())
        }
    }

    pub fn p_f64(&self) -> f64 {
        match self.p() {
            None => f64::INFINITY,
            Some(p) => *p.numer() as f64 / *p.denom() as f64,
        }
    }

    pub fn reciprocal_f64(&self) -> f64 {
        *self.rho.numer() as f64 / *self.rho.denom() as f64
    }

    pub fn is_negative(&self) -> bool {
        self.rho.is_negative()
    }
}

impl fmt::Display for ExtendedExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.p() {
            None => f.write_str("inf"),
            Some(p) => f.write_str(&format_rational(&p)),
        }
    }
}

impl FromStr for ExtendedExponent {
    type Err = ExponentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t == "∞" {
            return Ok(ExtendedExponent::INFINITY);
        }
        Self::from_p(parse_rational(t)?)
    }
}

impl Serialize for ExtendedExponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExtendedExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(i) => ExtendedExponent::integer(i).map_err(serde::de::Error::custom),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Why an exponent falls outside the usable scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfScale {
    /// `p ∈ (0, 1)`.
    BelowOne,
    /// `p ∈ (-n, 0)`.
    HolderGap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentClass {
    Lebesgue,
    Sup,
    Holder,
    OutOfScale(OutOfScale),
}

impl fmt::Display for ExponentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentClass::Lebesgue => f.write_str("lebesgue"),
            ExponentClass::Sup => f.write_str("sup"),
            ExponentClass::Holder => f.write_str("holder"),
            ExponentClass::OutOfScale(OutOfScale::BelowOne) => {
                f.write_str("out-of-scale (p in (0,1))")
            }
            ExponentClass::OutOfScale(OutOfScale::HolderGap) => {
                f.write_str("out-of-scale (p in (-n,0))")
            }
        }
    }
}

impl ExponentClass {
    pub fn in_scale(&self) -> bool {
        !matches!(self, ExponentClass::OutOfScale(_))
    }
}

/// Range tag of `e` in dimension `n`. Total: the four tags partition the rationals.
pub fn classify(e: &ExtendedExponent, n: u32) -> ExponentClass {
    let rho = e.rho;
    if rho.is_zero() {
        ExponentClass::Sup
    } else if rho.is_positive() {
        if rho <= Rational64::one() {
            ExponentClass::Lebesgue
        } else {
            ExponentClass::OutOfScale(OutOfScale::BelowOne)
        }
    } else if rho >= -Rational64::new(1, n as i64) {
        ExponentClass::Holder
    } else {
        ExponentClass::OutOfScale(OutOfScale::HolderGap)
    }
}

/// `s = floor(-n/p)` and `p̃` with `n/p̃ = s + n/p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HolderDecomposition {
    pub s: u32,
    pub p_tilde: ExtendedExponent,
    /// `-n/p̃`; `None` when `p̃ = ∞`.
    #[serde(serialize_with = "serialize_opt_rational")]
    pub alpha: Option<Rational64>,
}

fn serialize_opt_rational<S: Serializer>(r: &Option<Rational64>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&format_rational(r)),
        None => s.serialize_none(),
    }
}

impl HolderDecomposition {
    pub fn alpha_f64(&self) -> Option<f64> {
        self.alpha.map(|a| *a.numer() as f64 / *a.denom() as f64)
    }
}

pub fn holder_decompose(e: &ExtendedExponent, n: u32) -> Result<HolderDecomposition, ExponentError> {
    if n == 0 {
        return Err(ExponentError::ZeroDimension);
    }
    if !e.rho.is_negative() {
        return Err(ExponentError::NotNegative(*e));
    }
    let nn = Rational64::from_integer(n as i64);
    let neg_n_over_p = -(nn * e.rho);
    let s = neg_n_over_p.floor();
    // n/p̃ = s + n/p
    let n_over_pt = s - neg_n_over_p;
    let p_tilde = ExtendedExponent::from_reciprocal(n_over_pt / nn);
    let alpha = if n_over_pt.is_zero() {
        None
    } else {
        Some(-n_over_pt)
    };
    Ok(HolderDecomposition {
        s: s.to_integer() as u32,
        p_tilde,
        alpha,
    })
}

/// `1/p* = 1/p - 1/n`.
pub fn sobolev_conjugate(e: &ExtendedExponent, n: u32) -> Result<ExtendedExponent, ExponentError> {
    if n == 0 {
        return Err(ExponentError::ZeroDimension);
    }
    let inv_n = Rational64::new(1, n as i64);
    if e.rho == inv_n {
        return Err(ExponentError::CriticalConjugate(n));
    }
    Ok(ExtendedExponent::from_reciprocal(e.rho - inv_n))
}

/// Failure of the conjugation chain: `r^(index) = n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("critical: r^({index}) = {n} = n")]
pub struct CriticalIndex {
    pub index: u32,
    pub n: u32,
}

/// `r^(0) = r`, `r^(k) = (r^(k-1))*`; returns `r^(m)` or the least `i < m`
/// with `r^(i) = n`.
pub fn iterated_conjugate(
    r: &ExtendedExponent,
    n: u32,
    m: u32,
) -> Result<ExtendedExponent, CriticalIndex> {
    let mut cur = *r;
    for i in 0..m {
        cur = sobolev_conjugate(&cur, n).map_err(|_| CriticalIndex { index: i, n })?;
    }
    Ok(cur)
}

/// The named hypothesis an exponent tuple violates.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Rejection {
    #[error("theta = {theta} not in (0,1)")]
    ThetaNotInOpenUnit { theta: String },
    #[error("theta = {theta} < j/k = {lower}")]
    ThetaBelowRatio { theta: String, lower: String },
    #[error("theta = {theta} > 1")]
    ThetaAboveOne { theta: String },
    #[error("q = {q} not in [1,inf]")]
    QOutOfRange { q: String },
    #[error("q = inf not covered when p and r are both Hölder exponents")]
    QInfiniteHolderPair,
    #[error("r = {r} is {class}")]
    ROutOfScale { r: String, class: String },
    #[error("p = {p} is {class}")]
    POutOfScale { p: String, class: String },
    #[error("r = {r} in (0,1)")]
    RBelowOne { r: String },
    #[error("p = {p} not in (-inf,0) or (1,inf]")]
    PNotAllowed { p: String },
    #[error("critical: r^({index}) = {n} = n")]
    Critical { index: u32, n: u32 },
}

/// Admissibility decision with the failing hypothesis or advisory warnings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admissibility {
    Admissible { warnings: Vec<String> },
    Inadmissible(Rejection),
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Admissibility::Admissible { .. })
    }

    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            Admissibility::Inadmissible(r) => Some(r),
            _ => None,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            Admissibility::Admissible { warnings } => warnings,
            _ => &[],
        }
    }
}

impl Serialize for Admissibility {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(None)?;
        match self {
            Admissibility::Admissible { warnings } => {
                map.serialize_entry("admissible", &true)?;
                map.serialize_entry("warnings", warnings)?;
            }
            Admissibility::Inadmissible(r) => {
                map.serialize_entry("admissible", &false)?;
                map.serialize_entry("reason", &r.to_string())?;
                map.serialize_entry("detail", r)?;
            }
        }
        map.end()
    }
}

fn boundary_warning(name: &str, e: &ExtendedExponent, n: u32) -> Option<String> {
    let minus_inv_n = -Rational64::new(1, n as i64);
    (e.rho == minus_inv_n).then(|| {
        format!("{name} = -n = {e}: closed endpoint of the Hölder range, the proof argument uses the open range")
    })
}

/// Interpolation tuple with `1/p = θ/r + (1-θ)/q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct InterpolationTuple {
    pub n: u32,
    pub r: ExtendedExponent,
    pub q: ExtendedExponent,
    #[serde(with = "rational_serde")]
    pub theta: Rational64,
    pub p: ExtendedExponent,
}

pub fn interpolation_solve(
    r: &ExtendedExponent,
    q: &ExtendedExponent,
    theta: Rational64,
    n: u32,
) -> (InterpolationTuple, Admissibility) {
    let one = Rational64::one();
    let p = ExtendedExponent::from_reciprocal(theta * r.rho + (one - theta) * q.rho);
    let tuple = InterpolationTuple { n, r: *r, q: *q, theta, p };

    let decision = (|| {
        if theta <= Rational64::zero() || theta >= one {
            return Admissibility::Inadmissible(Rejection::ThetaNotInOpenUnit {
                theta: format_rational(&theta),
            });
        }
        if q.rho.is_negative() || q.rho > one {
            return Admissibility::Inadmissible(Rejection::QOutOfRange { q: q.to_string() });
        }
        let rc = classify(r, n);
        if !rc.in_scale() {
            return Admissibility::Inadmissible(Rejection::ROutOfScale {
                r: r.to_string(),
                class: rc.to_string(),
            });
        }
        let pc = classify(&p, n);
        if !pc.in_scale() {
            return Admissibility::Inadmissible(Rejection::POutOfScale {
                p: p.to_string(),
                class: pc.to_string(),
            });
        }
        if rc == ExponentClass::Holder && pc == ExponentClass::Holder && q.is_infinite() {
            return Admissibility::Inadmissible(Rejection::QInfiniteHolderPair);
        }
        let warnings = [("r", r), ("p", &p)]
            .iter()
            .filter_map(|(name, e)| boundary_warning(name, e, n))
            .collect();
        Admissibility::Admissible { warnings }
    })();
    (tuple, decision)
}

/// `ζ = (1-θ)/(1-j/k)`, so that `θ = 1 - ζ(1 - j/k)`.
pub fn zeta_split(theta: Rational64, j: u32, k: u32) -> Result<Rational64, ExponentError> {
    if j < 1 || j >= k {
        return Err(ExponentError::DerivativeOrders { j, k });
    }
    let one = Rational64::one();
    Ok((one - theta) / (one - Rational64::new(j as i64, k as i64)))
}

/// Gagliardo–Nirenberg tuple with
/// `1/p = j/n + θ(1/r - k/n) + (1-θ)/q` and `θ = 1 - ζ(1 - j/k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GnTuple {
    pub n: u32,
    pub j: u32,
    pub k: u32,
    #[serde(with = "rational_serde")]
    pub theta: Rational64,
    pub r: ExtendedExponent,
    pub q: ExtendedExponent,
    pub p: ExtendedExponent,
    #[serde(with = "rational_serde")]
    pub zeta: Rational64,
}

pub fn gn_solve(
    n: u32,
    j: u32,
    k: u32,
    theta: Rational64,
    r: &ExtendedExponent,
    q: &ExtendedExponent,
) -> Result<(GnTuple, Admissibility), ExponentError> {
    if n == 0 {
        return Err(ExponentError::ZeroDimension);
    }
    let zeta = zeta_split(theta, j, k)?;
    let one = Rational64::one();
    let nn = Rational64::from_integer(n as i64);
    let jr = Rational64::from_integer(j as i64);
    let kr = Rational64::from_integer(k as i64);
    let rho_p = jr / nn + theta * (r.rho - kr / nn) + (one - theta) * q.rho;
    let p = ExtendedExponent::from_reciprocal(rho_p);
    let tuple = GnTuple { n, j, k, theta, r: *r, q: *q, p, zeta };

    let lower = Rational64::new(j as i64, k as i64);
    let decision = (|| {
        if theta < lower {
            return Admissibility::Inadmissible(Rejection::ThetaBelowRatio {
                theta: format_rational(&theta),
                lower: format_rational(&lower),
            });
        }
        if theta > one {
            return Admissibility::Inadmissible(Rejection::ThetaAboveOne {
                theta: format_rational(&theta),
            });
        }
        if q.rho.is_negative() || q.rho > one {
            return Admissibility::Inadmissible(Rejection::QOutOfRange { q: q.to_string() });
        }
        if r.rho > one {
            return Admissibility::Inadmissible(Rejection::RBelowOne { r: r.to_string() });
        }
        // p ∈ (-∞,0) ∪ (1,∞]  ⇔  rho_p < 1
        if rho_p >= one {
            return Admissibility::Inadmissible(Rejection::PNotAllowed { p: p.to_string() });
        }
        if let Err(c) = iterated_conjugate(r, n, k - j) {
            return Admissibility::Inadmissible(Rejection::Critical { index: c.index, n });
        }
        let mut warnings = Vec::new();
        for (name, e) in [("r", r), ("p", &p)] {
            if classify(e, n) == ExponentClass::OutOfScale(OutOfScale::HolderGap) {
                warnings.push(format!(
                    "{name} = {e} in (-n,0): admissible for Gagliardo-Nirenberg, outside the direct range of the interpolation inequality"
                ));
            }
            if let Some(w) = boundary_warning(name, e, n) {
                warnings.push(w);
            }
        }
        Admissibility::Admissible { warnings }
    })();
    Ok((tuple, decision))
}
