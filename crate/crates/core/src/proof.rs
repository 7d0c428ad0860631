//! Numerical versions of the devices used to prove the interpolation
//! inequality with a Hölder-class endpoint: truncation at a level, the
//! layer-cake tail bound, the balancing level, the pointwise estimate, the
//! ball inclusion, and the near/far split of the Hölder quotient.
//!
//! Throughout, `‖u‖_r` for `r ≤ -n` is the node-pair Hölder semi-norm of `u`
//! with exponent `α = -n/r`. Using node pairs (rather than a finite-difference
//! gradient at `r = -n`) keeps every pair inequality the arguments rely on
//! exact on grid data.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::grid::GridFunction;
use crate::norm::holder::{dist_pow, seminorm_bb, seminorm_filtered, NodeField};
use crate::norm::{DistributionFunction, GridMeta};

#[derive(Debug, Error, PartialEq)]
pub enum ProofError {
    #[error("level s must be positive and finite, got {0}")]
    Level(f64),
    #[error("superlevel set {{|u| > {0}}} is empty")]
    EmptySuperlevel(f64),
    #[error("the zero function has no balancing level or pointwise bound")]
    ZeroFunction,
    #[error("{0}")]
    Exponents(String),
    #[error("node index {index} out of range for {len} nodes")]
    Node { index: usize, len: usize },
    #[error("u vanishes at node {0}")]
    VanishingCenter(usize),
}

fn bad(msg: impl Into<String>) -> ProofError {
    ProofError::Exponents(msg.into())
}

/// Machine-readable outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: &'static str,
    pub params: BTreeMap<&'static str, f64>,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub grid: GridMeta,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn meta(u: &GridFunction) -> GridMeta {
    GridMeta { shape: u.shape().to_vec(), spacing: u.spacing().to_vec() }
}

fn params<const N: usize>(kv: [(&'static str, f64); N]) -> BTreeMap<&'static str, f64> {
    kv.into_iter().collect()
}

fn check_hoelder_r(r: f64, n: usize) -> Result<f64, ProofError> {
    if !(r.is_finite() && r <= -(n as f64)) {
        return Err(bad(format!("r = {r} must satisfy r <= -n = -{n}")));
    }
    Ok(-(n as f64) / r)
}

/// `‖u‖_r` for `r ≤ -n`: the node-pair semi-norm with `α = -n/r`.
pub fn hoelder_branch_norm(u: &GridFunction, r: f64) -> Result<f64, ProofError> {
    let alpha = check_hoelder_r(r, u.n())?;
    Ok(seminorm_bb(&NodeField::from(u.unscaled().as_ref()), alpha).0 * u.gain().abs())
}

fn weak_norm(u: &GridFunction, q: f64) -> f64 {
    DistributionFunction::new(&u.unscaled()).weak_lorentz(q) * u.gain().abs()
}

fn lp_power(values: &[f64], vol: f64, p: f64) -> f64 {
    values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol
}

#[derive(Clone, Debug)]
pub struct TruncationPair {
    pub s: f64,
    /// `sgn(u)·min(|u|, s)`.
    pub truncated: GridFunction,
    /// `u - u_s`, nonzero exactly on `{|u| > s}`.
    pub tail: GridFunction,
    pub superlevel_measure: f64,
}

pub fn truncate(u: &GridFunction, s: f64) -> Result<TruncationPair, ProofError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(ProofError::Level(s));
    }
    let truncated: Vec<f64> = u.values().iter().map(|v| v.signum() * v.abs().min(s)).collect();
    let tail = u.values().iter().zip(&truncated).map(|(v, t)| v - t).collect();
    Ok(TruncationPair {
        s,
        truncated: u.with_values(truncated),
        tail: u.with_values(tail),
        superlevel_measure: crate::norm::distribution_function(u, s),
    })
}

/// `‖u - u_s‖_p^p ≤ C ‖u‖_r^p |E_s|^{1 - p/r}` for `r ≤ -n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub r_norm: f64,
    pub superlevel_measure: f64,
}

pub fn layer_cake_tail_bound(u: &GridFunction, s: f64, p: f64, r: f64) -> Result<TailBound, ProofError> {
    check_hoelder_r(r, u.n())?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(bad(format!("p = {p} must be finite and >= 1")));
    }
    let t = truncate(u, s)?;
    if t.superlevel_measure == 0.0 {
        return Err(ProofError::EmptySuperlevel(s));
    }
    let lhs = lp_power(t.tail.values(), u.cell_volume(), p);
    let r_norm = hoelder_branch_norm(u, r)?;
    let rhs = r_norm.powf(p) * t.superlevel_measure.powf(1.0 - p / r);
    Ok(TailBound { lhs, rhs, ratio: lhs / rhs, r_norm, superlevel_measure: t.superlevel_measure })
}

impl TailBound {
    pub fn record(&self, u: &GridFunction, s: f64, p: f64, r: f64) -> CheckRecord {
        CheckRecord {
            check: "layer-cake-tail",
            params: params([("s", s), ("p", p), ("r", r)]),
            lhs: self.lhs,
            rhs: self.rhs,
            ratio: Some(self.ratio),
            residual: None,
            grid: meta(u),
            flags: vec![],
        }
    }
}

/// `‖u_s‖_p^p ≤ p/(p-q) · s^{p-q} ‖u‖_{q,∞}^q`.
///
/// On grids the layer-cake identity holds exactly for the step function
/// `λ`, and `t^q λ(t) ≤ ‖u‖_{q,∞}^q` for every `t`, so the ratio never
/// exceeds one beyond rounding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub weak_norm: f64,
}

pub fn tail_moment_bound(u: &GridFunction, s: f64, p: f64, q: f64) -> Result<MomentBound, ProofError> {
    if !(q >= 1.0 && p > q && p.is_finite()) {
        return Err(bad(format!("need p > q >= 1 with p finite, got p = {p}, q = {q}")));
    }
    let t = truncate(u, s)?;
    let lhs = lp_power(t.truncated.values(), u.cell_volume(), p);
    let weak_norm = weak_norm(u, q);
    let rhs = p / (p - q) * s.powf(p - q) * weak_norm.powf(q);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(MomentBound { lhs, rhs, ratio, weak_norm })
}

impl MomentBound {
    pub fn record(&self, u: &GridFunction, s: f64, p: f64, q: f64) -> CheckRecord {
        CheckRecord {
            check: "tail-moment",
            params: params([("s", s), ("p", p), ("q", q)]),
            lhs: self.lhs,
            rhs: self.rhs,
            ratio: Some(self.ratio),
            residual: None,
            grid: meta(u),
            flags: vec![],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceBoundary {
    /// `lhs` lies below `rhs(s)` for every sampled `s > 0`.
    BelowRange,
}

/// Level `s` at which `‖u‖_r^p / ‖u‖_{q,∞}^q = s^{p-q} λ(s)^{p/r - 1}`.
///
/// `λ` is a step function, so the map on the right jumps at every sample
/// level; the search returns the final bracket `[lo, hi]` with
/// `rhs(lo) ≤ lhs < rhs(hi)`, and `step` is the log-size of the jump inside it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceResult {
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub step: f64,
    pub monotone: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BalanceBoundary>,
    pub evaluations: usize,
}

impl BalanceResult {
    pub fn record(&self, u: &GridFunction, p: f64, q: f64, r: f64) -> CheckRecord {
        CheckRecord {
            check: "balance",
            params: params([("p", p), ("q", q), ("r", r), ("s", self.s)]),
            lhs: self.lhs,
            rhs: self.rhs,
            ratio: None,
            residual: Some(self.residual),
            grid: meta(u),
            flags: self.boundary.iter().map(|_| "boundary".to_string()).collect(),
        }
    }
}

fn check_case_one(p: f64, q: f64, r: f64, n: usize) -> Result<(), ProofError> {
    check_hoelder_r(r, n)?;
    if !(q >= 1.0 && p > q && p.is_finite()) {
        return Err(bad(format!("balancing needs finite p > q >= 1, got p = {p}, q = {q}")));
    }
    Ok(())
}

pub fn balance_s(u: &GridFunction, p: f64, q: f64, r: f64) -> Result<BalanceResult, ProofError> {
    check_case_one(p, q, r, u.n())?;
    if u.is_zero() {
        return Err(ProofError::ZeroFunction);
    }
    let dist = DistributionFunction::new(u);
    let r_norm = hoelder_branch_norm(u, r)?;
    let lhs = r_norm.powf(p) / weak_norm(u, q).powf(q);
    balance_with_lhs(&dist, p, q, r, lhs)
}

/// Bisection in log `s` against a prescribed left side.
pub fn balance_with_lhs(
    dist: &DistributionFunction,
    p: f64,
    q: f64,
    r: f64,
    lhs: f64,
) -> Result<BalanceResult, ProofError> {
    if dist.max() == 0.0 {
        return Err(ProofError::ZeroFunction);
    }
    if !(lhs > 0.0 && lhs.is_finite()) {
        return Err(bad(format!("balancing target must be positive and finite, got {lhs}")));
    }
    let log_rhs = |s: f64| -> f64 {
        let lam = dist.measure_above(s);
        if lam == 0.0 {
            f64::INFINITY
        } else {
            (p - q) * s.ln() + (p / r - 1.0) * lam.ln()
        }
    };
    let target = lhs.ln();
    let mut hi = dist.max();
    let mut lo = hi * 2f64.powi(-64);
    let mut evals = vec![(lo, log_rhs(lo)), (hi, f64::INFINITY)];
    let boundary = (evals[0].1 > target).then_some(BalanceBoundary::BelowRange);
    if boundary.is_none() {
        loop {
            let m = (lo * hi).sqrt();
            if m <= lo || m >= hi {
                break;
            }
            let v = log_rhs(m);
            evals.push((m, v));
            if v <= target {
                lo = m;
            } else {
                hi = m;
            }
        }
    }
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = evals.windows(2).all(|w| w[0].1 <= w[1].1);
    let (rl, rh) = (log_rhs(lo), log_rhs(hi));
    let (s, lr) = if (target - rl).abs() <= (rh - target).abs() { (lo, rl) } else { (hi, rh) };
    Ok(BalanceResult {
        s,
        lhs,
        rhs: lr.exp(),
        residual: (target - lr).abs(),
        bracket: (lo, hi),
        step: rh - rl,
        monotone,
        boundary,
        evaluations: evals.len(),
    })
}

/// `max|u| ≤ C ‖u‖_{q,∞}^{q/(q-r)} ‖u‖_r^{r/(r-q)}`, reporting `C`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointwiseEstimate {
    pub max_value: f64,
    pub bound: f64,
    pub constant: f64,
    pub weak_norm: f64,
    pub r_norm: f64,
}

pub fn pointwise_estimate_check(u: &GridFunction, q: f64, r: f64) -> Result<PointwiseEstimate, ProofError> {
    check_hoelder_r(r, u.n())?;
    if !(q >= 1.0 && q.is_finite()) {
        return Err(bad(format!("q = {q} must lie in [1, inf)")));
    }
    if u.is_zero() {
        return Err(ProofError::ZeroFunction);
    }
    let weak_norm = weak_norm(u, q);
    let r_norm = hoelder_branch_norm(u, r)?;
    let bound = weak_norm.powf(q / (q - r)) * r_norm.powf(r / (r - q));
    let max_value = u.max_abs();
    Ok(PointwiseEstimate { max_value, bound, constant: max_value / bound, weak_norm, r_norm })
}

impl PointwiseEstimate {
    pub fn record(&self, u: &GridFunction, q: f64, r: f64) -> CheckRecord {
        CheckRecord {
            check: "pointwise-estimate",
            params: params([("q", q), ("r", r)]),
            lhs: self.max_value,
            rhs: self.bound,
            ratio: Some(self.constant),
            residual: None,
            grid: meta(u),
            flags: vec![],
        }
    }
}

/// Outcome of testing `B(x, ρ) ⊂ {|u| > |u(x)|/2}` on grid nodes, where
/// `ρ = (|u(x)|/2)^{-r/n} ‖u‖_r^{r/n}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallInclusion {
    pub center: usize,
    pub radius: f64,
    pub examined: usize,
    pub violations: usize,
    /// `‖u‖_r = 0`: the radius is unbounded and nothing is checked.
    pub degenerate: bool,
}

/// Holds `‖u‖_r` so that many centers can be probed against one function.
pub struct BallProbe<'a> {
    u: &'a GridFunction,
    alpha: f64,
    r_norm: f64,
}

/// Relative shrink applied to the radius before enumeration, covering the
/// rounding of `ρ` and of node distances.
const RADIUS_MARGIN: f64 = 1e-12;

impl<'a> BallProbe<'a> {
    pub fn new(u: &'a GridFunction, r: f64) -> Result<Self, ProofError> {
        let alpha = check_hoelder_r(r, u.n())?;
        let r_norm = seminorm_bb(&NodeField::from(u), alpha).0;
        Ok(BallProbe { u, alpha, r_norm })
    }

    pub fn r_norm(&self) -> f64 {
        self.r_norm
    }

    /// `shrink` scales the radius; any value in `(0, 1]` must also give zero violations.
    pub fn check(&self, x: usize, shrink: f64) -> Result<BallInclusion, ProofError> {
        let u = self.u;
        let vals = u.values();
        if x >= vals.len() {
            return Err(ProofError::Node { index: x, len: vals.len() });
        }
        let ux = vals[x].abs();
        if ux == 0.0 {
            return Err(ProofError::VanishingCenter(x));
        }
        if self.r_norm == 0.0 {
            return Ok(BallInclusion { center: x, radius: f64::INFINITY, examined: 0, violations: 0, degenerate: true });
        }
        let radius = (ux / (2.0 * self.r_norm)).powf(1.0 / self.alpha) * shrink;
        let reach = radius * (1.0 - RADIUS_MARGIN);
        let shape = u.shape();
        let h = u.spacing();
        let c = crate::grid::unravel(shape, x);
        let st = u.strides();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for k in 0..u.n() {
            let w = (reach / h[k]).floor().min(shape[k] as f64) as usize;
            lo[k] = c[k].saturating_sub(w);
            hi[k] = (c[k] + w).min(shape[k] - 1);
        }
        for k in u.n()..3 {
            hi[k] = 0;
        }
        let (mut examined, mut violations) = (0, 0);
        for i0 in lo[0]..=hi[0] {
            for i1 in lo[1]..=hi[1] {
                for i2 in lo[2]..=hi[2] {
                    let idx = [i0, i1, i2];
                    let mut d2 = 0.0;
                    for k in 0..u.n() {
                        let d = idx[k].abs_diff(c[k]) as f64 * h[k];
                        d2 += d * d;
                    }
                    if d2.sqrt() >= reach {
                        continue;
                    }
                    examined += 1;
                    let y = i0 * st[0] + i1 * st[1] + i2 * st[2];
                    if vals[y].abs() <= ux / 2.0 {
                        violations += 1;
                    }
                }
            }
        }
        Ok(BallInclusion { center: x, radius, examined, violations, degenerate: false })
    }
}

pub fn ball_inclusion_check(u: &GridFunction, r: f64, x: usize) -> Result<BallInclusion, ProofError> {
    BallProbe::new(u, r)?.check(x, 1.0)
}

/// Near/far split of the `p`-Hölder quotient at distance `s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitReport {
    pub s: f64,
    /// Sup over pairs with `|x - y| ≤ s`.
    pub near: f64,
    /// Sup over pairs with `|x - y| > s`.
    pub far: f64,
    pub full: f64,
    /// `‖u‖_r s^{-n/r + n/p}`.
    pub near_bound: f64,
    /// `s^{n/p} ‖u‖_{q,∞}^{q/(q-r)} ‖u‖_r^{r/(r-q)}`.
    pub far_bound: f64,
    /// `2 max|u| s^{n/p}`.
    pub far_direct_bound: f64,
    /// `far / far_bound`.
    pub far_constant: f64,
    pub near_vacuous: bool,
    pub far_vacuous: bool,
}

struct SplitInputs {
    alpha_p: f64,
    r_norm: f64,
    weak_norm: f64,
    n: f64,
}

fn split_inputs(u: &GridFunction, p: f64, r: f64, q: f64) -> Result<SplitInputs, ProofError> {
    let n = u.n();
    check_hoelder_r(r, n)?;
    let alpha_p = check_hoelder_r(p, n)?;
    if !(q >= 1.0 && q.is_finite()) {
        return Err(bad(format!("q = {q} must lie in [1, inf)")));
    }
    Ok(SplitInputs {
        alpha_p,
        r_norm: hoelder_branch_norm(u, r)?,
        weak_norm: weak_norm(u, q),
        n: n as f64,
    })
}

fn diameter(u: &GridFunction) -> f64 {
    u.shape()
        .iter()
        .zip(u.spacing())
        .map(|(m, h)| ((m - 1) as f64 * h).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn split_at(u: &GridFunction, p: f64, r: f64, q: f64, s: f64, inp: &SplitInputs) -> SplitReport {
    let field = NodeField::from(u);
    let near = seminorm_filtered(&field, inp.alpha_p, |d| d <= s).0;
    let far = seminorm_filtered(&field, inp.alpha_p, |d| d > s).0;
    let full = seminorm_bb(&field, inp.alpha_p).0;
    let near_bound = inp.r_norm * s.powf(-inp.n / r + inp.n / p);
    let sp = s.powf(inp.n / p);
    let far_bound = sp * inp.weak_norm.powf(q / (q - r)) * inp.r_norm.powf(r / (r - q));
    let hmin = u.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    SplitReport {
        s,
        near,
        far,
        full,
        near_bound,
        far_bound,
        far_direct_bound: 2.0 * u.max_abs() * sp,
        far_constant: if far == 0.0 { 0.0 } else { far / far_bound },
        near_vacuous: s < hmin,
        far_vacuous: s >= diameter(u),
    }
}

pub fn split_seminorm_check(u: &GridFunction, p: f64, r: f64, q: f64, s: f64) -> Result<SplitReport, ProofError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(ProofError::Level(s));
    }
    let inp = split_inputs(u, p, r, q)?;
    Ok(split_at(u, p, r, q, s, &inp))
}

/// The split evaluated at `s* = (‖u‖_{q,∞}/‖u‖_r)^{-qr/(n(q-r))}` and
/// compared with `‖u‖_r^θ ‖u‖_{q,∞}^{1-θ}`, where `1/p = θ/r + (1-θ)/q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalSplit {
    pub split: SplitReport,
    pub theta: f64,
    pub interpolation_rhs: f64,
    /// `(near + far) / interpolation_rhs`.
    pub factor: f64,
}

pub fn split_at_optimal_level(u: &GridFunction, p: f64, r: f64, q: f64) -> Result<OptimalSplit, ProofError> {
    let inp = split_inputs(u, p, r, q)?;
    if inp.r_norm == 0.0 || inp.weak_norm == 0.0 {
        return Err(ProofError::ZeroFunction);
    }
    let theta = (1.0 / p - 1.0 / q) / (1.0 / r - 1.0 / q);
    if !(theta > 0.0 && theta < 1.0) {
        return Err(bad(format!("1/p = θ/r + (1-θ)/q gives θ = {theta}, outside (0, 1)")));
    }
    let s = (inp.weak_norm / inp.r_norm).powf(-q * r / (inp.n * (q - r)));
    let split = split_at(u, p, r, q, s, &inp);
    let interpolation_rhs = inp.r_norm.powf(theta) * inp.weak_norm.powf(1.0 - theta);
    let factor = (split.near + split.far) / interpolation_rhs;
    Ok(OptimalSplit { split, theta, interpolation_rhs, factor })
}

impl SplitReport {
    pub fn record(&self, u: &GridFunction, p: f64, r: f64, q: f64) -> CheckRecord {
        let mut flags = vec![];
        if self.near_vacuous {
            flags.push("near-pairs-empty".into());
        }
        if self.far_vacuous {
            flags.push("far-pairs-empty".into());
        }
        CheckRecord {
            check: "split-seminorm",
            params: params([("p", p), ("r", r), ("q", q), ("s", self.s)]),
            lhs: self.near + self.far,
            rhs: self.near_bound + self.far_bound,
            ratio: Some(self.far_constant),
            residual: None,
            grid: meta(u),
            flags,
        }
    }
}

/// Convenience for the quotient of a single node pair, used by reports.
pub fn pair_quotient(u: &GridFunction, i: usize, j: usize, alpha: f64) -> f64 {
    let f = NodeField::from(u);
    f.difference(i, j) / dist_pow(f.dist2(i, j), alpha)
}
