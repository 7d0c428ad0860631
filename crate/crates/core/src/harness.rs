//! End-to-end evaluation of inequality ratios over function families.
//!
//! An instance is an admissible exponent tuple together with the shape of
//! its right side: the interpolation inequality
//! `‖u‖_p ≤ C ‖u‖_r^θ ‖u‖_{q,∞}^{1-θ}` uses the weak norm, the
//! Gagliardo–Nirenberg inequality `‖∇^j u‖_p ≤ C ‖∇^k u‖_r^θ ‖u‖_q^{1-θ}`
//! uses the Lebesgue norm. Suprema of the ratio over a corpus are empirical
//! lower bounds for `C`; nothing here claims a value of `C`.

use std::collections::BTreeMap;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponent::{
    gn_solve, interpolation_solve, rational_serde, Admissibility, ExponentError, ExtendedExponent, GnTuple,
    InterpolationTuple, Rejection,
};
use crate::grid::{FamilySpec, Generator, GridError, GridFunction, GridSpec, ParamSet};
use crate::norm::{derivative_norm, lebesgue_norm, weak_lorentz_norm, GridMeta, NormConfig, NormError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("inadmissible exponents: {0}")]
    Inadmissible(Rejection),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("instance is for n = {instance}, grid has n = {grid}")]
    Dimension { instance: u32, grid: usize },
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Invalid(String),
}

/// Exponent data of an instance as written in instance files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSpec {
    Interpolation {
        n: u32,
        r: ExtendedExponent,
        q: ExtendedExponent,
        #[serde(with = "rational_serde")]
        theta: Rational64,
    },
    Gn {
        n: u32,
        j: u32,
        k: u32,
        #[serde(with = "rational_serde")]
        theta: Rational64,
        r: ExtendedExponent,
        q: ExtendedExponent,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Resolved {
    Interpolation(InterpolationTuple),
    Gn(GnTuple),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityInstance {
    pub spec: InstanceSpec,
    pub resolved: Resolved,
    pub admissibility: Admissibility,
    /// Right side uses `‖u‖_{q,∞}` (interpolation) rather than `‖u‖_q` (GN).
    pub rhs_weak: bool,
    /// θ used in the right-side exponents; equals the tuple's θ unless perturbed.
    pub theta_rhs: f64,
    pub perturbed: bool,
}

fn resolve(spec: &InstanceSpec) -> Result<(Resolved, Admissibility), HarnessError> {
    Ok(match spec {
        InstanceSpec::Interpolation { n, r, q, theta } => {
            let (t, a) = interpolation_solve(r, q, *theta, *n);
            (Resolved::Interpolation(t), a)
        }
        InstanceSpec::Gn { n, j, k, theta, r, q } => {
            let (t, a) = gn_solve(*n, *j, *k, *theta, r, q)?;
            (Resolved::Gn(t), a)
        }
    })
}

fn to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl InequalityInstance {
    /// Resolves `p` and rejects inadmissible tuples.
    pub fn new(spec: InstanceSpec) -> Result<Self, HarnessError> {
        let inst = Self::unchecked(spec)?;
        if let Some(r) = inst.admissibility.rejection() {
            return Err(HarnessError::Inadmissible(r.clone()));
        }
        Ok(inst)
    }

    /// Resolves without rejecting; ratios still refuse inadmissible instances.
    pub fn unchecked(spec: InstanceSpec) -> Result<Self, HarnessError> {
        let (resolved, admissibility) = resolve(&spec)?;
        let theta = match &spec {
            InstanceSpec::Interpolation { theta, .. } | InstanceSpec::Gn { theta, .. } => to_f64(theta),
        };
        Ok(InequalityInstance {
            rhs_weak: matches!(spec, InstanceSpec::Interpolation { .. }),
            spec,
            resolved,
            admissibility,
            theta_rhs: theta,
            perturbed: false,
        })
    }

    pub fn interpolation(n: u32, r: &str, q: &str, theta: &str) -> Result<Self, HarnessError> {
        Self::new(InstanceSpec::Interpolation {
            n,
            r: r.parse()?,
            q: q.parse()?,
            theta: crate::exponent::parse_rational(theta)?,
        })
    }

    pub fn gn(n: u32, j: u32, k: u32, theta: &str, r: &str, q: &str) -> Result<Self, HarnessError> {
        Self::new(InstanceSpec::Gn {
            n,
            j,
            k,
            theta: crate::exponent::parse_rational(theta)?,
            r: r.parse()?,
            q: q.parse()?,
        })
    }

    /// Shifts θ in the right-side exponents only, leaving `p` as resolved.
    /// The result violates the exponent relation; it serves as a negative control.
    pub fn perturb_theta(&self, delta: f64) -> Self {
        InequalityInstance { theta_rhs: self.theta_rhs + delta, perturbed: true, ..self.clone() }
    }

    pub fn n(&self) -> u32 {
        match self.resolved {
            Resolved::Interpolation(t) => t.n,
            Resolved::Gn(t) => t.n,
        }
    }

    pub fn p(&self) -> ExtendedExponent {
        match self.resolved {
            Resolved::Interpolation(t) => t.p,
            Resolved::Gn(t) => t.p,
        }
    }

    pub fn r(&self) -> ExtendedExponent {
        match self.resolved {
            Resolved::Interpolation(t) => t.r,
            Resolved::Gn(t) => t.r,
        }
    }

    pub fn q(&self) -> ExtendedExponent {
        match self.resolved {
            Resolved::Interpolation(t) => t.q,
            Resolved::Gn(t) => t.q,
        }
    }

    /// `(j, k)`: derivative orders on the left and in the `r` factor.
    pub fn orders(&self) -> (usize, usize) {
        match self.resolved {
            Resolved::Interpolation(_) => (0, 0),
            Resolved::Gn(t) => (t.j as usize, t.k as usize),
        }
    }
}

/// One evaluated ratio.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRecord {
    pub lhs: f64,
    /// `‖∇^k u‖_r` (or `‖u‖_r`).
    pub r_factor: f64,
    /// `‖u‖_{q,∞}` or `‖u‖_q`.
    pub q_factor: f64,
    pub rhs: f64,
    /// `lhs / rhs`; `None` when the right side vanishes.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

pub fn ratio(u: &GridFunction, inst: &InequalityInstance) -> Result<RatioRecord, HarnessError> {
    ratio_with(u, inst, &NormConfig::default())
}

pub fn ratio_with(u: &GridFunction, inst: &InequalityInstance, cfg: &NormConfig) -> Result<RatioRecord, HarnessError> {
    if let Some(r) = inst.admissibility.rejection() {
        return Err(HarnessError::Inadmissible(r.clone()));
    }
    if inst.n() as usize != u.n() {
        return Err(HarnessError::Dimension { instance: inst.n(), grid: u.n() });
    }
    let (j, k) = inst.orders();
    let lhs = derivative_norm(u, j, &inst.p(), cfg)?.value;
    let r_factor = derivative_norm(u, k, &inst.r(), cfg)?.value;
    let q = inst.q().p_f64();
    let q_factor = if inst.rhs_weak { weak_lorentz_norm(u, q)? } else { lebesgue_norm(u, q)? }.value;
    let theta = inst.theta_rhs;
    let rhs = r_factor.powf(theta) * q_factor.powf(1.0 - theta);
    let degenerate = !(rhs > 0.0 && rhs.is_finite());
    Ok(RatioRecord { lhs, r_factor, q_factor, rhs, ratio: (!degenerate).then(|| lhs / rhs), degenerate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub params: ParamSet,
    #[serde(flatten)]
    pub ratio: RatioRecord,
}

/// Ratios of one family at one resolution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub grid: GridMeta,
    /// Empirical lower bound for the constant.
    pub sup_ratio: Option<f64>,
    pub argmax_seed: Option<u64>,
    pub evaluated: usize,
    pub degenerate: usize,
    /// No sample produced a usable ratio.
    pub empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    pub instance: InequalityInstance,
    pub records: Vec<SampleRecord>,
    pub aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined: Option<Aggregate>,
    /// `|sup_h - sup_{h/2}| / sup_h`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    pub invariants: Vec<Invariant>,
}

impl RatioReport {
    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepConfig {
    pub refine: bool,
    pub norm: NormConfig,
    /// Scale residual allowed by the invariance invariant.
    pub scale_tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { refine: true, norm: NormConfig::default(), scale_tolerance: 1e-8 }
    }
}

fn evaluate(family: &FamilySpec, inst: &InequalityInstance, cfg: &NormConfig) -> Result<Vec<SampleRecord>, HarnessError> {
    family.validate()?;
    family
        .seeds
        .par_iter()
        .map(|&seed| {
            let s = family.sample(seed)?;
            let r = ratio_with(&s.function, inst, cfg)?;
            Ok(SampleRecord { seed, params: s.params, ratio: r })
        })
        .collect()
}

fn aggregate(records: &[SampleRecord], grid: &GridSpec) -> Aggregate {
    let mut sup: Option<(f64, u64)> = None;
    let mut degenerate = 0;
    for rec in records {
        match rec.ratio.ratio {
            None => degenerate += 1,
            Some(r) => {
                if sup.is_none_or(|(s, _)| r > s) {
                    sup = Some((r, rec.seed));
                }
            }
        }
    }
    Aggregate {
        grid: GridMeta { shape: grid.shape.clone(), spacing: grid.spacing.clone() },
        sup_ratio: sup.map(|s| s.0),
        argmax_seed: sup.map(|s| s.1),
        evaluated: records.len(),
        degenerate,
        empty: sup.is_none(),
    }
}

/// Ratios over every seed of `family`, at `h` and (optionally) `h/2`.
pub fn sweep(family: &FamilySpec, inst: &InequalityInstance, cfg: &SweepConfig) -> Result<RatioReport, HarnessError> {
    let records = evaluate(family, inst, &cfg.norm)?;
    let agg = aggregate(&records, &family.grid);
    let refined = if cfg.refine {
        let fine = family.with_grid(family.grid.refined());
        Some(aggregate(&evaluate(&fine, inst, &cfg.norm)?, &fine.grid))
    } else {
        None
    };
    let drift = match (&agg.sup_ratio, refined.as_ref().and_then(|r| r.sup_ratio)) {
        (Some(a), Some(b)) => Some((a - b).abs() / a),
        _ => None,
    };

    let mut invariants = Vec::new();
    let consistent = records.iter().all(|r| match r.ratio.ratio {
        Some(v) => v == r.ratio.lhs / r.ratio.rhs,
        None => r.ratio.degenerate,
    });
    invariants.push(Invariant {
        name: "ratio-consistency".into(),
        passed: consistent,
        detail: "every ratio equals lhs / rhs".into(),
    });
    if let Some(seed) = agg.argmax_seed {
        let u = family.sample(seed)?.function;
        let suite = scale_invariance_suite(
            inst,
            &u,
            &[Rational64::new(1, 2), Rational64::from_integer(2)],
            &[1.0 / 3.0, 7.0],
            &cfg.norm,
        )?;
        invariants.push(Invariant {
            name: "scale-invariance".into(),
            passed: suite.max_residual < cfg.scale_tolerance,
            detail: format!("max log-ratio residual {:e} at the argmax sample", suite.max_residual),
        });
    }
    if inst.rhs_weak && inst.q().p_f64() >= 1.0 {
        let q = inst.q().p_f64();
        let violations = family
            .seeds
            .par_iter()
            .map(|&seed| -> Result<usize, HarnessError> {
                let u = family.sample(seed)?.function;
                Ok((weak_lorentz_norm(&u, q)?.value > lebesgue_norm(&u, q)?.value) as usize)
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .sum::<usize>();
        invariants.push(Invariant {
            name: "weak-below-strong".into(),
            passed: violations == 0,
            detail: format!("{violations} samples with weak norm above the Lebesgue norm"),
        });
    }
    Ok(RatioReport { instance: inst.clone(), records, aggregate: agg, refined, drift, invariants })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub lambda: String,
    pub c: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub base_ratio: Option<f64>,
    pub entries: Vec<SuiteEntry>,
    pub max_residual: f64,
}

/// `max |log ratio(c·u_λ) - log ratio(u)|` over the `λ × c` lattice.
pub fn scale_invariance_suite(
    inst: &InequalityInstance,
    u: &GridFunction,
    lambdas: &[Rational64],
    scalars: &[f64],
    cfg: &NormConfig,
) -> Result<SuiteReport, HarnessError> {
    let base = ratio_with(u, inst, cfg)?.ratio;
    let pairs: Vec<(Rational64, f64)> =
        lambdas.iter().flat_map(|l| scalars.iter().map(move |c| (*l, *c))).collect();
    let entries = pairs
        .par_iter()
        .map(|&(lambda, c)| -> Result<SuiteEntry, HarnessError> {
            let v = u.dilate(lambda)?.scale(c);
            let r = ratio_with(&v, inst, cfg)?.ratio;
            let residual = match (base, r) {
                (Some(a), Some(b)) => (b.ln() - a.ln()).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            };
            Ok(SuiteEntry { lambda: crate::exponent::format_rational(&lambda), c, residual })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    Ok(SuiteReport { base_ratio: base, entries, max_residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub params: ParamSet,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    pub best_params: ParamSet,
    pub best_value: Option<f64>,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
    /// Free parameters along which the objective barely changes at the optimum.
    pub flat_directions: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
    /// Initial simplex edge, as a fraction of each parameter range.
    pub step: f64,
    /// Probe offset for flatness, as a fraction of each range.
    pub probe: f64,
    /// A direction is flat when both probes move `log value` by at most this.
    pub flat_tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { budget: 60, seed: 0, step: 0.25, probe: 0.05, flat_tolerance: 1e-2 }
    }
}

/// Nelder–Mead maximization of `objective` over the free parameters of
/// `family`, in coordinates normalized to `[0, 1]` per parameter.
pub fn maximize(
    family: &FamilySpec,
    cfg: &SearchConfig,
    objective: impl Fn(&GridFunction) -> Option<f64>,
) -> Result<SearchReport, HarnessError> {
    if cfg.budget == 0 {
        return Err(HarnessError::Invalid("search budget must be at least one evaluation".into()));
    }
    let start = family.draw(cfg.seed)?;
    let free = family.free_parameters();
    let d = free.len();
    let to_params = |x: &[f64]| -> ParamSet {
        let mut p = start.clone();
        for ((name, lo, hi), xi) in free.iter().zip(x) {
            p.insert(name.clone(), lo + xi.clamp(0.0, 1.0) * (hi - lo));
        }
        p
    };
    let mut trace: Vec<TraceEntry> = Vec::new();
    let eval = |x: &[f64], trace: &mut Vec<TraceEntry>| -> Result<f64, HarnessError> {
        let params = to_params(x);
        let u = family.render(&params, cfg.seed)?.function;
        let value = objective(&u);
        trace.push(TraceEntry { evaluation: trace.len(), params, value });
        Ok(value.filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY))
    };

    let x0: Vec<f64> = free
        .iter()
        .map(|(name, lo, hi)| if hi > lo { (start[name] - lo) / (hi - lo) } else { 0.0 })
        .collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let f0 = eval(&x0, &mut trace)?;
    simplex.push((x0.clone(), f0));
    for i in 0..d {
        if trace.len() >= cfg.budget {
            break;
        }
        let mut x = x0.clone();
        x[i] = if x[i] + cfg.step <= 1.0 { x[i] + cfg.step } else { x[i] - cfg.step };
        let f = eval(&x, &mut trace)?;
        simplex.push((x, f));
    }

    if simplex.len() == d + 1 && d > 0 {
        while trace.len() < cfg.budget {
            // descending by value (maximization), ties by position for determinism
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.partial_cmp(&b.0).unwrap()));
            let centroid: Vec<f64> =
                (0..d).map(|k| simplex[..d].iter().map(|s| s.0[k]).sum::<f64>() / d as f64).collect();
            let worst = simplex[d].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&worst.0).map(|(c, w)| (c + t * (c - w)).clamp(0.0, 1.0)).collect()
            };
            let xr = along(1.0);
            let fr = eval(&xr, &mut trace)?;
            if fr > simplex[0].1 {
                if trace.len() >= cfg.budget {
                    simplex[d] = (xr, fr);
                    break;
                }
                let xe = along(2.0);
                let fe = eval(&xe, &mut trace)?;
                simplex[d] = if fe > fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr > simplex[d - 1].1 {
                simplex[d] = (xr, fr);
                continue;
            }
            if trace.len() >= cfg.budget {
                break;
            }
            let (xc, fc) = if fr > worst.1 {
                let x = along(0.5);
                let f = eval(&x, &mut trace)?;
                (x, f)
            } else {
                let x = along(-0.5);
                let f = eval(&x, &mut trace)?;
                (x, f)
            };
            if fc > worst.1.max(fr) {
                simplex[d] = (xc, fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for s in simplex.iter_mut().skip(1) {
                if trace.len() >= cfg.budget {
                    break;
                }
                s.0 = best.iter().zip(&s.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                s.1 = eval(&s.0, &mut trace)?;
            }
        }
    }

    let best = trace
        .iter()
        .filter(|t| t.value.is_some_and(|v| v.is_finite()))
        .max_by(|a, b| a.value.unwrap().total_cmp(&b.value.unwrap()).then(b.evaluation.cmp(&a.evaluation)))
        .cloned()
        .unwrap_or_else(|| trace[0].clone());
    let evaluations = trace.len();

    let mut flat_directions = Vec::new();
    if let Some(bv) = best.value.filter(|v| *v > 0.0) {
        for (name, lo, hi) in &free {
            let center = best.params[name];
            let delta = cfg.probe * (hi - lo);
            let mut flat = true;
            for v in [center - delta, center + delta] {
                let mut p = best.params.clone();
                p.insert(name.clone(), v.clamp(*lo, *hi));
                let val = objective(&family.render(&p, cfg.seed)?.function);
                if !val.is_some_and(|x| x > 0.0 && (x.ln() - bv.ln()).abs() <= cfg.flat_tolerance) {
                    flat = false;
                }
            }
            if flat {
                flat_directions.push(name.clone());
            }
        }
    }

    Ok(SearchReport {
        best_params: best.params,
        best_value: best.value,
        evaluations,
        trace,
        flat_directions,
    })
}

/// Searches the family parameters for a large inequality ratio.
pub fn extremizer_search(
    inst: &InequalityInstance,
    family: &FamilySpec,
    cfg: &SearchConfig,
) -> Result<SearchReport, HarnessError> {
    if let Some(r) = inst.admissibility.rejection() {
        return Err(HarnessError::Inadmissible(r.clone()));
    }
    maximize(family, cfg, |u| ratio(u, inst).ok().and_then(|r| r.ratio))
}

/// Mixed corpus of smooth, kinked, peaked and rough compactly supported
/// functions on `[-half, half]^n` with `cells` intervals per axis.
pub fn standard_corpus(n: usize, half: f64, cells: usize, per_family: usize) -> Result<Vec<GridFunction>, HarnessError> {
    let grid = GridSpec::centered(n, half, cells);
    let w = half / 2.0;
    let families = [
        FamilySpec::new(Generator::Gaussian, grid.clone()).range("width", 0.2 * w, w).range("amplitude", 0.5, 2.0),
        FamilySpec::new(Generator::Bump, grid.clone()).range("width", 0.5 * w, 1.5 * w).range("center", -0.2, 0.2),
        FamilySpec::new(Generator::Tent, grid.clone()).range("width", 0.5 * w, 1.5 * w).range("amplitude", -2.0, 2.0),
        FamilySpec::new(Generator::PowerPeak, grid.clone()).range("cap", 2.0, 16.0).range("exponent", 0.3, 1.0),
        FamilySpec::new(Generator::SmoothedNoise, grid.clone()).range("width", 0.1 * w, 0.4 * w),
        FamilySpec::new(Generator::MultiBump, grid.clone()).range("count", 1.0, 5.0).fixed("width", 0.6 * w),
    ];
    let mut out = Vec::with_capacity(per_family * families.len());
    for (k, fam) in families.iter().enumerate() {
        let fam = fam.clone().seeds((0..per_family as u64).map(|s| s + 1000 * k as u64));
        out.extend(fam.samples()?.into_iter().map(|s| s.function));
    }
    Ok(out)
}

/// Caps rayon's global pool at `INTERP_LAB_THREADS` when set. Returns the cap.
pub fn init_threads_from_env() -> Result<Option<usize>, HarnessError> {
    let Ok(v) = std::env::var("INTERP_LAB_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| HarnessError::Invalid(format!("INTERP_LAB_THREADS must be a positive integer, got `{v}`")))?;
    // a second initialization keeps the first pool, which is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// The summary used by reports: parameter names mapped to `[lo, hi]`.
pub fn free_parameter_table(family: &FamilySpec) -> BTreeMap<String, [f64; 2]> {
    family.free_parameters().into_iter().map(|(n, lo, hi)| (n, [lo, hi])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent(h: f64) -> GridFunction {
        let m = (4.0 / h).round() as usize + 1;
        GridFunction::from_fn(vec![m], vec![h], vec![-2.0], |x| (1.0 - x[0].abs()).max(0.0)).unwrap()
    }

    fn interp() -> InequalityInstance {
        InequalityInstance::interpolation(1, "-1", "1", "1/2").unwrap()
    }

    fn gn() -> InequalityInstance {
        InequalityInstance::gn(1, 1, 2, "1/2", "2", "2").unwrap()
    }

    #[test]
    fn resolves_and_rejects() {
        assert_eq!(interp().p(), ExtendedExponent::INFINITY);
        assert_eq!(gn().p(), "2".parse().unwrap());
        assert!(interp().rhs_weak && !gn().rhs_weak);
        let err = InequalityInstance::interpolation(1, "-1", "1", "1").unwrap_err();
        assert_eq!(err.to_string(), "inadmissible exponents: theta = 1 not in (0,1)");
        let err = InequalityInstance::gn(4, 1, 3, "1/2", "2", "2").unwrap_err();
        assert_eq!(err.to_string(), "inadmissible exponents: critical: r^(1) = 4 = n");
        let un = InequalityInstance::unchecked(InstanceSpec::Interpolation {
            n: 1,
            r: "-1".parse().unwrap(),
            q: "1".parse().unwrap(),
            theta: Rational64::from_integer(1),
        })
        .unwrap();
        assert!(matches!(ratio(&tent(0.01), &un), Err(HarnessError::Inadmissible(_))));
    }

    #[test]
    fn instance_json() {
        let spec: InstanceSpec =
            serde_json::from_str(r#"{"kind":"gn","n":1,"j":1,"k":2,"theta":"1/2","r":2,"q":"2"}"#).unwrap();
        let inst = InequalityInstance::new(spec).unwrap();
        assert_eq!(inst, gn());
        let j = serde_json::to_value(&inst).unwrap();
        assert_eq!(j["resolved"]["p"], "2");
        assert_eq!(j["admissibility"]["admissible"], true);
    }

    #[test]
    fn tent_ratio_is_sqrt2() {
        let r = ratio(&tent(1.0 / 256.0), &interp()).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!((r.r_factor - 1.0).abs() < 1e-12);
        assert!((r.q_factor - 0.5).abs() < 1e-2);
        assert!((r.ratio.unwrap() - 2f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn zero_function_is_degenerate() {
        let r = ratio(&tent(0.01).scale(0.0), &interp()).unwrap();
        assert!(r.degenerate && r.ratio.is_none());
    }

    #[test]
    fn invariance_and_negative_control() {
        let u = tent(1.0 / 64.0);
        let lambdas = [Rational64::new(1, 2), Rational64::from_integer(2), Rational64::from_integer(3)];
        for inst in [interp(), gn()] {
            let s = scale_invariance_suite(&inst, &u, &lambdas, &[1.0 / 3.0, 7.0], &NormConfig::default()).unwrap();
            assert!(s.max_residual < 1e-8, "{}", s.max_residual);
            let id = scale_invariance_suite(&inst, &u, &[Rational64::from_integer(1)], &[1.0], &NormConfig::default())
                .unwrap();
            assert_eq!(id.max_residual, 0.0);
        }
        // |Δθ|·|log λ|·n·|1/r - 1/q| with r = -1, q = 1
        let bad = interp().perturb_theta(1e-2);
        let s = scale_invariance_suite(&bad, &u, &[Rational64::from_integer(3)], &[1.0], &NormConfig::default())
            .unwrap();
        let predicted = 1e-2 * 3f64.ln() * 2.0;
        assert!((s.max_residual - predicted).abs() < 1e-9 * predicted.max(1.0), "{} vs {predicted}", s.max_residual);
    }

    #[test]
    fn homogeneity_to_ulps() {
        let u = tent(1.0 / 64.0);
        for inst in [interp(), gn()] {
            let a = ratio(&u, &inst).unwrap().ratio.unwrap();
            for c in [5.0, 1.0 / 3.0, -7.0] {
                let b = ratio(&u.scale(c), &inst).unwrap().ratio.unwrap();
                assert!((a - b).abs() <= 4.0 * f64::EPSILON * a, "c={c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sweeps() {
        let tents = FamilySpec::new(Generator::Tent, GridSpec::centered(1, 2.0, 256))
            .range("width", 0.3, 1.0)
            .seeds(0..6);
        let rep = sweep(&tents, &interp(), &SweepConfig::default()).unwrap();
        assert!(rep.invariants_hold(), "{:?}", rep.invariants);
        let sup = rep.aggregate.sup_ratio.unwrap();
        assert!(sup >= 2f64.sqrt() * 0.98);
        assert!(rep.drift.unwrap() < 0.05);
        assert_eq!(rep.records.len(), 6);

        let zeros = FamilySpec::new(Generator::Tent, GridSpec::centered(1, 2.0, 64))
            .fixed("amplitude", 0.0)
            .seeds(0..3);
        let rep = sweep(&zeros, &interp(), &SweepConfig::default()).unwrap();
        assert!(rep.aggregate.empty);
        assert_eq!(rep.aggregate.degenerate, 3);

        let gauss = FamilySpec::new(Generator::Gaussian, GridSpec::centered(1, 8.0, 1024))
            .range("width", 0.5, 2.0)
            .seeds(0..5);
        let rep = sweep(&gauss, &gn(), &SweepConfig::default()).unwrap();
        assert!(rep.aggregate.sup_ratio.unwrap() <= 1.2);
        assert!(rep.drift.unwrap() < 0.05);
    }

    #[test]
    fn sweep_is_schedule_independent() {
        let fam = FamilySpec::new(Generator::SmoothedNoise, GridSpec::centered(1, 2.0, 128))
            .range("width", 0.1, 0.4)
            .seeds(0..8);
        let a = sweep(&fam, &interp(), &SweepConfig::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sweep(&fam, &interp(), &SweepConfig::default()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn search_budget_one_returns_initial_sample() {
        let fam = FamilySpec::new(Generator::Tent, GridSpec::centered(1, 2.0, 128)).range("width", 0.3, 1.0);
        let cfg = SearchConfig { budget: 1, seed: 5, ..Default::default() };
        let rep = extremizer_search(&interp(), &fam, &cfg).unwrap();
        assert_eq!(rep.evaluations, 1);
        assert_eq!(rep.best_params, fam.draw(5).unwrap());
    }

    #[test]
    fn tent_width_is_flat() {
        let fam = FamilySpec::new(Generator::Tent, GridSpec::centered(1, 2.0, 512)).range("width", 0.3, 1.0);
        let rep = extremizer_search(&interp(), &fam, &SearchConfig { budget: 20, ..Default::default() }).unwrap();
        assert!(rep.flat_directions.contains(&"width".to_string()), "{:?}", rep.flat_directions);
        assert!((rep.best_value.unwrap() - 2f64.sqrt()).abs() < 0.03);
        assert!(rep.evaluations <= 20);
    }
}
