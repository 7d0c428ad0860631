//! Scalar functions sampled on uniform axis-aligned grids in one to three
//! dimensions.
//!
//! Values are stored row-major (last axis fastest). A grid keeps its spacing
//! and origin together with an exact rational zoom factor: `dilate` only
//! multiplies the zoom, so the effective spacing of `dilate(dilate(u, a), b)`
//! and `dilate(u, a*b)` are produced by the same float operations.
//! `scale` works the same way: the unscaled samples are kept next to the
//! gain, and norms factor the gain out, so `‖c·u‖ = |c|·‖u‖` up to the final
//! multiplication.

mod diff;
mod family;
mod io;

pub use diff::{gradient, gradient_with, DerivativeTensor, DiffConfig};
pub use family::{generate, FamilySpec, Generator, GridSpec, ParamRange, ParamSet, Sample};
pub use io::{read_gfn, read_gfn_file, write_gfn, write_gfn_file};
pub(crate) use io::{parse_header, write_header};

use std::borrow::Cow;
use std::sync::Arc;

use num_rational::Rational64;
use num_traits::{One, Signed};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension {0} unsupported (expected 1, 2 or 3)")]
    Dimension(usize),
    #[error("every axis needs at least {min} samples, got shape {shape:?}")]
    Shape { shape: Vec<usize>, min: usize },
    #[error("spacing must be finite and strictly positive, got {0:?}")]
    Spacing(Vec<f64>),
    #[error("metadata lengths disagree with dimension {0}")]
    Metadata(usize),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite sample value at index {0}")]
    NonFinite(usize),
    #[error("dilation factor must be positive, got {0}")]
    Dilation(Rational64),
    #[error("derivative order {order} exceeds the configured maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("unsupported finite-difference accuracy {0} (2 or 4)")]
    Accuracy(usize),
    #[error("family parameter `{name}`: {msg}")]
    Param { name: String, msg: String },
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A real function sampled on a uniform grid with (expected) compact support
/// inside the box.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    shape: Vec<usize>,
    base_spacing: Vec<f64>,
    base_origin: Vec<f64>,
    zoom: Rational64,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    /// Effective samples, `gain · raw`.
    values: Vec<f64>,
    gain: f64,
    /// Samples before `scale`; `None` when the gain is one.
    raw: Option<Arc<Vec<f64>>>,
}

pub(crate) fn check_meta(shape: &[usize], spacing: &[f64], origin: &[f64]) -> Result<(), GridError> {
    let n = shape.len();
    if !(1..=3).contains(&n) {
        return Err(GridError::Dimension(n));
    }
    if spacing.len() != n || origin.len() != n {
        return Err(GridError::Metadata(n));
    }
    if shape.iter().any(|&s| s < 2) {
        return Err(GridError::Shape { shape: shape.to_vec(), min: 2 });
    }
    if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(GridError::Spacing(spacing.to_vec()));
    }
    if origin.iter().any(|o| !o.is_finite()) {
        return Err(GridError::Metadata(n));
    }
    Ok(())
}

fn zoomed(base: &[f64], zoom: &Rational64) -> Vec<f64> {
    let num = *zoom.numer() as f64;
    let den = *zoom.denom() as f64;
    base.iter().map(|b| b * den / num).collect()
}

impl GridFunction {
    pub fn new(
        shape: Vec<usize>,
        spacing: Vec<f64>,
        origin: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, GridError> {
        check_meta(&shape, &spacing, &origin)?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(GridError::Length { expected, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(GridFunction {
            base_spacing: spacing.clone(),
            base_origin: origin.clone(),
            zoom: Rational64::one(),
            shape,
            spacing,
            origin,
            values,
            gain: 1.0,
            raw: None,
        })
    }

    /// Sample `f` at every grid node.
    pub fn from_fn(
        shape: Vec<usize>,
        spacing: Vec<f64>,
        origin: Vec<f64>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, GridError> {
        check_meta(&shape, &spacing, &origin)?;
        let len: usize = shape.iter().product();
        let mut x = vec![0.0; shape.len()];
        let mut values = Vec::with_capacity(len);
        for flat in 0..len {
            let idx = unravel(&shape, flat);
            for k in 0..shape.len() {
                x[k] = origin[k] + idx[k] as f64 * spacing[k];
            }
            values.push(f(&x));
        }
        Self::new(shape, spacing, origin, values)
    }

    /// Same metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        GridFunction {
            shape: self.shape.clone(),
            base_spacing: self.base_spacing.clone(),
            base_origin: self.base_origin.clone(),
            zoom: self.zoom,
            spacing: self.spacing.clone(),
            origin: self.origin.clone(),
            values,
            gain: 1.0,
            raw: None,
        }
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn zoom(&self) -> Rational64 {
        self.zoom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let idx = unravel(&self.shape, flat);
        let mut x = [0.0; 3];
        for k in 0..self.n() {
            x[k] = self.origin[k] + idx[k] as f64 * self.spacing[k];
        }
        x
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Largest magnitude on the outer layer of the box; zero for compactly
    /// supported data.
    pub fn boundary_max(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            if on_boundary(&self.shape, flat) {
                m = m.max(v.abs());
            }
        }
        m
    }

    /// `u_λ(x) = u(λx)`: same samples, spacing and origin divided by `λ`.
    pub fn dilate(&self, lambda: Rational64) -> Result<Self, GridError> {
        if !lambda.is_positive() {
            return Err(GridError::Dilation(lambda));
        }
        let zoom = self.zoom * lambda;
        Ok(GridFunction {
            spacing: zoomed(&self.base_spacing, &zoom),
            origin: zoomed(&self.base_origin, &zoom),
            zoom,
            ..self.clone()
        })
    }

    /// `c·u`. The gain accumulates; the unscaled samples are retained.
    pub fn scale(&self, c: f64) -> Self {
        let raw = self.raw.clone().unwrap_or_else(|| Arc::new(self.values.clone()));
        let gain = self.gain * c;
        if gain == 1.0 {
            return self.with_values(raw.as_ref().clone());
        }
        let mut out = self.with_values(raw.iter().map(|v| gain * v).collect());
        out.gain = gain;
        out.raw = Some(raw);
        out
    }

    /// Accumulated `scale` factor.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// The function before any `scale`, with the same grid.
    pub fn unscaled(&self) -> Cow<'_, GridFunction> {
        match &self.raw {
            None => Cow::Borrowed(self),
            Some(raw) => Cow::Owned(self.with_values(raw.as_ref().clone())),
        }
    }

    pub fn strides(&self) -> [usize; 3] {
        strides(&self.shape)
    }
}

pub(crate) fn strides(shape: &[usize]) -> [usize; 3] {
    let mut s = [0usize; 3];
    let mut acc = 1;
    for k in (0..shape.len()).rev() {
        s[k] = acc;
        acc *= shape[k];
    }
    s
}

pub(crate) fn unravel(shape: &[usize], mut flat: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

pub(crate) fn on_boundary(shape: &[usize], flat: usize) -> bool {
    let idx = unravel(shape, flat);
    (0..shape.len()).any(|k| idx[k] == 0 || idx[k] + 1 == shape[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::lebesgue_norm;

    fn ramp() -> GridFunction {
        GridFunction::from_fn(vec![65], vec![1.0 / 64.0], vec![-0.5], |x| {
            (1.0 - 4.0 * x[0] * x[0]).max(0.0)
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_metadata() {
        assert!(GridFunction::new(vec![1], vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GridFunction::new(vec![2], vec![0.0], vec![0.0], vec![0.0; 2]).is_err());
        assert!(GridFunction::new(vec![2], vec![1.0], vec![0.0], vec![0.0; 3]).is_err());
        assert!(GridFunction::new(vec![2; 4], vec![1.0; 4], vec![0.0; 4], vec![0.0; 16]).is_err());
        assert!(GridFunction::new(vec![2], vec![1.0], vec![0.0], vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn dilation_is_metadata_only() {
        let u = ramp();
        assert_eq!(u.dilate(Rational64::one()).unwrap(), u);
        let d = u.dilate(Rational64::from_integer(2)).unwrap();
        assert_eq!(d.values(), u.values());
        assert_eq!(d.spacing(), &[1.0 / 128.0]);
        assert_eq!(d.origin(), &[-0.25]);
        assert!(u.dilate(Rational64::from_integer(0)).is_err());
        assert!(u.dilate(Rational64::new(-1, 2)).is_err());
    }

    #[test]
    fn dilation_composes_exactly() {
        let u = ramp();
        for (a, b) in [((1, 3), (7, 2)), ((2, 1), (1, 2)), ((5, 7), (3, 11))] {
            let la = Rational64::new(a.0, a.1);
            let lb = Rational64::new(b.0, b.1);
            let twice = u.dilate(la).unwrap().dilate(lb).unwrap();
            let once = u.dilate(la * lb).unwrap();
            assert_eq!(twice, once);
        }
    }

    #[test]
    fn dilation_scales_lebesgue_norms() {
        let u = ramp();
        for lam in [Rational64::new(1, 2), Rational64::from_integer(3)] {
            let l = *lam.numer() as f64 / *lam.denom() as f64;
            let d = u.dilate(lam).unwrap();
            for p in [1.0, 2.0, 3.5] {
                let a = lebesgue_norm(&d, p).unwrap().value;
                let b = l.powf(-1.0 / p) * lebesgue_norm(&u, p).unwrap().value;
                assert!((a - b).abs() <= 1e-14 * b, "p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn scaling_values() {
        let u = ramp();
        assert!(u.scale(0.0).is_zero());
        let neg = u.scale(-1.0);
        for (a, b) in neg.values().iter().zip(u.values()) {
            assert_eq!(a.abs(), b.abs());
        }
    }

    #[test]
    fn boundary_layer() {
        let u = ramp();
        assert_eq!(u.boundary_max(), 0.0);
        let v = GridFunction::from_fn(vec![4, 5], vec![1.0, 1.0], vec![0.0, 0.0], |_| 1.0).unwrap();
        assert_eq!(v.boundary_max(), 1.0);
        let inner = (0..v.len()).filter(|&f| !on_boundary(v.shape(), f)).count();
        assert_eq!(inner, 2 * 3);
    }

    #[test]
    fn index_helpers_agree() {
        let shape = [3usize, 4, 5];
        let st = strides(&shape);
        for flat in 0..60 {
            let i = unravel(&shape, flat);
            assert_eq!(i[0] * st[0] + i[1] * st[1] + i[2] * st[2], flat);
        }
    }
}
