//! Rasterized sets, exact Euclidean distance transforms, inner and outer
//! parallel sets, and the comparison of inner parallel measures with those
//! of the equal-measure ball.
//!
//! Cells are represented by their centers. Distances run between centers,
//! so `(M)_0 = M` holds exactly and rasterization error is confined to a
//! perimeter-times-spacing band.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{check_meta, parse_header, strides, unravel, write_header, GridError, GridFunction};

#[derive(Debug, Error)]
pub enum IsoError {
    #[error("the boundary frame of the box must contain a cell outside the set")]
    FullFrame,
    #[error("mask has {got} cells, shape needs {expected}")]
    Length { expected: usize, got: usize },
    #[error("distance to an empty region is undefined")]
    EmptyTarget,
    #[error("parallel-set distance must be >= 0, got {0}")]
    Distance(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A union of grid cells inside a box.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterSet {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    mask: Vec<bool>,
}

impl RasterSet {
    /// Rejects masks that cover the whole boundary frame.
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, mask: Vec<bool>) -> Result<Self, IsoError> {
        let s = Self::unchecked(shape, spacing, origin, mask)?;
        if !s.frame_has_gap() {
            return Err(IsoError::FullFrame);
        }
        Ok(s)
    }

    fn unchecked(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, mask: Vec<bool>) -> Result<Self, IsoError> {
        check_meta(&shape, &spacing, &origin)?;
        let expected: usize = shape.iter().product();
        if mask.len() != expected {
            return Err(IsoError::Length { expected, got: mask.len() });
        }
        Ok(RasterSet { shape, spacing, origin, mask })
    }

    /// Cells whose center satisfies `inside`.
    pub fn from_fn(
        shape: Vec<usize>,
        spacing: Vec<f64>,
        origin: Vec<f64>,
        inside: impl Fn(&[f64]) -> bool,
    ) -> Result<Self, IsoError> {
        let u = GridFunction::from_fn(shape, spacing, origin, |x| if inside(x) { 1.0 } else { 0.0 })?;
        Self::threshold(&u, 0.5)
    }

    /// `{|u| > level}` on the grid of `u`.
    pub fn threshold(u: &GridFunction, level: f64) -> Result<Self, IsoError> {
        Self::new(
            u.shape().to_vec(),
            u.spacing().to_vec(),
            u.origin().to_vec(),
            u.values().iter().map(|v| v.abs() > level).collect(),
        )
    }

    /// Centered ball of the given radius on a cube `[-half, half]^n` with `cells` cells per axis.
    pub fn ball(n: usize, half: f64, cells: usize, radius: f64) -> Result<Self, IsoError> {
        let h = 2.0 * half / cells as f64;
        Self::from_fn(vec![cells; n], vec![h; n], vec![-half + 0.5 * h; n], |x| {
            x.iter().map(|c| c * c).sum::<f64>() < radius * radius
        })
    }

    fn frame_has_gap(&self) -> bool {
        (0..self.mask.len()).any(|f| !self.mask[f] && crate::grid::on_boundary(&self.shape, f))
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

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.cell_volume()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Every cell of `self` is in `other`.
    pub fn is_subset(&self, other: &RasterSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }

    fn with_mask(&self, mask: Vec<bool>) -> RasterSet {
        RasterSet { mask, ..self.clone() }
    }

    /// Cells of the set with a face neighbour outside it (or on the box edge).
    pub fn boundary_cells(&self) -> usize {
        let st = strides(&self.shape);
        (0..self.mask.len())
            .filter(|&f| {
                self.mask[f] && {
                    let idx = unravel(&self.shape, f);
                    (0..self.n()).any(|k| {
                        idx[k] == 0 || idx[k] + 1 == self.shape[k] || !self.mask[f - st[k]] || !self.mask[f + st[k]]
                    })
                }
            })
            .count()
    }

    /// Boundary-cell count times `h^{n-1}`, `h` the largest spacing.
    pub fn perimeter_proxy(&self) -> f64 {
        self.boundary_cells() as f64 * self.max_spacing().powi(self.n() as i32 - 1)
    }

    fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `dist(x, M^c)`.
    ToComplement,
    /// `dist(x, M)`.
    ToSet,
}

/// Euclidean distances between cell centers, one per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub values: Vec<f64>,
}

/// Lower envelope of the parabolas `((i - p)·h)^2 + f[p]` over the finite
/// entries of `f`, evaluated at every `i`.
fn envelope_1d(f: &[f64], h: f64) -> Vec<f64> {
    let m = f.len();
    let mut out = vec![f64::INFINITY; m];
    let mut v: Vec<usize> = Vec::with_capacity(m);
    let mut z: Vec<f64> = Vec::with_capacity(m + 1);
    let key = |p: usize| f[p] + (p as f64 * h) * (p as f64 * h);
    for q in 0..m {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * h;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let xp = p as f64 * h;
                    let s = (key(q) - key(p)) / (2.0 * (xq - xp));
                    if s <= *z.last().expect("z tracks v") {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        return out;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let xi = i as f64 * h;
        while k + 1 < v.len() && z[k + 1] < xi {
            k += 1;
        }
        let mut best = f64::INFINITY;
        // the float breakpoints can misplace a tie by one parabola
        for &p in &v[k.saturating_sub(1)..(k + 2).min(v.len())] {
            let d = i.abs_diff(p) as f64 * h;
            best = best.min(d * d + f[p]);
        }
        *o = best;
    }
    out
}

/// Squared distances to the cells where `target` holds, by one envelope pass per axis.
fn squared_distance(shape: &[usize], spacing: &[f64], target: &[bool]) -> Vec<f64> {
    let mut d: Vec<f64> = target.iter().map(|t| if *t { 0.0 } else { f64::INFINITY }).collect();
    let st = strides(shape);
    for k in 0..shape.len() {
        let starts: Vec<usize> = (0..d.len()).filter(|&f| unravel(shape, f)[k] == 0).collect();
        let m = shape[k];
        let lines: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&s| {
                let line: Vec<f64> = (0..m).map(|i| d[s + i * st[k]]).collect();
                envelope_1d(&line, spacing[k])
            })
            .collect();
        for (s, line) in starts.iter().zip(lines) {
            for (i, v) in line.into_iter().enumerate() {
                d[s + i * st[k]] = v;
            }
        }
    }
    d
}

/// Exact Euclidean distance from every cell center to the nearest center of
/// the complement (`ToComplement`) or of the set (`ToSet`).
pub fn distance_transform(set: &RasterSet, dir: Direction) -> Result<DistanceField, IsoError> {
    let target: Vec<bool> = match dir {
        Direction::ToComplement => set.mask.iter().map(|b| !b).collect(),
        Direction::ToSet => set.mask.clone(),
    };
    if !target.iter().any(|t| *t) {
        return Err(IsoError::EmptyTarget);
    }
    let values = squared_distance(&set.shape, &set.spacing, &target).into_iter().map(f64::sqrt).collect();
    Ok(DistanceField { shape: set.shape.clone(), spacing: set.spacing.clone(), values })
}

/// `(M)_t = {x : dist(x, M^c) > t}`.
pub fn inner_parallel(set: &RasterSet, t: f64) -> Result<RasterSet, IsoError> {
    if !(t >= 0.0) {
        return Err(IsoError::Distance(t));
    }
    let d = distance_transform(set, Direction::ToComplement)?;
    Ok(set.with_mask(d.values.iter().map(|v| *v > t).collect()))
}

/// `(M)^t = {x : dist(x, M) < t}`, clipped to the box. May cover the frame.
pub fn outer_parallel(set: &RasterSet, t: f64) -> Result<RasterSet, IsoError> {
    if !(t >= 0.0) {
        return Err(IsoError::Distance(t));
    }
    if set.is_empty() {
        return Ok(set.clone());
    }
    let d = distance_transform(set, Direction::ToSet)?;
    Ok(set.with_mask(d.values.iter().map(|v| *v < t).collect()))
}

/// Volume of the unit ball in dimension `n ≤ 3`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("unit ball volume requested for n = {n}"),
    }
}

/// `|(B)_t|` for the ball `B` of measure `v`: `ω_n max(ρ - t, 0)^n`.
pub fn ball_inner_measure(v: f64, t: f64, n: usize) -> f64 {
    let w = unit_ball_volume(n);
    if t == 0.0 {
        return v;
    }
    let rho = (v / w).powf(1.0 / n as f64);
    w * (rho - t).max(0.0).powi(n as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallComparison {
    pub t: f64,
    /// `|(S)_t|` on the raster.
    pub inner_measure: f64,
    /// `|(B)_t|` for the ball of measure `|S|`.
    pub ball_measure: f64,
    pub tolerance: f64,
    /// `inner_measure - ball_measure`; positive values are excesses.
    pub margin: f64,
    pub violation: bool,
}

/// Compares `|(S)_t|` with `|(B)_t|` for each `t`, allowing a
/// rasterization band of `√n · perimeter_proxy · h`: cell-center distances
/// are off by up to half a cell diagonal on each of the two sets.
pub fn ball_comparison_check(set: &RasterSet, ts: &[f64]) -> Result<Vec<BallComparison>, IsoError> {
    if set.is_empty() {
        return Err(IsoError::EmptyTarget);
    }
    let d = distance_transform(set, Direction::ToComplement)?;
    let v = set.measure();
    let vol = set.cell_volume();
    let tol = (set.n() as f64).sqrt() * set.perimeter_proxy() * set.max_spacing();
    ts.par_iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(IsoError::Distance(t));
            }
            let inner = d.values.iter().filter(|x| **x > t).count() as f64 * vol;
            let ball = ball_inner_measure(v, t, set.n());
            let margin = inner - ball;
            Ok(BallComparison { t, inner_measure: inner, ball_measure: ball, tolerance: tol, margin, violation: margin > tol })
        })
        .collect()
}

pub fn write_rsn(w: &mut impl Write, set: &RasterSet) -> Result<(), IsoError> {
    write_header(w, "RSN1", &set.shape, &set.spacing, &set.origin).map_err(GridError::from)?;
    let body: Vec<u8> = set.mask.iter().map(|b| *b as u8).collect();
    w.write_all(&body).map_err(GridError::from)?;
    Ok(())
}

pub fn read_rsn(r: &mut impl Read) -> Result<RasterSet, IsoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(GridError::from)?;
    let h = parse_header(&bytes, "RSN1")?;
    let body = &bytes[h.body_offset..];
    let mut mask = Vec::with_capacity(body.len());
    for b in body {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => return Err(GridError::Format(format!("mask byte {other} is not 0 or 1")).into()),
        }
    }
    RasterSet::new(h.shape, h.spacing, h.origin, mask)
}

pub fn write_rsn_file(path: impl AsRef<Path>, set: &RasterSet) -> Result<(), IsoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(GridError::from)?);
    write_rsn(&mut f, set)?;
    f.flush().map_err(GridError::from)?;
    Ok(())
}

pub fn read_rsn_file(path: impl AsRef<Path>) -> Result<RasterSet, IsoError> {
    read_rsn(&mut std::fs::File::open(path).map_err(GridError::from)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(set: &RasterSet, dir: Direction) -> Vec<f64> {
        let n = set.n();
        let targets: Vec<[usize; 3]> = (0..set.mask.len())
            .filter(|&f| match dir {
                Direction::ToComplement => !set.mask[f],
                Direction::ToSet => set.mask[f],
            })
            .map(|f| unravel(&set.shape, f))
            .collect();
        (0..set.mask.len())
            .map(|f| {
                let a = unravel(&set.shape, f);
                targets
                    .iter()
                    .map(|b| {
                        let mut s = 0.0;
                        for k in 0..n {
                            let d = a[k].abs_diff(b[k]) as f64 * set.spacing[k];
                            s += d * d;
                        }
                        s
                    })
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    }

    fn mask_strategy() -> impl Strategy<Value = RasterSet> {
        (1usize..=3)
            .prop_flat_map(|n| {
                let dims = match n {
                    1 => proptest::collection::vec(2usize..=33, 1),
                    2 => proptest::collection::vec(2usize..=17, 2),
                    _ => proptest::collection::vec(2usize..=7, 3),
                };
                (dims, proptest::collection::vec(0.1f64..2.0, n), 0.0f64..1.0)
            })
            .prop_flat_map(|(shape, spacing, density)| {
                let len: usize = shape.iter().product();
                (Just(shape), Just(spacing), proptest::collection::vec(proptest::bool::weighted(density), len))
            })
            .prop_map(|(shape, spacing, mut mask)| {
                mask[0] = false;
                let n = shape.len();
                RasterSet::new(shape, spacing, vec![0.0; n], mask).unwrap()
            })
    }

    proptest! {
        #[test]
        fn transform_matches_brute_force(set in mask_strategy()) {
            let fast = distance_transform(&set, Direction::ToComplement).unwrap();
            let slow = brute(&set, Direction::ToComplement);
            for (a, b) in fast.values.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs(), "{} vs {}", a, b);
            }
            if !set.is_empty() {
                let fast = distance_transform(&set, Direction::ToSet).unwrap();
                let slow = brute(&set, Direction::ToSet);
                for (a, b) in fast.values.iter().zip(&slow) {
                    prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
                }
            }
        }

        #[test]
        fn parallel_sets_are_monotone_and_nested(set in mask_strategy(), t1 in 0.0f64..3.0, dt in 0.0f64..2.0) {
            let t2 = t1 + dt;
            let in1 = inner_parallel(&set, t1).unwrap();
            let in2 = inner_parallel(&set, t2).unwrap();
            prop_assert!(in2.is_subset(&in1));
            prop_assert!(in1.is_subset(&set));
            let out1 = outer_parallel(&set, t1).unwrap();
            let out2 = outer_parallel(&set, t2).unwrap();
            prop_assert!(out1.is_subset(&out2));
            // ((S)_t)^t ⊂ S
            prop_assert!(outer_parallel(&in1, t1).unwrap().is_subset(&set));
        }
    }

    #[test]
    fn single_cell_field() {
        let mut mask = vec![false; 33 * 33];
        mask[16 * 33 + 16] = true;
        let set = RasterSet::new(vec![33, 33], vec![0.5, 0.5], vec![0.0, 0.0], mask).unwrap();
        let d = distance_transform(&set, Direction::ToSet).unwrap();
        for f in 0..d.values.len() {
            let i = unravel(&set.shape, f);
            let e = (((i[0] as f64 - 16.0) * 0.5).powi(2) + ((i[1] as f64 - 16.0) * 0.5).powi(2)).sqrt();
            assert_eq!(d.values[f], e);
        }
    }

    #[test]
    fn interval_inner_distance() {
        // cells 0 and m-1 are outside; inner distance is min(i, m-1-i)·h
        let m = 21;
        let h = 0.25;
        let mask: Vec<bool> = (0..m).map(|i| i > 0 && i + 1 < m).collect();
        let set = RasterSet::new(vec![m], vec![h], vec![0.0], mask).unwrap();
        let d = distance_transform(&set, Direction::ToComplement).unwrap();
        for i in 0..m {
            assert_eq!(d.values[i], i.min(m - 1 - i) as f64 * h);
        }
    }

    #[test]
    fn zero_levels() {
        let set = RasterSet::ball(2, 1.0, 32, 0.7).unwrap();
        assert_eq!(inner_parallel(&set, 0.0).unwrap(), set);
        assert!(outer_parallel(&set, 0.0).unwrap().is_empty());
        let inside = distance_transform(&set, Direction::ToComplement).unwrap();
        let outside = distance_transform(&set, Direction::ToSet).unwrap();
        for f in 0..set.mask.len() {
            assert_eq!(inside.values[f] > 0.0, set.mask[f]);
            assert_eq!(outside.values[f] == 0.0, set.mask[f]);
        }
        let empty = RasterSet::new(vec![4], vec![1.0], vec![0.0], vec![false; 4]).unwrap();
        assert!(outer_parallel(&empty, 1.0).unwrap().is_empty());
        assert!(matches!(distance_transform(&empty, Direction::ToSet), Err(IsoError::EmptyTarget)));
        assert!(matches!(
            RasterSet::new(vec![3], vec![1.0], vec![0.0], vec![true; 3]),
            Err(IsoError::FullFrame)
        ));
    }

    #[test]
    fn ball_shrinks_to_concentric_ball() {
        let cells = 128;
        let h = 2.0 / cells as f64;
        let set = RasterSet::ball(2, 1.0, cells, 0.8).unwrap();
        let inner = inner_parallel(&set, 0.4).unwrap();
        let expect = RasterSet::ball(2, 1.0, cells, 0.4).unwrap();
        let differ = inner.mask.iter().zip(&expect.mask).filter(|(a, b)| a != b).count();
        // cells differing lie in a band of one cell around the circle of radius 0.4
        assert!((differ as f64) <= 2.0 * std::f64::consts::PI * 0.4 / h * 2.0, "{differ}");
    }

    #[test]
    fn ball_measure_examples() {
        assert_eq!(ball_inner_measure(3.0, 0.0, 2), 3.0);
        assert_eq!(ball_inner_measure(std::f64::consts::PI, 1.0, 2), 0.0);
        assert_eq!(ball_inner_measure(std::f64::consts::PI, 2.0, 2), 0.0);
        let v = ball_inner_measure(std::f64::consts::PI, 0.5, 2);
        assert!((v - std::f64::consts::PI / 4.0).abs() < 1e-15);
        assert!((ball_inner_measure(4.0, 0.5, 1) - 3.0).abs() < 1e-15);
        let v3 = 4.0 * std::f64::consts::PI / 3.0;
        assert!((ball_inner_measure(v3, 0.5, 3) - v3 / 8.0).abs() < 1e-14);
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let m = ball_inner_measure(2.0, k as f64 * 0.05, 3);
            assert!(m <= prev);
            prev = m;
        }
    }

    #[test]
    fn ball_is_its_own_comparison() {
        let set = RasterSet::ball(2, 1.0, 96, 0.75).unwrap();
        let ts: Vec<f64> = (0..16).map(|k| k as f64 * 0.05).collect();
        for r in ball_comparison_check(&set, &ts).unwrap() {
            assert!(r.margin.abs() <= r.tolerance, "t={}: {} vs {}", r.t, r.margin, r.tolerance);
        }
    }

    #[test]
    fn rsn_roundtrip() {
        let set = RasterSet::ball(3, 1.0, 9, 0.6).unwrap();
        let mut buf = Vec::new();
        write_rsn(&mut buf, &set).unwrap();
        assert!(buf.starts_with(b"RSN1\n3\n9 9 9\n"));
        assert_eq!(read_rsn(&mut buf.as_slice()).unwrap(), set);
        let mut bad = buf.clone();
        *bad.last_mut().unwrap() = 7;
        assert!(read_rsn(&mut bad.as_slice()).is_err());
    }
}
