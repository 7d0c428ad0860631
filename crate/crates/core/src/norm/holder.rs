//! Hölder semi-norm `sup |v(x) - v(y)| / |x - y|^α` over grid-node pairs.
//!
//! The naive route scans every unordered pair. The branch-and-bound route
//! walks a 2^n-ary box tree best-first over box pairs; a pair of boxes is
//! discarded when its interval bound cannot beat the incumbent. Both routes
//! evaluate a node pair with the same function, and every bound is a float
//! upper bound of the pair values it covers (all operations involved are
//! monotone), so the two maxima agree bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{strides, unravel, DerivativeTensor, GridFunction};

/// Bounds are inflated by this relative amount before pruning, so a libm
/// `powf` that is not perfectly monotone cannot cause a wrong prune.
const PRUNE_SLACK: f64 = 1e-12;
const LEAF_EXTENT: usize = 8;

/// Borrowed scalar or vector field on grid nodes.
#[derive(Clone, Debug)]
pub struct NodeField<'a> {
    pub shape: &'a [usize],
    pub spacing: &'a [f64],
    pub components: Vec<&'a [f64]>,
}

impl<'a> From<&'a GridFunction> for NodeField<'a> {
    fn from(u: &'a GridFunction) -> Self {
        NodeField { shape: u.shape(), spacing: u.spacing(), components: vec![u.values()] }
    }
}

impl<'a> From<&'a DerivativeTensor> for NodeField<'a> {
    fn from(t: &'a DerivativeTensor) -> Self {
        NodeField {
            shape: t.shape(),
            spacing: t.spacing(),
            components: t.components().iter().map(|c| c.as_slice()).collect(),
        }
    }
}

impl NodeField<'_> {
    pub fn len(&self) -> usize {
        self.components[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn n(&self) -> usize {
        self.shape.len()
    }

    /// `|v(i) - v(j)|`, Euclidean across components.
    #[inline]
    pub fn difference(&self, i: usize, j: usize) -> f64 {
        if self.components.len() == 1 {
            let c = self.components[0];
            (c[i] - c[j]).abs()
        } else {
            self.components.iter().map(|c| (c[i] - c[j]) * (c[i] - c[j])).sum::<f64>().sqrt()
        }
    }

    /// Squared Euclidean distance between nodes `i` and `j`.
    #[inline]
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        let a = unravel(self.shape, i);
        let b = unravel(self.shape, j);
        let mut gaps = [0usize; 3];
        for k in 0..self.n() {
            gaps[k] = a[k].abs_diff(b[k]);
        }
        gap_dist2(&gaps, self.spacing)
    }

    /// The quotient `|v(i) - v(j)| / |x_i - x_j|^α`.
    #[inline]
    pub fn pair_value(&self, i: usize, j: usize, alpha: f64) -> f64 {
        self.difference(i, j) / dist_pow(self.dist2(i, j), alpha)
    }
}

#[inline]
fn gap_dist2(gaps: &[usize; 3], spacing: &[f64]) -> f64 {
    let mut d2 = 0.0;
    for (k, h) in spacing.iter().enumerate() {
        let d = gaps[k] as f64 * h;
        d2 += d * d;
    }
    d2
}

/// `|x - y|^α` from the squared distance.
#[inline]
pub fn dist_pow(d2: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        d2.sqrt()
    } else {
        d2.powf(0.5 * alpha)
    }
}

/// Pair-scan bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PairStats {
    /// Node pairs whose quotient was evaluated.
    pub explored: u64,
    /// All unordered node pairs.
    pub total: u64,
    /// A maximizing pair (flat indices), if the field is not constant.
    pub argmax: Option<[usize; 2]>,
}

impl PairStats {
    pub fn explored_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.explored as f64 / self.total as f64
        }
    }
}

fn total_pairs(len: usize) -> u64 {
    (len as u64) * (len as u64 - 1) / 2
}

#[derive(Clone, Copy, PartialEq)]
struct Best {
    value: f64,
    pair: Option<[usize; 2]>,
}

impl Best {
    fn offer(&mut self, value: f64, i: usize, j: usize) {
        let pair = if i < j { [i, j] } else { [j, i] };
        if value > self.value || (value == self.value && value > 0.0 && Some(pair) < self.pair) {
            self.value = value;
            self.pair = Some(pair);
        }
    }

    fn merge(mut self, other: Best) -> Best {
        if let Some([i, j]) = other.pair {
            self.offer(other.value, i, j);
        }
        self
    }
}

const NO_BEST: Best = Best { value: 0.0, pair: None };

/// Exhaustive `O(N²)` scan over all unordered node pairs.
pub fn seminorm_naive(field: &NodeField<'_>, alpha: f64) -> (f64, PairStats) {
    let len = field.len();
    let best = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut b = NO_BEST;
            for j in i + 1..len {
                b.offer(field.pair_value(i, j, alpha), i, j);
            }
            b
        })
        .reduce(|| NO_BEST, Best::merge);
    let total = total_pairs(len);
    (best.value, PairStats { explored: total, total, argmax: best.pair })
}

/// Same as [`seminorm_naive`] restricted to pairs whose distance satisfies `keep`.
pub fn seminorm_filtered(
    field: &NodeField<'_>,
    alpha: f64,
    keep: impl Fn(f64) -> bool + Sync,
) -> (f64, PairStats) {
    let len = field.len();
    let (best, explored) = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut b = NO_BEST;
            let mut count = 0u64;
            for j in i + 1..len {
                let d2 = field.dist2(i, j);
                if keep(d2.sqrt()) {
                    count += 1;
                    b.offer(field.difference(i, j) / dist_pow(d2, alpha), i, j);
                }
            }
            (b, count)
        })
        .reduce(|| (NO_BEST, 0), |a, b| (a.0.merge(b.0), a.1 + b.1));
    (best.value, PairStats { explored, total: total_pairs(len), argmax: best.pair })
}

struct BoxNode {
    lo: [usize; 3],
    hi: [usize; 3],
    min: Vec<f64>,
    max: Vec<f64>,
    children: Vec<usize>,
    count: usize,
    /// Flat node indices, leaves only.
    members: Vec<usize>,
}

struct BoxTree {
    nodes: Vec<BoxNode>,
}

impl BoxTree {
    fn build(field: &NodeField<'_>) -> BoxTree {
        let mut tree = BoxTree { nodes: Vec::new() };
        let mut hi = [1usize; 3];
        hi[..field.n()].copy_from_slice(field.shape);
        tree.build_node(field, [0; 3], hi);
        tree
    }

    fn build_node(&mut self, field: &NodeField<'_>, lo: [usize; 3], hi: [usize; 3]) -> usize {
        let n = field.n();
        let ncomp = field.components.len();
        let split_axes: Vec<usize> = (0..n).filter(|&k| hi[k] - lo[k] > LEAF_EXTENT).collect();
        let id = self.nodes.len();
        self.nodes.push(BoxNode {
            lo,
            hi,
            min: vec![f64::INFINITY; ncomp],
            max: vec![f64::NEG_INFINITY; ncomp],
            children: Vec::new(),
            count: (0..n).map(|k| hi[k] - lo[k]).product(),
            members: Vec::new(),
        });
        if split_axes.is_empty() {
            let st = strides(field.shape);
            let mut members = Vec::with_capacity(self.nodes[id].count);
            for i0 in lo[0]..hi[0] {
                for i1 in lo[1]..hi[1] {
                    for i2 in lo[2]..hi[2] {
                        members.push(i0 * st[0] + i1 * st[1] + i2 * st[2]);
                    }
                }
            }
            let node = &mut self.nodes[id];
            for &m in &members {
                for (c, comp) in field.components.iter().enumerate() {
                    node.min[c] = node.min[c].min(comp[m]);
                    node.max[c] = node.max[c].max(comp[m]);
                }
            }
            node.members = members;
            return id;
        }
        let mut children = Vec::new();
        for mask in 0..(1usize << split_axes.len()) {
            let (mut clo, mut chi) = (lo, hi);
            for (bit, &k) in split_axes.iter().enumerate() {
                let mid = lo[k] + (hi[k] - lo[k]) / 2;
                if mask >> bit & 1 == 0 {
                    chi[k] = mid;
                } else {
                    clo[k] = mid;
                }
            }
            children.push(self.build_node(field, clo, chi));
        }
        let mut min = vec![f64::INFINITY; ncomp];
        let mut max = vec![f64::NEG_INFINITY; ncomp];
        for &c in &children {
            for k in 0..ncomp {
                min[k] = min[k].min(self.nodes[c].min[k]);
                max[k] = max[k].max(self.nodes[c].max[k]);
            }
        }
        let node = &mut self.nodes[id];
        node.min = min;
        node.max = max;
        node.children = children;
        id
    }

    fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Upper bound on the pair quotient over `a × b`; infinite for a box with itself.
    fn bound(&self, field: &NodeField<'_>, a: usize, b: usize, alpha: f64) -> f64 {
        if a == b {
            return f64::INFINITY;
        }
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        let mut gaps = [0usize; 3];
        for k in 0..field.n() {
            gaps[k] = if na.hi[k] <= nb.lo[k] {
                nb.lo[k] - (na.hi[k] - 1)
            } else if nb.hi[k] <= na.lo[k] {
                na.lo[k] - (nb.hi[k] - 1)
            } else {
                0
            };
        }
        let d2 = gap_dist2(&gaps, field.spacing);
        if d2 == 0.0 {
            return f64::INFINITY;
        }
        let num = if na.min.len() == 1 {
            (na.max[0] - nb.min[0]).max(nb.max[0] - na.min[0])
        } else {
            (0..na.min.len())
                .map(|c| {
                    let m = (na.max[c] - nb.min[c]).max(nb.max[c] - na.min[c]);
                    m * m
                })
                .sum::<f64>()
                .sqrt()
        };
        num / dist_pow(d2, alpha)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    bound: f64,
    pairs: usize,
    a: usize,
    b: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.pairs.cmp(&other.pairs))
            .then(other.a.cmp(&self.a))
            .then(other.b.cmp(&self.b))
    }
}

/// Best-first branch and bound over box pairs; same value as [`seminorm_naive`].
pub fn seminorm_bb(field: &NodeField<'_>, alpha: f64) -> (f64, PairStats) {
    let len = field.len();
    let total = total_pairs(len);
    let st = strides(field.shape);
    let mut best = NO_BEST;
    let mut explored = 0u64;

    // incumbent from axis neighbours and the extreme values of the first component
    for i in 0..len {
        let idx = unravel(field.shape, i);
        for k in 0..field.n() {
            if idx[k] + 1 < field.shape[k] {
                best.offer(field.pair_value(i, i + st[k], alpha), i, i + st[k]);
                explored += 1;
            }
        }
    }
    let c0 = field.components[0];
    let (imax, imin) = (0..len).fold((0, 0), |(a, b), i| {
        (if c0[i] > c0[a] { i } else { a }, if c0[i] < c0[b] { i } else { b })
    });
    if imax != imin {
        best.offer(field.pair_value(imax, imin, alpha), imax, imin);
        explored += 1;
    }

    let tree = BoxTree::build(field);
    let mut heap = BinaryHeap::new();
    heap.push(Candidate { bound: f64::INFINITY, pairs: tree.nodes[0].count.pow(2), a: 0, b: 0 });
    let beats = |bound: f64, best: f64| bound * (1.0 + PRUNE_SLACK) > best;

    while let Some(cand) = heap.pop() {
        if !beats(cand.bound, best.value) {
            break;
        }
        let (a, b) = (cand.a, cand.b);
        if tree.is_leaf(a) && tree.is_leaf(b) {
            let ma = &tree.nodes[a].members;
            if a == b {
                for (s, &i) in ma.iter().enumerate() {
                    for &j in &ma[s + 1..] {
                        best.offer(field.pair_value(i, j, alpha), i, j);
                    }
                }
                explored += (ma.len() * (ma.len() - 1) / 2) as u64;
            } else {
                let mb = &tree.nodes[b].members;
                for &i in ma {
                    for &j in mb {
                        best.offer(field.pair_value(i, j, alpha), i, j);
                    }
                }
                explored += (ma.len() * mb.len()) as u64;
            }
            continue;
        }
        let push = |x: usize, y: usize, heap: &mut BinaryHeap<Candidate>| {
            let bound = tree.bound(field, x, y, alpha);
            if beats(bound, best.value) {
                heap.push(Candidate { bound, pairs: tree.nodes[x].count * tree.nodes[y].count, a: x, b: y });
            }
        };
        if a == b {
            let ch = &tree.nodes[a].children;
            for s in 0..ch.len() {
                for t in s..ch.len() {
                    push(ch[s], ch[t], &mut heap);
                }
            }
        } else {
            let split_a = !tree.is_leaf(a) && (tree.is_leaf(b) || tree.nodes[a].count >= tree.nodes[b].count);
            let (split, keep) = if split_a { (a, b) } else { (b, a) };
            for &c in &tree.nodes[split].children {
                push(c, keep, &mut heap);
            }
        }
    }
    (best.value, PairStats { explored, total, argmax: best.pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(values: Vec<f64>, h: f64) -> GridFunction {
        GridFunction::new(vec![values.len()], vec![h], vec![0.0], values).unwrap()
    }

    #[test]
    fn identity_is_lipschitz_one() {
        let u = GridFunction::from_fn(vec![101], vec![0.01], vec![0.0], |x| x[0]).unwrap();
        let f = NodeField::from(&u);
        let (v, _) = seminorm_naive(&f, 1.0);
        assert!((v - 1.0).abs() < 1e-12);
        let (w, _) = seminorm_bb(&f, 1.0);
        assert_eq!(v, w);
    }

    #[test]
    fn square_root_is_half_holder() {
        let u = GridFunction::from_fn(vec![257], vec![1.0 / 256.0], vec![0.0], |x| x[0].sqrt()).unwrap();
        let f = NodeField::from(&u);
        let (v, stats) = seminorm_naive(&f, 0.5);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(stats.argmax.unwrap()[0], 0);
        assert_eq!(seminorm_bb(&f, 0.5).0, v);
    }

    #[test]
    fn constants_vanish() {
        let u = line(vec![3.0; 40], 0.1);
        let f = NodeField::from(&u);
        assert_eq!(seminorm_naive(&f, 0.7).0, 0.0);
        assert_eq!(seminorm_bb(&f, 0.7).0, 0.0);
        assert_eq!(seminorm_bb(&f, 0.7).1.argmax, None);
    }

    #[test]
    fn filtered_split_recovers_full_sup() {
        let u = GridFunction::from_fn(vec![60], vec![0.05], vec![-1.5], |x| (-x[0] * x[0] * 3.0).exp()).unwrap();
        let f = NodeField::from(&u);
        let full = seminorm_naive(&f, 0.6).0;
        let near = seminorm_filtered(&f, 0.6, |d| d <= 0.4).0;
        let far = seminorm_filtered(&f, 0.6, |d| d > 0.4).0;
        assert_eq!(near.max(far), full);
    }

    #[test]
    fn smooth_input_prunes() {
        let u = GridFunction::from_fn(vec![129, 129], vec![1.0 / 16.0; 2], vec![-4.0; 2], |x| {
            (-(x[0] * x[0] + x[1] * x[1])).exp()
        })
        .unwrap();
        let f = NodeField::from(&u);
        let (_, stats) = seminorm_bb(&f, 0.5);
        assert!(stats.explored < stats.total);
    }

    fn field_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>, usize)> {
        (1usize..=3)
            .prop_flat_map(|n| {
                let max = [0, 33, 33, 9][n];
                (proptest::collection::vec(2usize..=max, n), proptest::collection::vec(0.05f64..2.0, n), 1usize..=3)
            })
            .prop_flat_map(|(shape, spacing, ncomp)| {
                let len: usize = shape.iter().product();
                (Just(shape), Just(spacing), proptest::collection::vec(-5.0f64..5.0, len * ncomp), Just(ncomp))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bb_equals_naive((shape, spacing, vals, ncomp) in field_strategy(), alpha in 0.05f64..=1.0) {
            let len: usize = shape.iter().product();
            let comps: Vec<&[f64]> = vals.chunks(len).take(ncomp).collect();
            let f = NodeField { shape: &shape, spacing: &spacing, components: comps };
            let (a, _) = seminorm_naive(&f, alpha);
            let (b, stats) = seminorm_bb(&f, alpha);
            prop_assert_eq!(a.to_bits(), b.to_bits());
            if let Some([i, j]) = stats.argmax {
                prop_assert_eq!(f.pair_value(i, j, alpha).to_bits(), b.to_bits());
            }
        }
    }
}
