//! Parametric generator families used as test corpora.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_meta, on_boundary, GridError, GridFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Gaussian,
    PowerPeak,
    PowerTail,
    Bump,
    SmoothedNoise,
    MultiBump,
    Tent,
}

/// Allowed values of one parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Constraint {
    Finite,
    Positive,
    /// `(0, 1]`
    Fraction,
    /// `[1, 64]`
    Count,
}

impl Constraint {
    fn accepts(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                Constraint::Finite => true,
                Constraint::Positive => v > 0.0,
                Constraint::Fraction => v > 0.0 && v <= 1.0,
                Constraint::Count => (1.0..=64.0).contains(&v),
            }
    }

    fn describe(self) -> &'static str {
        match self {
            Constraint::Finite => "must be finite",
            Constraint::Positive => "must be finite and > 0",
            Constraint::Fraction => "must lie in (0, 1]",
            Constraint::Count => "must lie in [1, 64]",
        }
    }
}

impl Generator {
    /// `(name, default, constraint)` for every parameter the generator reads.
    fn schema(self) -> &'static [(&'static str, f64, Constraint)] {
        use Constraint::*;
        match self {
            Generator::Gaussian | Generator::Bump | Generator::Tent => &[
                ("amplitude", 1.0, Finite),
                ("center", 0.0, Finite),
                ("width", 1.0, Positive),
            ],
            Generator::PowerPeak => &[
                ("amplitude", 1.0, Finite),
                ("cap", 16.0, Positive),
                ("center", 0.0, Finite),
                ("exponent", 1.0, Positive),
            ],
            Generator::PowerTail => &[
                ("amplitude", 1.0, Finite),
                ("center", 0.0, Finite),
                ("exponent", 2.0, Positive),
                ("width", 1.0, Positive),
            ],
            Generator::SmoothedNoise => &[
                ("amplitude", 1.0, Finite),
                ("support", 0.8, Fraction),
                ("width", 0.5, Positive),
            ],
            Generator::MultiBump => &[
                ("amplitude", 1.0, Finite),
                ("count", 3.0, Count),
                ("width", 0.5, Positive),
            ],
        }
    }
}

/// A fixed value or a closed interval `[lo, hi]` sampled uniformly per seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamRange {
    Fixed(f64),
    Range([f64; 2]),
}

impl ParamRange {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ParamRange::Fixed(v) => (v, v),
            ParamRange::Range([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl GridSpec {
    /// A box `[-half, half]^n` with `cells` intervals per axis.
    pub fn centered(n: usize, half: f64, cells: usize) -> Self {
        GridSpec {
            shape: vec![cells + 1; n],
            spacing: vec![2.0 * half / cells as f64; n],
            origin: vec![-half; n],
        }
    }

    /// The same box with half the spacing.
    pub fn refined(&self) -> Self {
        GridSpec {
            shape: self.shape.iter().map(|s| 2 * (s - 1) + 1).collect(),
            spacing: self.spacing.iter().map(|h| h / 2.0).collect(),
            origin: self.origin.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }
}

/// Concrete parameter values; `center` expands to `center.0`, `center.1`, …
pub type ParamSet = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub generator: Generator,
    #[serde(default)]
    pub params: BTreeMap<String, ParamRange>,
    pub grid: GridSpec,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

/// One rendered member of a family.
#[derive(Clone, Debug)]
pub struct Sample {
    pub seed: u64,
    pub params: ParamSet,
    pub function: GridFunction,
    /// Largest magnitude removed by zeroing the outer layer of the box.
    pub truncation_level: f64,
}

const INTERNAL_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

impl FamilySpec {
    pub fn new(generator: Generator, grid: GridSpec) -> Self {
        FamilySpec { generator, params: BTreeMap::new(), grid, seeds: Vec::new() }
    }

    pub fn with(mut self, name: &str, range: ParamRange) -> Self {
        self.params.insert(name.to_string(), range);
        self
    }

    pub fn fixed(self, name: &str, v: f64) -> Self {
        self.with(name, ParamRange::Fixed(v))
    }

    pub fn range(self, name: &str, lo: f64, hi: f64) -> Self {
        self.with(name, ParamRange::Range([lo, hi]))
    }

    pub fn seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    pub fn with_grid(&self, grid: GridSpec) -> Self {
        FamilySpec { grid, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        check_meta(&self.grid.shape, &self.grid.spacing, &self.grid.origin)?;
        let schema = self.generator.schema();
        for (name, range) in &self.params {
            let Some(&(_, _, c)) = schema.iter().find(|(s, _, _)| s == name) else {
                return Err(GridError::Param {
                    name: name.clone(),
                    msg: format!("not a parameter of {:?}", self.generator),
                });
            };
            let (lo, hi) = range.bounds();
            if !(lo <= hi) {
                return Err(GridError::Param { name: name.clone(), msg: format!("empty range [{lo}, {hi}]") });
            }
            if !c.accepts(lo) || !c.accepts(hi) {
                return Err(GridError::Param { name: name.clone(), msg: c.describe().to_string() });
            }
        }
        Ok(())
    }

    /// Parameters that vary within a nonempty open range, in `ParamSet` key order,
    /// with their bounds.
    pub fn free_parameters(&self) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        for (name, _, _) in self.generator.schema() {
            if let Some(ParamRange::Range([lo, hi])) = self.params.get(*name) {
                if lo < hi {
                    if *name == "center" {
                        for k in 0..self.grid.n() {
                            out.push((format!("center.{k}"), *lo, *hi));
                        }
                    } else {
                        out.push((name.to_string(), *lo, *hi));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Draw the parameter values for `seed`.
    pub fn draw(&self, seed: u64) -> Result<ParamSet, GridError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        for &(name, default, _) in self.generator.schema() {
            let (lo, hi) = self.params.get(name).map(|r| r.bounds()).unwrap_or((default, default));
            let copies = if name == "center" { self.grid.n() } else { 1 };
            for k in 0..copies {
                let v = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
                let key = if name == "center" { format!("center.{k}") } else { name.to_string() };
                set.insert(key, v);
            }
        }
        Ok(set)
    }

    pub fn sample(&self, seed: u64) -> Result<Sample, GridError> {
        let params = self.draw(seed)?;
        self.render(&params, seed)
    }

    /// Render explicit parameter values; `seed` drives only internal randomness
    /// (noise fields, bump placement).
    pub fn render(&self, params: &ParamSet, seed: u64) -> Result<Sample, GridError> {
        check_meta(&self.grid.shape, &self.grid.spacing, &self.grid.origin)?;
        for &(name, _, c) in self.generator.schema() {
            for (key, v) in params.iter().filter(|(k, _)| k.split('.').next() == Some(name)) {
                if !c.accepts(*v) {
                    return Err(GridError::Param { name: key.clone(), msg: c.describe().to_string() });
                }
            }
        }
        let get = |name: &str| -> f64 {
            params.get(name).copied().unwrap_or_else(|| {
                self.generator.schema().iter().find(|s| s.0 == name).map(|s| s.1).unwrap_or(0.0)
            })
        };
        let n = self.grid.n();
        let center: Vec<f64> = (0..n)
            .map(|k| params.get(&format!("center.{k}")).copied().unwrap_or_else(|| get("center")))
            .collect();
        let dist = move |x: &[f64]| -> f64 {
            x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
        };
        let amp = get("amplitude");
        let width = get("width");
        let g = &self.grid;
        let raw = match self.generator {
            Generator::Gaussian => GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
                let r = dist(x) / width;
                amp * (-r * r).exp()
            })?,
            Generator::Tent => GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
                amp * (1.0 - dist(x) / width).max(0.0)
            })?,
            Generator::Bump => GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
                amp * bump(dist(x) / width)
            })?,
            Generator::PowerPeak => {
                let (a, cap) = (get("exponent"), get("cap"));
                GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
                    let r = dist(x);
                    amp * if r == 0.0 { cap } else { cap.min(r.powf(-a)) }
                })?
            }
            Generator::PowerTail => {
                let a = get("exponent");
                GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
                    let r = dist(x) / width;
                    amp * (1.0 + r * r).powf(-a / 2.0)
                })?
            }
            Generator::SmoothedNoise => smoothed_noise(g, amp, width, get("support"), seed)?,
            Generator::MultiBump => multi_bump(g, amp, width, get("count").round() as usize, seed)?,
        };
        let mut values = raw.values().to_vec();
        let mut level: f64 = 0.0;
        for (flat, v) in values.iter_mut().enumerate() {
            if on_boundary(&g.shape, flat) {
                level = level.max(v.abs());
                *v = 0.0;
            }
        }
        Ok(Sample {
            seed,
            params: params.clone(),
            function: raw.with_values(values),
            truncation_level: level,
        })
    }

    /// Every seed of the family, in order.
    pub fn samples(&self) -> Result<Vec<Sample>, GridError> {
        self.seeds.iter().map(|&s| self.sample(s)).collect()
    }
}

/// `generate(spec, seed)`: the rendered grid function for one seed.
pub fn generate(spec: &FamilySpec, seed: u64) -> Result<GridFunction, GridError> {
    Ok(spec.sample(seed)?.function)
}

/// `exp(1 - 1/(1 - r²))` on `r < 1`, peak value 1.
fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

fn box_center_and_radius(g: &GridSpec) -> (Vec<f64>, f64) {
    let mut c = Vec::new();
    let mut half = f64::INFINITY;
    for k in 0..g.n() {
        let len = (g.shape[k] - 1) as f64 * g.spacing[k];
        c.push(g.origin[k] + len / 2.0);
        half = half.min(len / 2.0);
    }
    (c, half)
}

/// Shot noise: Gaussian kernels of the given width at uniformly random
/// centers with random signed weights, so the same seed describes the same
/// continuum function on every grid.
fn smoothed_noise(g: &GridSpec, amp: f64, width: f64, support: f64, seed: u64) -> Result<GridFunction, GridError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INTERNAL_STREAM);
    let extent: Vec<f64> = (0..g.n()).map(|k| (g.shape[k] - 1) as f64 * g.spacing[k]).collect();
    let cells: f64 = extent.iter().map(|e| (e / width).max(1.0)).product();
    let count = (2.0 * cells).ceil().min(4096.0) as usize;
    let kernels: Vec<(Vec<f64>, f64)> = (0..count)
        .map(|_| {
            let c = (0..g.n()).map(|k| g.origin[k] + rng.gen_range(0.0..=1.0) * extent[k]).collect();
            (c, rng.gen_range(-1.0..=1.0))
        })
        .collect();
    let reach2 = (5.0 * width) * (5.0 * width);
    let noise = GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
        let mut acc = 0.0;
        for (c, w) in &kernels {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < reach2 {
                acc += w * (-d2 / (2.0 * width * width)).exp();
            }
        }
        acc
    })?;
    let field = noise.values();
    let (c, half) = box_center_and_radius(g);
    let r_support = support * half;
    let windowed = GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
        let r = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        bump(r / r_support)
    })?;
    let mut values: Vec<f64> = field.iter().zip(windowed.values()).map(|(f, w)| f * w).collect();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut values {
            *v *= amp / peak;
        }
    }
    Ok(windowed.with_values(values))
}

fn multi_bump(g: &GridSpec, amp: f64, width: f64, count: usize, seed: u64) -> Result<GridFunction, GridError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INTERNAL_STREAM);
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..count)
        .map(|_| {
            let w = width * rng.gen_range(0.5..=1.0);
            let a = amp * rng.gen_range(0.5..=1.0);
            let c = (0..g.n())
                .map(|k| {
                    let lo = g.origin[k] + w;
                    let hi = g.origin[k] + (g.shape[k] - 1) as f64 * g.spacing[k] - w;
                    if lo < hi {
                        rng.gen_range(lo..=hi)
                    } else {
                        (lo + hi) / 2.0
                    }
                })
                .collect();
            (c, w, a)
        })
        .collect();
    GridFunction::from_fn(g.shape.clone(), g.spacing.clone(), g.origin.clone(), |x| {
        bumps
            .iter()
            .map(|(c, w, a)| {
                let r = x.iter().zip(c).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                a * bump(r / w)
            })
            .sum()
    })
}
