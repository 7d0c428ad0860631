use super::{strides, GridError, GridFunction};

/// Finite-difference settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffConfig {
    /// Formal accuracy of the first-derivative stencil: 2 or 4.
    pub accuracy: usize,
    /// Largest derivative order accepted.
    pub max_order: usize,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig { accuracy: 2, max_order: 4 }
    }
}

/// All `n^j` ordered partial derivatives of order `j` of a grid function.
///
/// Component `m` holds `∂_{a_j} ⋯ ∂_{a_1} u` where `m = ((a_1·n + a_2)·n + …)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeTensor {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    order: usize,
    components: Vec<Vec<f64>>,
}

impl DerivativeTensor {
    pub fn order(&self) -> usize {
        self.order
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

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Component for the ordered axis list `axes` (first entry applied first).
    pub fn component(&self, axes: &[usize]) -> &[f64] {
        assert_eq!(axes.len(), self.order);
        let m = axes.iter().fold(0, |m, &a| m * self.n() + a);
        &self.components[m]
    }

    /// Pointwise Euclidean norm over all components, as a grid function.
    pub fn magnitude(&self) -> GridFunction {
        let len = self.components[0].len();
        let values = (0..len)
            .map(|i| self.components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        GridFunction::new(self.shape.clone(), self.spacing.clone(), self.origin.clone(), values)
            .expect("tensor metadata was validated on construction")
    }
}

/// `∇^j u` with the default configuration (second order, `j ≤ 4`).
pub fn gradient(u: &GridFunction, j: usize) -> Result<DerivativeTensor, GridError> {
    gradient_with(u, j, &DiffConfig::default())
}

/// `∇^j u` by iterating first-derivative stencils: central differences in the
/// interior, one-sided closures of the same accuracy at the box faces.
pub fn gradient_with(
    u: &GridFunction,
    j: usize,
    cfg: &DiffConfig,
) -> Result<DerivativeTensor, GridError> {
    if j > cfg.max_order {
        return Err(GridError::OrderTooHigh { order: j, max: cfg.max_order });
    }
    let min_len = match cfg.accuracy {
        2 => 3,
        4 => 5,
        a => return Err(GridError::Accuracy(a)),
    };
    if j > 0 && u.shape().iter().any(|&s| s < min_len) {
        return Err(GridError::Shape { shape: u.shape().to_vec(), min: min_len });
    }
    let n = u.n();
    let mut comps = vec![u.values().to_vec()];
    for _ in 0..j {
        let mut next = Vec::with_capacity(comps.len() * n);
        for c in &comps {
            for axis in 0..n {
                next.push(diff_axis(c, u.shape(), axis, u.spacing()[axis], cfg.accuracy));
            }
        }
        comps = next;
    }
    Ok(DerivativeTensor {
        shape: u.shape().to_vec(),
        spacing: u.spacing().to_vec(),
        origin: u.origin().to_vec(),
        order: j,
        components: comps,
    })
}

fn diff_axis(f: &[f64], shape: &[usize], axis: usize, h: f64, accuracy: usize) -> Vec<f64> {
    let st = strides(shape)[axis];
    let len = shape[axis];
    let mut out = vec![0.0; f.len()];
    let mut line = vec![0.0; len];
    let mut dline = vec![0.0; len];
    for start in 0..f.len() {
        // first node of each line along `axis`
        if !(start / st).is_multiple_of(len) {
            continue;
        }
        for i in 0..len {
            line[i] = f[start + i * st];
        }
        match accuracy {
            2 => diff_line_2(&line, h, &mut dline),
            _ => diff_line_4(&line, h, &mut dline),
        }
        for i in 0..len {
            out[start + i * st] = dline[i];
        }
    }
    out
}

fn diff_line_2(f: &[f64], h: f64, d: &mut [f64]) {
    let m = f.len();
    let h2 = 2.0 * h;
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / h2;
    for i in 1..m - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / h2;
    }
    d[m - 1] = (3.0 * f[m - 1] - 4.0 * f[m - 2] + f[m - 3]) / h2;
}

fn diff_line_4(f: &[f64], h: f64, d: &mut [f64]) {
    let m = f.len();
    let h12 = 12.0 * h;
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / h12;
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / h12;
    for i in 2..m - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / h12;
    }
    d[m - 2] = (3.0 * f[m - 1] + 10.0 * f[m - 2] - 18.0 * f[m - 3] + 6.0 * f[m - 4] - f[m - 5]) / h12;
    d[m - 1] =
        (25.0 * f[m - 1] - 48.0 * f[m - 2] + 36.0 * f[m - 3] - 16.0 * f[m - 4] + 3.0 * f[m - 5]) / h12;
}
