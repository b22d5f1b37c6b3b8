//! Differentiable kernels for the split models.
//!
//! Each kernel is a plain forward function paired with its exact adjoint
//! (`*_backward`). There is no tape: the model code saves whatever the
//! backward pass needs and calls the adjoints in reverse order.

use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::CsrMatrix;

/// `A · X` for sparse `A`.
pub fn spmm(a: &CsrMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols() != x.rows() {
        return Err(Error::shape(
            "spmm",
            format!("{}x{} times {}x{}", a.n_rows(), a.n_cols(), x.rows(), x.cols()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.n_rows(), x.cols());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let dst = out.row_mut(i);
        for (&j, &w) in cols.iter().zip(vals) {
            for (d, s) in dst.iter_mut().zip(x.row(j)) {
                *d += w * s;
            }
        }
    }
    out.ensure_finite("spmm")?;
    Ok(out)
}

/// `Aᵀ · G`: adjoint of [`spmm`] with respect to `X`.
pub fn spmm_backward(a: &CsrMatrix, grad: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_rows() != grad.rows() {
        return Err(Error::shape(
            "spmm_backward",
            format!("A is {}x{}, grad has {} rows", a.n_rows(), a.n_cols(), grad.rows()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.n_cols(), grad.cols());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let g = grad.row(i);
        for (&j, &w) in cols.iter().zip(vals) {
            for (d, s) in out.row_mut(j).iter_mut().zip(g) {
                *d += w * s;
            }
        }
    }
    Ok(out)
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let dst = out.row_mut(i);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(b.row(k)) {
                *d += aik * s;
            }
        }
    }
    out.ensure_finite("matmul")?;
    Ok(out)
}

/// `Aᵀ · B`.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape(
            "matmul_tn",
            format!("({}x{})ᵀ times {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.cols(), b.cols());
    for r in 0..a.rows() {
        let brow = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            for (d, s) in out.row_mut(i).iter_mut().zip(brow) {
                *d += ari * s;
            }
        }
    }
    Ok(out)
}

/// `A · Bᵀ`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape(
            "matmul_nt",
            format!("{}x{} times ({}x{})ᵀ", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    Ok(DenseMatrix::from_fn(a.rows(), b.rows(), |i, j| {
        a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum()
    }))
}

/// Gradients of `A · B` with respect to `A` and `B`.
pub fn matmul_backward(
    a: &DenseMatrix,
    b: &DenseMatrix,
    grad: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if grad.shape() != (a.rows(), b.cols()) {
        return Err(Error::shape(
            "matmul_backward",
            format!("grad is {}x{}, output is {}x{}", grad.rows(), grad.cols(), a.rows(), b.cols()),
        ));
    }
    Ok((matmul_nt(grad, b)?, matmul_tn(a, grad)?))
}

pub fn relu(x: &DenseMatrix) -> DenseMatrix {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at the kink.
pub fn relu_backward(input: &DenseMatrix, grad: &DenseMatrix) -> Result<DenseMatrix> {
    elementwise_backward("relu_backward", input, grad, |x| if x > 0.0 { 1.0 } else { 0.0 })
}

pub fn leaky_relu(x: &DenseMatrix, slope: f64) -> DenseMatrix {
    x.map(|v| leaky(v, slope))
}

pub fn leaky_relu_backward(input: &DenseMatrix, grad: &DenseMatrix, slope: f64) -> Result<DenseMatrix> {
    elementwise_backward("leaky_relu_backward", input, grad, |x| leaky_grad(x, slope))
}

/// ELU with `alpha = 1`.
pub fn elu(x: &DenseMatrix) -> DenseMatrix {
    x.map(elu_scalar)
}

pub fn elu_backward(input: &DenseMatrix, grad: &DenseMatrix) -> Result<DenseMatrix> {
    elementwise_backward("elu_backward", input, grad, elu_grad)
}

#[inline]
pub(crate) fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

#[inline]
pub(crate) fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub(crate) fn elu_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

#[inline]
pub(crate) fn elu_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        v.exp()
    }
}

fn elementwise_backward(
    op: &'static str,
    input: &DenseMatrix,
    grad: &DenseMatrix,
    deriv: impl Fn(f64) -> f64,
) -> Result<DenseMatrix> {
    input.check_same_shape(op, grad)?;
    let data = input
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .map(|(&x, &g)| deriv(x) * g)
        .collect();
    DenseMatrix::from_vec(input.rows(), input.cols(), data)
}

/// Column-wise concatenation in argument order.
pub fn concat_cols(blocks: &[&DenseMatrix]) -> Result<DenseMatrix> {
    let rows = blocks.first().map_or(0, |b| b.rows());
    if let Some(b) = blocks.iter().find(|b| b.rows() != rows) {
        return Err(Error::shape(
            "concat_cols",
            format!("block with {} rows, expected {rows}", b.rows()),
        ));
    }
    let cols: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for b in blocks {
            data.extend_from_slice(b.row(i));
        }
    }
    DenseMatrix::from_vec(rows, cols, data)
}

/// Adjoint of [`concat_cols`]: splits the gradient back into blocks of the given widths.
pub fn concat_cols_backward(grad: &DenseMatrix, widths: &[usize]) -> Result<Vec<DenseMatrix>> {
    if widths.iter().sum::<usize>() != grad.cols() {
        return Err(Error::shape(
            "concat_cols_backward",
            format!("widths {widths:?} do not sum to {}", grad.cols()),
        ));
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut start = 0;
    for &w in widths {
        out.push(DenseMatrix::from_fn(grad.rows(), w, |i, j| grad[(i, start + j)]));
        start += w;
    }
    Ok(out)
}

/// Inverted-dropout multipliers: `0` for dropped entries, `1/(1-rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn sample(len: usize, rate: f64, rng: &mut impl Rng) -> Result<Self> {
        check_rate(rate)?;
        let keep = 1.0 / (1.0 - rate);
        let scale = (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        Ok(Self { scale })
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scale
    }

    pub fn apply_slice(&self, values: &[f64]) -> Vec<f64> {
        values.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    /// Applies the mask elementwise; also the backward map.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() * x.cols() != self.scale.len() {
            return Err(Error::shape(
                "DropoutMask::apply",
                format!("mask of {} for {}x{}", self.scale.len(), x.rows(), x.cols()),
            ));
        }
        DenseMatrix::from_vec(x.rows(), x.cols(), self.apply_slice(x.as_slice()))
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::DropoutRate(rate))
    }
}

/// Inverted dropout. Returns the mask when one was applied, so the backward
/// pass can reuse it; evaluation mode and `rate = 0` are the identity.
pub fn dropout(
    x: &DenseMatrix,
    rate: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<(DenseMatrix, Option<DropoutMask>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = DropoutMask::sample(x.rows() * x.cols(), rate, rng)?;
    Ok((mask.apply(x)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&DropoutMask>, grad: &DenseMatrix) -> Result<DenseMatrix> {
    match mask {
        Some(m) => m.apply(grad),
        None => Ok(grad.clone()),
    }
}

pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Summed cross-entropy over a node mask, with its gradient on the logits.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Nonzero only on masked rows: `softmax(row) - onehot(label)`.
    pub grad: DenseMatrix,
}

/// `Σ_{l ∈ mask} -log softmax(logits_l)[y_l]`.
pub fn masked_softmax_cross_entropy(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<CrossEntropy> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(
            "masked_softmax_cross_entropy",
            format!("{} labels for {} rows", labels.len(), logits.rows()),
        ));
    }
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &l in mask {
        let y = labels
            .get(l)
            .copied()
            .flatten()
            .ok_or(Error::UnlabeledMaskNode { mask: "loss", node: l })?;
        if y >= logits.cols() {
            return Err(Error::LabelOutOfRange {
                node: l,
                label: y,
                classes: logits.cols(),
            });
        }
        let row = logits.row(l);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let g = grad.row_mut(l);
        for (gk, &zk) in g.iter_mut().zip(row) {
            *gk = (zk - lse).exp();
        }
        g[y] -= 1.0;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("masked_softmax_cross_entropy"));
    }
    Ok(CrossEntropy { loss, grad })
}

/// Settings for [`finite_diff_check`].
#[derive(Debug, Clone, Copy)]
pub struct FiniteDiff {
    /// Central-difference step.
    pub step: f64,
    /// Lower bound of the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are compared absolutely.
    pub floor: f64,
    /// Upper bound on probed coordinates; larger inputs are subsampled.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            max_coords: 256,
            seed: 0,
        }
    }
}

/// Compares `analytic` against central differences of the scalar function
/// `f` around `input`. Returns the largest relative error seen.
pub fn finite_diff_check(
    mut f: impl FnMut(&DenseMatrix) -> Result<f64>,
    input: &DenseMatrix,
    analytic: &DenseMatrix,
    opts: FiniteDiff,
) -> Result<f64> {
    input.check_same_shape("finite_diff_check", analytic)?;
    let len = input.rows() * input.cols();
    let coords: Vec<usize> = if len <= opts.max_coords {
        (0..len).collect()
    } else {
        let mut rng = crate::rng::StreamKey::new(opts.seed, "finite-diff").rng();
        (0..opts.max_coords).map(|_| rng.random_range(0..len)).collect()
    };
    let mut probe = input.clone();
    let mut worst: f64 = 0.0;
    for k in coords {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + opts.step;
        let up = f(&probe)?;
        probe.as_mut_slice()[k] = orig - opts.step;
        let down = f(&probe)?;
        probe.as_mut_slice()[k] = orig;
        let numeric = (up - down) / (2.0 * opts.step);
        let a = analytic.as_slice()[k];
        if !numeric.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite("finite_diff_check"));
        }
        let denom = a.abs().max(numeric.abs()).max(opts.floor);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
