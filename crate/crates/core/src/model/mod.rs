//! The noise predictor: an MLP over `[x_t, fourier(c)]` where `c` is either
//! `t / T` or `√ᾱ_t`.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! weight matrix (`out × in`, row-major) followed by its bias. Hidden layers
//! use SiLU; the output layer is linear.

mod adam;
mod checkpoint;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reverse::EpsModel;
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `c = t / T`.
    #[default]
    TimestepEmbedding,
    /// `c = √ᾱ_t`.
    NoiseLevelScalar,
}

impl Conditioning {
    pub fn value(self, t: usize, schedule: &NoiseSchedule) -> f64 {
        match self {
            Conditioning::TimestepEmbedding => t as f64 / schedule.len() as f64,
            Conditioning::NoiseLevelScalar => schedule.alpha_bar(t).sqrt(),
        }
    }
}

fn default_fourier() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Shape of one sample, e.g. `[2]` or `[8, 8]`.
    pub data_shape: Vec<usize>,
    /// Hidden widths; empty gives a single linear layer.
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub conditioning: Conditioning,
    /// Number of sin/cos frequency pairs for `c`.
    #[serde(default = "default_fourier")]
    pub fourier_features: usize,
}

impl Architecture {
    pub fn data_dim(&self) -> usize {
        self.data_shape.iter().product()
    }

    /// `c` itself plus a sin and cos per frequency.
    pub fn cond_dim(&self) -> usize {
        1 + 2 * self.fourier_features
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim() + self.cond_dim()
    }

    /// `(in, out)` of every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        for &h in self.hidden.iter().chain(std::iter::once(&self.data_dim())) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_shape.is_empty() || self.data_dim() == 0 {
            return Err(Error::Config("data_shape must be non-empty with positive sizes".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.fourier_features > 30 {
            return Err(Error::Config("fourier_features must be at most 30".into()));
        }
        Ok(())
    }
}

/// Writes `[c, sin(π 2^j c), cos(π 2^j c)]_j` into `out`.
fn fourier_into(c: f64, n: usize, out: &mut [f64]) {
    out[0] = c;
    for j in 0..n {
        let w = std::f64::consts::PI * (1u64 << j) as f64 * c;
        out[1 + 2 * j] = w.sin();
        out[2 + 2 * j] = w.cos();
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    arch: Architecture,
    params: Vec<f64>,
}

struct Activations {
    /// Input to each layer, `[B, in]`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `[B, out]`.
    pre: Vec<Array2<f64>>,
}

impl Denoiser {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `n` inputs is drawn from `U(-1/√n, 1/√n)`.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::with_capacity(arch.n_params());
        for (i, o) in arch.layer_dims() {
            let bound = 1.0 / (i as f64).sqrt();
            params.extend((0..i * o + o).map(|_| rng.random_range(-bound..bound)));
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.n_params()];
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::Shape {
                expected: vec![arch.n_params()],
                got: vec![params.len()],
            });
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is {}", params[i])));
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight and bias views of layer `l`.
    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let dims = self.arch.layer_dims();
        let off: usize = dims[..l].iter().map(|(i, o)| i * o + o).sum();
        let (i, o) = dims[l];
        let w = ArrayView2::from_shape((o, i), &self.params[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    fn input_matrix(&self, x_t: &Tensor, cond: &[f64]) -> Result<Array2<f64>> {
        let d = self.arch.data_dim();
        if x_t.shape().len() != self.arch.data_shape.len() + 1 || x_t.shape()[1..] != self.arch.data_shape[..] {
            let mut expected = vec![x_t.rows()];
            expected.extend(&self.arch.data_shape);
            return Err(Error::Shape {
                expected,
                got: x_t.shape().to_vec(),
            });
        }
        let b = x_t.rows();
        if cond.len() != b {
            return Err(Error::Shape {
                expected: vec![b],
                got: vec![cond.len()],
            });
        }
        if let Some(c) = cond.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("conditioning value {c}")));
        }
        let width = self.arch.input_dim();
        let mut input = Array2::zeros((b, width));
        for (r, mut row) in input.axis_iter_mut(Axis(0)).enumerate() {
            let row = row.as_slice_mut().unwrap();
            row[..d].copy_from_slice(x_t.row(r));
            fourier_into(cond[r], self.arch.fourier_features, &mut row[d..]);
        }
        Ok(input)
    }

    fn run(&self, input: Array2<f64>) -> (Array2<f64>, Activations) {
        let n_layers = self.arch.layer_dims().len();
        let mut acts = Activations {
            inputs: Vec::with_capacity(n_layers),
            pre: Vec::with_capacity(n_layers),
        };
        let mut a = input;
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let z = a.dot(&w.t()) + b;
            let next = if l + 1 < n_layers { z.mapv(silu) } else { z.clone() };
            acts.inputs.push(a);
            acts.pre.push(z);
            a = next;
        }
        (a, acts)
    }

    /// Predictions for a batch `[B, ...data_shape]` with one conditioning
    /// value per row.
    pub fn forward(&self, x_t: &Tensor, cond: &[f64]) -> Result<Tensor> {
        let input = self.input_matrix(x_t, cond)?;
        let (out, _) = self.run(input);
        Ok(Tensor::from_parts(out.into_raw_vec_and_offset().0, x_t.shape().to_vec()))
    }

    /// Mean absolute error between prediction and target over every batch
    /// element, and its exact subgradient (0 where the residual is 0).
    pub fn loss_and_grad(&self, x_t: &Tensor, cond: &[f64], target: &Tensor) -> Result<(f64, Vec<f64>)> {
        target.ensure_shape(x_t.shape())?;
        if x_t.rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let input = self.input_matrix(x_t, cond)?;
        let (out, acts) = self.run(input);
        let n = out.len() as f64;
        let tgt = ArrayView2::from_shape(out.raw_dim(), target.data()).unwrap();
        let resid = &out - &tgt;
        let loss = resid.iter().map(|r| r.abs()).sum::<f64>() / n;
        let mut dz = resid.mapv(|r| {
            if r > 0.0 {
                1.0 / n
            } else if r < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        });

        let dims = self.arch.layer_dims();
        let mut grads = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for (i, o) in &dims {
            offsets.push(off);
            off += i * o + o;
        }
        for l in (0..dims.len()).rev() {
            let (i, o) = dims[l];
            let dw = dz.t().dot(&acts.inputs[l]);
            let db = dz.sum_axis(Axis(0));
            let g = &mut grads[offsets[l]..offsets[l] + i * o + o];
            g[..i * o].copy_from_slice(dw.as_slice().unwrap());
            g[i * o..].copy_from_slice(db.as_slice().unwrap());
            if l > 0 {
                let (w, _) = self.layer(l);
                let da = dz.dot(&w);
                dz = da * acts.pre[l - 1].mapv(silu_grad);
            }
        }
        Ok((loss, grads))
    }

    /// Residuals `prediction - target`, used to spot L1 kinks.
    pub fn residuals(&self, x_t: &Tensor, cond: &[f64], target: &Tensor) -> Result<Vec<f64>> {
        let out = self.forward(x_t, cond)?;
        target.ensure_shape(out.shape())?;
        Ok(out.data().iter().zip(target.data()).map(|(p, t)| p - t).collect())
    }
}

impl EpsModel for Denoiser {
    fn data_shape(&self) -> Vec<usize> {
        self.arch.data_shape.clone()
    }

    fn predict(&self, x_t: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor> {
        schedule.check_t(t)?;
        let c = self.arch.conditioning.value(t, schedule);
        self.forward(x_t, &vec![c; x_t.rows()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameters whose perturbation moved a residual across the L1 kink.
    pub skipped: usize,
}

/// Compares every analytic gradient entry with a central difference of step
/// `h`. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    model: &Denoiser,
    x_t: &Tensor,
    cond: &[f64],
    target: &Tensor,
    h: f64,
    floor: f64,
) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_grad(x_t, cond, target)?;
    let base = model.residuals(x_t, cond, target)?;
    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    let crosses = |r: &[f64]| {
        r.iter()
            .zip(&base)
            .any(|(a, b)| b.abs() < 1e-7 || (a > &0.0) != (b > &0.0))
    };
    for (i, &analytic) in grads.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let (plus, rp) = (probe.loss_and_grad(x_t, cond, target)?.0, probe.residuals(x_t, cond, target)?);
        probe.params[i] = orig - h;
        let (minus, rm) = (probe.loss_and_grad(x_t, cond, target)?.0, probe.residuals(x_t, cond, target)?);
        probe.params[i] = orig;
        if crosses(&rp) || crosses(&rm) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        report.max_rel_err = report.max_rel_err.max(err);
        report.checked += 1;
    }
    Ok(report)
}
