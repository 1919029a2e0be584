//! Infinite-width covariance recursion and Gaussian-process sampling.
//!
//! For the fully connected lift the recursion reduces entrywise to the
//! bivariate moment `E[sigma(u) sigma(v)]` of the previous kernel's 2x2
//! marginals, plus the unit bias offset. Identity, ReLU and Erf use closed
//! forms; everything else goes through the kink-aware quadrature.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netarch::{Activation, LayerMap, NetworkSpec, SampleBatch};
use crate::psdlinalg::{spectral_floors, sym_sqrt, PsdMatrix, SymMatrix, PSD_TOL};
use crate::quadrature::{mean_expectation, pair_expectation, DEFAULT_PAIR_DEGREE};
use crate::streams::{stream, Purpose};

/// 2x2 PSD marginal for a pair moment.
#[derive(Debug, Clone, Copy)]
pub struct PairCov {
    pub k11: f64,
    pub k12: f64,
    pub k22: f64,
}

/// `E[sigma(u) sigma(v)]` for `(u, v) ~ N(0, cov2)`.
///
/// ReLU uses the arc-cosine closed form
/// `sqrt(k11 k22)/(2 pi) (sin t + (pi - t) cos t)` with
/// `cos t = k12 / sqrt(k11 k22)` clamped to `[-1, 1]`; Erf uses
/// `(2/pi) asin(2 k12 / sqrt((1 + 2 k11)(1 + 2 k22)))`.
pub fn activation_pair_moment(act: &Activation, cov2: PairCov, degree: usize) -> f64 {
    let PairCov { k11, k12, k22 } = cov2;
    match act {
        Activation::Identity => k12,
        Activation::Relu => {
            let scale = (k11 * k22).max(0.0).sqrt();
            if scale == 0.0 {
                return 0.0;
            }
            let cos_t = (k12 / scale).clamp(-1.0, 1.0);
            let t = cos_t.acos();
            scale / (2.0 * std::f64::consts::PI) * (t.sin() + (std::f64::consts::PI - t) * cos_t)
        }
        Activation::Erf => {
            let denom = ((1.0 + 2.0 * k11) * (1.0 + 2.0 * k22)).sqrt();
            let arg = (2.0 * k12 / denom).clamp(-1.0, 1.0);
            2.0 / std::f64::consts::PI * arg.asin()
        }
        _ => {
            let f = |x: f64| act.apply(x);
            let kinks = act.kinks();
            pair_expectation(&f, &kinks, &f, &kinks, k11, k12, k22, degree)
        }
    }
}

/// `E[sigma(u)]` for `u ~ N(0, kappa)`; the cross term between the
/// activation row and the bias row of a stacked layer map.
pub fn activation_mean_moment(act: &Activation, kappa: f64, degree: usize) -> f64 {
    match act {
        Activation::Identity | Activation::Tanh | Activation::Erf => 0.0,
        Activation::Relu => (kappa.max(0.0) / (2.0 * std::f64::consts::PI)).sqrt(),
        Activation::LeakyRelu { slope } => {
            (1.0 - slope) * (kappa.max(0.0) / (2.0 * std::f64::consts::PI)).sqrt()
        }
        Activation::Custom(_) => {
            let f = |x: f64| act.apply(x);
            mean_expectation(&f, &act.kinks(), kappa, degree)
        }
    }
}

/// How a kernel layer was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// The sequence `K^(1)..K^(L)` on the input set, with spectral diagnostics.
#[derive(Debug, Clone)]
pub struct KernelStack {
    pub kernels: Vec<PsdMatrix>,
    pub lambda_mins: Vec<f64>,
    pub methods: Vec<KernelMethod>,
}

impl KernelStack {
    pub fn depth(&self) -> usize {
        self.kernels.len()
    }

    /// `K^(l)` for `l = 1..=L`.
    pub fn kernel(&self, l: usize) -> &PsdMatrix {
        &self.kernels[l - 1]
    }

    pub fn last(&self) -> &PsdMatrix {
        self.kernels.last().expect("stack is never empty")
    }

    /// JSON-ready view: layer index, dense matrix, smallest eigenvalue and
    /// method tag per layer.
    pub fn to_json(&self) -> serde_json::Value {
        let layers: Vec<serde_json::Value> = self
            .kernels
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let dim = k.dim();
                let rows: Vec<Vec<f64>> = (0..dim)
                    .map(|r| (0..dim).map(|c| k.entry(r, c)).collect())
                    .collect();
                serde_json::json!({
                    "layer": i + 1,
                    "matrix": rows,
                    "lambda_min": self.lambda_mins[i],
                    "method": self.methods[i],
                })
            })
            .collect();
        serde_json::json!({ "kernels": layers })
    }
}

fn method_for(act: &Activation) -> KernelMethod {
    match act {
        Activation::Identity | Activation::Relu | Activation::Erf => KernelMethod::ClosedForm,
        _ => KernelMethod::Quadrature,
    }
}

/// One step of the infinite-width recursion for a stacked activation layer:
/// `K'[s, t] = E[sigma(u) sigma(v)] + 1` on the 2x2 marginals of `K`.
pub fn kernel_map(act: &Activation, k: &PsdMatrix, degree: usize) -> PsdMatrix {
    let dim = k.dim();
    let out = SymMatrix::from_fn(dim, |i, j| {
        activation_pair_moment(
            act,
            PairCov {
                k11: k.entry(i, i),
                k12: k.entry(i, j),
                k22: k.entry(j, j),
            },
            degree,
        ) + 1.0
    });
    PsdMatrix::new_clamped(out)
}

/// Infinite-width covariances `K^(0) = 0, K^(1), .., K^(L)` for a network
/// spec made of lift layers; each step is projected back onto the PSD cone.
pub fn kernel_recursion(spec: &NetworkSpec, x: &crate::netarch::InputSet) -> Result<KernelStack> {
    kernel_recursion_with_degree(spec, x, DEFAULT_PAIR_DEGREE)
}

pub fn kernel_recursion_with_degree(
    spec: &NetworkSpec,
    x: &crate::netarch::InputSet,
    degree: usize,
) -> Result<KernelStack> {
    if x.len() != spec.input_count || x.dim() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "input set {}x{} does not match spec {}x{}",
            x.dim(),
            x.len(),
            spec.input_dim,
            spec.input_count
        )));
    }
    let mut kernels = Vec::with_capacity(spec.depth());
    let mut lambda_mins = Vec::with_capacity(spec.depth());
    let mut methods = Vec::with_capacity(spec.depth());

    for (l, map) in spec.layers.iter().enumerate() {
        let next = match map {
            LayerMap::InputAffine { .. } => {
                if l != 0 {
                    return Err(Error::UnsupportedActivation(
                        "input layer map appears past the first layer".into(),
                    ));
                }
                // K^(1) = X^T X + 1 1^T: deterministic image of the constant
                // layer zero.
                let xm = x.matrix();
                let gram = xm.transpose() * xm;
                let dim = x.len();
                let sym = SymMatrix::from_fn(dim, |i, j| gram[(i, j)] + 1.0);
                methods.push(KernelMethod::ClosedForm);
                PsdMatrix::new_clamped(sym)
            }
            LayerMap::ActivationBias { act, .. } => {
                let prev = kernels
                    .last()
                    .ok_or_else(|| Error::InvalidConfig("activation layer first".into()))?;
                methods.push(method_for(act));
                kernel_map(act, prev, degree)
            }
            LayerMap::Custom(c) => {
                return Err(Error::UnsupportedActivation(format!(
                    "custom layer map `{}` provides no moment evaluator",
                    c.name
                )));
            }
        };
        lambda_mins.push(next.spectral_floor());
        kernels.push(next);
    }
    Ok(KernelStack {
        kernels,
        lambda_mins,
        methods,
    })
}

/// Per-layer invertibility verdicts for the stack.
#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyReport {
    pub layers: Vec<LayerCheck>,
    pub all_invertible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub lambda_min: f64,
    pub invertible: bool,
}

/// A layer passes when `lambda(K) > tol * ||K||`; the stack is non-degenerate
/// when every layer `1..=L` passes (`K^(0) = 0` is excluded by construction).
pub fn nondegeneracy_report(stack: &KernelStack, tol: f64) -> NondegeneracyReport {
    let layers: Vec<LayerCheck> = stack
        .kernels
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let (lambda_min, _) = spectral_floors(k, PSD_TOL);
            LayerCheck {
                layer: i + 1,
                lambda_min,
                invertible: lambda_min > tol * k.norm(),
            }
        })
        .collect();
    let all = layers.iter().all(|c| c.invertible);
    NondegeneracyReport {
        layers,
        all_invertible: all,
    }
}

/// Draws from `N(Id_{n_rows} (x) K)`: each draw has `n_rows` i.i.d. rows
/// `N(0, K)`, realized as `Z sqrt(K)` with per-draw derived streams.
pub fn gp_sample(k: &PsdMatrix, n_rows: usize, count: usize, seed: u64) -> SampleBatch {
    let root = sym_sqrt(k);
    let dim = k.dim();
    let draws: Vec<DMatrix<f64>> = (0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Purpose::GpSample, 0, t as u64);
            let z = DMatrix::from_fn(n_rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            z * root.as_matrix()
        })
        .collect();
    SampleBatch {
        layer: 0,
        rows: n_rows,
        cols: dim,
        draws,
    }
}
