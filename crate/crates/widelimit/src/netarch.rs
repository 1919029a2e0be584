//! Random deep networks in the generalized architecture: per-layer maps
//! `sigma: R^{S_{l-1}} -> R^{a_l x S_l}`, Gaussian weights with 1/fan-in
//! variance, and the forward recursion
//! `f^(l) = (W^(l) (x) Id_{S_l}) sigma^(l)(f^(l-1))`.
//!
//! A standard fully connected network evaluated on a k-point input set lifts
//! onto this architecture with a constant bias channel, so weights and biases
//! are sampled as a single Gaussian family.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::psdlinalg::SymMatrix;
use crate::streams::{stream, sub_seed, Purpose};

/// Scalar activation applied componentwise.
#[derive(Clone)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Erf,
    Custom(Arc<CustomActivation>),
}

/// User-supplied scalar activation with a declared (trusted, not verified)
/// Lipschitz constant and optional kink locations for the quadrature engine.
pub struct CustomActivation {
    pub name: String,
    pub lipschitz: f64,
    pub kinks: Vec<f64>,
    pub f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Erf => libm::erf(x),
            Activation::Custom(c) => (c.f)(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Activation::Identity | Activation::Relu | Activation::Tanh => 1.0,
            Activation::LeakyRelu { slope } => slope.abs().max(1.0),
            Activation::Erf => 2.0 / std::f64::consts::PI.sqrt(),
            Activation::Custom(c) => c.lipschitz,
        }
    }

    /// Non-smooth points, used by the quadrature panels.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Activation::Relu | Activation::LeakyRelu { .. } => vec![0.0],
            Activation::Custom(c) => c.kinks.clone(),
            _ => vec![],
        }
    }

    pub fn label(&self) -> String {
        match self {
            Activation::Identity => "identity".into(),
            Activation::Relu => "relu".into(),
            Activation::LeakyRelu { slope } => format!("leaky_relu:{slope}"),
            Activation::Tanh => "tanh".into(),
            Activation::Erf => "erf".into(),
            Activation::Custom(c) => format!("custom:{}", c.name),
        }
    }
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// One generalized layer map `R^{S_{l-1}} -> R^{a_l x S_l}`.
#[derive(Clone)]
pub enum LayerMap {
    /// First layer of the fully connected lift: reshapes the flat input
    /// `R^{d0 x k}` into its matrix and appends the all-ones bias row,
    /// giving `a_1 = d0 + 1`, `S_1 = k`.
    InputAffine { d0: usize, k: usize },
    /// Hidden/output layer of the lift: `v in R^k` maps to the two rows
    /// `(sigma(v), 1_k)`, giving `a_l = 2`, `S_l = k`.
    ActivationBias { act: Activation, k: usize },
    /// Arbitrary map with explicit dimensions.
    Custom(Arc<CustomLayerMap>),
}

pub struct CustomLayerMap {
    pub name: String,
    pub in_len: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    pub lipschitz: f64,
    /// Writes the `out_rows x out_cols` image row-major into `out`.
    pub f: Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl LayerMap {
    pub fn in_len(&self) -> usize {
        match self {
            LayerMap::InputAffine { d0, k } => d0 * k,
            LayerMap::ActivationBias { k, .. } => *k,
            LayerMap::Custom(c) => c.in_len,
        }
    }

    /// Auxiliary row count `a_l`.
    pub fn out_rows(&self) -> usize {
        match self {
            LayerMap::InputAffine { d0, .. } => d0 + 1,
            LayerMap::ActivationBias { .. } => 2,
            LayerMap::Custom(c) => c.out_rows,
        }
    }

    /// Output index set size `|S_l|`.
    pub fn out_cols(&self) -> usize {
        match self {
            LayerMap::InputAffine { k, .. } => *k,
            LayerMap::ActivationBias { k, .. } => *k,
            LayerMap::Custom(c) => c.out_cols,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            LayerMap::InputAffine { .. } => 1.0,
            LayerMap::ActivationBias { act, .. } => act.lipschitz(),
            LayerMap::Custom(c) => c.lipschitz,
        }
    }

    /// Image of one neuron row, written row-major into `out`.
    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.in_len());
        debug_assert_eq!(out.len(), self.out_rows() * self.out_cols());
        match self {
            LayerMap::InputAffine { d0, k } => {
                out[..d0 * k].copy_from_slice(row);
                out[d0 * k..].fill(1.0);
            }
            LayerMap::ActivationBias { act, k } => {
                for (o, &v) in out[..*k].iter_mut().zip(row) {
                    *o = act.apply(v);
                }
                out[*k..].fill(1.0);
            }
            LayerMap::Custom(c) => (c.f)(row, out),
        }
    }
}

impl fmt::Debug for LayerMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerMap::InputAffine { d0, k } => write!(f, "InputAffine(d0={d0}, k={k})"),
            LayerMap::ActivationBias { act, k } => {
                write!(f, "ActivationBias({:?}, k={k})", act)
            }
            LayerMap::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

/// Generalized network: widths `n_1..n_L` plus the layer maps. `n_0 = 1` by
/// convention, so the first weight matrix has `a_1` columns.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub input_count: usize,
    pub widths: Vec<usize>,
    pub layers: Vec<LayerMap>,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        input_count: usize,
        widths: Vec<usize>,
        layers: Vec<LayerMap>,
    ) -> Result<Self> {
        if widths.is_empty() || widths.len() != layers.len() {
            return Err(Error::InvalidConfig(
                "need one width per layer map, at least one layer".into(),
            ));
        }
        if widths.iter().any(|&n| n == 0) || input_dim == 0 || input_count == 0 {
            return Err(Error::InvalidConfig("dimensions must be positive".into()));
        }
        if layers[0].in_len() != input_dim * input_count {
            return Err(Error::InvalidConfig(format!(
                "first layer consumes {} values, input set provides {}",
                layers[0].in_len(),
                input_dim * input_count
            )));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].in_len() != pair[0].out_cols() {
                return Err(Error::InvalidConfig(format!(
                    "layer {} output size {} does not feed layer {} input size {}",
                    l + 1,
                    pair[0].out_cols(),
                    l + 2,
                    pair[1].in_len()
                )));
            }
        }
        Ok(NetworkSpec {
            input_dim,
            input_count,
            widths,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Width of layer `l` with the `n_0 = 1` convention, `l = 0..=L`.
    pub fn width(&self, l: usize) -> usize {
        if l == 0 {
            1
        } else {
            self.widths[l - 1]
        }
    }

    /// Output index set size `|S_l|` for `l = 0..=L`.
    pub fn s_len(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim * self.input_count
        } else {
            self.layers[l - 1].out_cols()
        }
    }
}

/// Fully connected network over `k` input points, lifted onto the
/// generalized architecture. Forward evaluation reproduces
/// `W sigma(f) + b` with unit-variance biases.
pub fn lift_fully_connected(
    depth: usize,
    input_dim: usize,
    widths: &[usize],
    activation: Activation,
    input_count: usize,
) -> Result<NetworkSpec> {
    if depth == 0 || widths.len() != depth {
        return Err(Error::InvalidConfig(format!(
            "depth {depth} needs exactly {depth} widths, got {}",
            widths.len()
        )));
    }
    let mut layers = vec![LayerMap::InputAffine {
        d0: input_dim,
        k: input_count,
    }];
    for _ in 1..depth {
        layers.push(LayerMap::ActivationBias {
            act: activation.clone(),
            k: input_count,
        });
    }
    NetworkSpec::new(input_dim, input_count, widths.to_vec(), layers)
}

/// Finite input set in `R^{d0}`.
#[derive(Debug, Clone)]
pub struct InputSet {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl InputSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::InvalidConfig("input set must be nonempty".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidConfig(
                "input points must share a dimension".into(),
            ));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfig("input points must be finite".into()));
        }
        Ok(InputSet { points, dim })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Duplicated points force kernel degeneracy; callers may want to warn.
    pub fn has_duplicates(&self) -> bool {
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                if self.points[i] == self.points[j] {
                    return true;
                }
            }
        }
        false
    }

    /// The `d0 x k` input matrix whose columns are the points.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.points.len(), |d, i| self.points[i][d])
    }

    /// `f^(0)`: the input matrix flattened row-major into a single row.
    pub fn layer_zero(&self) -> DMatrix<f64> {
        let k = self.points.len();
        DMatrix::from_fn(1, self.dim * k, |_, j| self.points[j % k][j / k])
    }
}

/// Per-layer Gaussian weights `W^(l)` of shape `n_l x (n_{l-1} * a_l)`,
/// entry variance `1/n_{l-1}`. Regenerating from the same seed is
/// bit-identical.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub layers: Vec<DMatrix<f64>>,
    pub seed: u64,
}

pub fn sample_weights(spec: &NetworkSpec, seed: u64) -> WeightSet {
    let mut layers = Vec::with_capacity(spec.depth());
    for (l, map) in spec.layers.iter().enumerate() {
        let fan_in = spec.width(l);
        let rows = spec.width(l + 1);
        let cols = fan_in * map.out_rows();
        let sd = 1.0 / (fan_in as f64).sqrt();
        let mut rng = stream(seed, Purpose::Weights, l + 1, 0);
        let mut w = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                w[(i, j)] = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        layers.push(w);
    }
    WeightSet { layers, seed }
}

/// All intermediate layer outputs `f^(0)..f^(L)`; `f^(l)` is
/// `n_l x |S_l|`, neurons as rows.
#[derive(Debug, Clone)]
pub struct LayerOutputs {
    pub layers: Vec<DMatrix<f64>>,
}

/// Stacked image `sigma^(l)(f^(l-1))` of shape `(n_{l-1} * a_l) x |S_l|`,
/// row-major in `(neuron, aux)`.
fn stacked_image(map: &LayerMap, f_prev: &DMatrix<f64>) -> DMatrix<f64> {
    let n_prev = f_prev.nrows();
    let a = map.out_rows();
    let s = map.out_cols();
    let mut out = DMatrix::zeros(n_prev * a, s);
    let mut row_buf = vec![0.0; map.in_len()];
    let mut img_buf = vec![0.0; a * s];
    for i in 0..n_prev {
        for (j, v) in row_buf.iter_mut().enumerate() {
            *v = f_prev[(i, j)];
        }
        map.apply(&row_buf, &mut img_buf);
        for r in 0..a {
            for c in 0..s {
                out[(i * a + r, c)] = img_buf[r * s + c];
            }
        }
    }
    out
}

/// Forward pass `f^(l) = W^(l) sigma^(l)(f^(l-1))` through every layer.
pub fn forward(spec: &NetworkSpec, weights: &WeightSet, x: &InputSet) -> Result<LayerOutputs> {
    if x.len() != spec.input_count || x.dim() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "input set is {} points in R^{}, spec wants {} in R^{}",
            x.len(),
            x.dim(),
            spec.input_count,
            spec.input_dim
        )));
    }
    let mut layers = Vec::with_capacity(spec.depth() + 1);
    layers.push(x.layer_zero());
    for (l, map) in spec.layers.iter().enumerate() {
        let stacked = stacked_image(map, &layers[l]);
        let w = &weights.layers[l];
        if w.ncols() != stacked.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "layer {}: weight has {} columns, stacked image {} rows",
                l + 1,
                w.ncols(),
                stacked.nrows()
            )));
        }
        layers.push(w * stacked);
    }
    Ok(LayerOutputs { layers })
}

/// Conditional covariance of layer `l`'s neuron rows given `f^(l-1)`:
/// `(1/n_{l-1}) sigma^(l)(f^(l-1))^T sigma^(l)(f^(l-1))`, traced over the
/// auxiliary rows. For `l = 1` this is deterministic and equals `K^(1)` of
/// the fully connected lift.
pub fn conditional_row_cov(spec: &NetworkSpec, l: usize, f_prev: &DMatrix<f64>) -> SymMatrix {
    let map = &spec.layers[l - 1];
    let stacked = stacked_image(map, f_prev);
    let scale = 1.0 / spec.width(l - 1) as f64;
    let gram = stacked.transpose() * stacked * scale;
    SymMatrix::from_matrix(&gram).expect("gram matrix is square")
}

/// Batch of independent draws of one layer's output across weight draws.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub draws: Vec<DMatrix<f64>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws flattened row-major to vectors in `R^{rows * cols}`, as an
    /// `N x (rows * cols)` matrix.
    pub fn flattened(&self) -> DMatrix<f64> {
        let d = self.rows * self.cols;
        let mut out = DMatrix::zeros(self.draws.len(), d);
        for (t, m) in self.draws.iter().enumerate() {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    out[(t, i * self.cols + j)] = m[(i, j)];
                }
            }
        }
        out
    }
}

/// `count` independent draws of `f^(layer)[X]`, each from a fresh weight set
/// with a derived sub-seed. Draws are dispatched across threads and merged
/// in draw order, so results do not depend on the scheduler.
pub fn sample_outputs(
    spec: &NetworkSpec,
    x: &InputSet,
    layer: usize,
    count: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if layer == 0 || layer > spec.depth() {
        return Err(Error::InvalidConfig(format!(
            "layer {layer} outside 1..={}",
            spec.depth()
        )));
    }
    let draws: Result<Vec<DMatrix<f64>>> = (0..count)
        .into_par_iter()
        .map(|t| {
            let ws = sample_weights(spec, sub_seed(seed, Purpose::MonteCarlo, t as u64));
            Ok(forward(spec, &ws, x)?.layers[layer].clone())
        })
        .collect();
    Ok(SampleBatch {
        layer,
        rows: spec.width(layer),
        cols: spec.s_len(layer),
        draws: draws?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psdlinalg::PsdMatrix;

    fn unit_inputs(k: usize, d0: usize) -> InputSet {
        // k distinct points
        InputSet::new(
            (0..k)
                .map(|i| (0..d0).map(|d| 0.3 * (i + 1) as f64 + 0.17 * d as f64).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn lift_shapes() {
        let s = lift_fully_connected(1, 2, &[3], Activation::Relu, 1).unwrap();
        assert_eq!(s.layers[0].out_rows(), 3); // a_1 = d0 + 1
        assert_eq!(s.layers[0].out_cols(), 1);

        // Three-layer net, input size 2, hidden 3 and 4, output 3.
        let s = lift_fully_connected(3, 2, &[3, 4, 3], Activation::Relu, 1).unwrap();
        assert_eq!(s.layers[0].out_rows(), 3);
        assert_eq!(s.layers[1].out_rows(), 2);
        assert_eq!(s.width(1), 3);
        assert_eq!(s.width(2), 4);
        assert_eq!(s.width(3), 3);
    }

    #[test]
    fn lift_rejects_bad_dims() {
        assert!(lift_fully_connected(2, 2, &[3], Activation::Relu, 1).is_err());
        assert!(lift_fully_connected(0, 2, &[], Activation::Relu, 1).is_err());
    }

    #[test]
    fn one_layer_identity_net_is_affine() {
        // f^(1) = W x + b for explicit small W and b.
        let spec = lift_fully_connected(1, 2, &[2], Activation::Identity, 1).unwrap();
        let x = InputSet::new(vec![vec![0.5, -1.0]]).unwrap();
        let mut ws = sample_weights(&spec, 3);
        // Overwrite with known values: columns are (x_1, x_2, bias).
        ws.layers[0] = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.25, -1.0, 0.5, 0.75]);
        let out = forward(&spec, &ws, &x).unwrap();
        let f1 = &out.layers[1];
        assert!((f1[(0, 0)] - (1.0 * 0.5 + 2.0 * -1.0 + 0.25)).abs() < 1e-15);
        assert!((f1[(1, 0)] - (-1.0 * 0.5 + 0.5 * -1.0 + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = lift_fully_connected(2, 2, &[3, 2], Activation::Relu, 2).unwrap();
        let x = unit_inputs(2, 2);
        let mut ws = sample_weights(&spec, 1);
        for w in &mut ws.layers {
            w.fill(0.0);
        }
        let out = forward(&spec, &ws, &x).unwrap();
        assert_eq!(out.layers[2].norm(), 0.0);
    }

    #[test]
    fn permuting_inputs_permutes_output_columns() {
        let spec = lift_fully_connected(2, 2, &[4, 3], Activation::Tanh, 2).unwrap();
        let ws = sample_weights(&spec, 11);
        let a = InputSet::new(vec![vec![0.1, 0.2], vec![-0.4, 0.9]]).unwrap();
        let b = InputSet::new(vec![vec![-0.4, 0.9], vec![0.1, 0.2]]).unwrap();
        let fa = forward(&spec, &ws, &a).unwrap().layers[2].clone();
        let fb = forward(&spec, &ws, &b).unwrap().layers[2].clone();
        for i in 0..fa.nrows() {
            assert_eq!(fa[(i, 0)], fb[(i, 1)]);
            assert_eq!(fa[(i, 1)], fb[(i, 0)]);
        }
    }

    #[test]
    fn weight_variances_match_fan_in() {
        // Layer 1 has n_0 = 1, so entries have unit variance; a layer with
        // fan-in 100 has variance 0.01. Both within 3 standard errors.
        let spec = lift_fully_connected(2, 3, &[100, 10], Activation::Relu, 1).unwrap();
        let mut m1 = (0.0, 0usize);
        let mut m2 = (0.0, 0usize);
        for seed in 0..250 {
            let ws = sample_weights(&spec, seed);
            for &v in ws.layers[0].iter() {
                m1.0 += v * v;
                m1.1 += 1;
            }
            for &v in ws.layers[1].iter() {
                m2.0 += v * v;
                m2.1 += 1;
            }
        }
        let v1 = m1.0 / m1.1 as f64;
        let v2 = m2.0 / m2.1 as f64;
        // chi-square variance of the mean of n squared normals: 2 var^2 / n
        let se1 = (2.0 / m1.1 as f64).sqrt();
        let se2 = (2.0 * (0.01f64).powi(2) / m2.1 as f64).sqrt();
        assert!((v1 - 1.0).abs() < 3.0 * se1, "layer-1 variance {v1}");
        assert!((v2 - 0.01).abs() < 3.0 * se2, "fan-in-100 variance {v2}");
    }

    #[test]
    fn weights_are_deterministic() {
        let spec = lift_fully_connected(2, 2, &[5, 4], Activation::Relu, 2).unwrap();
        let a = sample_weights(&spec, 99);
        let b = sample_weights(&spec, 99);
        assert_eq!(a.layers, b.layers);
    }

    #[test]
    fn singleton_batch_equals_forward() {
        let spec = lift_fully_connected(2, 2, &[4, 3], Activation::Relu, 2).unwrap();
        let x = unit_inputs(2, 2);
        let batch = sample_outputs(&spec, &x, 2, 1, 7).unwrap();
        let ws = sample_weights(&spec, sub_seed(7, Purpose::MonteCarlo, 0));
        let direct = forward(&spec, &ws, &x).unwrap().layers[2].clone();
        assert_eq!(batch.draws[0], direct);
    }

    #[test]
    fn batches_are_deterministic_across_threads() {
        let spec = lift_fully_connected(2, 2, &[8, 8], Activation::Tanh, 2).unwrap();
        let x = unit_inputs(2, 2);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| sample_outputs(&spec, &x, 2, 64, 5).unwrap());
        let b = pool4.install(|| sample_outputs(&spec, &x, 2, 64, 5).unwrap());
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn disjoint_subseeds_give_independent_batches() {
        let spec = lift_fully_connected(1, 2, &[1], Activation::Identity, 1).unwrap();
        let x = InputSet::new(vec![vec![0.7, -0.3]]).unwrap();
        let n = 40_000;
        let a = sample_outputs(&spec, &x, 1, n, 100).unwrap();
        let b = sample_outputs(&spec, &x, 1, n, 101).unwrap();
        let va: Vec<f64> = a.draws.iter().map(|m| m[(0, 0)]).collect();
        let vb: Vec<f64> = b.draws.iter().map(|m| m[(0, 0)]).collect();
        let ma = va.iter().sum::<f64>() / n as f64;
        let mb = vb.iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut sa = 0.0;
        let mut sb = 0.0;
        for i in 0..n {
            cov += (va[i] - ma) * (vb[i] - mb);
            sa += (va[i] - ma).powi(2);
            sb += (vb[i] - mb).powi(2);
        }
        let corr = cov / (sa.sqrt() * sb.sqrt());
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn first_layer_identity_matches_gram_kernel() {
        // With the identity activation and one layer, pooled neuron rows are
        // exactly N(0, K^(1)) with K^(1) = X^T X + 1.
        let x = InputSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let spec = lift_fully_connected(1, 2, &[16], Activation::Identity, 2).unwrap();
        let n_draws = 4000;
        let batch = sample_outputs(&spec, &x, 1, n_draws, 21).unwrap();
        let k = 2;
        let mut second = DMatrix::<f64>::zeros(k, k);
        let mut rows = 0usize;
        for m in &batch.draws {
            second += m.transpose() * m;
            rows += m.nrows();
        }
        second /= rows as f64;
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        for i in 0..k {
            for j in 0..k {
                let var = expect[(i, i)] * expect[(j, j)] + expect[(i, j)].powi(2);
                let se = (var / rows as f64).sqrt();
                assert!(
                    (second[(i, j)] - expect[(i, j)]).abs() < 3.0 * se,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn neuron_rows_are_exchangeable_and_sign_symmetric() {
        let spec = lift_fully_connected(2, 2, &[6, 4], Activation::Relu, 2).unwrap();
        let x = unit_inputs(2, 2);
        let n_draws = 12_000;
        let batch = sample_outputs(&spec, &x, 2, n_draws, 33).unwrap();
        // Per-row mean of the first column agrees across rows within MC error,
        // and all odd moments vanish (the output layer is linear in centered
        // Gaussian weights).
        let rows = batch.rows;
        let mut means = vec![0.0; rows];
        let mut var = 0.0;
        for m in &batch.draws {
            for (i, mean) in means.iter_mut().enumerate() {
                *mean += m[(i, 0)];
            }
            var += m[(0, 0)] * m[(0, 0)];
        }
        for mean in &mut means {
            *mean /= n_draws as f64;
        }
        var /= n_draws as f64;
        let se = (var / n_draws as f64).sqrt();
        for (i, &mean) in means.iter().enumerate() {
            assert!(mean.abs() < 3.0 * se + 1e-12, "row {i} mean {mean}");
        }
        let spread = means
            .iter()
            .map(|&m| (m - means[0]).abs())
            .fold(0.0, f64::max);
        assert!(spread < 6.0 * se);
    }

    #[test]
    fn conditional_cov_is_first_layer_kernel() {
        let x = InputSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let spec = lift_fully_connected(2, 2, &[4, 4], Activation::Relu, 2).unwrap();
        let c = conditional_row_cov(&spec, 1, &x.layer_zero());
        assert!((c.entry(0, 0) - 2.0).abs() < 1e-14);
        assert!((c.entry(0, 1) - 1.0).abs() < 1e-14);
        // It is a Gram matrix, hence PSD.
        assert!(PsdMatrix::new(c).is_ok());
    }
}
