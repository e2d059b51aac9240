//! Minimal dense-network substrate: flat parameter vector, batched forward
//! pass with inverted dropout, exact reverse-mode gradients, and Adam.
//!
//! Networks are plain MLPs — rectified hidden layers, identity output — which
//! is all the policies here need. Everything is deterministic given explicit
//! seeds: dropout masks come from a caller-supplied generator and are sampled
//! in row-major order.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Network shape: layer sizes including input and output, plus dropout rate
/// applied after each hidden activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub dropout_rate: f64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, dropout_rate: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Net(format!(
                "spec needs at least input and output layers, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Net(format!("zero-width layer in {layer_sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Net(format!("dropout rate must be in [0, 1), got {dropout_rate}")));
        }
        Ok(MlpSpec { layer_sizes, dropout_rate })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count: per layer, a (fan_out × fan_in) weight block
    /// followed by fan_out biases.
    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Offset of layer `l`'s weight block in the flat vector; the bias block
    /// follows immediately after the weights.
    fn layer_offset(&self, l: usize) -> usize {
        self.layer_sizes
            .windows(2)
            .take(l)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }
}

/// Flat 64-bit parameters plus the spec that gives them shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub spec: MlpSpec,
    pub data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.n_params();
        ParamVector { spec, data: vec![0.0; n] }
    }

    /// Weight block of layer `l` as (rows, cols, slice) = (fan_out, fan_in, w).
    pub fn weights(&self, l: usize) -> (usize, usize, &[f64]) {
        let fan_in = self.spec.layer_sizes[l];
        let fan_out = self.spec.layer_sizes[l + 1];
        let off = self.spec.layer_offset(l);
        (fan_out, fan_in, &self.data[off..off + fan_out * fan_in])
    }

    /// Bias block of layer `l`.
    pub fn biases(&self, l: usize) -> &[f64] {
        let fan_in = self.spec.layer_sizes[l];
        let fan_out = self.spec.layer_sizes[l + 1];
        let off = self.spec.layer_offset(l) + fan_out * fan_in;
        &self.data[off..off + fan_out]
    }

    fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let fan_in = self.spec.layer_sizes[l];
        let fan_out = self.spec.layer_sizes[l + 1];
        let off = self.spec.layer_offset(l);
        &mut self.data[off..off + fan_out * fan_in]
    }
}

/// Row-major matrix used by the batched kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Net(format!(
                    "ragged rows: expected {cols} columns, got {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat { rows: n, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Y = X · Wᵀ + b, where W is (out × in) row-major and X is (n × in).
fn affine(x: &Mat, w: &[f64], fan_in: usize, fan_out: usize, b: &[f64]) -> Mat {
    let n = x.rows;
    let mut y = Mat::zeros(n, fan_out);
    for i in 0..n {
        let xi = &x.data[i * fan_in..(i + 1) * fan_in];
        let yi = &mut y.data[i * fan_out..(i + 1) * fan_out];
        for (j, yj) in yi.iter_mut().enumerate() {
            let wj = &w[j * fan_in..(j + 1) * fan_in];
            let mut acc = b[j];
            for k in 0..fan_in {
                acc += xi[k] * wj[k];
            }
            *yj = acc;
        }
    }
    y
}

/// dX = dY · W, where dY is (n × out) and W is (out × in) row-major.
fn backprop_input(dy: &Mat, w: &[f64], fan_in: usize, fan_out: usize) -> Mat {
    let n = dy.rows;
    let mut dx = Mat::zeros(n, fan_in);
    for i in 0..n {
        let dyi = &dy.data[i * fan_out..(i + 1) * fan_out];
        let dxi = &mut dx.data[i * fan_in..(i + 1) * fan_in];
        for (j, &g) in dyi.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let wj = &w[j * fan_in..(j + 1) * fan_in];
            for k in 0..fan_in {
                dxi[k] += g * wj[k];
            }
        }
    }
    dx
}

/// dW = dYᵀ · X accumulated into `dw` (out × in row-major), db = column sums
/// of dY accumulated into `db`.
fn accumulate_param_grads(dy: &Mat, x: &Mat, dw: &mut [f64], db: &mut [f64]) {
    let (n, fan_out, fan_in) = (dy.rows, dy.cols, x.cols);
    for i in 0..n {
        let dyi = &dy.data[i * fan_out..(i + 1) * fan_out];
        let xi = &x.data[i * fan_in..(i + 1) * fan_in];
        for (j, &g) in dyi.iter().enumerate() {
            db[j] += g;
            if g == 0.0 {
                continue;
            }
            let dwj = &mut dw[j * fan_in..(j + 1) * fan_in];
            for k in 0..fan_in {
                dwj[k] += g * xi[k];
            }
        }
    }
}

/// Dropout mode for a forward pass.
pub enum Dropout<'a> {
    Off,
    /// Inverted dropout: each hidden unit is zeroed with the spec's rate and
    /// survivors are scaled by 1/(1−rate), so expectations match dropout-off.
    On(&'a mut ChaCha8Rng),
}

/// Cached activations from a forward pass, consumed by `backward_batch`.
///
/// `inputs[l]` is the batch fed to affine layer `l`; `gates[l]` (hidden layers
/// only) holds relu'(z) fused with the dropout mask, i.e. 0 for a dead or
/// dropped unit and the survivor scale otherwise.
pub struct ForwardTrace {
    inputs: Vec<Mat>,
    gates: Vec<Mat>,
}

/// Batched forward pass. Returns the output batch and the trace needed for
/// gradients.
pub fn forward_batch(params: &ParamVector, x: &Mat, mut dropout: Dropout) -> Result<(Mat, ForwardTrace)> {
    let spec = &params.spec;
    if x.cols != spec.input_dim() {
        return Err(Error::Net(format!(
            "input has {} columns, network expects {}",
            x.cols,
            spec.input_dim()
        )));
    }
    let n_layers = spec.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut gates = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut cur = x.clone();
    for l in 0..n_layers {
        let (fan_out, fan_in, w) = params.weights(l);
        let b = params.biases(l);
        let mut z = affine(&cur, w, fan_in, fan_out, b);
        inputs.push(cur);
        if l + 1 < n_layers {
            let mut gate = Mat::zeros(z.rows, z.cols);
            let keep_scale = 1.0 / (1.0 - spec.dropout_rate);
            for idx in 0..z.data.len() {
                let mut g = if z.data[idx] > 0.0 { 1.0 } else { 0.0 };
                if let Dropout::On(rng) = &mut dropout {
                    // Sample in row-major order for reproducibility.
                    if rng.gen::<f64>() < spec.dropout_rate {
                        g = 0.0;
                    } else {
                        g *= keep_scale;
                    }
                }
                gate.data[idx] = g;
                z.data[idx] = z.data[idx].max(0.0) * g;
            }
            gates.push(gate);
            cur = z;
        } else {
            cur = z;
        }
    }
    Ok((cur, ForwardTrace { inputs, gates }))
}

/// Single-sample forward pass; the trace is discarded.
pub fn forward(params: &ParamVector, x: &[f64], dropout: Dropout) -> Result<Vec<f64>> {
    let m = Mat { rows: 1, cols: x.len(), data: x.to_vec() };
    let (y, _) = forward_batch(params, &m, dropout)?;
    Ok(y.data)
}

/// Batched reverse pass: gradient of (forward ∘ caller's loss) with respect to
/// every parameter, given dL/d(output) for each batch row.
pub fn backward_batch(params: &ParamVector, trace: &ForwardTrace, d_out: &Mat) -> Result<Vec<f64>> {
    let spec = &params.spec;
    let n_layers = spec.n_layers();
    if trace.inputs.len() != n_layers {
        return Err(Error::Net("trace does not match network depth".into()));
    }
    if d_out.cols != spec.output_dim() || d_out.rows != trace.inputs[0].rows {
        return Err(Error::Net(format!(
            "output gradient is {}x{}, expected {}x{}",
            d_out.rows,
            d_out.cols,
            trace.inputs[0].rows,
            spec.output_dim()
        )));
    }
    let mut grads = vec![0.0; spec.n_params()];
    let mut dz = d_out.clone();
    for l in (0..n_layers).rev() {
        let fan_in = spec.layer_sizes[l];
        let fan_out = spec.layer_sizes[l + 1];
        let off = spec.layer_offset(l);
        let (dw, rest) = grads[off..off + fan_out * fan_in + fan_out].split_at_mut(fan_out * fan_in);
        accumulate_param_grads(&dz, &trace.inputs[l], dw, rest);
        if l > 0 {
            let (_, _, w) = params.weights(l);
            let mut dx = backprop_input(&dz, w, fan_in, fan_out);
            let gate = &trace.gates[l - 1];
            for (d, &g) in dx.data.iter_mut().zip(&gate.data) {
                *d *= g;
            }
            dz = dx;
        }
    }
    Ok(grads)
}

/// Single-sample wrapper around `backward_batch`.
pub fn backward(params: &ParamVector, trace: &ForwardTrace, d_out: &[f64]) -> Result<Vec<f64>> {
    let m = Mat { rows: 1, cols: d_out.len(), data: d_out.to_vec() };
    backward_batch(params, trace, &m)
}

/// Adam optimizer state (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.data.len() || state.m.len() != grads.len() {
        return Err(Error::Net(format!(
            "gradient length {} does not match parameter length {}",
            grads.len(),
            params.data.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Net("gradient overflow".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..grads.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Draw fresh parameters: weights from Normal(0, √(1/fan_in)), biases zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamVector {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamVector::zeros(spec.clone());
    for l in 0..spec.n_layers() {
        let fan_in = spec.layer_sizes[l];
        let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).unwrap();
        for w in params.weights_mut(l) {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

/// On-disk checkpoint: shape header plus the flat parameter array.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    dropout_rate: f64,
    step: u64,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    params: Vec<f64>,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Loaded checkpoint contents.
#[derive(Debug)]
pub struct Checkpoint {
    pub params: ParamVector,
    pub step: u64,
    pub seed: u64,
    pub config_hash: Option<String>,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ParamVector,
    step: u64,
    seed: u64,
    config_hash: Option<&str>,
) -> Result<()> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        layer_sizes: params.spec.layer_sizes.clone(),
        dropout_rate: params.spec.dropout_rate,
        step,
        seed,
        config_hash: config_hash.map(str::to_owned),
        params: params.data.clone(),
    };
    let body = serde_json::to_string(&file).map_err(|e| Error::Net(format!("checkpoint encode: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Net(format!(
            "unsupported checkpoint format version {}",
            file.format_version
        )));
    }
    let spec = MlpSpec::new(file.layer_sizes, file.dropout_rate)?;
    if file.params.len() != spec.n_params() {
        return Err(Error::Net(format!(
            "checkpoint holds {} parameters, spec requires {}",
            file.params.len(),
            spec.n_params()
        )));
    }
    Ok(Checkpoint {
        params: ParamVector { spec, data: file.params },
        step: file.step,
        seed: file.seed,
        config_hash: file.config_hash,
    })
}
