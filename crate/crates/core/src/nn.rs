//! Small fully connected regression networks as loss fields.
//!
//! Parameters are flattened layer by layer: the weight matrix (row-major,
//! `out × in`) followed by the bias. The loss is the mean squared error over
//! samples and outputs. Gradients come from a hand-written backward pass;
//! Hessians from central differences of that gradient.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Capabilities, ParamPoint, ScalarField};
use crate::linalg::dot;
use crate::par;

/// Largest network for which dense Hessians are assembled.
pub const MAX_PARAMS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    /// One entry per hidden layer; the output layer is linear.
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub loss: Loss,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self { layer_widths, activations, loss: Loss::Mse };
        spec.validate()?;
        Ok(spec)
    }

    /// Same activation on every hidden layer.
    pub fn uniform(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let hidden = layer_widths.len().saturating_sub(2);
        Self::new(layer_widths, vec![activation; hidden])
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.layer_widths;
        if w.len() < 2 || w.contains(&0) {
            return Err(Error::invalid("need at least input and output widths, all positive"));
        }
        if self.activations.len() != w.len() - 2 {
            return Err(Error::invalid(format!(
                "{} hidden layers but {} activations",
                w.len() - 2,
                self.activations.len()
            )));
        }
        let q = self.param_count();
        if q > MAX_PARAMS {
            return Err(Error::invalid(format!("{q} parameters exceed the dense-Hessian budget of {MAX_PARAMS}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated widths")
    }

    fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        self.activations.get(layer).copied().unwrap_or(Activation::Identity)
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for p in self.layer_widths.windows(2) {
            off.push(off.last().unwrap() + p[0] * p[1] + p[1]);
        }
        off
    }

    pub fn is_smooth(&self) -> bool {
        !self.activations.contains(&Activation::Relu)
    }

    /// `U(−1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn init_params(&self, seed: u64) -> ParamPoint {
        let mut rng = par::stream_rng(seed, 0);
        let mut out = Vec::with_capacity(self.param_count());
        for p in self.layer_widths.windows(2) {
            let r = 1.0 / (p[0] as f64).sqrt();
            out.extend((0..p[0] * p[1] + p[1]).map(|_| rng.random_range(-r..=r)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::invalid("dataset needs as many targets as inputs, at least one"));
        }
        let (d, o) = (inputs[0].len(), targets[0].len());
        if inputs.iter().any(|x| x.len() != d) || targets.iter().any(|y| y.len() != o) {
            return Err(Error::invalid("ragged dataset rows"));
        }
        if inputs.iter().chain(&targets).flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset has non-finite entries"));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

/// `n` points with `x ~ U(−π, π)` and `y = sin x + N(0, σ²)`.
pub fn make_sine_dataset(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset needs at least one point"));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = par::stream_rng(seed, i as u64);
        let x = rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI);
        let e = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        inputs.push(vec![x]);
        targets.push(vec![x.sin() + e]);
    }
    Dataset::new(inputs, targets)
}

/// Splits the samples into `k` equal batches of neighbouring inputs: sort by
/// the first input coordinate, then cut into contiguous runs. For the sine
/// data each batch covers one phase interval of the curve.
pub fn partition_by_phase(data: &Dataset, k: usize) -> Result<Vec<Dataset>> {
    let n = data.len();
    if k == 0 || n % k != 0 {
        return Err(Error::invalid(format!("{n} samples do not split into {k} equal batches")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.inputs[a][0].total_cmp(&data.inputs[b][0]).then(a.cmp(&b)));
    Ok(order.chunks(n / k).map(|idx| data.subset(idx)).collect())
}

// ---------------------------------------------------------------------------
// forward / backward

struct Tape {
    /// Pre-activations per layer.
    z: Vec<Vec<f64>>,
    /// Layer inputs: `a[0]` is the sample, `a[l]` feeds layer `l`.
    a: Vec<Vec<f64>>,
}

fn forward(spec: &MlpSpec, offsets: &[usize], params: &[f64], x: &[f64]) -> Tape {
    let mut tape = Tape { z: Vec::new(), a: vec![x.to_vec()] };
    for l in 0..spec.n_layers() {
        let (n_in, n_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        let w = &params[offsets[l]..offsets[l] + n_in * n_out];
        let b = &params[offsets[l] + n_in * n_out..offsets[l + 1]];
        let input = tape.a.last().unwrap();
        let z: Vec<f64> = (0..n_out).map(|j| dot(&w[j * n_in..(j + 1) * n_in], input) + b[j]).collect();
        let act = spec.activation(l);
        tape.a.push(z.iter().map(|&v| act.apply(v)).collect());
        tape.z.push(z);
    }
    tape
}

/// Network output for one input.
pub fn predict(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
    forward(spec, &spec.offsets(), params, x).a.pop().unwrap()
}

fn loss_and_gradient(spec: &MlpSpec, data: &Dataset, params: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
    let offsets = spec.offsets();
    let scale = 1.0 / (data.len() * spec.output_dim()) as f64;
    let mut loss = 0.0;
    let mut grad = if want_grad { vec![0.0; params.len()] } else { Vec::new() };
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        let tape = forward(spec, &offsets, params, x);
        let y = tape.a.last().unwrap();
        let resid: Vec<f64> = y.iter().zip(t).map(|(a, b)| a - b).collect();
        loss += dot(&resid, &resid);
        if !want_grad {
            continue;
        }
        let mut delta: Vec<f64> = resid.iter().map(|r| 2.0 * scale * r).collect();
        for l in (0..spec.n_layers()).rev() {
            let (n_in, n_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            let input = &tape.a[l];
            let w_off = offsets[l];
            let b_off = w_off + n_in * n_out;
            for j in 0..n_out {
                for k in 0..n_in {
                    grad[w_off + j * n_in + k] += delta[j] * input[k];
                }
                grad[b_off + j] += delta[j];
            }
            if l == 0 {
                break;
            }
            let act = spec.activation(l - 1);
            delta = (0..n_in)
                .map(|k| {
                    let s: f64 = (0..n_out).map(|j| params[w_off + j * n_in + k] * delta[j]).sum();
                    s * act.derivative(tape.z[l - 1][k])
                })
                .collect();
        }
    }
    (loss * scale, grad)
}

/// MSE loss of a fixed network architecture on a fixed dataset, as a
/// function of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLossField {
    spec: MlpSpec,
    data: Dataset,
}

pub fn mlp_loss_field(spec: MlpSpec, data: Dataset) -> Result<MlpLossField> {
    spec.validate()?;
    if data.input_dim() != spec.input_dim() || data.output_dim() != spec.output_dim() {
        return Err(Error::invalid(format!(
            "dataset is {}→{}, network is {}→{}",
            data.input_dim(),
            data.output_dim(),
            spec.input_dim(),
            spec.output_dim()
        )));
    }
    Ok(MlpLossField { spec, data })
}

impl MlpLossField {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Smallest `|pre-activation|` over hidden ReLU units and samples; large
    /// values mean the point is far from any kink. `None` without ReLUs.
    pub fn min_relu_margin(&self, params: &[f64]) -> Option<f64> {
        let offsets = self.spec.offsets();
        let relu_layers: Vec<usize> =
            (0..self.spec.activations.len()).filter(|&l| self.spec.activations[l] == Activation::Relu).collect();
        if relu_layers.is_empty() {
            return None;
        }
        let mut m = f64::INFINITY;
        for x in &self.data.inputs {
            let tape = forward(&self.spec, &offsets, params, x);
            for &l in &relu_layers {
                m = tape.z[l].iter().fold(m, |acc, z| acc.min(z.abs()));
            }
        }
        Some(m)
    }
}

impl ScalarField for MlpLossField {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn value(&self, x: &[f64]) -> f64 {
        loss_and_gradient(&self.spec, &self.data, x, false).0
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::GRADIENT_ONLY
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        loss_and_gradient(&self.spec, &self.data, x, true).1
    }

    fn is_smooth(&self) -> bool {
        self.spec.is_smooth()
    }
}

// ---------------------------------------------------------------------------
// training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-batch Adam.
    pub fn adam(learning_rate: f64, steps: usize, batch_size: usize, seed: u64) -> Self {
        Self { optimizer: Optimizer::adam(), learning_rate, steps, batch_size, seed }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("training needs at least one step"));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::invalid(format!("batch size must be in 1..={n}, got {}", self.batch_size)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    /// Minibatch loss before the update.
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: ParamPoint,
    pub trace: Vec<TrainRecord>,
    /// Full-data loss and gradient norm at the returned parameters.
    pub final_loss: f64,
    pub final_grad_norm: f64,
}

/// Trains from the seeded initialisation. Batches are drawn without
/// replacement per step from a dedicated RNG stream.
pub fn train(spec: &MlpSpec, data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    mlp_loss_field(spec.clone(), data.clone())?;
    cfg.validate(data.len())?;
    let mut params = spec.init_params(cfg.seed);
    let q = params.len();
    let mut batch_rng = par::stream_rng(cfg.seed, 1);
    let (mut m, mut v) = (vec![0.0; q], vec![0.0; q]);
    let mut trace = Vec::with_capacity(cfg.steps);
    let full_batch = cfg.batch_size == data.len();

    for step in 1..=cfg.steps {
        let (loss, grad) = if full_batch {
            loss_and_gradient(spec, data, &params, true)
        } else {
            let idx = sample(&mut batch_rng, data.len(), cfg.batch_size).into_vec();
            loss_and_gradient(spec, &data.subset(&idx), &params, true)
        };
        let grad_norm = dot(&grad, &grad).sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::DivergedTraining { step });
        }
        trace.push(TrainRecord { step, loss, grad_norm });
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(step as i32);
                let c2 = 1.0 - beta2.powi(step as i32);
                for i in 0..q {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergedTraining { step });
        }
    }
    let (final_loss, grad) = loss_and_gradient(spec, data, &params, true);
    if !final_loss.is_finite() {
        return Err(Error::DivergedTraining { step: cfg.steps });
    }
    let final_grad_norm = dot(&grad, &grad).sqrt();
    Ok(TrainResult { params, trace, final_loss, final_grad_norm })
}

// ---------------------------------------------------------------------------
// snapshots

/// A trained network with its data, enough to rebuild the loss field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub spec: MlpSpec,
    pub params: ParamPoint,
    pub seed: u64,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub dataset: Dataset,
}

impl ModelSnapshot {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let snap: Self = serde_json::from_str(&text)?;
        if snap.params.len() != snap.spec.param_count() {
            return Err(Error::invalid("snapshot parameter count does not match its spec"));
        }
        Ok(snap)
    }

    pub fn loss_field(&self) -> Result<MlpLossField> {
        mlp_loss_field(self.spec.clone(), self.dataset.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{eval_hessian, finite_diff_gradient};
    use crate::linalg::SymMatrix;

    fn random_point(q: usize, seed: u64) -> Vec<f64> {
        let mut rng = par::stream_rng(seed, 99);
        (0..q).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn parameter_count() {
        assert_eq!(MlpSpec::uniform(vec![1, 16, 8, 1], Activation::Tanh).unwrap().param_count(), 177);
        assert!(MlpSpec::uniform(vec![1, 50, 50, 1], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![1, 4, 1], vec![]).is_err());
        assert!(MlpSpec::new(vec![1], vec![]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = make_sine_dataset(12, 0.1, 3).unwrap();
        for (widths, act) in [(vec![1, 8, 1], Activation::Tanh), (vec![1, 16, 8, 1], Activation::Tanh)] {
            let f = mlp_loss_field(MlpSpec::uniform(widths, act).unwrap(), data.clone()).unwrap();
            for s in 0..5 {
                let x = random_point(f.dim(), s);
                let g = f.gradient(&x);
                let fd = finite_diff_gradient(&f, &x, None).unwrap();
                let scale = dot(&g, &g).sqrt().max(1e-3);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() / scale < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_network_on_zero_targets() {
        let data = Dataset::new(vec![vec![0.3], vec![-1.0]], vec![vec![0.0], vec![0.0]]).unwrap();
        let f = mlp_loss_field(MlpSpec::uniform(vec![1, 4, 1], Activation::Tanh).unwrap(), data).unwrap();
        let x = vec![0.0; f.dim()];
        assert_eq!(f.value(&x), 0.0);
        assert!(f.gradient(&x).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn linear_least_squares_hessian() {
        // y = W x + b with d = 2 inputs and o = 2 outputs; each output row
        // (W_j, b_j) has Hessian 2/(n o) Σ_s [x_s; 1][x_s; 1]ᵀ
        let inputs = vec![vec![0.5, -1.0], vec![1.5, 0.2], vec![-0.3, 0.8]];
        let targets = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 0.5]];
        let data = Dataset::new(inputs.clone(), targets).unwrap();
        let f = mlp_loss_field(MlpSpec::new(vec![2, 2], vec![]).unwrap(), data).unwrap();
        let (d, o, n) = (2, 2, 3.0);
        let mut exact = SymMatrix::zeros(6);
        let idx = |j: usize, k: usize| if k < d { j * d + k } else { o * d + j };
        for x in &inputs {
            let xe = [x[0], x[1], 1.0];
            for j in 0..o {
                for a in 0..=d {
                    for b in a..=d {
                        let v = exact.get(idx(j, a), idx(j, b)) + 2.0 / (n * o as f64) * xe[a] * xe[b];
                        exact.set(idx(j, a), idx(j, b), v);
                    }
                }
            }
        }
        for s in 0..3 {
            let h = eval_hessian(&f, &random_point(6, s)).unwrap();
            assert!(h.max_abs_diff(&exact) < 1e-6, "{}", h.max_abs_diff(&exact));
        }
    }

    #[test]
    fn hvp_agrees_with_dense_hessian() {
        let data = make_sine_dataset(10, 0.0, 1).unwrap();
        let f = mlp_loss_field(MlpSpec::uniform(vec![1, 8, 1], Activation::Tanh).unwrap(), data).unwrap();
        let x = random_point(f.dim(), 4);
        let h = eval_hessian(&f, &x).unwrap();
        let v = random_point(f.dim(), 5);
        let a = h.matvec(&v);
        let b = f.hvp(&x, &v);
        for (p, r) in a.iter().zip(&b) {
            assert!((p - r).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_fields_are_flagged() {
        let data = Dataset::new(vec![vec![0.5, -0.5]], vec![vec![1.0, 0.0]]).unwrap();
        let f = mlp_loss_field(MlpSpec::uniform(vec![2, 4, 2], Activation::Relu).unwrap(), data).unwrap();
        assert!(!f.is_smooth());
        assert!(f.min_relu_margin(&vec![0.1; f.dim()]).unwrap() > 0.0);
    }

    #[test]
    fn sine_dataset() {
        let a = make_sine_dataset(30, 0.0, 8).unwrap();
        for (x, y) in a.inputs.iter().zip(&a.targets) {
            assert_eq!(y[0], x[0].sin());
            assert!(x[0].abs() <= std::f64::consts::PI);
        }
        assert_eq!(make_sine_dataset(30, 0.2, 8).unwrap(), make_sine_dataset(30, 0.2, 8).unwrap());
        assert!(make_sine_dataset(0, 0.0, 0).is_err());
    }

    #[test]
    fn phase_partition() {
        let data = make_sine_dataset(70, 0.0, 2).unwrap();
        let parts = partition_by_phase(&data, 7).unwrap();
        assert_eq!(parts.len(), 7);
        assert!(parts.iter().all(|p| p.len() == 10));
        for w in parts.windows(2) {
            let hi = w[0].inputs.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
            let lo = w[1].inputs.iter().map(|x| x[0]).fold(f64::MAX, f64::min);
            assert!(hi <= lo);
        }
        assert!(partition_by_phase(&data, 4).is_err());
    }

    #[test]
    fn one_step_is_one_update() {
        let data = make_sine_dataset(8, 0.0, 0).unwrap();
        let spec = MlpSpec::uniform(vec![1, 3, 1], Activation::Tanh).unwrap();
        let cfg = TrainConfig { optimizer: Optimizer::Sgd, learning_rate: 0.1, steps: 1, batch_size: 8, seed: 4 };
        let r = train(&spec, &data, &cfg).unwrap();
        let f = mlp_loss_field(spec.clone(), data).unwrap();
        let p0 = spec.init_params(4);
        let g = f.gradient(&p0);
        let want: Vec<f64> = p0.iter().zip(&g).map(|(p, g)| p - 0.1 * g).collect();
        assert_eq!(r.params, want);
        assert_eq!(r.trace.len(), 1);
        assert!(train(&spec, f.data(), &TrainConfig { steps: 0, ..cfg }).is_err());
        assert!(train(&spec, f.data(), &TrainConfig { batch_size: 9, ..cfg }).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let data = make_sine_dataset(20, 0.05, 1).unwrap();
        let spec = MlpSpec::uniform(vec![1, 6, 1], Activation::Tanh).unwrap();
        let cfg = TrainConfig::adam(1e-2, 200, 5, 7);
        assert_eq!(train(&spec, &data, &cfg).unwrap(), train(&spec, &data, &cfg).unwrap());
    }

    #[test]
    fn linear_model_converges() {
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let targets = inputs.iter().map(|x| vec![1.5 * x[0] - 0.25]).collect();
        let data = Dataset::new(inputs, targets).unwrap();
        let spec = MlpSpec::new(vec![1, 1], vec![]).unwrap();
        let r = train(&spec, &data, &TrainConfig::adam(1e-2, 5000, 20, 0)).unwrap();
        assert!(r.final_loss <= 1e-6, "{}", r.final_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let data = make_sine_dataset(10, 0.0, 0).unwrap();
        let spec = MlpSpec::new(vec![1, 1], vec![]).unwrap();
        let cfg = TrainConfig { optimizer: Optimizer::Sgd, learning_rate: 1e6, steps: 500, batch_size: 10, seed: 0 };
        assert!(matches!(train(&spec, &data, &cfg), Err(Error::DivergedTraining { .. })));
    }

    #[test]
    fn snapshot_round_trip() {
        let data = make_sine_dataset(5, 0.0, 0).unwrap();
        let spec = MlpSpec::uniform(vec![1, 2, 1], Activation::Tanh).unwrap();
        let snap = ModelSnapshot { params: spec.init_params(1), spec, seed: 1, final_loss: 0.5, final_grad_norm: 0.1, dataset: data };
        let dir = std::env::temp_dir().join(format!("losscurv-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.json");
        snap.save(&path).unwrap();
        assert_eq!(ModelSnapshot::load(&path).unwrap(), snap);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
