//! The anatomy-aware classification head and its gradients.
//!
//! Forward pipeline for one image with region features R (k x d) and a
//! normalized region adjacency A (k x k):
//!
//! ```text
//! H1 = ReLU(A R W1_layer1)          first GCN layer
//! Z  = ReLU(A H1 W1_layer2)         second GCN layer, output dim = d
//! P  = row_softmax(R Z^T)           non-local attention weights
//! Q  = P R                          attended features
//! Y  = [R ; Q] W2                   per-region multi-label logits
//! ```
//!
//! The loss is mean binary cross-entropy over all k x M cells, computed in
//! logit form. `backward` returns exact analytic gradients for the three
//! weight matrices, including the attention path through both softmax
//! arguments. The per-region fully-connected baseline (`baseline_forward`)
//! classifies each region independently from its own features.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::adjacency;
use crate::error::{Error, Result};
use crate::tensor::{
    matmul, relu, relu_backward, row_softmax, row_softmax_backward, sigmoid, Matrix, ParamStore,
};

pub const W1_LAYER1: &str = "w1_layer1";
pub const W1_LAYER2: &str = "w1_layer2";
pub const W2: &str = "w2";
/// Parameter name of the per-region baseline's single weight matrix.
pub const BASELINE_W: &str = "w";

/// Dimensions and seed for one model instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Number of anatomical regions k.
    pub regions: usize,
    /// Input feature dimensionality d.
    pub feature_dim: usize,
    /// Output dims of the two GCN layers; the last must equal `feature_dim`
    /// so the attention product R Z^T is well-formed.
    pub gcn_dims: Vec<usize>,
    /// Number of labels M.
    pub label_count: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Config with the reference dimensionality: 18 regions, 1024-d
    /// features, GCN dims 512/1024, 9 labels.
    pub fn reference(seed: u64) -> Self {
        Self {
            regions: 18,
            feature_dim: 1024,
            gcn_dims: vec![512, 1024],
            label_count: 9,
            seed,
        }
    }

    /// Config for arbitrary dims with the default GCN shape [d/2, d].
    pub fn with_dims(regions: usize, feature_dim: usize, label_count: usize, seed: u64) -> Self {
        Self {
            regions,
            feature_dim,
            gcn_dims: vec![(feature_dim / 2).max(1), feature_dim],
            label_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions == 0 || self.feature_dim == 0 || self.label_count == 0 {
            return Err(Error::Config(
                "regions, feature_dim and label_count must all be at least 1".into(),
            ));
        }
        if self.gcn_dims.len() != 2 {
            return Err(Error::Config(format!(
                "exactly two GCN layers are supported, got dims {:?}",
                self.gcn_dims
            )));
        }
        if self.gcn_dims.contains(&0) {
            return Err(Error::Config("GCN layer dims must be at least 1".into()));
        }
        if *self.gcn_dims.last().unwrap() != self.feature_dim {
            return Err(Error::Config(format!(
                "last GCN dim {} must equal feature_dim {} so attention R Z^T is well-formed",
                self.gcn_dims.last().unwrap(),
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// The three learned weight matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub w1_layer1: Matrix,
    pub w1_layer2: Matrix,
    pub w2: Matrix,
}

impl ModelParams {
    pub fn into_store(self) -> ParamStore {
        let mut store = ParamStore::new();
        store.insert(W1_LAYER1, self.w1_layer1);
        store.insert(W1_LAYER2, self.w1_layer2);
        store.insert(W2, self.w2);
        store
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        Ok(Self {
            w1_layer1: store.param(W1_LAYER1)?.clone(),
            w1_layer2: store.param(W1_LAYER2)?.clone(),
            w2: store.param(W2)?.clone(),
        })
    }
}

/// Gradients matching [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub w1_layer1: Matrix,
    pub w1_layer2: Matrix,
    pub w2: Matrix,
}

fn uniform_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

/// Draw weights from zero-mean uniform distributions scaled by
/// 1/sqrt(fan_in), deterministically from `config.seed`.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let d = config.feature_dim;
    let (g1, g2) = (config.gcn_dims[0], config.gcn_dims[1]);
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    Ok(ModelParams {
        w1_layer1: uniform_matrix(&mut rng, d, g1, d),
        w1_layer2: uniform_matrix(&mut rng, g1, g2, g1),
        w2: uniform_matrix(&mut rng, 2 * d, config.label_count, 2 * d),
    })
}

/// Deterministic init for the baseline's d x M weight matrix.
pub fn init_baseline(feature_dim: usize, label_count: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    uniform_matrix(&mut rng, feature_dim, label_count, feature_dim)
}

/// Zero out rows of `r` whose mask entry is 0.
pub fn apply_mask(r: &Matrix, mask: &[u8]) -> Result<Matrix> {
    if mask.len() != r.rows() {
        return Err(Error::Contract(format!(
            "mask length {} does not match region count {}",
            mask.len(),
            r.rows()
        )));
    }
    let mut out = r.clone();
    for (row, &present) in mask.iter().enumerate() {
        if present == 0 {
            out.row_mut(row).fill(0.0);
        }
    }
    Ok(out)
}

/// Two GCN layers with ReLU after each: Z = ReLU(A ReLU(A R W1) W1').
pub fn gcn_forward(r: &Matrix, a_norm: &Matrix, params: &ModelParams) -> Result<Matrix> {
    let h1 = relu(&matmul(&matmul(a_norm, r)?, &params.w1_layer1)?);
    Ok(relu(&matmul(&matmul(a_norm, &h1)?, &params.w1_layer2)?))
}

/// Non-local attention: Q = row_softmax(R Z^T) R.
pub fn attention_forward(r: &Matrix, z: &Matrix) -> Result<Matrix> {
    let weights = row_softmax(&matmul(r, &z.transpose())?);
    matmul(&weights, r)
}

/// Concatenation classifier: logits = [R ; Q] W2.
pub fn classify(r: &Matrix, q: &Matrix, params: &ModelParams) -> Result<Matrix> {
    matmul(&r.hcat(q)?, &params.w2)
}

fn check_labels(logits: &Matrix, labels: &Matrix) -> Result<()> {
    if logits.shape() != labels.shape() {
        return Err(Error::Shape {
            op: "bce_loss",
            left_rows: logits.rows(),
            left_cols: logits.cols(),
            right_rows: labels.rows(),
            right_cols: labels.cols(),
        });
    }
    if labels.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Data("labels must be exactly 0 or 1".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy over all k x M cells, in the numerically
/// stable logit form.
pub fn bce_loss(logits: &Matrix, labels: &Matrix) -> Result<f64> {
    check_labels(logits, labels)?;
    let n = logits.data().len() as f64;
    let mut total = 0.0;
    for (&x, &y) in logits.data().iter().zip(labels.data()) {
        // -[y log s(x) + (1-y) log(1 - s(x))] = max(x,0) - x y + ln(1 + e^{-|x|})
        total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
    }
    Ok(total / n)
}

/// d(bce_loss)/d(logits) = (sigmoid(logits) - labels) / (k M).
pub fn bce_loss_backward(logits: &Matrix, labels: &Matrix) -> Result<Matrix> {
    check_labels(logits, labels)?;
    let scale = 1.0 / logits.data().len() as f64;
    sigmoid(logits).sub(labels).map(|diff| diff.scale(scale))
}

/// Every intermediate needed by [`backward`], cached by [`forward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input features after mask substitution.
    pub r: Matrix,
    /// First GCN layer activations (post-ReLU).
    pub h1: Matrix,
    /// Second GCN layer output Z (post-ReLU).
    pub z: Matrix,
    /// Attention logits R Z^T.
    pub attn_logits: Matrix,
    /// Attention weights, rows summing to 1.
    pub attn_weights: Matrix,
    /// Attended features Q.
    pub q: Matrix,
    /// Concatenation [R ; Q].
    pub concat: Matrix,
    /// Per-region label logits.
    pub logits: Matrix,
    /// The adjacency used, kept for the backward pass.
    pub a_norm: Matrix,
}

/// Full forward pass. Rows of `r` whose mask entry is 0 are zeroed before
/// any computation; those regions still receive logits.
pub fn forward(
    r: &Matrix,
    mask: &[u8],
    a_norm: &Matrix,
    params: &ModelParams,
) -> Result<ForwardTrace> {
    let r = apply_mask(r, mask)?;
    let h1 = relu(&matmul(&matmul(a_norm, &r)?, &params.w1_layer1)?);
    let z = relu(&matmul(&matmul(a_norm, &h1)?, &params.w1_layer2)?);
    let attn_logits = matmul(&r, &z.transpose())?;
    let attn_weights = row_softmax(&attn_logits);
    let q = matmul(&attn_weights, &r)?;
    let concat = r.hcat(&q)?;
    let logits = matmul(&concat, &params.w2)?;
    Ok(ForwardTrace { r, h1, z, attn_logits, attn_weights, q, concat, logits, a_norm: a_norm.clone() })
}

/// Exact analytic gradients of the mean BCE loss with respect to all three
/// weight matrices.
pub fn backward(trace: &ForwardTrace, labels: &Matrix, params: &ModelParams) -> Result<ModelGrads> {
    let d = trace.r.cols();
    if params.w2.rows() != 2 * d {
        return Err(Error::Contract(format!(
            "trace/params mismatch: W2 has {} rows but the trace concatenation is {} wide",
            params.w2.rows(),
            2 * d
        )));
    }
    if params.w1_layer2.cols() != trace.z.cols() || params.w1_layer1.cols() != trace.h1.cols() {
        return Err(Error::Contract(
            "trace/params mismatch: GCN weight shapes do not match cached activations".into(),
        ));
    }

    let g_logits = bce_loss_backward(&trace.logits, labels)?;

    // classifier: logits = [R ; Q] W2
    let grad_w2 = matmul(&trace.concat.transpose(), &g_logits)?;
    let g_concat = matmul(&g_logits, &params.w2.transpose())?;
    let g_q = g_concat.col_slice(d, 2 * d);

    // attention: Q = P R, P = softmax(S), S = R Z^T
    let g_p = matmul(&g_q, &trace.r.transpose())?;
    let g_s = row_softmax_backward(&g_p, &trace.attn_weights)?;
    let g_z = matmul(&g_s.transpose(), &trace.r)?;

    // second GCN layer: Z = ReLU(A H1 W1_layer2)
    let a_t = trace.a_norm.transpose();
    let g_z_pre = relu_backward(&g_z, &trace.z)?;
    let at_gz = matmul(&a_t, &g_z_pre)?;
    let grad_w1_layer2 = matmul(&trace.h1.transpose(), &at_gz)?;
    let g_h1 = matmul(&at_gz, &params.w1_layer2.transpose())?;

    // first GCN layer: H1 = ReLU(A R W1_layer1)
    let g_h1_pre = relu_backward(&g_h1, &trace.h1)?;
    let grad_w1_layer1 = matmul(&trace.r.transpose(), &matmul(&a_t, &g_h1_pre)?)?;

    Ok(ModelGrads { w1_layer1: grad_w1_layer1, w1_layer2: grad_w1_layer2, w2: grad_w2 })
}

/// Per-region independent classification: logits = R W.
pub fn baseline_forward(r: &Matrix, w: &Matrix) -> Result<Matrix> {
    matmul(r, w)
}

/// Gradient of the mean BCE loss for the baseline: dW = R^T dLogits.
pub fn baseline_backward(r: &Matrix, logits: &Matrix, labels: &Matrix) -> Result<Matrix> {
    matmul(&r.transpose(), &bce_loss_backward(logits, labels)?)
}

/// Per-region label probabilities for one image.
pub fn predict(r: &Matrix, mask: &[u8], a_norm: &Matrix, params: &ModelParams) -> Result<Matrix> {
    Ok(sigmoid(&forward(r, mask, a_norm, params)?.logits))
}

pub fn predict_baseline(r: &Matrix, mask: &[u8], w: &Matrix) -> Result<Matrix> {
    Ok(sigmoid(&baseline_forward(&apply_mask(r, mask)?, w)?))
}

// ---------------------------------------------------------------------------
// Full-model finite-difference check on an internally built toy instance.
// ---------------------------------------------------------------------------

/// Outcome of [`toy_grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub config: ModelConfig,
    pub batch: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a master seed and a stream id.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix(master ^ splitmix(stream))
}

/// Build a small random instance and compare the analytic gradients of the
/// batch loss against central finite differences, returning the worst
/// relative error over every weight coordinate.
///
/// A +/-h step on one weight moves any ReLU pre-activation by at most
/// h * max|A R| (first layer) and correspondingly through the second
/// layer. Instances are resampled (deterministically) until every
/// pre-activation clears that bound with a safety factor, so the central
/// difference never straddles a kink. With `corrupt_gradient` one analytic
/// entry is perturbed, which must make the check fail; it exists as a
/// negative control.
pub fn toy_grad_check(seed: u64, h: f64, corrupt_gradient: bool) -> Result<GradCheckReport> {
    const SAFETY: f64 = 4.0;

    for attempt in 0..1000u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, attempt));
        let k = rng.random_range(2..=4usize);
        let d = rng.random_range(3..=8usize);
        let m = rng.random_range(1..=3usize);
        let batch = rng.random_range(1..=3usize);
        let config = ModelConfig {
            regions: k,
            feature_dim: d,
            gcn_dims: vec![(d / 2).max(1), d],
            label_count: m,
            seed: derive_seed(seed, attempt.wrapping_add(1000)),
        };
        let params = init_params(&config)?;

        // random symmetric graph, normalized like the production pipeline
        let mut graph = Matrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                if rng.random_range(0.0..1.0) < 0.5 {
                    graph[(i, j)] = 1.0;
                    graph[(j, i)] = 1.0;
                }
            }
        }
        let a_norm = adjacency::normalize(&graph);

        let images: Vec<(Matrix, Matrix)> = (0..batch)
            .map(|_| {
                let r = Matrix::from_fn(k, d, |_, _| rng.random_range(-1.0..1.0));
                let y = Matrix::from_fn(k, m, |_, _| f64::from(rng.random_range(0..=1u8)));
                (r, y)
            })
            .collect();

        // reject instances whose ReLU pre-activations a +/-h weight step
        // could push across zero
        let max_abs = |m: &Matrix| m.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let w1_layer2_colsum = (0..params.w1_layer2.cols())
            .map(|c| (0..params.w1_layer2.rows()).map(|r| params.w1_layer2[(r, c)].abs()).sum())
            .fold(0.0f64, f64::max);
        let clean = images.iter().all(|(r, _)| {
            let ar = matmul(&a_norm, r).unwrap();
            let h1_pre = matmul(&ar, &params.w1_layer1).unwrap();
            let h1 = relu(&h1_pre);
            let ah1 = matmul(&a_norm, &h1).unwrap();
            let z_pre = matmul(&ah1, &params.w1_layer2).unwrap();
            // first layer: only W1_layer1 coordinates move these pre-acts
            let margin1 = SAFETY * h * max_abs(&ar);
            // second layer: W1_layer2 coordinates move them directly, and a
            // W1_layer1 step shifts one H1 column, which A and W1_layer2
            // then spread
            let margin2 = SAFETY * h * (max_abs(&ah1) + max_abs(&ar) * w1_layer2_colsum);
            h1_pre.data().iter().all(|v| v.abs() >= margin1)
                && z_pre.data().iter().all(|v| v.abs() >= margin2)
        });
        if !clean {
            continue;
        }

        let mask = vec![1u8; k];
        let mut store = init_params(&config)?.into_store();

        // analytic batch gradient
        let mut grads: Option<ModelGrads> = None;
        for (r, y) in &images {
            let view = ModelParams::from_store(&store)?;
            let trace = forward(r, &mask, &a_norm, &view)?;
            let g = backward(&trace, y, &view)?;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => {
                    acc.w1_layer1.add_scaled_in_place(&g.w1_layer1, 1.0)?;
                    acc.w1_layer2.add_scaled_in_place(&g.w1_layer2, 1.0)?;
                    acc.w2.add_scaled_in_place(&g.w2, 1.0)?;
                }
            }
        }
        let mut grads = grads.expect("batch is non-empty");
        let scale = 1.0 / batch as f64;
        grads.w1_layer1 = grads.w1_layer1.scale(scale);
        grads.w1_layer2 = grads.w1_layer2.scale(scale);
        grads.w2 = grads.w2.scale(scale);
        if corrupt_gradient {
            let v = grads.w2[(0, 0)];
            grads.w2[(0, 0)] = v + 0.5 * (1.0 + v.abs());
        }
        store.set_grad(W1_LAYER1, grads.w1_layer1)?;
        store.set_grad(W1_LAYER2, grads.w1_layer2)?;
        store.set_grad(W2, grads.w2)?;

        let a_norm_ref = &a_norm;
        let images_ref = &images;
        let mask_ref = &mask;
        let loss_fn = move |s: &ParamStore| -> Result<f64> {
            let view = ModelParams::from_store(s)?;
            let mut total = 0.0;
            for (r, y) in images_ref {
                let trace = forward(r, mask_ref, a_norm_ref, &view)?;
                total += bce_loss(&trace.logits, y)?;
            }
            Ok(total / images_ref.len() as f64)
        };

        let max_relative_error = crate::tensor::grad_check(loss_fn, &mut store, h)?;
        return Ok(GradCheckReport { max_relative_error, config, batch });
    }

    Err(Error::Contract(
        "could not build a kink-free toy instance in 1000 attempts".into(),
    ))
}
