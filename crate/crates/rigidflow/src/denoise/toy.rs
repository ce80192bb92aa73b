//! A small trainable denoiser with exact hand-written gradients, standing in
//! for a full geometric backbone at desk scale.
//!
//! Per-frame features are rotation-invariant descriptors (own position in
//! the body frame, permutation-invariant sums of relative positions and
//! relative rotations of the other frames, token one-hots, distance RBFs and
//! a time embedding) fed through a two-layer tanh MLP with three heads:
//! body-frame rotation velocity, body-frame translation velocity, and class
//! logits. The translation head output is mapped to world coordinates
//! through the current rotation, so the induced flow on relative geometry is
//! unaffected by a global rotation of the state.

use super::{Denoiser, DenoiseError, DenoiserOutput, FlowState};
use crate::flow_cont::{make_training_target, sample_prior};
use crate::flow_disc::{conditional_path_sample, DenoiserPosterior};
use crate::vocab::MASK_TOKEN;
use crate::{RigidFrame, Rotation};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

const N_RBF: usize = 8;
const RBF_SPACING: f64 = 1.0;
const RBF_WIDTH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    /// Adds a feature channel carrying the model's previous clean-token
    /// estimate. Off by default; the base feature layout is unchanged when
    /// disabled.
    pub self_conditioning: bool,
}

impl ToyConfig {
    pub fn new(vocab_size: usize) -> Self {
        ToyConfig {
            vocab_size,
            hidden: 128,
            self_conditioning: false,
        }
    }

    /// Input feature dimension implied by the configuration.
    pub fn feature_dim(&self) -> usize {
        let v = self.vocab_size;
        let base = 2            // t, 1−t
            + (v + 1)           // own token one-hot
            + 3                 // own position in body frame
            + (v + 1)           // token counts of the other frames
            + 3                 // Σ relative positions in body frame
            + 9                 // Σ relative rotations
            + N_RBF             // Σ distance RBFs
            + (v + 1)           // Σ token ⊗ distance
            + 1; // K − 1
        if self.self_conditioning {
            base + v
        } else {
            base
        }
    }
}

/// World → body for row vectors: `v·Rᵀ`.
fn to_body(v: &Vector3<f64>, r: &Rotation) -> Vector3<f64> {
    r.matrix() * v
}

/// Body → world for row vectors: `b·R`.
fn from_body(b: &Vector3<f64>, r: &Rotation) -> Vector3<f64> {
    r.matrix().transpose() * b
}

#[derive(Clone, Debug)]
pub struct ToyModel {
    pub cfg: ToyConfig,
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w_rot: DMatrix<f64>,
    pub b_rot: DVector<f64>,
    pub w_tr: DMatrix<f64>,
    pub b_tr: DVector<f64>,
    pub w_cls: DMatrix<f64>,
    pub b_cls: DVector<f64>,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Clone, Debug)]
pub struct ToyGradients {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w_rot: DMatrix<f64>,
    pub b_rot: DVector<f64>,
    pub w_tr: DMatrix<f64>,
    pub b_tr: DVector<f64>,
    pub w_cls: DMatrix<f64>,
    pub b_cls: DVector<f64>,
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ToyForward {
    pub features: Vec<DVector<f64>>,
    a1: Vec<DVector<f64>>,
    a2: Vec<DVector<f64>>,
    /// Body-frame rotation velocity per frame.
    pub rot_body: Vec<Vector3<f64>>,
    /// Body-frame translation velocity per frame.
    pub trans_body: Vec<Vector3<f64>>,
    pub logits: Vec<DVector<f64>>,
}

/// Regression and classification targets for one state.
///
/// The heads regress bounded increments rather than raw velocities (which
/// diverge as `t → 1`); [`Denoiser::evaluate`] restores the `1/(1−t)`
/// factor. The rotation head works in the left trivialisation,
/// `w_L = vee(R_t·Ŵ·R_tᵀ)` with `Ŵ = log(R_tᵀ·R̃₁)`: under a global
/// rotation of the state `w_L` is unchanged, matching the invariant
/// features, and the induced flow is globally equivariant.
#[derive(Clone, Debug)]
pub struct ToyTargets {
    /// Left-trivialised rotation increment targets.
    pub rot_w: Vec<Vector3<f64>>,
    /// World-frame translation increment targets, `(1−t)·(x₁−x₀)`.
    pub trans_world: Vec<Vector3<f64>>,
    /// Clean tokens (never mask).
    pub m1: Vec<usize>,
    /// Which slots contribute the cross-entropy term.
    pub masked: Vec<bool>,
    /// Multiplier on the frame-regression terms. Training uses the capped
    /// velocity weight `1/((1−t)² + ε)` so that late times, where sampling
    /// divides by `1−t`, are fitted in proportion.
    pub frame_weight: f64,
}

/// Right-trivialised coefficients (the module-wide convention) of a left
/// increment at `r`.
fn left_to_right(w_left: &Vector3<f64>, r: &Rotation) -> Vector3<f64> {
    r.matrix().transpose() * w_left
}

/// Left-trivialised coefficients of a right increment at `r`.
pub fn right_to_left(w_right: &Vector3<f64>, r: &Rotation) -> Vector3<f64> {
    r.matrix() * w_right
}

impl ToyModel {
    pub fn new<R: Rng + ?Sized>(cfg: ToyConfig, rng: &mut R) -> Self {
        let d = cfg.feature_dim();
        let h = cfg.hidden;
        let v = cfg.vocab_size;
        let init = |rows: usize, cols: usize, rng: &mut R| {
            let scale = 1.0 / (rows as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
        };
        ToyModel {
            w1: init(d, h, rng),
            b1: DVector::zeros(h),
            w2: init(h, h, rng),
            b2: DVector::zeros(h),
            w_rot: init(h, 3, rng),
            b_rot: DVector::zeros(3),
            w_tr: init(h, 3, rng),
            b_tr: DVector::zeros(3),
            w_cls: init(h, v, rng),
            b_cls: DVector::zeros(v),
            cfg,
        }
    }

    pub fn zeroed(cfg: ToyConfig) -> Self {
        let d = cfg.feature_dim();
        let h = cfg.hidden;
        let v = cfg.vocab_size;
        ToyModel {
            w1: DMatrix::zeros(d, h),
            b1: DVector::zeros(h),
            w2: DMatrix::zeros(h, h),
            b2: DVector::zeros(h),
            w_rot: DMatrix::zeros(h, 3),
            b_rot: DVector::zeros(3),
            w_tr: DMatrix::zeros(h, 3),
            b_tr: DVector::zeros(3),
            w_cls: DMatrix::zeros(h, v),
            b_cls: DVector::zeros(v),
            cfg,
        }
    }

    /// Rotation-invariant per-frame features. `self_cond` carries the
    /// model's previous clean-token estimate when self-conditioning is on.
    pub fn features(
        &self,
        state: &FlowState,
        self_cond: Option<&[Vec<f64>]>,
    ) -> Result<Vec<DVector<f64>>, DenoiseError> {
        let v = self.cfg.vocab_size;
        let k = state.k();
        let t = state.t();
        for &tok in &state.tokens.tokens {
            if tok > v {
                return Err(DenoiseError::ShapeMismatch {
                    expected: v,
                    got: tok,
                });
            }
        }
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let mut f = Vec::with_capacity(self.cfg.feature_dim());
            f.push(t);
            f.push(1.0 - t);
            let mut own = vec![0.0; v + 1];
            own[state.tokens.tokens[i]] = 1.0;
            f.extend_from_slice(&own);
            let own_body = to_body(&state.frames[i].trans, &state.frames[i].rot);
            f.extend_from_slice(own_body.as_slice());

            let mut counts = vec![0.0; v + 1];
            let mut rel_pos = Vector3::zeros();
            let mut rel_rot = [0.0; 9];
            let mut rbf = [0.0; N_RBF];
            let mut tok_dist = vec![0.0; v + 1];
            for j in 0..k {
                if j == i {
                    continue;
                }
                counts[state.tokens.tokens[j]] += 1.0;
                let d = state.frames[j].trans - state.frames[i].trans;
                rel_pos += to_body(&d, &state.frames[i].rot);
                let m = state.frames[j].rot.matrix() * state.frames[i].rot.matrix().transpose();
                for (c, x) in m.iter().enumerate() {
                    rel_rot[c] += x;
                }
                let dist = d.norm();
                for (c, r) in rbf.iter_mut().enumerate() {
                    let center = c as f64 * RBF_SPACING;
                    *r += (-(dist - center) * (dist - center) / (RBF_WIDTH * RBF_WIDTH)).exp();
                }
                tok_dist[state.tokens.tokens[j]] += dist;
            }
            f.extend_from_slice(&counts);
            f.extend_from_slice(rel_pos.as_slice());
            f.extend_from_slice(&rel_rot);
            f.extend_from_slice(&rbf);
            f.extend_from_slice(&tok_dist);
            f.push((k - 1) as f64);
            if self.cfg.self_conditioning {
                match self_cond {
                    Some(prev) => f.extend_from_slice(&prev[i]),
                    None => f.extend(std::iter::repeat(0.0).take(v)),
                }
            }
            debug_assert_eq!(f.len(), self.cfg.feature_dim());
            out.push(DVector::from_vec(f));
        }
        Ok(out)
    }

    pub fn forward(
        &self,
        state: &FlowState,
        self_cond: Option<&[Vec<f64>]>,
    ) -> Result<ToyForward, DenoiseError> {
        let features = self.features(state, self_cond)?;
        let mut a1 = Vec::with_capacity(features.len());
        let mut a2 = Vec::with_capacity(features.len());
        let mut rot_body = Vec::with_capacity(features.len());
        let mut trans_body = Vec::with_capacity(features.len());
        let mut logits = Vec::with_capacity(features.len());
        for x in &features {
            let h1 = (self.w1.transpose() * x + &self.b1).map(f64::tanh);
            let h2 = (self.w2.transpose() * &h1 + &self.b2).map(f64::tanh);
            let r = self.w_rot.transpose() * &h2 + &self.b_rot;
            let tr = self.w_tr.transpose() * &h2 + &self.b_tr;
            let l = self.w_cls.transpose() * &h2 + &self.b_cls;
            rot_body.push(Vector3::new(r[0], r[1], r[2]));
            trans_body.push(Vector3::new(tr[0], tr[1], tr[2]));
            logits.push(l);
            a1.push(h1);
            a2.push(h2);
        }
        Ok(ToyForward {
            features,
            a1,
            a2,
            rot_body,
            trans_body,
            logits,
        })
    }

    /// Loss of a cached forward pass against targets: the squared frame
    /// errors plus the masked cross-entropy.
    pub fn loss(
        &self,
        fwd: &ToyForward,
        state: &FlowState,
        targets: &ToyTargets,
    ) -> Result<f64, DenoiseError> {
        let k = state.k();
        if targets.rot_w.len() != k || targets.trans_world.len() != k {
            return Err(DenoiseError::ShapeMismatch {
                expected: k,
                got: targets.rot_w.len().min(targets.trans_world.len()),
            });
        }
        let mut loss = 0.0;
        for i in 0..k {
            loss += targets.frame_weight * (fwd.rot_body[i] - targets.rot_w[i]).norm_squared();
            let tb = to_body(&targets.trans_world[i], &state.frames[i].rot);
            loss += targets.frame_weight * (fwd.trans_body[i] - tb).norm_squared();
            if targets.masked[i] {
                let p = softmax(&fwd.logits[i]);
                loss -= p[targets.m1[i] - 1].max(f64::MIN_POSITIVE).ln();
            }
        }
        Ok(loss)
    }

    /// Exact reverse-mode gradients of [`ToyModel::loss`] w.r.t. all
    /// weights.
    pub fn backward(
        &self,
        fwd: &ToyForward,
        state: &FlowState,
        targets: &ToyTargets,
    ) -> Result<ToyGradients, DenoiseError> {
        let k = state.k();
        if targets.rot_w.len() != k || targets.trans_world.len() != k {
            return Err(DenoiseError::ShapeMismatch {
                expected: k,
                got: targets.rot_w.len().min(targets.trans_world.len()),
            });
        }
        let mut g = ToyGradients {
            w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
            b1: DVector::zeros(self.b1.len()),
            w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
            b2: DVector::zeros(self.b2.len()),
            w_rot: DMatrix::zeros(self.w_rot.nrows(), self.w_rot.ncols()),
            b_rot: DVector::zeros(self.b_rot.len()),
            w_tr: DMatrix::zeros(self.w_tr.nrows(), self.w_tr.ncols()),
            b_tr: DVector::zeros(self.b_tr.len()),
            w_cls: DMatrix::zeros(self.w_cls.nrows(), self.w_cls.ncols()),
            b_cls: DVector::zeros(self.b_cls.len()),
        };
        for i in 0..k {
            let d_rot = (fwd.rot_body[i] - targets.rot_w[i]) * (2.0 * targets.frame_weight);
            let tb = to_body(&targets.trans_world[i], &state.frames[i].rot);
            let d_tr = (fwd.trans_body[i] - tb) * (2.0 * targets.frame_weight);
            let d_logits = if targets.masked[i] {
                let mut p = softmax(&fwd.logits[i]);
                p[targets.m1[i] - 1] -= 1.0;
                p
            } else {
                DVector::zeros(self.cfg.vocab_size)
            };
            let d_rot = DVector::from_column_slice(d_rot.as_slice());
            let d_tr = DVector::from_column_slice(d_tr.as_slice());

            g.w_rot += &fwd.a2[i] * d_rot.transpose();
            g.b_rot += &d_rot;
            g.w_tr += &fwd.a2[i] * d_tr.transpose();
            g.b_tr += &d_tr;
            g.w_cls += &fwd.a2[i] * d_logits.transpose();
            g.b_cls += &d_logits;

            let d_a2 =
                &self.w_rot * &d_rot + &self.w_tr * &d_tr + &self.w_cls * &d_logits;
            let d_z2 = d_a2.zip_map(&fwd.a2[i], |d, a| d * (1.0 - a * a));
            g.w2 += &fwd.a1[i] * d_z2.transpose();
            g.b2 += &d_z2;

            let d_a1 = &self.w2 * &d_z2;
            let d_z1 = d_a1.zip_map(&fwd.a1[i], |d, a| d * (1.0 - a * a));
            g.w1 += &fwd.features[i] * d_z1.transpose();
            g.b1 += &d_z1;
        }
        Ok(g)
    }

    pub fn sgd_step(&mut self, g: &ToyGradients, lr: f64) {
        self.w1 -= &g.w1 * lr;
        self.b1 -= &g.b1 * lr;
        self.w2 -= &g.w2 * lr;
        self.b2 -= &g.b2 * lr;
        self.w_rot -= &g.w_rot * lr;
        self.b_rot -= &g.b_rot * lr;
        self.w_tr -= &g.w_tr * lr;
        self.b_tr -= &g.b_tr * lr;
        self.w_cls -= &g.w_cls * lr;
        self.b_cls -= &g.b_cls * lr;
    }

    /// Flat views over all parameters, used by the finite-difference check.
    pub fn param_count(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.w_rot.len()
            + self.b_rot.len()
            + self.w_tr.len()
            + self.b_tr.len()
            + self.w_cls.len()
            + self.b_cls.len()
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let sizes = [
            self.w1.len(),
            self.b1.len(),
            self.w2.len(),
            self.b2.len(),
            self.w_rot.len(),
            self.b_rot.len(),
            self.w_tr.len(),
            self.b_tr.len(),
            self.w_cls.len(),
            self.b_cls.len(),
        ];
        let mut i = idx;
        for (slot, &len) in sizes.iter().enumerate() {
            if i < len {
                return match slot {
                    0 => &mut self.w1.as_mut_slice()[i],
                    1 => &mut self.b1.as_mut_slice()[i],
                    2 => &mut self.w2.as_mut_slice()[i],
                    3 => &mut self.b2.as_mut_slice()[i],
                    4 => &mut self.w_rot.as_mut_slice()[i],
                    5 => &mut self.b_rot.as_mut_slice()[i],
                    6 => &mut self.w_tr.as_mut_slice()[i],
                    7 => &mut self.b_tr.as_mut_slice()[i],
                    8 => &mut self.w_cls.as_mut_slice()[i],
                    _ => &mut self.b_cls.as_mut_slice()[i],
                };
            }
            i -= len;
        }
        panic!("parameter index out of range");
    }

    pub fn grad_at(g: &ToyGradients, idx: usize) -> f64 {
        let parts: [&[f64]; 10] = [
            g.w1.as_slice(),
            g.b1.as_slice(),
            g.w2.as_slice(),
            g.b2.as_slice(),
            g.w_rot.as_slice(),
            g.b_rot.as_slice(),
            g.w_tr.as_slice(),
            g.b_tr.as_slice(),
            g.w_cls.as_slice(),
            g.b_cls.as_slice(),
        ];
        let mut i = idx;
        for p in parts {
            if i < p.len() {
                return p[i];
            }
            i -= p.len();
        }
        panic!("parameter index out of range");
    }
}

fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: DVector<f64> = logits.map(|l| (l - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

impl Denoiser for ToyModel {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn evaluate(&self, state: &FlowState) -> Result<DenoiserOutput, DenoiseError> {
        let fwd = self.forward(state, None)?;
        let scale = 1.0 / (1.0 - state.t()).max(1e-6);
        let rot_vel = fwd
            .rot_body
            .iter()
            .zip(&state.frames)
            .map(|(w, f)| left_to_right(w, &f.rot) * scale)
            .collect();
        let trans_vel = fwd
            .trans_body
            .iter()
            .zip(&state.frames)
            .map(|(b, f)| from_body(b, &f.rot) * scale)
            .collect();
        let posterior = DenoiserPosterior {
            probs: fwd
                .logits
                .iter()
                .map(|l| softmax(l).iter().cloned().collect())
                .collect(),
        };
        Ok(DenoiserOutput {
            rot_vel,
            trans_vel,
            posterior,
        })
    }
}

/// One clean training datum.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub frames1: Vec<RigidFrame>,
    pub tokens1: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    /// The learning rate anneals linearly to `lr × lr_floor` over training.
    pub lr_floor: f64,
    /// Draws per epoch; each draw is one SGD step on one sample.
    pub steps_per_epoch: usize,
    /// Upper cutoff for sampled times, avoiding the 1/(1−t) singularity.
    pub t_epsilon: f64,
    /// Cap parameter of the velocity loss weight `1/((1−t)² + ε)`.
    pub weight_epsilon: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 2000,
            lr: 1e-4,
            lr_floor: 0.1,
            steps_per_epoch: 8,
            t_epsilon: 1e-3,
            weight_epsilon: 0.01,
        }
    }
}

/// Trains against the conditional-path targets: per step, sample a datum,
/// a global pose, a time and a prior, build the symmetry-aligned target,
/// apply SGD on the combined frame regression + masked cross-entropy loss.
/// Deterministic given the RNG. Returns the per-epoch mean loss curve.
///
/// Each draw rotates the datum by a Haar-uniform global rotation. The
/// features see states only up to a global rotation, so this makes the
/// regression target a well-defined function of the features — the same
/// role the equivariant backbone plays at full scale.
pub fn toy_train<R: Rng + ?Sized>(
    model: &mut ToyModel,
    dataset: &[TrainSample],
    token_syms: &[Vec<Rotation>],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<Vec<f64>, DenoiseError> {
    assert!(!dataset.is_empty());
    let mut curve = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let anneal = 1.0 - (1.0 - opts.lr_floor) * epoch as f64 / opts.epochs.max(1) as f64;
        let lr = opts.lr * anneal;
        let mut epoch_loss = 0.0;
        for _ in 0..opts.steps_per_epoch {
            let sample = &dataset[rng.gen_range(0..dataset.len())];
            let k = sample.frames1.len();
            let t = rng.gen_range(0.0..1.0 - opts.t_epsilon);
            let frames0 = sample_prior(k, rng)?;
            let pose: Rotation = crate::rot3::sample_uniform_so3(rng);
            let frames1: Vec<RigidFrame> = sample
                .frames1
                .iter()
                .map(|f| RigidFrame::new(f.rot.compose(&pose), pose.apply_row(&f.trans)))
                .collect();
            let syms: Vec<Vec<Rotation>> = sample
                .tokens1
                .iter()
                .map(|&tok| token_syms[tok].clone())
                .collect();
            let path = make_training_target(&frames0, &frames1, &syms, t, rng)?;
            let tokens_t: Vec<usize> = sample
                .tokens1
                .iter()
                .map(|&m1| conditional_path_sample(m1, t, rng))
                .collect();
            let masked: Vec<bool> = tokens_t.iter().map(|&m| m == MASK_TOKEN).collect();
            let state = FlowState::new(path.frames_t.clone(), tokens_t, t)?;
            let targets = ToyTargets {
                rot_w: path
                    .target_rot_vel
                    .iter()
                    .zip(&path.frames_t)
                    .map(|(v, f)| right_to_left(&(v.w * (1.0 - t)), &f.rot))
                    .collect(),
                trans_world: path
                    .target_trans_vel
                    .iter()
                    .map(|v| v * (1.0 - t))
                    .collect(),
                m1: sample.tokens1.clone(),
                masked,
                frame_weight: 1.0 / ((1.0 - t) * (1.0 - t) + opts.weight_epsilon),
            };
            // Self-conditioning: half the steps feed the model's own
            // clean-token estimate back in (no gradient through it).
            let self_cond = if model.cfg.self_conditioning && rng.gen::<f64>() < 0.5 {
                let first = model.forward(&state, None)?;
                Some(
                    first
                        .logits
                        .iter()
                        .map(|l| softmax(l).iter().cloned().collect::<Vec<f64>>())
                        .collect::<Vec<_>>(),
                )
            } else {
                None
            };
            let fwd = model.forward(&state, self_cond.as_deref())?;
            epoch_loss += model.loss(&fwd, &state, &targets)?;
            let grads = model.backward(&fwd, &state, &targets)?;
            model.sgd_step(&grads, lr);
        }
        curve.push(epoch_loss / opts.steps_per_epoch as f64);
    }
    Ok(curve)
}

// ---------------------------------------------------------------------------
// Checkpoint format (versioned JSON).

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: ToyConfig,
    weights: Vec<(String, usize, usize, Vec<f64>)>,
}

const MODEL_FORMAT: &str = "rigidflow-toy-model";
const MODEL_VERSION: u32 = 1;

pub fn model_to_json(model: &ToyModel) -> String {
    let dump = |name: &str, m: &DMatrix<f64>| {
        (
            name.to_string(),
            m.nrows(),
            m.ncols(),
            m.as_slice().to_vec(),
        )
    };
    let dump_v = |name: &str, v: &DVector<f64>| {
        (name.to_string(), v.len(), 1usize, v.as_slice().to_vec())
    };
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: model.cfg.clone(),
        weights: vec![
            dump("w1", &model.w1),
            dump_v("b1", &model.b1),
            dump("w2", &model.w2),
            dump_v("b2", &model.b2),
            dump("w_rot", &model.w_rot),
            dump_v("b_rot", &model.b_rot),
            dump("w_tr", &model.w_tr),
            dump_v("b_tr", &model.b_tr),
            dump("w_cls", &model.w_cls),
            dump_v("b_cls", &model.b_cls),
        ],
    };
    serde_json::to_string(&file).expect("model serialises")
}

pub fn model_from_json(text: &str) -> Result<ToyModel, DenoiseError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| DenoiseError::BadFile(e.to_string()))?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(DenoiseError::BadFile(format!(
            "unexpected format {} v{}",
            file.format, file.version
        )));
    }
    let mut model = ToyModel::zeroed(file.config);
    for (name, rows, cols, data) in file.weights {
        if rows * cols != data.len() {
            return Err(DenoiseError::BadFile(format!("blob '{name}' size")));
        }
        let m = DMatrix::from_column_slice(rows, cols, &data);
        match name.as_str() {
            "w1" => model.w1 = m,
            "b1" => model.b1 = DVector::from_column_slice(&data),
            "w2" => model.w2 = m,
            "b2" => model.b2 = DVector::from_column_slice(&data),
            "w_rot" => model.w_rot = m,
            "b_rot" => model.b_rot = DVector::from_column_slice(&data),
            "w_tr" => model.w_tr = m,
            "b_tr" => model.b_tr = DVector::from_column_slice(&data),
            "w_cls" => model.w_cls = m,
            "b_cls" => model.b_cls = DVector::from_column_slice(&data),
            other => return Err(DenoiseError::BadFile(format!("unknown blob '{other}'"))),
        }
    }
    Ok(model)
}
