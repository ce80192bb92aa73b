//! Exact Bayes denoisers over finite toy datasets.
//!
//! The discrete oracle weights each datum by the masking-path likelihood of
//! the observed tokens. The continuous oracle weights data by the closed-form
//! density of the geodesic interpolant: translations are Gaussian with
//! variance `(1−t)²` (plus bandwidth), and the rotation angle `ω` between
//! `R_t` and `R₁` is `(1−t)·θ` with `θ` Haar-distributed, giving the density
//! `f(ω; s) = (1 − cos(ω/s)) / (s·(1 − cos ω))` w.r.t. the Haar measure,
//! `s = 1−t`. A Monte Carlo cross-check of the angle law lives in the tests.

use super::{Denoiser, DenoiseError, DenoiserOutput, FlowState};
use crate::flow_cont::conditional_velocity;
use crate::flow_disc::{DenoiserPosterior, TokenState};
use crate::rot3::geodesic_dist;
use crate::vocab::MASK_TOKEN;
use crate::RigidFrame;
use nalgebra::Vector3;
use std::f64::consts::PI;

/// Angle density of the geodesic interpolant at scale `s = 1−t`:
/// `q(ω; s) = (1 − cos(ω/s)) / (s·π)` on `[0, s·π]`.
pub fn haar_interpolant_angle_density(omega: f64, s: f64) -> f64 {
    if omega < 0.0 || omega > s * PI {
        return 0.0;
    }
    (1.0 - (omega / s).cos()) / (s * PI)
}

/// Log of the interpolant density w.r.t. Haar measure at angle `omega`,
/// scale `s`. `−∞` outside the support.
pub fn rotation_kernel_log_density(omega: f64, s: f64) -> f64 {
    if omega > s * PI {
        return f64::NEG_INFINITY;
    }
    if omega < 1e-8 {
        // limit (1 − cos(ω/s)) / (1 − cos ω) → 1/s².
        return -3.0 * s.ln();
    }
    let numer = 1.0 - (omega / s).cos();
    let denom = 1.0 - omega.cos();
    if numer <= 0.0 {
        return f64::NEG_INFINITY;
    }
    numer.ln() - s.ln() - denom.max(1e-300).ln()
}

/// Exact posterior over clean tokens by Bayes over a finite dataset of
/// token tuples: a masked slot contributes `1−t`, a matching unmasked slot
/// `t`, a mismatch zero.
pub fn oracle_bayes_discrete(
    dataset: &[Vec<usize>],
    state: &TokenState,
) -> Result<DenoiserPosterior, DenoiseError> {
    assert!(!dataset.is_empty(), "dataset must be nonempty");
    let k = state.tokens.len();
    let t = state.t;
    let vocab = dataset
        .iter()
        .flat_map(|d| d.iter())
        .cloned()
        .max()
        .unwrap_or(0);
    let mut weights = Vec::with_capacity(dataset.len());
    let mut total = 0.0;
    for datum in dataset {
        debug_assert_eq!(datum.len(), k);
        let mut w = 1.0;
        for (obs, &truth) in state.tokens.iter().zip(datum) {
            w *= match *obs {
                MASK_TOKEN => 1.0 - t,
                o if o == truth => t,
                _ => 0.0,
            };
            if w == 0.0 {
                break;
            }
        }
        total += w;
        weights.push(w);
    }
    if total <= 0.0 {
        return Err(DenoiseError::ZeroSupport);
    }
    let mut probs = vec![vec![0.0; vocab]; k];
    for (datum, &w) in dataset.iter().zip(&weights) {
        for (slot, &m1) in datum.iter().enumerate() {
            probs[slot][m1 - 1] += w / total;
        }
    }
    Ok(DenoiserPosterior { probs })
}

fn translation_log_likelihood(x_t: &Vector3<f64>, x1: &Vector3<f64>, t: f64, bw: f64) -> f64 {
    let var = (1.0 - t) * (1.0 - t) + bw * bw;
    let d2 = (x_t - x1 * t).norm_squared();
    -d2 / (2.0 * var) - 1.5 * (2.0 * PI * var).ln()
}

fn frame_log_likelihood(state: &RigidFrame, datum: &RigidFrame, t: f64, bw: f64) -> f64 {
    let s = ((1.0 - t) * (1.0 - t) + bw * bw).sqrt();
    let omega = geodesic_dist(&state.rot, &datum.rot);
    translation_log_likelihood(&state.trans, &datum.trans, t, bw)
        + rotation_kernel_log_density(omega, s)
}

/// Posterior-weighted average of conditional vector fields over a finite
/// dataset of frame tuples. For a single-datum dataset this is exactly the
/// conditional field.
pub fn oracle_kernel_continuous(
    dataset: &[Vec<RigidFrame>],
    frames_t: &[RigidFrame],
    t: f64,
    bandwidth: f64,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>), DenoiseError> {
    assert!(!dataset.is_empty(), "dataset must be nonempty");
    let weights = joint_frame_weights(dataset, frames_t, t, bandwidth);
    weighted_conditional_fields(dataset, &weights, frames_t, t)
}

fn joint_frame_weights(
    dataset: &[Vec<RigidFrame>],
    frames_t: &[RigidFrame],
    t: f64,
    bandwidth: f64,
) -> Vec<f64> {
    let mut logs: Vec<f64> = dataset
        .iter()
        .map(|datum| {
            frames_t
                .iter()
                .zip(datum)
                .map(|(s, d)| frame_log_likelihood(s, d, t, bandwidth))
                .sum()
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // Every datum outside the kernel support: fall back to uniform.
        return vec![1.0 / dataset.len() as f64; dataset.len()];
    }
    let mut total = 0.0;
    for l in &mut logs {
        *l = (*l - max).exp();
        total += *l;
    }
    logs.iter().map(|&w| w / total).collect()
}

fn weighted_conditional_fields(
    dataset: &[Vec<RigidFrame>],
    weights: &[f64],
    frames_t: &[RigidFrame],
    t: f64,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>), DenoiseError> {
    let k = frames_t.len();
    let mut rot = vec![Vector3::zeros(); k];
    let mut trans = vec![Vector3::zeros(); k];
    for (datum, &w) in dataset.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let (rv, tv) = match conditional_velocity(frames_t, datum, t) {
            Ok(v) => v,
            Err(crate::flow_cont::FlowError::Rot3(_)) => {
                // Antipodal state/datum pair: nudge the datum minutely.
                let nudged: Vec<RigidFrame> = datum
                    .iter()
                    .map(|f| {
                        let v = crate::TangentVec::new(Vector3::new(1e-6, 0.0, 0.0), f.rot);
                        RigidFrame::new(crate::rot3::exp_at(&f.rot, &v), f.trans)
                    })
                    .collect();
                conditional_velocity(frames_t, &nudged, t)?
            }
            Err(e) => return Err(e.into()),
        };
        for i in 0..k {
            rot[i] += rv[i].w * w;
            trans[i] += tv[i] * w;
        }
    }
    Ok((rot, trans))
}

/// Exact Bayes denoiser over a finite multimodal dataset: data are weighted
/// by the product of the token likelihood and the frame likelihood, then
/// both the posterior and the velocities are posterior expectations.
#[derive(Clone, Debug)]
pub struct DatasetOracle {
    frames: Vec<Vec<RigidFrame>>,
    tokens: Vec<Vec<usize>>,
    vocab_size: usize,
    pub bandwidth: f64,
}

impl DatasetOracle {
    pub fn new(
        frames: Vec<Vec<RigidFrame>>,
        tokens: Vec<Vec<usize>>,
        vocab_size: usize,
        bandwidth: f64,
    ) -> Self {
        assert_eq!(frames.len(), tokens.len());
        assert!(!frames.is_empty());
        DatasetOracle {
            frames,
            tokens,
            vocab_size,
            bandwidth,
        }
    }

    /// Data restricted to tuples of the state's length.
    fn compatible(&self, k: usize) -> (Vec<&Vec<RigidFrame>>, Vec<&Vec<usize>>) {
        let mut f = Vec::new();
        let mut m = Vec::new();
        for (fr, tk) in self.frames.iter().zip(&self.tokens) {
            if fr.len() == k {
                f.push(fr);
                m.push(tk);
            }
        }
        (f, m)
    }
}

impl Denoiser for DatasetOracle {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn evaluate(&self, state: &FlowState) -> Result<DenoiserOutput, DenoiseError> {
        let k = state.k();
        let t = state.t();
        let (frames, tokens) = self.compatible(k);
        if frames.is_empty() {
            return Err(DenoiseError::ZeroSupport);
        }
        // Joint weights: token likelihood × frame likelihood.
        let owned: Vec<Vec<RigidFrame>> = frames.iter().map(|f| (*f).clone()).collect();
        let frame_w = joint_frame_weights(&owned, &state.frames, t, self.bandwidth);
        let mut weights: Vec<f64> = Vec::with_capacity(owned.len());
        let mut total = 0.0;
        for (datum_tokens, &fw) in tokens.iter().zip(&frame_w) {
            let mut w = fw;
            for (obs, &truth) in state.tokens.tokens.iter().zip(datum_tokens.iter()) {
                w *= match *obs {
                    MASK_TOKEN => 1.0 - t,
                    o if o == truth => t,
                    _ => 0.0,
                };
                if w == 0.0 {
                    break;
                }
            }
            total += w;
            weights.push(w);
        }
        if total <= 0.0 {
            return Err(DenoiseError::ZeroSupport);
        }
        for w in &mut weights {
            *w /= total;
        }
        let mut probs = vec![vec![0.0; self.vocab_size]; k];
        for (datum_tokens, &w) in tokens.iter().zip(&weights) {
            for (slot, &m1) in datum_tokens.iter().enumerate() {
                probs[slot][m1 - 1] += w;
            }
        }
        let (rot_vel, trans_vel) =
            weighted_conditional_fields(&owned, &weights, &state.frames, t)?;
        Ok(DenoiserOutput {
            rot_vel,
            trans_vel,
            posterior: DenoiserPosterior { probs },
        })
    }
}
