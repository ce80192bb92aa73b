//! Pluggable denoisers closing the sampling loop: exact Bayes oracles over
//! finite toy datasets, and a small self-contained trainable model with
//! hand-verified gradients.

mod oracle;
mod toy;

pub use oracle::{
    haar_interpolant_angle_density, oracle_bayes_discrete, oracle_kernel_continuous,
    rotation_kernel_log_density, DatasetOracle,
};
pub use toy::{
    model_from_json, model_to_json, right_to_left, toy_train, ToyConfig, ToyForward,
    ToyGradients, ToyModel, ToyTargets, TrainOptions, TrainSample,
};

use crate::flow_disc::{DenoiserPosterior, DiscError, TokenState};
use crate::RigidFrame;
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiseError {
    #[error("state is inconsistent: {0} frames vs {1} tokens")]
    InconsistentState(usize, usize),
    #[error("observed unmasked tokens match no datum")]
    ZeroSupport,
    #[error("feature configuration does not match the state (expected {expected}, got {got})")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("model file is malformed: {0}")]
    BadFile(String),
    #[error(transparent)]
    Disc(#[from] DiscError),
    #[error(transparent)]
    Flow(#[from] crate::flow_cont::FlowError),
}

/// Joint noisy state of one molecule: K frames plus K tokens at time `t`.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub frames: Vec<RigidFrame>,
    pub tokens: TokenState,
}

impl FlowState {
    pub fn new(frames: Vec<RigidFrame>, tokens: Vec<usize>, t: f64) -> Result<Self, DenoiseError> {
        if frames.len() != tokens.len() {
            return Err(DenoiseError::InconsistentState(frames.len(), tokens.len()));
        }
        Ok(FlowState {
            frames,
            tokens: TokenState { tokens, t },
        })
    }

    pub fn k(&self) -> usize {
        self.frames.len()
    }

    pub fn t(&self) -> f64 {
        self.tokens.t
    }
}

/// What a denoiser returns: body-frame rotation velocities, world-frame
/// translation velocities, and the clean-token posterior.
#[derive(Clone, Debug)]
pub struct DenoiserOutput {
    pub rot_vel: Vec<Vector3<f64>>,
    pub trans_vel: Vec<Vector3<f64>>,
    pub posterior: DenoiserPosterior,
}

/// A denoiser predicts clean data from a noisy multimodal state.
pub trait Denoiser {
    /// Number of real motif classes (mask excluded).
    fn vocab_size(&self) -> usize;

    fn evaluate(&self, state: &FlowState) -> Result<DenoiserOutput, DenoiseError>;
}
