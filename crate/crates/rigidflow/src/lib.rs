//! Rigid-motif decomposition of 3D molecules and multimodal flow matching
//! on the product of rigid-frame and motif-token spaces.
//!
//! The pipeline: parse conformer files ([`molgraph`]), cut molecules into
//! rigid motifs ([`fragment`]), build a canonical motif vocabulary with
//! symmetry groups and per-instance frames ([`vocab`]), train/sample with
//! continuous SE(3) flows ([`flow_cont`]) coupled to discrete masking flows
//! ([`flow_disc`]) through pluggable denoisers ([`denoise`]), reassemble
//! atom-level molecules and score them ([`eval`]).
//!
//! Geometry in [`rot3`] is generic over the scalar type; the rest of the
//! crate works with the `f64` aliases exported at the root.

pub mod corpus;
pub mod denoise;
pub mod eval;
pub mod flow_cont;
pub mod flow_disc;
pub mod fragment;
pub mod molgraph;
pub mod rot3;
pub mod sample;
pub mod vocab;

/// Scalar type usable by the geometry core: `f32` or `f64`.
pub trait Real: nalgebra::RealField + num_traits::FromPrimitive + Copy {}
impl<T: nalgebra::RealField + num_traits::FromPrimitive + Copy> Real for T {}

/// Double-precision rotation, the working type of the pipeline.
pub type Rotation = rot3::Rotation<f64>;
/// Double-precision tangent vector.
pub type TangentVec = rot3::TangentVec<f64>;
/// Double-precision rigid frame.
pub type RigidFrame = rot3::RigidFrame<f64>;

/// Single-precision variants, for callers that trade accuracy for size.
pub type Rotation32 = rot3::Rotation<f32>;
pub type TangentVec32 = rot3::TangentVec<f32>;
pub type RigidFrame32 = rot3::RigidFrame<f32>;

pub use molgraph::{Atom, Bond, BondOrder, CanonicalKey, MolecularGraph};
pub use vocab::{FrameAssignment, MotifDescriptor, Vocabulary, MASK_TOKEN};
