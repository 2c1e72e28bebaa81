//! Pronoun and name choice as a nested Chinese restaurant franchise.
//!
//! Every speaker keeps a restaurant per referent under a general restaurant,
//! which sits under a community restaurant, which draws from an
//! open-vocabulary base measure over referring forms. Speakers produce forms
//! from their own predictive; every member observes every usage.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the width.

pub mod community;
pub mod crp;
pub mod error;
pub mod harness;
pub mod inference;
pub mod lexicon;
pub mod predictive;
pub mod scalar;
pub mod speaker;

pub use community::{CommunityConfig, CommunityState, DeclarationEvent, Intervention, LogRecord, StepPlan};
pub use crp::{Hierarchy, RestaurantId, SeatRecord, Seating, TableId};
pub use error::{Error, Result};
pub use inference::{exact_marginal, fit_gibbs, heldout_log_loss, FitConfig, FitResult};
pub use lexicon::{BaseMeasure, Form, FormKind, GrammaticalSlot, LexiconConfig};
pub use predictive::Predictive;
pub use scalar::Scalar;
pub use speaker::{MemberId, ReferenceEvent, SpeakerProfile, SpeakerState};

/// Seedable, serializable generator used for every simulation.
pub type SimRng = rand_pcg::Pcg64Mcg;

pub type HierarchyF64 = Hierarchy<f64>;
pub type HierarchyF32 = Hierarchy<f32>;
pub type BaseMeasureF64 = BaseMeasure<f64>;
pub type BaseMeasureF32 = BaseMeasure<f32>;
pub type PredictiveF64 = Predictive<f64>;
pub type PredictiveF32 = Predictive<f32>;
pub type CommunityF64 = CommunityState<f64>;
pub type CommunityF32 = CommunityState<f32>;
pub type FitResultF64 = FitResult<f64>;
pub type FitResultF32 = FitResult<f32>;
