//! Dilations of almost Θ-commuting unitary tuples on finite truncations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dilation;
pub mod error;
pub mod ledger;
pub mod mrange;
pub mod numerics;
pub mod reverse;
pub mod torus;
pub mod tuples;

pub use dilation::{dilate_full, dilate_pair, dilate_step, DilationStep, FullDilation, PairDilation, Truncation};
pub use error::{Error, Result};
pub use ledger::{Claim, Ledger, Measurement};
pub use mrange::{ChoiMatrix, MembershipResult, MembershipStatus, SeparationCertificate};
pub use numerics::{ComplexMatrix, WeightedShiftOperator, WeightedShiftOperator2D, C64};
pub use reverse::{reverse_dilate_step, utag_pipeline, BlockDecomposition, ReverseStep, UtagPipeline};
pub use torus::{eps_delta_plan, ergodicity_test, find_n_eta, EpsDeltaPlan, TorusCloud, Verdict};
pub use tuples::{DefectMatrix, PhaseEntry, PhaseMatrix, UnitaryTuple};
