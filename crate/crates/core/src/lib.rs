//! Classical surrogates of quantum expectation landscapes on parameter
//! patches, built by truncated Heisenberg Pauli propagation.
//!
//! The crate is layered bottom-up:
//!
//! * [`pauli`] and [`clifford`]: bit-packed Pauli algebra and Clifford
//!   conjugation tables.
//! * [`circuit`], [`topology`], [`trotter`]: circuit IR and builders.
//! * [`state`]: Pauli overlaps and the dense statevector oracle.
//! * [`propagation`]: numeric and symbolic back-propagation with truncation.
//! * [`surrogate`]: evaluation, effective norms, truncation bounds.
//! * [`measurement`]: simulated shot allocation and classical shadows.
//! * [`taylor`]: parameter-shift Taylor surrogates around arbitrary centers.
//! * [`experiments`]: the batch studies driven by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod clifford;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod measurement;
pub mod observable;
pub mod pauli;
pub mod propagation;
pub mod state;
pub mod surrogate;
pub mod taylor;
pub mod topology;
pub mod trotter;

pub use circuit::{Circuit, Gate, ParamRef};
pub use clifford::{conjugate_clifford, CliffordGate, CliffordKind};
pub use error::{Error, Result};
pub use observable::ObservableSpec;
pub use pauli::{Letter, PauliString, Phase, SignedPauli};
pub use propagation::{backpropagate, Mode, PathStats, PropagatedObservable, TruncationPolicy};
pub use state::{exact_expectation, overlap, InitialState};
pub use topology::Topology;
