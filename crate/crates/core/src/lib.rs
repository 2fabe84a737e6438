//! Distributed exact diagonalization over symmetry-resolved bipartitions.
//!
//! A many-body state with fixed Abelian quantum numbers is stored as one
//! matrix `Ψ^q` per compatible sector pair `(q_l, q_r)` of an entanglement
//! cut, with columns spread over ranks. The Hamiltonian splits into
//! left-diagonal, right-diagonal and cut-crossing (boundary) parts; the
//! engine applies them with local products and a parallel transpose `T*`.
//! Schmidt spectra fall out of the block singular values.

pub mod cost;
pub mod entanglement;
pub mod error;
pub mod fit;
pub mod lanczos;
pub mod linalg;
pub mod matvec;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod scalar;
pub mod state;
pub mod state_io;
pub mod symmetry;
pub mod transport;

pub use cost::{CostModel, CostModelReport, CostPoint, ReducedWorkload};
pub use entanglement::{
    schmidt_decompose, sector_weights_and_ipr, Assignment, EntanglementReport, FragmentationConfig,
    FragmentationReport,
};
pub use error::{Error, FitError, Result, TransportError};
pub use lanczos::{lanczos_ground_state, LanczosConfig, LanczosResult};
pub use matvec::{ApplyPlan, HamiltonianEngine};
pub use model::{build_terms, split_terms, HamiltonianTerm, LocalOp, ModelSpec};
pub use operator::{build_block_operator, BlockOperator, LocalMatrix};
pub use oracle::OracleHamiltonian;
pub use scalar::{Scalar, ScalarKind};
pub use state::{make_layout, BlockWavefunction, DistributionLayout, DEFAULT_ORACLE_CAP};
pub use symmetry::{
    build_sector_pair_table, compose_quantum_numbers, Bipartition, CutKind, EntanglementCut, QuantumNumber,
    SectorPair, SectorPairTable,
};
pub use transport::{parallel_transpose, Communicator, MessageCounter, Phase, Schedule};
