//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use entwave_core::transport::{balanced_split, ColumnBlock, Communicator, Schedule};
use entwave_core::{
    build_block_operator, make_layout, Bipartition, BlockWavefunction, EntanglementCut, HamiltonianEngine, ModelSpec,
};

pub struct Fixture {
    pub engine: HamiltonianEngine,
    pub comm: Communicator,
    pub state: BlockWavefunction<f64>,
}

/// Engine and a normalized random state for `model` at its central cut.
pub fn fixture(model: &ModelSpec, ranks: usize) -> Fixture {
    let bip = Bipartition::new(model, &EntanglementCut::central(model.sites())).expect("cut");
    let table = bip.table(&model.default_target()).expect("table");
    let op = build_block_operator(&bip, &table).expect("operator");
    let layout = make_layout(table, ranks).expect("layout");
    let engine = HamiltonianEngine::new(op, Arc::clone(&layout)).expect("engine");
    let comm = Communicator::new(ranks, Schedule::RoundRobin);
    let mut state = BlockWavefunction::random(&layout, 1, &comm);
    state.normalize(&comm).expect("nonzero");
    Fixture { engine, comm, state }
}

/// Column blocks of a `rows × cols` matrix split over `ranks`.
pub fn matrix_blocks(rows: usize, cols: usize, ranks: usize) -> Vec<ColumnBlock<f64>> {
    let mut at = 0;
    balanced_split(cols, ranks)
        .into_iter()
        .map(|n| {
            let data = (0..rows * n).map(|i| (at * rows + i) as f64).collect();
            at += n;
            ColumnBlock { rows, cols: n, data }
        })
        .collect()
}
