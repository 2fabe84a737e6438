//! Distributed application of the block Hamiltonian.
//!
//! Three task classes act on each destination pair:
//! * right-diagonal `(1 ⊗ H_R)`: column-local, no communication;
//! * left-diagonal `(H_L ⊗ 1)`: `T*(H_L · T*(Ψ))`;
//! * boundary `(L_m ⊗ R_m)`: `C = R_m Ψ^k` locally, then `T*(L_m · T*(C))`.
//!
//! Contributions to a destination pair are accumulated in plan order, so the
//! result is bitwise independent of the rank count and the schedule.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{BlockOperator, LocalMatrix};
use crate::scalar::Scalar;
use crate::state::{BlockWavefunction, DistributionLayout};
use crate::symmetry::QuantumNumber;
use crate::transport::{parallel_transpose, transpose_volume, ColumnBlock, Communicator, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TaskKind {
    RightDiagonal,
    LeftDiagonal,
    Boundary { term: usize, source: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTask {
    #[serde(flatten)]
    pub kind: TaskKind,
    pub flops: u64,
    pub transposes: usize,
    /// Padded elements exchanged by the task's transposes at the plan's rank count.
    pub exchange: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairPlan {
    pub pair: usize,
    pub q_left: QuantumNumber,
    pub q_right: QuantumNumber,
    pub d_left: usize,
    pub d_right: usize,
    pub tasks: Vec<PlanTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTotals {
    pub right_diagonal_tasks: usize,
    pub left_diagonal_tasks: usize,
    pub boundary_tasks: usize,
    pub transposes: usize,
    pub flops: u64,
    pub exchange: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApplyPlan {
    pub ranks: usize,
    pub pairs: Vec<PairPlan>,
    pub totals: PlanTotals,
}

impl ApplyPlan {
    pub fn new(op: &BlockOperator, layout: &DistributionLayout) -> Result<Self> {
        let table = layout.table();
        let p = layout.ranks();
        let pairs = table.pairs();
        let mut per_dest: Vec<Vec<PlanTask>> = vec![Vec::new(); pairs.len()];

        for (q, pair) in pairs.iter().enumerate() {
            if let Some(h) = op.diagonal_right.get(&pair.right) {
                per_dest[q].push(PlanTask {
                    kind: TaskKind::RightDiagonal,
                    flops: h.flops_per_vector() * pair.d_left as u64,
                    transposes: 0,
                    exchange: 0,
                });
            }
            if let Some(h) = op.diagonal_left.get(&pair.left) {
                per_dest[q].push(PlanTask {
                    kind: TaskKind::LeftDiagonal,
                    flops: h.flops_per_vector() * pair.d_right as u64,
                    transposes: 2,
                    exchange: 2 * transpose_volume(pair.d_right, pair.d_left, p),
                });
            }
        }
        for (m, term) in op.boundary.iter().enumerate() {
            for (k, src) in pairs.iter().enumerate() {
                let (Some(l), Some(r)) = (term.left.blocks.get(&src.left), term.right.blocks.get(&src.right))
                else {
                    continue;
                };
                let dst_left = src.left.compose(&term.left.shift)?;
                let dst_right = src.right.compose(&term.right.shift)?;
                let q = table
                    .find_left(&dst_left)
                    .filter(|&q| pairs[q].right == dst_right)
                    .ok_or(Error::NonConserving { term: m, pair: k })?;
                let dst = &pairs[q];
                per_dest[q].push(PlanTask {
                    kind: TaskKind::Boundary { term: m, source: k },
                    flops: r.flops_per_vector() * src.d_left as u64 + l.flops_per_vector() * dst.d_right as u64,
                    transposes: 2,
                    exchange: transpose_volume(dst.d_right, src.d_left, p)
                        + transpose_volume(dst.d_left, dst.d_right, p),
                });
            }
        }

        let mut totals = PlanTotals {
            right_diagonal_tasks: 0,
            left_diagonal_tasks: 0,
            boundary_tasks: 0,
            transposes: 0,
            flops: 0,
            exchange: 0,
        };
        let pairs = per_dest
            .into_iter()
            .enumerate()
            .map(|(q, mut tasks)| {
                tasks.sort_by_key(|t| t.kind);
                for t in &tasks {
                    match t.kind {
                        TaskKind::RightDiagonal => totals.right_diagonal_tasks += 1,
                        TaskKind::LeftDiagonal => totals.left_diagonal_tasks += 1,
                        TaskKind::Boundary { .. } => totals.boundary_tasks += 1,
                    }
                    totals.transposes += t.transposes;
                    totals.flops += t.flops;
                    totals.exchange += t.exchange;
                }
                let pr = &pairs[q];
                PairPlan {
                    pair: q,
                    q_left: pr.left.clone(),
                    q_right: pr.right.clone(),
                    d_left: pr.d_left,
                    d_right: pr.d_right,
                    tasks,
                }
            })
            .collect();
        Ok(ApplyPlan { ranks: p, pairs, totals })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Which task classes an application runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFilter {
    All,
    RightDiagonal,
    LeftDiagonal,
    Boundary(usize),
}

impl TaskFilter {
    fn admits(self, kind: TaskKind) -> bool {
        match (self, kind) {
            (TaskFilter::All, _) => true,
            (TaskFilter::RightDiagonal, TaskKind::RightDiagonal) => true,
            (TaskFilter::LeftDiagonal, TaskKind::LeftDiagonal) => true,
            (TaskFilter::Boundary(m), TaskKind::Boundary { term, .. }) => m == term,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianEngine {
    layout: Arc<DistributionLayout>,
    operator: BlockOperator,
    plan: ApplyPlan,
}

fn apply_columns<T: Scalar>(h: &LocalMatrix, coeff: f64, x: &ColumnBlock<T>) -> ColumnBlock<T> {
    let mut y = ColumnBlock::zeros(h.rows(), x.cols);
    for j in 0..x.cols {
        h.apply_add(coeff, x.column(j), y.column_mut(j));
    }
    y
}

fn accumulate<T: Scalar>(comm: &Communicator, out: &mut BlockWavefunction<T>, pair: usize, add: Vec<ColumnBlock<T>>) {
    let inputs: Vec<_> = out.blocks.iter_mut().map(|r| &mut r[pair]).zip(add).collect();
    comm.run(inputs, |_, (dst, src)| {
        for (d, s) in dst.data.iter_mut().zip(src.data) {
            *d += s;
        }
    });
}

impl HamiltonianEngine {
    pub fn new(operator: BlockOperator, layout: Arc<DistributionLayout>) -> Result<Self> {
        let plan = ApplyPlan::new(&operator, &layout)?;
        Ok(HamiltonianEngine { layout, operator, plan })
    }

    pub fn plan(&self) -> &ApplyPlan {
        &self.plan
    }

    pub fn operator(&self) -> &BlockOperator {
        &self.operator
    }

    pub fn layout(&self) -> &Arc<DistributionLayout> {
        &self.layout
    }

    fn check(&self, psi: &BlockWavefunction<impl Scalar>, comm: &Communicator) -> Result<()> {
        if comm.size() != self.layout.ranks() {
            return Err(Error::Structural(format!(
                "communicator has {} ranks, layout expects {}",
                comm.size(),
                self.layout.ranks()
            )));
        }
        if **psi.layout() != *self.layout {
            return Err(Error::Structural("state layout differs from the engine layout".into()));
        }
        Ok(())
    }

    /// `Hψ`.
    pub fn apply<T: Scalar>(&self, psi: &BlockWavefunction<T>, comm: &Communicator) -> Result<BlockWavefunction<T>> {
        self.apply_filtered(psi, comm, TaskFilter::All)
    }

    /// `(1 ⊗ H_R)ψ`.
    pub fn apply_right_diagonal<T: Scalar>(
        &self,
        psi: &BlockWavefunction<T>,
        comm: &Communicator,
    ) -> Result<BlockWavefunction<T>> {
        self.apply_filtered(psi, comm, TaskFilter::RightDiagonal)
    }

    /// `(H_L ⊗ 1)ψ`.
    pub fn apply_left_diagonal<T: Scalar>(
        &self,
        psi: &BlockWavefunction<T>,
        comm: &Communicator,
    ) -> Result<BlockWavefunction<T>> {
        self.apply_filtered(psi, comm, TaskFilter::LeftDiagonal)
    }

    /// `coeff_m (L_m ⊗ R_m)ψ`.
    pub fn apply_boundary<T: Scalar>(
        &self,
        psi: &BlockWavefunction<T>,
        comm: &Communicator,
        m: usize,
    ) -> Result<BlockWavefunction<T>> {
        self.apply_filtered(psi, comm, TaskFilter::Boundary(m))
    }

    pub fn apply_filtered<T: Scalar>(
        &self,
        psi: &BlockWavefunction<T>,
        comm: &Communicator,
        filter: TaskFilter,
    ) -> Result<BlockWavefunction<T>> {
        self.check(psi, comm)?;
        let pairs = self.layout.table().pairs();
        let mut out = BlockWavefunction::zeros(&self.layout);
        for pp in &self.plan.pairs {
            let q = pp.pair;
            let dst = &pairs[q];
            for task in pp.tasks.iter().filter(|t| filter.admits(t.kind)) {
                match task.kind {
                    TaskKind::RightDiagonal => {
                        let h = &self.operator.diagonal_right[&dst.right];
                        let inputs: Vec<_> =
                            psi.blocks.iter().map(|r| &r[q]).zip(out.blocks.iter_mut().map(|r| &mut r[q])).collect();
                        comm.run(inputs, |rank, (x, y)| {
                            for j in 0..x.cols {
                                h.apply_add(1.0, x.column(j), y.column_mut(j));
                            }
                            comm.add_flops(Phase::RightDiagonal, rank, h.flops_per_vector() * x.cols as u64);
                        });
                    }
                    TaskKind::LeftDiagonal => {
                        let h = &self.operator.diagonal_left[&dst.left];
                        let phase = Phase::LeftDiagonal;
                        let local: Vec<_> = psi.blocks.iter().map(|r| r[q].clone()).collect();
                        let t = parallel_transpose(comm, phase, local, dst.d_right, dst.d_left)?;
                        let applied = comm.run(t, |rank, b| {
                            comm.add_flops(phase, rank, h.flops_per_vector() * b.cols as u64);
                            apply_columns(h, 1.0, &b)
                        });
                        let back = parallel_transpose(comm, phase, applied, dst.d_left, dst.d_right)?;
                        accumulate(comm, &mut out, q, back);
                    }
                    TaskKind::Boundary { term, source } => {
                        let bt = &self.operator.boundary[term];
                        let src = &pairs[source];
                        let l = &bt.left.blocks[&src.left];
                        let r = &bt.right.blocks[&src.right];
                        let phase = Phase::Boundary;
                        let local: Vec<_> = psi.blocks.iter().map(|b| &b[source]).collect();
                        let c = comm.run(local, |rank, b| {
                            comm.add_flops(phase, rank, r.flops_per_vector() * b.cols as u64);
                            apply_columns(r, bt.coefficient, b)
                        });
                        let t = parallel_transpose(comm, phase, c, dst.d_right, src.d_left)?;
                        let applied = comm.run(t, |rank, b| {
                            comm.add_flops(phase, rank, l.flops_per_vector() * b.cols as u64);
                            apply_columns(l, 1.0, &b)
                        });
                        let back = parallel_transpose(comm, phase, applied, dst.d_left, dst.d_right)?;
                        accumulate(comm, &mut out, q, back);
                    }
                }
            }
        }
        comm.barrier();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::operator::build_block_operator;
    use crate::state::make_layout;
    use crate::symmetry::{Bipartition, EntanglementCut};
    use crate::transport::Schedule;

    fn engine(model: &ModelSpec, cut: &EntanglementCut, target: &[i32], p: usize) -> HamiltonianEngine {
        let bip = Bipartition::new(model, cut).unwrap();
        let table = bip.table(&QuantumNumber::new(target.to_vec())).unwrap();
        let op = build_block_operator(&bip, &table).unwrap();
        HamiltonianEngine::new(op, make_layout(table, p).unwrap()).unwrap()
    }

    #[test]
    fn two_site_heisenberg_action() {
        let e = engine(&ModelSpec::heisenberg(2, 1.0), &EntanglementCut::central(2), &[0], 1);
        let comm = Communicator::serial();
        // Pairs ordered by q_l: (↓,↑) then (↑,↓). |↑↓⟩ lives in the second.
        let psi = BlockWavefunction::scatter(e.layout(), &[0.0, 1.0], &comm).unwrap();
        let h = e.apply(&psi, &comm).unwrap().gather_vector(&comm).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-15);
        assert!((h[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_state_maps_to_zero() {
        let e = engine(&ModelSpec::hubbard(4, 1.0, 2.0, 0.0), &EntanglementCut::central(4), &[2, 2], 2);
        let comm = Communicator::new(2, Schedule::RoundRobin);
        let z = BlockWavefunction::<f64>::zeros(e.layout());
        assert_eq!(e.apply(&z, &comm).unwrap().norm(&comm).unwrap(), 0.0);
    }

    #[test]
    fn census_matches_plan() {
        let e = engine(&ModelSpec::heisenberg(10, 1.0), &EntanglementCut::central(10), &[0], 4);
        let comm = Communicator::new(4, Schedule::Parallel);
        let psi = BlockWavefunction::<f64>::random(e.layout(), 3, &comm);
        comm.reset_counters();
        e.apply(&psi, &comm).unwrap();
        let c = comm.snapshot();
        let calls = c.phase(Phase::LeftDiagonal).calls + c.phase(Phase::Boundary).calls;
        let t = &e.plan().totals;
        assert_eq!(calls as usize, 2 * t.left_diagonal_tasks + 2 * t.boundary_tasks);
        assert_eq!(c.phase(Phase::RightDiagonal).calls, 0);
        let moved = c.phase(Phase::LeftDiagonal).elements_padded + c.phase(Phase::Boundary).elements_padded;
        assert_eq!(moved, t.exchange);
        assert_eq!(c.total(&Phase::MATVEC).flops, t.flops);
    }

    #[test]
    fn rank_count_and_schedule_do_not_change_bits() {
        let model = ModelSpec::hubbard(6, 1.0, 4.0, 0.5);
        let cut = EntanglementCut::central(6);
        let reference = {
            let e = engine(&model, &cut, &[3, 3], 1);
            let comm = Communicator::serial();
            let psi = BlockWavefunction::<f64>::random(e.layout(), 11, &comm);
            e.apply(&psi, &comm).unwrap().gather_vector(&comm).unwrap()
        };
        for (p, s) in [(2, Schedule::RoundRobin), (3, Schedule::Parallel), (8, Schedule::Parallel)] {
            let e = engine(&model, &cut, &[3, 3], p);
            let comm = Communicator::new(p, s);
            let psi = BlockWavefunction::<f64>::random(e.layout(), 11, &comm);
            let h = e.apply(&psi, &comm).unwrap().gather_vector(&comm).unwrap();
            assert!(h.iter().zip(&reference).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
