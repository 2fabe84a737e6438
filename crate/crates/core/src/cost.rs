//! Hardware-independent cost model over the message counters, and reduced
//! workloads that keep only the leading Schmidt states.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::entanglement::Fitted;
use crate::error::{Error, FitError, Result};
use crate::fit::{fit_ratio_model, fractal_dimension, RatioFit};
use crate::linalg::svd;
use crate::matvec::HamiltonianEngine;
use crate::operator::{BlockOperator, BoundaryTerm, DenseMatrix, FactorBlocks, LocalMatrix};
use crate::state::{make_layout, BlockWavefunction};
use crate::symmetry::{QuantumNumber, SectorPair, SectorPairTable};
use crate::transport::{Communicator, MessageCounter, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Time per exchanged element.
    pub tau: f64,
    /// Time per flop.
    pub phi: f64,
    /// Time per collective call.
    pub latency: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { tau: 1.0, phi: 1.0, latency: 0.0 }
    }
}

const EXCHANGE_PHASES: [Phase; 2] = [Phase::LeftDiagonal, Phase::Boundary];

impl CostModel {
    /// `R = τ·(padded elements) / (φ·flops)` over the Hamiltonian phases.
    pub fn ratio(&self, c: &MessageCounter) -> f64 {
        let elements = c.total(&EXCHANGE_PHASES).elements_padded as f64;
        let flops = c.total(&Phase::MATVEC).flops as f64;
        if elements == 0.0 {
            0.0
        } else {
            self.tau * elements / (self.phi * flops)
        }
    }

    /// Bulk-synchronous time: the slowest rank in compute and in sending,
    /// plus a latency per collective when more than one rank exists.
    pub fn modeled_time(&self, c: &MessageCounter) -> f64 {
        let flops = c.rank_flops.iter().copied().max().unwrap_or(0) as f64;
        let sent = c.rank_sent.iter().copied().max().unwrap_or(0) as f64;
        let calls = if c.rank_flops.len() > 1 { c.total(&EXCHANGE_PHASES).calls as f64 } else { 0.0 };
        self.phi * flops + self.tau * sent + self.latency * calls
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPoint {
    /// Effective bond dimension of the workload.
    pub chi: f64,
    pub ranks: usize,
    pub elements_padded: u64,
    pub flops: u64,
    pub ratio: f64,
    pub modeled_time: f64,
}

impl CostPoint {
    pub fn from_counters(chi: f64, ranks: usize, c: &MessageCounter, model: &CostModel) -> Self {
        CostPoint {
            chi,
            ranks,
            elements_padded: c.total(&EXCHANGE_PHASES).elements_padded,
            flops: c.total(&Phase::MATVEC).flops,
            ratio: model.ratio(c),
            modeled_time: model.modeled_time(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModelReport {
    pub points: Vec<CostPoint>,
    pub ratio_fit: Fitted<RatioFit>,
    pub m: f64,
    /// Undefined at `m = 1`.
    pub fractal_dimension: Option<f64>,
}

pub fn cost_model_report(points: Vec<CostPoint>, m: f64) -> Result<CostModelReport> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints { need: 2, got: points.len() }.into());
    }
    let chi: Vec<f64> = points.iter().map(|p| p.chi).collect();
    let r: Vec<f64> = points.iter().map(|p| p.ratio).collect();
    let ratio_fit = match fit_ratio_model(&chi, &r) {
        Ok(f) => Fitted::Ok(f),
        Err(e) => Fitted::Skipped { skipped: e.to_string() },
    };
    let fractal_dimension = ratio_fit.ok().and_then(|f| fractal_dimension(f.c, m));
    Ok(CostModelReport { points, ratio_fit, m, fractal_dimension })
}

/// Operator and state restricted to the leading Schmidt states of a
/// reference state.
#[derive(Debug, Clone)]
pub struct ReducedWorkload {
    pub table: SectorPairTable,
    pub operator: BlockOperator,
    /// Pair-ordered coefficients of the reference state in the kept basis.
    pub state: Vec<f64>,
    /// Kept Schmidt states in total.
    pub chi: usize,
    /// Norm² of the discarded part.
    pub discarded_weight: f64,
}

/// Column-major `rows × k` basis.
#[derive(Debug, Clone)]
struct Basis {
    rows: usize,
    k: usize,
    data: Vec<f64>,
}

/// `Aᵀ M B` as a dense block, with `M` given row-major.
fn project(m: &LocalMatrix, a: &Basis, b: &Basis) -> LocalMatrix {
    let dense = m.to_dense();
    let (rows, cols) = (m.rows(), m.cols());
    debug_assert_eq!((rows, cols), (a.rows, b.rows));
    // MB: rows × b.k
    let mut mb = vec![0.0; rows * b.k];
    for i in 0..rows {
        for (j, mij) in dense[i * cols..(i + 1) * cols].iter().enumerate() {
            if *mij != 0.0 {
                for t in 0..b.k {
                    mb[i * b.k + t] += mij * b.data[t * b.rows + j];
                }
            }
        }
    }
    let mut out = vec![0.0; a.k * b.k];
    for s in 0..a.k {
        for i in 0..rows {
            let ai = a.data[s * a.rows + i];
            if ai != 0.0 {
                for t in 0..b.k {
                    out[s * b.k + t] += ai * mb[i * b.k + t];
                }
            }
        }
    }
    LocalMatrix::from_dense(DenseMatrix::from_row_major(a.k, b.k, out))
}

fn project_map(
    blocks: &BTreeMap<QuantumNumber, LocalMatrix>,
    shift: Option<&QuantumNumber>,
    bases: &BTreeMap<QuantumNumber, Basis>,
) -> Result<BTreeMap<QuantumNumber, LocalMatrix>> {
    let mut out = BTreeMap::new();
    for (src, m) in blocks {
        let dst = match shift {
            Some(s) => src.compose(s)?,
            None => src.clone(),
        };
        if let (Some(a), Some(b)) = (bases.get(&dst), bases.get(src)) {
            out.insert(src.clone(), project(m, a, b));
        }
    }
    Ok(out)
}

/// Keeps the `chi` largest Schmidt values of `state` (pair-ordered global
/// coefficients) across all sectors and projects the operator onto the
/// corresponding Schmidt vectors.
pub fn reduce_workload(
    table: &SectorPairTable,
    operator: &BlockOperator,
    state: &[f64],
    chi: usize,
) -> Result<ReducedWorkload> {
    if state.len() != table.dimension() {
        return Err(Error::Structural("state length differs from the table dimension".into()));
    }
    let offsets = table.offsets();
    let factors: Vec<_> = table
        .pairs()
        .iter()
        .enumerate()
        .map(|(q, p)| svd(&state[offsets[q]..offsets[q] + p.volume()], p.d_right, p.d_left))
        .collect();
    let mut ranked: Vec<(f64, usize, usize)> = factors
        .iter()
        .enumerate()
        .flat_map(|(q, f)| f.s.iter().enumerate().map(move |(i, &s)| (s, q, i)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut keep = vec![0usize; table.len()];
    for &(s, q, _) in ranked.iter().take(chi) {
        if s > 0.0 {
            keep[q] += 1;
        }
    }
    let discarded_weight = ranked.iter().skip(chi).map(|r| r.0 * r.0).sum();

    let mut left = BTreeMap::new();
    let mut right = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut reduced_state = Vec::new();
    for (q, p) in table.pairs().iter().enumerate() {
        let k = keep[q];
        if k == 0 {
            continue;
        }
        let f = &factors[q];
        right.insert(p.right.clone(), Basis { rows: p.d_right, k, data: f.u[..p.d_right * k].to_vec() });
        left.insert(p.left.clone(), Basis { rows: p.d_left, k, data: f.v[..p.d_left * k].to_vec() });
        pairs.push(SectorPair { left: p.left.clone(), right: p.right.clone(), d_left: k, d_right: k });
        let mut block = vec![0.0; k * k];
        for i in 0..k {
            block[i * k + i] = f.s[i];
        }
        reduced_state.extend(block);
    }
    let reduced_table = SectorPairTable::from_pairs(table.target.clone(), pairs)?;
    let reduced = BlockOperator {
        diagonal_left: project_map(&operator.diagonal_left, None, &left)?,
        diagonal_right: project_map(&operator.diagonal_right, None, &right)?,
        boundary: operator
            .boundary
            .iter()
            .map(|b| {
                Ok(BoundaryTerm {
                    coefficient: b.coefficient,
                    left: FactorBlocks {
                        shift: b.left.shift.clone(),
                        blocks: project_map(&b.left.blocks, Some(&b.left.shift), &left)?,
                    },
                    right: FactorBlocks {
                        shift: b.right.shift.clone(),
                        blocks: project_map(&b.right.blocks, Some(&b.right.shift), &right)?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(ReducedWorkload {
        table: reduced_table,
        operator: reduced,
        state: reduced_state,
        chi: keep.iter().sum(),
        discarded_weight,
    })
}

/// Energy of the normalized reduced state and the counters of one
/// application on `comm`.
pub fn measure_reduced(work: &ReducedWorkload, comm: &Communicator) -> Result<(f64, MessageCounter)> {
    let layout = make_layout(work.table.clone(), comm.size())?;
    let engine = HamiltonianEngine::new(work.operator.clone(), Arc::clone(&layout))?;
    let mut psi = BlockWavefunction::scatter(&layout, &work.state, comm)?;
    psi.normalize(comm)?;
    let before = comm.snapshot();
    let h = engine.apply(&psi, comm)?;
    let counters = comm.snapshot().since(&before);
    Ok((psi.dot(&h, comm)?, counters))
}
