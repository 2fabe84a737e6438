//! Reference constructions that bypass the block machinery.
//!
//! The Hamiltonian is built directly from the global term list acting on
//! full occupation patterns (left modes in the low bits, right modes above),
//! with Jordan–Wigner signs evaluated on the whole pattern. Nothing here uses
//! the split terms, the partition factors or the distributed engine.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{build_terms, HamiltonianTerm, LocalOp, ModelSpec};
use crate::scalar::Scalar;
use crate::symmetry::{Bipartition, QuantumNumber, SectorPairTable};

/// Largest dimension diagonalized densely.
pub const DENSE_EIGEN_LIMIT: usize = 6000;

/// Sparse reference Hamiltonian in the pair-ordered basis.
#[derive(Debug, Clone)]
pub struct OracleHamiltonian {
    pub dim: usize,
    /// Row-wise `(column, value)`, columns ascending.
    rows: Vec<Vec<(usize, f64)>>,
}

fn apply_global(term: &HamiltonianTerm, bit_of: &[usize], fermionic: bool, pattern: u64) -> Option<(u64, f64)> {
    let mut s = pattern;
    let mut amp = term.coefficient;
    for &(mode, op) in term.factors.iter().rev() {
        let b = bit_of[mode];
        let mask = 1u64 << b;
        let occupied = s & mask != 0;
        let sign = if fermionic && (s & (mask - 1)).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        match op {
            LocalOp::SPlus if !occupied => s |= mask,
            LocalOp::SMinus if occupied => s &= !mask,
            LocalOp::Sz => amp *= if occupied { 0.5 } else { -0.5 },
            LocalOp::Number if occupied => {}
            LocalOp::Create if !occupied => {
                s |= mask;
                amp *= sign;
            }
            LocalOp::Annihilate if occupied => {
                s &= !mask;
                amp *= sign;
            }
            _ => return None,
        }
    }
    Some((s, amp))
}

/// Global pattern of every basis state, in pair order then `l`, then `r`.
pub fn pair_basis_patterns(bip: &Bipartition, table: &SectorPairTable) -> Vec<u64> {
    let mut out = Vec::with_capacity(table.dimension());
    for p in table.pairs() {
        let lb = bip.left.sector(&p.left).expect("left sector");
        let rb = bip.right.sector(&p.right).expect("right sector");
        for &l in &lb.states {
            for &r in &rb.states {
                out.push(bip.global_pattern(l, r));
            }
        }
    }
    out
}

impl OracleHamiltonian {
    pub fn build(bip: &Bipartition, table: &SectorPairTable, cap: usize) -> Result<Self> {
        let dim = table.dimension();
        if dim > cap {
            return Err(Error::OracleCap { dim, cap });
        }
        let model = &bip.model;
        let terms = build_terms(model)?;
        let mut bit_of = vec![usize::MAX; model.num_modes()];
        let nl = bip.left.num_modes();
        for (i, &m) in bip.left.modes.iter().enumerate() {
            bit_of[m] = i;
        }
        for (i, &m) in bip.right.modes.iter().enumerate() {
            bit_of[m] = nl + i;
        }
        let patterns = pair_basis_patterns(bip, table);
        let index: HashMap<u64, usize> = patterns.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let fermionic = model.is_fermionic();
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); dim];
        for (col, &pat) in patterns.iter().enumerate() {
            for t in &terms {
                if let Some((out, amp)) = apply_global(t, &bit_of, fermionic, pat) {
                    let row = *index.get(&out).ok_or_else(|| {
                        Error::Structural(format!("term {t:?} leaves the target sector"))
                    })?;
                    *rows[row].entry(col).or_insert(0.0) += amp;
                }
            }
        }
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().filter(|&(_, v)| v != 0.0).collect())
            .collect();
        Ok(OracleHamiltonian { dim, rows })
    }

    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim);
        self.rows
            .iter()
            .map(|row| {
                let mut acc = T::zero();
                for &(c, v) in row {
                    acc += x[c].scale(v);
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Ascending eigenvalues by dense diagonalization.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        if self.dim > DENSE_EIGEN_LIMIT {
            return Err(Error::OracleCap { dim: self.dim, cap: DENSE_EIGEN_LIMIT });
        }
        Ok(sorted_eigenvalues(self.to_dense()))
    }

    pub fn ground_energy(&self) -> Result<f64> {
        self.spectrum()?.first().copied().ok_or(Error::EmptySector(QuantumNumber::zero(0)))
    }

    /// Ground state (pair-ordered basis) and energy.
    pub fn ground_state(&self) -> Result<(f64, Vec<f64>)> {
        if self.dim > DENSE_EIGEN_LIMIT {
            return Err(Error::OracleCap { dim: self.dim, cap: DENSE_EIGEN_LIMIT });
        }
        let eig = SymmetricEigen::new(self.to_dense());
        let (i, e) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .ok_or(Error::EmptySector(QuantumNumber::zero(0)))?;
        Ok((*e, eig.eigenvectors.column(i).iter().copied().collect()))
    }
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending spectrum of the model in the sector `target`, built over the
/// full Fock space in natural mode order with no cut at all.
pub fn natural_order_spectrum(model: &ModelSpec, target: &QuantumNumber) -> Result<Vec<f64>> {
    let terms = build_terms(model)?;
    let n = model.num_modes();
    let kinds = model.mode_kinds();
    let qn = |s: u64| -> Vec<i32> {
        if model.is_fermionic() {
            let mut q = vec![0, 0];
            for (b, k) in kinds.iter().enumerate() {
                if s >> b & 1 == 1 {
                    q[usize::from(*k == crate::model::ModeKind::Down)] += 1;
                }
            }
            q
        } else {
            vec![2 * s.count_ones() as i32 - n as i32]
        }
    };
    let states: Vec<u64> = (0..1u64 << n).filter(|&s| qn(s) == target.components()).collect();
    if states.len() > DENSE_EIGEN_LIMIT {
        return Err(Error::OracleCap { dim: states.len(), cap: DENSE_EIGEN_LIMIT });
    }
    let index: HashMap<u64, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let bit_of: Vec<usize> = (0..n).collect();
    let mut h = DMatrix::zeros(states.len(), states.len());
    for (c, &s) in states.iter().enumerate() {
        for t in &terms {
            if let Some((o, a)) = apply_global(t, &bit_of, model.is_fermionic(), s) {
                h[(index[&o], c)] += a;
            }
        }
    }
    Ok(sorted_eigenvalues(h))
}

/// Eigenvalues of `ρ_L = Tr_R |ψ⟩⟨ψ|` built densely over every left state
/// present in the table.
pub fn reduced_density_eigenvalues<T: Scalar>(
    bip: &Bipartition,
    table: &SectorPairTable,
    psi: &[T],
) -> Result<Vec<f64>> {
    if psi.len() != table.dimension() {
        return Err(Error::Structural("state length differs from the table dimension".into()));
    }
    let mut left_index: BTreeMap<u64, usize> = BTreeMap::new();
    let mut right_index: BTreeMap<u64, usize> = BTreeMap::new();
    let mut entries = Vec::with_capacity(psi.len());
    let mut g = 0;
    for p in table.pairs() {
        let lb = bip.left.sector(&p.left).expect("left sector");
        let rb = bip.right.sector(&p.right).expect("right sector");
        for &l in &lb.states {
            for &r in &rb.states {
                let nl = left_index.len();
                let li = *left_index.entry(l).or_insert(nl);
                let nr = right_index.len();
                let ri = *right_index.entry(r).or_insert(nr);
                entries.push((li, ri, psi[g]));
                g += 1;
            }
        }
    }
    let (dl, dr) = (left_index.len(), right_index.len());
    let mut m = DMatrix::<Complex64>::zeros(dl, dr);
    for (li, ri, v) in entries {
        m[(li, ri)] = Complex64::new(v.re(), v.im());
    }
    let rho = &m * m.adjoint();
    let mut ev: Vec<f64> = SymmetricEigen::new(rho).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// `−Σ λ ln λ` over eigenvalues above `cutoff`.
pub fn von_neumann_entropy(eigenvalues: &[f64], cutoff: f64) -> f64 {
    eigenvalues.iter().filter(|&&l| l > cutoff).map(|&l| -l * l.ln()).sum()
}
