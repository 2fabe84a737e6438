//! Sector-resolved operator blocks: diagonal partition Hamiltonians and the
//! factors of cut-crossing terms.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{split_terms, build_terms, FactorTerm, PartitionFactor, SplitTerms};
use crate::scalar::Scalar;
use crate::symmetry::{Bipartition, Partition, QuantumNumber, SectorPairTable};

/// Blocks denser than this are stored dense.
pub const DENSE_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalMatrix {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl LocalMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates and
    /// dropping exact zeros. Storage is dense when the fill exceeds
    /// `threshold`.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        threshold: f64,
    ) -> Self {
        let mut per_row: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r},{c}) outside {rows}x{cols}");
            *per_row[r].entry(c).or_insert(0.0) += v;
        }
        let nnz: usize = per_row.iter().map(|m| m.values().filter(|v| **v != 0.0).count()).sum();
        let fill = if rows * cols == 0 { 0.0 } else { nnz as f64 / (rows * cols) as f64 };
        if fill > threshold {
            let mut data = vec![0.0; rows * cols];
            for (r, row) in per_row.iter().enumerate() {
                for (&c, &v) in row {
                    data[r * cols + c] = v;
                }
            }
            LocalMatrix::Dense(DenseMatrix { rows, cols, data })
        } else {
            let mut indptr = Vec::with_capacity(rows + 1);
            let mut indices = Vec::with_capacity(nnz);
            let mut values = Vec::with_capacity(nnz);
            indptr.push(0);
            for row in &per_row {
                for (&c, &v) in row {
                    if v != 0.0 {
                        indices.push(c);
                        values.push(v);
                    }
                }
                indptr.push(indices.len());
            }
            LocalMatrix::Sparse(CsrMatrix { rows, cols, indptr, indices, values })
        }
    }

    pub fn from_dense(dense: DenseMatrix) -> Self {
        LocalMatrix::Dense(dense)
    }

    pub fn rows(&self) -> usize {
        match self {
            LocalMatrix::Dense(d) => d.rows,
            LocalMatrix::Sparse(s) => s.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LocalMatrix::Dense(d) => d.cols,
            LocalMatrix::Sparse(s) => s.cols,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            LocalMatrix::Dense(d) => d.data.iter().filter(|v| **v != 0.0).count(),
            LocalMatrix::Sparse(s) => s.values.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.nnz() == 0
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, LocalMatrix::Dense(_))
    }

    /// Flops of one matrix-vector product: `2·nnz` sparse, `2·rows·cols` dense.
    pub fn flops_per_vector(&self) -> u64 {
        match self {
            LocalMatrix::Dense(d) => 2 * (d.rows * d.cols) as u64,
            LocalMatrix::Sparse(s) => 2 * s.values.len() as u64,
        }
    }

    /// `y += coeff · A x`.
    pub fn apply_add<T: Scalar>(&self, coeff: f64, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(y.len(), self.rows());
        match self {
            LocalMatrix::Dense(d) => {
                for (r, yr) in y.iter_mut().enumerate() {
                    let row = &d.data[r * d.cols..(r + 1) * d.cols];
                    let mut acc = T::zero();
                    for (a, &xv) in row.iter().zip(x) {
                        acc += xv.scale(*a);
                    }
                    *yr += acc.scale(coeff);
                }
            }
            LocalMatrix::Sparse(s) => {
                for (r, yr) in y.iter_mut().enumerate() {
                    let (lo, hi) = (s.indptr[r], s.indptr[r + 1]);
                    if lo == hi {
                        continue;
                    }
                    let mut acc = T::zero();
                    for k in lo..hi {
                        acc += x[s.indices[k]].scale(s.values[k]);
                    }
                    *yr += acc.scale(coeff);
                }
            }
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            LocalMatrix::Dense(d) => d.data.clone(),
            LocalMatrix::Sparse(s) => {
                let mut out = vec![0.0; s.rows * s.cols];
                for r in 0..s.rows {
                    for k in s.indptr[r]..s.indptr[r + 1] {
                        out[r * s.cols + s.indices[k]] = s.values[k];
                    }
                }
                out
            }
        }
    }

    pub fn negate(&mut self) {
        let vals = match self {
            LocalMatrix::Dense(d) => &mut d.data,
            LocalMatrix::Sparse(s) => &mut s.values,
        };
        vals.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Blocks of one partition factor keyed by source sector; the destination
/// sector is `source ⊕ shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorBlocks {
    pub shift: QuantumNumber,
    pub blocks: BTreeMap<QuantumNumber, LocalMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTerm {
    pub coefficient: f64,
    pub left: FactorBlocks,
    pub right: FactorBlocks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub diagonal_left: BTreeMap<QuantumNumber, LocalMatrix>,
    pub diagonal_right: BTreeMap<QuantumNumber, LocalMatrix>,
    /// Indexed by `m`.
    pub boundary: Vec<BoundaryTerm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorSummary {
    pub diagonal_left_blocks: usize,
    pub diagonal_right_blocks: usize,
    pub boundary_terms: usize,
    pub boundary_blocks: usize,
    pub nnz: usize,
}

fn diagonal_block(
    terms: &[FactorTerm],
    part: &Partition,
    q: &QuantumNumber,
    threshold: f64,
) -> Result<Option<LocalMatrix>> {
    let basis = part.sector(q).expect("sector present in table");
    let mut trip = Vec::new();
    for (col, &s) in basis.states.iter().enumerate() {
        for t in terms {
            if let Some((s2, amp)) = t.factor.apply(s) {
                let row = basis.index_of(s2).ok_or_else(|| {
                    Error::Structural(format!(
                        "{:?}-partition term changes the sector quantum number {q}",
                        part.side
                    ))
                })?;
                trip.push((row, col, t.coefficient * amp));
            }
        }
    }
    let m = LocalMatrix::from_triplets(basis.dim(), basis.dim(), trip, threshold);
    Ok(if m.is_zero() { None } else { Some(m) })
}

fn factor_blocks(
    factor: &PartitionFactor,
    part: &Partition,
    sectors: &[&QuantumNumber],
    ncomp: usize,
    threshold: f64,
) -> Result<FactorBlocks> {
    let shift = factor.shift(&part.kinds, ncomp);
    let mut blocks = BTreeMap::new();
    for &src in sectors {
        let dst = src.compose(&shift)?;
        if !sectors.contains(&&dst) {
            continue;
        }
        let (sb, db) = (part.sector(src).unwrap(), part.sector(&dst).unwrap());
        let mut trip = Vec::new();
        for (col, &s) in sb.states.iter().enumerate() {
            if let Some((s2, amp)) = factor.apply(s) {
                let row = db.index_of(s2).ok_or_else(|| {
                    Error::Structural(format!("factor maps {src} outside sector {dst}"))
                })?;
                trip.push((row, col, amp));
            }
        }
        let m = LocalMatrix::from_triplets(db.dim(), sb.dim(), trip, threshold);
        if !m.is_zero() {
            blocks.insert(src.clone(), m);
        }
    }
    Ok(FactorBlocks { shift, blocks })
}

pub fn assemble_block_operator(
    split: &SplitTerms,
    table: &SectorPairTable,
    bip: &Bipartition,
) -> Result<BlockOperator> {
    assemble_with_threshold(split, table, bip, DENSE_THRESHOLD)
}

pub fn assemble_with_threshold(
    split: &SplitTerms,
    table: &SectorPairTable,
    bip: &Bipartition,
    threshold: f64,
) -> Result<BlockOperator> {
    let ncomp = bip.model.qn_components();
    let left_q: Vec<&QuantumNumber> = table.pairs().iter().map(|p| &p.left).collect();
    let mut right_q: Vec<&QuantumNumber> = table.pairs().iter().map(|p| &p.right).collect();
    right_q.sort();

    let mut diagonal_left = BTreeMap::new();
    for &q in &left_q {
        if let Some(m) = diagonal_block(&split.left, &bip.left, q, threshold)? {
            diagonal_left.insert(q.clone(), m);
        }
    }
    let mut diagonal_right = BTreeMap::new();
    for &q in &right_q {
        if let Some(m) = diagonal_block(&split.right, &bip.right, q, threshold)? {
            diagonal_right.insert(q.clone(), m);
        }
    }
    let boundary = split
        .boundary
        .iter()
        .map(|p| {
            Ok(BoundaryTerm {
                coefficient: p.coefficient,
                left: factor_blocks(&p.left, &bip.left, &left_q, ncomp, threshold)?,
                right: factor_blocks(&p.right, &bip.right, &right_q, ncomp, threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockOperator { diagonal_left, diagonal_right, boundary })
}

/// Terms, split and blocks in one call.
pub fn build_block_operator(bip: &Bipartition, table: &SectorPairTable) -> Result<BlockOperator> {
    let terms = build_terms(&bip.model)?;
    let split = split_terms(&terms, bip)?;
    assemble_block_operator(&split, table, bip)
}

impl BlockOperator {
    pub fn summary(&self) -> OperatorSummary {
        let nnz_map = |m: &BTreeMap<QuantumNumber, LocalMatrix>| -> usize {
            m.values().map(LocalMatrix::nnz).sum()
        };
        let boundary_blocks =
            self.boundary.iter().map(|b| b.left.blocks.len() + b.right.blocks.len()).sum();
        let nnz = nnz_map(&self.diagonal_left)
            + nnz_map(&self.diagonal_right)
            + self
                .boundary
                .iter()
                .map(|b| nnz_map(&b.left.blocks) + nnz_map(&b.right.blocks))
                .sum::<usize>();
        OperatorSummary {
            diagonal_left_blocks: self.diagonal_left.len(),
            diagonal_right_blocks: self.diagonal_right.len(),
            boundary_terms: self.boundary.len(),
            boundary_blocks,
            nnz,
        }
    }

    /// Dense matrix of the operator restricted to the table, assembled from
    /// Kronecker products of the blocks in the pair-ordered basis
    /// (`offset + l·d_R + r`). Row-major.
    pub fn to_dense(&self, table: &SectorPairTable) -> Vec<f64> {
        let n = table.dimension();
        let offsets = table.offsets();
        let mut h = vec![0.0; n * n];
        for (pi, p) in table.pairs().iter().enumerate() {
            let o = offsets[pi];
            let (dl, dr) = (p.d_left, p.d_right);
            if let Some(hl) = self.diagonal_left.get(&p.left) {
                let a = hl.to_dense();
                for l in 0..dl {
                    for l2 in 0..dl {
                        for r in 0..dr {
                            h[(o + l * dr + r) * n + o + l2 * dr + r] += a[l * dl + l2];
                        }
                    }
                }
            }
            if let Some(hr) = self.diagonal_right.get(&p.right) {
                let a = hr.to_dense();
                for l in 0..dl {
                    for r in 0..dr {
                        for r2 in 0..dr {
                            h[(o + l * dr + r) * n + o + l * dr + r2] += a[r * dr + r2];
                        }
                    }
                }
            }
        }
        for term in &self.boundary {
            for (ki, k) in table.pairs().iter().enumerate() {
                let (Some(lb), Some(rb)) =
                    (term.left.blocks.get(&k.left), term.right.blocks.get(&k.right))
                else {
                    continue;
                };
                let ql = k.left.compose(&term.left.shift).unwrap();
                let Some(qi) = table.find_left(&ql) else { continue };
                let q = &table.pairs()[qi];
                let (la, ra) = (lb.to_dense(), rb.to_dense());
                let (ok, oq) = (offsets[ki], offsets[qi]);
                for l in 0..q.d_left {
                    for l2 in 0..k.d_left {
                        let lv = la[l * k.d_left + l2];
                        if lv == 0.0 {
                            continue;
                        }
                        for r in 0..q.d_right {
                            for r2 in 0..k.d_right {
                                let rv = ra[r * k.d_right + r2];
                                h[(oq + l * q.d_right + r) * n + ok + l2 * k.d_right + r2] +=
                                    term.coefficient * lv * rv;
                            }
                        }
                    }
                }
            }
        }
        h
    }

    /// Flips the sign of the first left block of boundary term `m` and
    /// returns the source sector touched. Used to exercise oracle failure
    /// reporting.
    #[doc(hidden)]
    pub fn corrupt_boundary_sign(&mut self, m: usize) -> Option<QuantumNumber> {
        let term = self.boundary.get_mut(m)?;
        let (q, block) = term.left.blocks.iter_mut().next()?;
        block.negate();
        Some(q.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::symmetry::EntanglementCut;

    fn setup(m: &ModelSpec, cut: &EntanglementCut, q: Vec<i32>) -> (Bipartition, SectorPairTable) {
        let b = Bipartition::new(m, cut).unwrap();
        let t = b.table(&QuantumNumber::new(q)).unwrap();
        (b, t)
    }

    #[test]
    fn triplets_sum_and_pick_storage() {
        let m = LocalMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)], 0.25);
        assert!(m.is_dense());
        assert_eq!(m.to_dense(), vec![3.0, 0.0, 1.0, 0.0]);
        let m = LocalMatrix::from_triplets(4, 4, [(0, 1, 1.0), (2, 3, -1.0), (3, 3, 0.0)], 0.25);
        assert!(!m.is_dense());
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.flops_per_vector(), 4);
        let mut y = vec![1.0; 4];
        m.apply_add(2.0, &[1.0, 2.0, 3.0, 4.0], &mut y);
        assert_eq!(y, vec![5.0, 1.0, -7.0, 1.0]);
    }

    #[test]
    fn two_site_heisenberg_left_block_is_empty() {
        let (b, t) = setup(&ModelSpec::heisenberg(2, 1.0), &EntanglementCut::central(2), vec![0]);
        let op = build_block_operator(&b, &t).unwrap();
        // A single site has no internal bond.
        assert!(op.diagonal_left.is_empty());
        assert!(op.diagonal_right.is_empty());
        assert_eq!(op.boundary.len(), 3);
        // Sz on |↑⟩ is +1/2.
        let zz = &op.boundary[2];
        let up = QuantumNumber::new(vec![1]);
        assert_eq!(zz.left.blocks[&up].to_dense(), vec![0.5]);
    }

    #[test]
    fn two_site_hubbard_hopping_blocks() {
        let (b, t) =
            setup(&ModelSpec::hubbard(2, 1.0, 2.0, 0.0), &EntanglementCut::central(2), vec![1, 1]);
        let op = build_block_operator(&b, &t).unwrap();
        assert_eq!(op.boundary.len(), 4);
        for term in &op.boundary {
            assert_eq!(term.coefficient, -1.0);
            for blk in term.left.blocks.values().chain(term.right.blocks.values()) {
                assert_eq!(blk.rows(), 1);
                assert_eq!(blk.cols(), 1);
                assert_eq!(blk.to_dense()[0].abs(), 1.0);
            }
        }
        // Onsite U on the doubly occupied left site.
        let both = QuantumNumber::new(vec![1, 1]);
        assert_eq!(op.diagonal_left[&both].to_dense(), vec![2.0]);
    }

    #[test]
    fn assembled_blocks_are_hermitian() {
        let (b, t) =
            setup(&ModelSpec::hubbard(6, 1.0, 3.0, 0.5), &EntanglementCut::central(6), vec![3, 3]);
        let op = build_block_operator(&b, &t).unwrap();
        let n = t.dimension();
        let h = op.to_dense(&t);
        for i in 0..n {
            for j in 0..n {
                assert!((h[i * n + j] - h[j * n + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corrupt_hook_flips_a_block() {
        let (b, t) = setup(&ModelSpec::heisenberg(4, 1.0), &EntanglementCut::central(4), vec![0]);
        let op = build_block_operator(&b, &t).unwrap();
        let mut bad = op.clone();
        assert!(bad.corrupt_boundary_sign(0).is_some());
        assert_ne!(op, bad);
        assert!(bad.corrupt_boundary_sign(99).is_none());
    }
}
