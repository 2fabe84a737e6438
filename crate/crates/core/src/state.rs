//! Distributed block wavefunction.
//!
//! The amplitudes of sector pair `q` form a `d_R × d_L` matrix `Ψ^q`; its
//! columns (the left index `l`) are split over ranks by [`balanced_split`].
//! Each rank stores its columns contiguously, column-major. The global
//! coefficient vector stacks columns: index `offset(q) + l·d_R + r`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::symmetry::SectorPairTable;
use crate::transport::{balanced_split, prefix_offsets, ColumnBlock, Communicator, Phase};

pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionLayout {
    ranks: usize,
    table: SectorPairTable,
    /// `[pair][rank]` owned column counts.
    columns: Vec<Vec<usize>>,
    column_offsets: Vec<Vec<usize>>,
    pair_offsets: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayoutSummary {
    pub ranks: usize,
    pub pairs: usize,
    pub dimension: usize,
    /// Elements stored per rank.
    pub rank_elements: Vec<usize>,
    /// Elements per rank including padding to `⌈d_L/P⌉` columns.
    pub rank_padded_elements: Vec<usize>,
}

impl DistributionLayout {
    pub fn new(table: SectorPairTable, ranks: usize) -> Result<Self> {
        if ranks == 0 {
            return Err(Error::Structural("layout needs at least one rank".into()));
        }
        let columns: Vec<Vec<usize>> =
            table.pairs().iter().map(|p| balanced_split(p.d_left, ranks)).collect();
        let column_offsets = columns.iter().map(|c| prefix_offsets(c)).collect();
        let pair_offsets = table.offsets();
        Ok(DistributionLayout { ranks, table, columns, column_offsets, pair_offsets })
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn table(&self) -> &SectorPairTable {
        &self.table
    }

    pub fn pairs(&self) -> usize {
        self.table.len()
    }

    pub fn dimension(&self) -> usize {
        self.table.dimension()
    }

    /// Owned column count of every rank for `pair`.
    pub fn columns(&self, pair: usize) -> &[usize] {
        &self.columns[pair]
    }

    pub fn column_offset(&self, pair: usize, rank: usize) -> usize {
        self.column_offsets[pair][rank]
    }

    pub fn padded_columns(&self, pair: usize) -> usize {
        self.table.pairs()[pair].d_left.div_ceil(self.ranks)
    }

    pub fn pair_offset(&self, pair: usize) -> usize {
        self.pair_offsets[pair]
    }

    pub fn rows(&self, pair: usize) -> usize {
        self.table.pairs()[pair].d_right
    }

    pub fn local_len(&self, rank: usize) -> usize {
        (0..self.pairs()).map(|q| self.columns[q][rank] * self.rows(q)).sum()
    }

    pub fn summary(&self) -> LayoutSummary {
        LayoutSummary {
            ranks: self.ranks,
            pairs: self.pairs(),
            dimension: self.dimension(),
            rank_elements: (0..self.ranks).map(|r| self.local_len(r)).collect(),
            rank_padded_elements: (0..self.ranks)
                .map(|_| (0..self.pairs()).map(|q| self.padded_columns(q) * self.rows(q)).sum())
                .collect(),
        }
    }
}

pub fn make_layout(table: SectorPairTable, ranks: usize) -> Result<Arc<DistributionLayout>> {
    DistributionLayout::new(table, ranks).map(Arc::new)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWavefunction<T> {
    layout: Arc<DistributionLayout>,
    /// `[rank][pair]`.
    pub(crate) blocks: Vec<Vec<ColumnBlock<T>>>,
}

impl<T: Scalar> BlockWavefunction<T> {
    pub fn zeros(layout: &Arc<DistributionLayout>) -> Self {
        let blocks = (0..layout.ranks())
            .map(|rank| {
                (0..layout.pairs())
                    .map(|q| ColumnBlock::zeros(layout.rows(q), layout.columns(q)[rank]))
                    .collect()
            })
            .collect();
        BlockWavefunction { layout: layout.clone(), blocks }
    }

    /// Uniform random amplitudes. Element `g` of the global vector is drawn
    /// from the seeded stream at a fixed offset, so every rank fills its own
    /// columns independently and the state does not depend on the rank count.
    pub fn random(layout: &Arc<DistributionLayout>, seed: u64, comm: &Communicator) -> Self {
        let lay = layout.clone();
        let words_per_element = 2 * T::components() as u128;
        let inputs: Vec<usize> = (0..layout.ranks()).collect();
        let blocks = comm.run(inputs, |rank, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..lay.pairs())
                .map(|q| {
                    let rows = lay.rows(q);
                    let cols = lay.columns(q)[rank];
                    let start = lay.pair_offset(q) + lay.column_offset(q, rank) * rows;
                    rng.set_word_pos(words_per_element * start as u128);
                    let data = (0..rows * cols).map(|_| T::sample(&mut rng)).collect();
                    ColumnBlock { rows, cols, data }
                })
                .collect()
        });
        BlockWavefunction { layout: layout.clone(), blocks }
    }

    /// Distributes a global coefficient vector held by rank 0.
    pub fn scatter(layout: &Arc<DistributionLayout>, full: &[T], comm: &Communicator) -> Result<Self> {
        if full.len() != layout.dimension() {
            return Err(Error::Structural(format!(
                "global vector has length {}, sector dimension is {}",
                full.len(),
                layout.dimension()
            )));
        }
        let mut psi = Self::zeros(layout);
        let mut messages = vec![Vec::new(); layout.ranks()];
        for (rank, msg) in messages.iter_mut().enumerate() {
            for q in 0..layout.pairs() {
                let (start, len) = psi.segment(q, rank);
                msg.extend_from_slice(&full[start..start + len]);
            }
        }
        let moved = comm.scatter(Phase::Scatter, messages)?;
        for (rank, msg) in moved.into_iter().enumerate() {
            let mut at = 0;
            for block in psi.blocks[rank].iter_mut() {
                let n = block.data.len();
                block.data.copy_from_slice(&msg[at..at + n]);
                at += n;
            }
        }
        Ok(psi)
    }

    pub fn layout(&self) -> &Arc<DistributionLayout> {
        &self.layout
    }

    pub fn table(&self) -> &SectorPairTable {
        self.layout.table()
    }

    /// Locally owned columns of `pair` on `rank`.
    pub fn block(&self, rank: usize, pair: usize) -> &ColumnBlock<T> {
        &self.blocks[rank][pair]
    }

    pub fn block_mut(&mut self, rank: usize, pair: usize) -> &mut ColumnBlock<T> {
        &mut self.blocks[rank][pair]
    }

    /// Global start and length of the slice of `pair` owned by `rank`.
    fn segment(&self, pair: usize, rank: usize) -> (usize, usize) {
        let rows = self.layout.rows(pair);
        let start = self.layout.pair_offset(pair) + self.layout.column_offset(pair, rank) * rows;
        (start, self.layout.columns(pair)[rank] * rows)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::Structural("operands have different tables or layouts".into()))
        }
    }

    /// Global inner product `⟨self|other⟩`. Each column contributes one
    /// partial sum; partials are exchanged and added in global column order,
    /// so the result is bitwise independent of the rank count.
    pub fn dot(&self, other: &Self, comm: &Communicator) -> Result<T> {
        self.check_compatible(other)?;
        let inputs: Vec<(&[ColumnBlock<T>], &[ColumnBlock<T>])> =
            self.blocks.iter().zip(&other.blocks).map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let partials = comm.run(inputs, |_, (a, b)| {
            let mut out = Vec::new();
            for (ba, bb) in a.iter().zip(b) {
                for j in 0..ba.cols {
                    let mut acc = T::zero();
                    for (x, y) in ba.column(j).iter().zip(bb.column(j)) {
                        acc += x.conj() * *y;
                    }
                    out.push(acc);
                }
            }
            out
        });
        let everywhere = comm.all_gather(Phase::Reduction, partials)?;
        let mut cursor = vec![0usize; self.layout.ranks()];
        let mut total = T::zero();
        for q in 0..self.layout.pairs() {
            for (rank, cur) in cursor.iter_mut().enumerate() {
                for _ in 0..self.layout.columns(q)[rank] {
                    total += everywhere[rank][*cur];
                    *cur += 1;
                }
            }
        }
        Ok(total)
    }

    pub fn norm(&self, comm: &Communicator) -> Result<f64> {
        Ok(self.dot(self, comm)?.re().max(0.0).sqrt())
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.check_compatible(x)?;
        for (mine, theirs) in self.blocks.iter_mut().zip(&x.blocks) {
            for (bm, bt) in mine.iter_mut().zip(theirs) {
                for (y, &v) in bm.data.iter_mut().zip(&bt.data) {
                    *y += a * v;
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, a: T) {
        for v in self.blocks.iter_mut().flatten().flat_map(|b| b.data.iter_mut()) {
            *v = a * *v;
        }
    }

    /// Scales to unit norm and returns the previous norm.
    pub fn normalize(&mut self, comm: &Communicator) -> Result<f64> {
        let n = self.norm(comm)?;
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized { norm: n });
        }
        self.scale(T::from_real(1.0 / n));
        Ok(n)
    }

    /// Full coefficient vector on rank 0, without a size check.
    pub fn gather_vector(&self, comm: &Communicator) -> Result<Vec<T>> {
        let locals: Vec<Vec<T>> = self
            .blocks
            .iter()
            .map(|rank| rank.iter().flat_map(|b| b.data.iter().copied()).collect())
            .collect();
        let lens: Vec<usize> = locals.iter().map(Vec::len).collect();
        let flat = comm.gather(Phase::Gather, locals)?;
        let starts = prefix_offsets(&lens);
        let mut full = vec![T::zero(); self.layout.dimension()];
        for rank in 0..self.layout.ranks() {
            let mut at = starts[rank];
            for q in 0..self.layout.pairs() {
                let (start, len) = self.segment(q, rank);
                full[start..start + len].copy_from_slice(&flat[at..at + len]);
                at += len;
            }
        }
        Ok(full)
    }

    /// Full coefficient vector in the pair-ordered global basis, refused
    /// above `cap`.
    pub fn gather_full(&self, comm: &Communicator, cap: usize) -> Result<Vec<T>> {
        let dim = self.layout.dimension();
        if dim > cap {
            return Err(Error::OracleCap { dim, cap });
        }
        self.gather_vector(comm)
    }

    /// Same logical state under a different layout, moved through rank 0.
    pub fn redistribute(
        &self,
        layout: &Arc<DistributionLayout>,
        from: &Communicator,
        to: &Communicator,
    ) -> Result<Self> {
        if layout.table() != self.table() {
            return Err(Error::Structural("redistribution between different tables".into()));
        }
        let full = self.gather_vector(from)?;
        Self::scatter(layout, &full, to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::symmetry::{Bipartition, EntanglementCut, QuantumNumber};

    fn table(sites: usize) -> SectorPairTable {
        let model = ModelSpec::heisenberg(sites, 1.0);
        let bip = Bipartition::new(&model, &EntanglementCut::central(sites)).unwrap();
        bip.table(&QuantumNumber::new(vec![0])).unwrap()
    }

    #[test]
    fn layout_is_balanced() {
        let lay = DistributionLayout::new(table(8), 3).unwrap();
        for q in 0..lay.pairs() {
            let c = lay.columns(q);
            assert_eq!(c.iter().sum::<usize>(), lay.table().pairs()[q].d_left);
            assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
        }
        assert!(DistributionLayout::new(table(4), 0).is_err());
    }

    #[test]
    fn random_state_is_rank_independent() {
        let t = table(8);
        let one = Communicator::serial();
        let a = BlockWavefunction::<f64>::random(&make_layout(t.clone(), 1).unwrap(), 7, &one);
        let full_a = a.gather_vector(&one).unwrap();
        for p in [2, 3, 8] {
            let comm = Communicator::new(p, crate::transport::Schedule::RoundRobin);
            let b = BlockWavefunction::<f64>::random(&make_layout(t.clone(), p).unwrap(), 7, &comm);
            assert_eq!(b.gather_vector(&comm).unwrap(), full_a);
            assert_eq!(
                b.dot(&b, &comm).unwrap().to_bits(),
                a.dot(&a, &one).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn vector_ops() {
        let lay = make_layout(table(6), 2).unwrap();
        let comm = Communicator::new(2, crate::transport::Schedule::RoundRobin);
        let mut a = BlockWavefunction::<num_complex::Complex64>::random(&lay, 1, &comm);
        a.normalize(&comm).unwrap();
        assert!((a.norm(&comm).unwrap() - 1.0).abs() < 1e-14);
        let z = BlockWavefunction::<f64>::zeros(&lay);
        assert_eq!(z.norm(&comm).unwrap(), 0.0);
        assert!(z.clone().normalize(&comm).is_err());
        let mut b = a.clone();
        b.axpy(num_complex::Complex64::new(-1.0, 0.0), &a).unwrap();
        assert_eq!(b.norm(&comm).unwrap(), 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let lay = make_layout(table(6), 1).unwrap();
        let z = BlockWavefunction::<f64>::zeros(&lay);
        let comm = Communicator::serial();
        assert!(matches!(z.gather_full(&comm, 10), Err(Error::OracleCap { dim: 20, cap: 10 })));
        assert_eq!(z.gather_full(&comm, DEFAULT_ORACLE_CAP).unwrap(), vec![0.0; 20]);
    }
}
