//! Abelian quantum numbers, partition sectors and the sector-pair table
//! induced by an entanglement cut.
//!
//! Quantum numbers are integer tuples: `(2·Sz)` for spin chains and
//! `(N↑, N↓)` for fermions. Composition is component-wise addition.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModeKind, ModelSpec};

/// Largest number of modes on one side of a cut; bit patterns are `u64` and
/// partitions are enumerated exhaustively.
pub const MAX_PARTITION_MODES: usize = 30;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantumNumber(Vec<i32>);

impl QuantumNumber {
    pub fn new(components: Vec<i32>) -> Self {
        QuantumNumber(components)
    }

    pub fn zero(len: usize) -> Self {
        QuantumNumber(vec![0; len])
    }

    pub fn components(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::ComponentMismatch { left: self.0.len(), right: other.0.len() });
        }
        Ok(())
    }

    /// `self ⊕ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(QuantumNumber(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// The unique `x` with `x ⊕ other = self`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(QuantumNumber(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl fmt::Debug for QuantumNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for QuantumNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Free-function form of [`QuantumNumber::compose`].
pub fn compose_quantum_numbers(a: &QuantumNumber, b: &QuantumNumber) -> Result<QuantumNumber> {
    a.compose(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// Sites split into two groups; every mode of a site follows it.
    Spatial,
    /// All spin-up modes on the left, all spin-down modes on the right.
    SpinSpace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntanglementCut {
    pub kind: CutKind,
    pub left_sites: Vec<usize>,
    pub right_sites: Vec<usize>,
}

impl EntanglementCut {
    /// Sites `0..position` on the left, `position..sites` on the right.
    pub fn spatial(sites: usize, position: usize) -> Result<Self> {
        if position > sites {
            return Err(Error::InvalidCut(format!(
                "cut position {position} beyond lattice of {sites} sites"
            )));
        }
        Ok(EntanglementCut {
            kind: CutKind::Spatial,
            left_sites: (0..position).collect(),
            right_sites: (position..sites).collect(),
        })
    }

    pub fn central(sites: usize) -> Self {
        Self::spatial(sites, sites / 2).expect("central cut is always valid")
    }

    pub fn spin_space(sites: usize) -> Self {
        EntanglementCut {
            kind: CutKind::SpinSpace,
            left_sites: (0..sites).collect(),
            right_sites: (0..sites).collect(),
        }
    }

    /// Arbitrary spatial bipartition; each list is sorted.
    pub fn from_sites(mut left: Vec<usize>, mut right: Vec<usize>) -> Self {
        left.sort_unstable();
        right.sort_unstable();
        EntanglementCut { kind: CutKind::Spatial, left_sites: left, right_sites: right }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let sites = model.sites();
        let in_range = |v: &[usize]| v.iter().all(|&s| s < sites);
        if !in_range(&self.left_sites) || !in_range(&self.right_sites) {
            return Err(Error::InvalidCut(format!("site index out of range for {sites} sites")));
        }
        match self.kind {
            CutKind::Spatial => {
                let mut seen = vec![false; sites];
                for &s in self.left_sites.iter().chain(&self.right_sites) {
                    if seen[s] {
                        return Err(Error::InvalidCut(format!("site {s} assigned twice")));
                    }
                    seen[s] = true;
                }
                if let Some(s) = seen.iter().position(|&x| !x) {
                    return Err(Error::InvalidCut(format!("site {s} not assigned")));
                }
            }
            CutKind::SpinSpace => {
                if !model.is_fermionic() {
                    return Err(Error::InvalidCut(
                        "spin-space cut requires a fermionic model".into(),
                    ));
                }
                let all: Vec<usize> = (0..sites).collect();
                if self.left_sites != all || self.right_sites != all {
                    return Err(Error::InvalidCut(
                        "spin-space cut must list every site on both sides".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Model mode ids in local bit order for each side.
    ///
    /// For fermions on a spatial cut the spin-up modes of the partition occupy
    /// the low bits and the spin-down modes the high bits.
    pub fn partition_modes(&self, model: &ModelSpec) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate(model)?;
        let modes = match (self.kind, model.is_fermionic()) {
            (CutKind::Spatial, false) => (self.left_sites.clone(), self.right_sites.clone()),
            (CutKind::Spatial, true) => {
                let side = |sites: &[usize]| -> Vec<usize> {
                    let up = sites.iter().map(|&s| ModelSpec::fermion_mode(s, ModeKind::Up));
                    let dn = sites.iter().map(|&s| ModelSpec::fermion_mode(s, ModeKind::Down));
                    up.chain(dn).collect()
                };
                (side(&self.left_sites), side(&self.right_sites))
            }
            (CutKind::SpinSpace, _) => (
                self.left_sites.iter().map(|&s| ModelSpec::fermion_mode(s, ModeKind::Up)).collect(),
                self.right_sites
                    .iter()
                    .map(|&s| ModelSpec::fermion_mode(s, ModeKind::Down))
                    .collect(),
            ),
        };
        for m in [&modes.0, &modes.1] {
            if m.len() > MAX_PARTITION_MODES {
                return Err(Error::InvalidCut(format!(
                    "partition holds {} modes, limit is {MAX_PARTITION_MODES}",
                    m.len()
                )));
            }
        }
        Ok(modes)
    }
}

/// Ordered basis of one partition sector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionBasis {
    pub sector: QuantumNumber,
    /// Occupation bit patterns, strictly ascending.
    pub states: Vec<u64>,
}

impl PartitionBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
}

/// One side of a bipartition: its modes and the sector decomposition of its
/// local Hilbert space.
#[derive(Debug, Clone)]
pub struct Partition {
    pub side: Side,
    /// Local bit index → model mode id.
    pub modes: Vec<usize>,
    pub kinds: Vec<ModeKind>,
    sectors: Vec<PartitionBasis>,
    lookup: BTreeMap<QuantumNumber, usize>,
}

impl Partition {
    pub fn new(model: &ModelSpec, modes: Vec<usize>, side: Side) -> Self {
        let all_kinds = model.mode_kinds();
        let kinds: Vec<ModeKind> = modes.iter().map(|&m| all_kinds[m]).collect();
        let ncomp = model.qn_components();
        let mut grouped: BTreeMap<QuantumNumber, Vec<u64>> = BTreeMap::new();
        for state in 0..(1u64 << modes.len()) {
            grouped.entry(pattern_qn(&kinds, ncomp, state)).or_default().push(state);
        }
        let sectors: Vec<PartitionBasis> = grouped
            .into_iter()
            .map(|(sector, states)| PartitionBasis { sector, states })
            .collect();
        let lookup = sectors.iter().enumerate().map(|(i, b)| (b.sector.clone(), i)).collect();
        Partition { side, modes, kinds, sectors, lookup }
    }

    pub fn sectors(&self) -> &[PartitionBasis] {
        &self.sectors
    }

    pub fn sector(&self, q: &QuantumNumber) -> Option<&PartitionBasis> {
        self.lookup.get(q).map(|&i| &self.sectors[i])
    }

    pub fn quantum_number(&self, state: u64) -> QuantumNumber {
        let ncomp = match self.sectors.first() {
            Some(b) => b.sector.len(),
            None => 1,
        };
        pattern_qn(&self.kinds, ncomp, state)
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }
}

pub(crate) fn pattern_qn(kinds: &[ModeKind], ncomp: usize, state: u64) -> QuantumNumber {
    let mut q = vec![0i32; ncomp];
    for (bit, kind) in kinds.iter().enumerate() {
        let occ = (state >> bit) & 1 == 1;
        match kind {
            ModeKind::Spin => q[0] += if occ { 1 } else { -1 },
            ModeKind::Up => q[0] += occ as i32,
            ModeKind::Down => q[1] += occ as i32,
        }
    }
    QuantumNumber(q)
}

pub fn enumerate_partition_sectors(
    cut: &EntanglementCut,
    side: Side,
    model: &ModelSpec,
) -> Result<Vec<PartitionBasis>> {
    let (left, right) = cut.partition_modes(model)?;
    let modes = match side {
        Side::Left => left,
        Side::Right => right,
    };
    Ok(Partition::new(model, modes, side).sectors)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorPair {
    pub left: QuantumNumber,
    pub right: QuantumNumber,
    pub d_left: usize,
    pub d_right: usize,
}

impl SectorPair {
    pub fn volume(&self) -> usize {
        self.d_left * self.d_right
    }
}

/// All admissible `(q_l, q_r)` with `q_l ⊕ q_r = target`, ordered
/// lexicographically by `q_l`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorPairTable {
    pub target: QuantumNumber,
    pairs: Vec<SectorPair>,
}

impl SectorPairTable {
    /// Builds a table from explicit pairs. Zero-dimensional pairs are dropped
    /// and the rest sorted canonically.
    pub fn from_pairs(target: QuantumNumber, pairs: Vec<SectorPair>) -> Result<Self> {
        let mut pairs: Vec<SectorPair> =
            pairs.into_iter().filter(|p| p.d_left > 0 && p.d_right > 0).collect();
        pairs.sort_by(|a, b| a.left.cmp(&b.left));
        for w in pairs.windows(2) {
            if w[0].left == w[1].left {
                return Err(Error::Structural(format!("duplicate left sector {}", w[0].left)));
            }
        }
        for p in &pairs {
            if p.left.compose(&p.right)? != target {
                return Err(Error::Structural(format!(
                    "pair {} ⊕ {} does not compose to {target}",
                    p.left, p.right
                )));
            }
        }
        Ok(SectorPairTable { target, pairs })
    }

    pub fn pairs(&self) -> &[SectorPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Dimension of the global sector.
    pub fn dimension(&self) -> usize {
        self.pairs.iter().map(SectorPair::volume).sum()
    }

    /// Offsets of each pair's block in the concatenated coefficient vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.pairs
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.volume();
                o
            })
            .collect()
    }

    /// Index of the pair with left sector `q_l`.
    pub fn find_left(&self, q_l: &QuantumNumber) -> Option<usize> {
        self.pairs.binary_search_by(|p| p.left.cmp(q_l)).ok()
    }
}

/// A model split by a cut, with both partitions enumerated.
#[derive(Debug, Clone)]
pub struct Bipartition {
    pub model: ModelSpec,
    pub cut: EntanglementCut,
    pub left: Partition,
    pub right: Partition,
}

impl Bipartition {
    pub fn new(model: &ModelSpec, cut: &EntanglementCut) -> Result<Self> {
        model.validate()?;
        let (lm, rm) = cut.partition_modes(model)?;
        Ok(Bipartition {
            model: model.clone(),
            cut: cut.clone(),
            left: Partition::new(model, lm, Side::Left),
            right: Partition::new(model, rm, Side::Right),
        })
    }

    pub fn partition(&self, side: Side) -> &Partition {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Sector pair table for `target`. An unrealizable target yields an empty
    /// table.
    pub fn table(&self, target: &QuantumNumber) -> Result<SectorPairTable> {
        let ncomp = self.model.qn_components();
        if target.len() != ncomp {
            return Err(Error::ComponentMismatch { left: target.len(), right: ncomp });
        }
        let mut pairs = Vec::new();
        for lb in self.left.sectors() {
            let q_r = target.difference(&lb.sector)?;
            if let Some(rb) = self.right.sector(&q_r) {
                pairs.push(SectorPair {
                    left: lb.sector.clone(),
                    right: q_r,
                    d_left: lb.dim(),
                    d_right: rb.dim(),
                });
            }
        }
        SectorPairTable::from_pairs(target.clone(), pairs)
    }

    /// Global bit pattern of `|l⟩⊗|r⟩`: left bits low, right bits shifted up.
    pub fn global_pattern(&self, left: u64, right: u64) -> u64 {
        left | (right << self.left.num_modes())
    }
}

pub fn build_sector_pair_table(
    cut: &EntanglementCut,
    target: &QuantumNumber,
    model: &ModelSpec,
) -> Result<SectorPairTable> {
    Bipartition::new(model, cut)?.table(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qn(v: &[i32]) -> QuantumNumber {
        QuantumNumber::new(v.to_vec())
    }

    fn heis(s: usize) -> ModelSpec {
        ModelSpec::heisenberg(s, 1.0)
    }

    #[test]
    fn compose_examples() {
        assert_eq!(qn(&[1]).compose(&qn(&[-2])).unwrap(), qn(&[-1]));
        assert_eq!(qn(&[1, 0]).compose(&qn(&[1, 2])).unwrap(), qn(&[2, 2]));
        assert_eq!(qn(&[3, -1]).compose(&QuantumNumber::zero(2)).unwrap(), qn(&[3, -1]));
        assert!(matches!(
            qn(&[1]).compose(&qn(&[1, 2])),
            Err(Error::ComponentMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn spin_partition_dims_are_binomial() {
        let m = heis(4);
        let cut = EntanglementCut::central(4);
        let dims: Vec<usize> = enumerate_partition_sectors(&cut, Side::Left, &m)
            .unwrap()
            .iter()
            .map(PartitionBasis::dim)
            .collect();
        assert_eq!(dims, vec![1, 2, 1]);

        let m = heis(6);
        let cut = EntanglementCut::central(6);
        let sectors = enumerate_partition_sectors(&cut, Side::Right, &m).unwrap();
        let dims: Vec<usize> = sectors.iter().map(PartitionBasis::dim).collect();
        assert_eq!(dims, vec![1, 3, 3, 1]);
        let labels: Vec<i32> = sectors.iter().map(|b| b.sector.components()[0]).collect();
        assert_eq!(labels, vec![-3, -1, 1, 3]);
    }

    #[test]
    fn single_hubbard_site_has_four_sectors() {
        let m = ModelSpec::hubbard(2, 1.0, 0.0, 0.0);
        let cut = EntanglementCut::central(2);
        let sectors = enumerate_partition_sectors(&cut, Side::Left, &m).unwrap();
        let labels: Vec<_> = sectors.iter().map(|b| b.sector.clone()).collect();
        assert_eq!(labels, vec![qn(&[0, 0]), qn(&[0, 1]), qn(&[1, 0]), qn(&[1, 1])]);
        assert!(sectors.iter().all(|b| b.dim() == 1));
    }

    #[test]
    fn four_site_table() {
        // n↑ = 2 ⇔ 2Sz = 0
        let t = build_sector_pair_table(&EntanglementCut::central(4), &qn(&[0]), &heis(4)).unwrap();
        let got: Vec<_> =
            t.pairs().iter().map(|p| (p.left.components()[0], p.d_left, p.d_right)).collect();
        assert_eq!(got, vec![(-2, 1, 1), (0, 2, 2), (2, 1, 1)]);
        assert_eq!(t.dimension(), 6);
    }

    #[test]
    fn two_site_all_down() {
        let t = build_sector_pair_table(&EntanglementCut::central(2), &qn(&[-2]), &heis(2)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.pairs()[0].left, qn(&[-1]));
        assert_eq!(t.pairs()[0].right, qn(&[-1]));
        assert_eq!(t.dimension(), 1);
    }

    #[test]
    fn unrealizable_target_is_empty() {
        let t = build_sector_pair_table(&EntanglementCut::central(4), &qn(&[1]), &heis(4)).unwrap();
        assert!(t.is_empty());
        let t = build_sector_pair_table(&EntanglementCut::central(4), &qn(&[6]), &heis(4)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn hubbard_eight_sites_half_filling_matches_enumeration() {
        let m = ModelSpec::hubbard(8, 1.0, 2.0, 0.0);
        let t = build_sector_pair_table(&EntanglementCut::central(8), &qn(&[4, 4]), &m).unwrap();
        // Brute force over all 4^8 Fock states.
        let brute = (0u64..1 << 16)
            .filter(|s| {
                let up = (0..8).filter(|i| s >> (2 * i) & 1 == 1).count();
                let dn = (0..8).filter(|i| s >> (2 * i + 1) & 1 == 1).count();
                up == 4 && dn == 4
            })
            .count();
        assert_eq!(brute, 4900);
        assert_eq!(t.dimension(), brute);
    }

    #[test]
    fn spin_space_cut_has_single_pair() {
        let m = ModelSpec::impurity(5, 2.0);
        let b = Bipartition::new(&m, &EntanglementCut::spin_space(5)).unwrap();
        let t = b.table(&qn(&[3, 2])).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.pairs()[0].left, qn(&[3, 0]));
        assert_eq!(t.pairs()[0].right, qn(&[0, 2]));
        assert_eq!(t.dimension(), 100);
    }

    #[test]
    fn spin_space_cut_rejected_for_spins() {
        assert!(matches!(
            EntanglementCut::spin_space(4).partition_modes(&heis(4)),
            Err(Error::InvalidCut(_))
        ));
    }

    #[test]
    fn bad_spatial_cuts() {
        let m = heis(4);
        assert!(EntanglementCut::from_sites(vec![0, 1], vec![1, 2, 3]).validate(&m).is_err());
        assert!(EntanglementCut::from_sites(vec![0], vec![1, 2]).validate(&m).is_err());
        assert!(EntanglementCut::spatial(4, 5).is_err());
    }
}
