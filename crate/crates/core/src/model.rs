//! Lattice models as lists of local-operator products, and their split
//! across an entanglement cut.
//!
//! Fermions are encoded by Jordan–Wigner with the global mode order "all
//! left modes (local bit order), then all right modes". A fermionic operator
//! on a right mode therefore carries the total parity of the left partition,
//! `c_r = P_L ⊗ c_r^(R)`, while a left-mode operator is purely local. A
//! product of such factors splits as `(Π A_i) ⊗ (Π B_i)` with the parity
//! operators landing in the left factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmetry::{Bipartition, QuantumNumber, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    /// Spin-1/2; bit set means up.
    Spin,
    /// Spin-up fermion orbital.
    Up,
    /// Spin-down fermion orbital.
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Heisenberg {
        sites: usize,
        #[serde(default = "unit")]
        j: f64,
    },
    /// Extended Hubbard chain; `u < 0` is the attractive model.
    #[serde(alias = "attractive_hubbard")]
    Hubbard {
        sites: usize,
        #[serde(default = "unit")]
        t: f64,
        #[serde(default)]
        u: f64,
        #[serde(default)]
        v: f64,
    },
    /// Single correlated site 0 hybridized with `sites - 1` bath orbitals.
    QuantumImpurity {
        sites: usize,
        u: f64,
        /// Defaults to `-u/2`.
        #[serde(default)]
        impurity_energy: Option<f64>,
        bath_energies: Vec<f64>,
        hybridizations: Vec<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn heisenberg(sites: usize, j: f64) -> Self {
        ModelSpec::Heisenberg { sites, j }
    }

    pub fn hubbard(sites: usize, t: f64, u: f64, v: f64) -> Self {
        ModelSpec::Hubbard { sites, t, u, v }
    }

    /// Impurity model with bath levels evenly spaced on [-1, 1] and
    /// hybridization 0.5.
    pub fn impurity(sites: usize, u: f64) -> Self {
        let nb = sites.saturating_sub(1);
        let bath_energies = (0..nb)
            .map(|b| if nb == 1 { 0.0 } else { -1.0 + 2.0 * b as f64 / (nb - 1) as f64 })
            .collect();
        ModelSpec::QuantumImpurity {
            sites,
            u,
            impurity_energy: None,
            bath_energies,
            hybridizations: vec![0.5; nb],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Heisenberg { .. } => "heisenberg",
            ModelSpec::Hubbard { .. } => "hubbard",
            ModelSpec::QuantumImpurity { .. } => "quantum_impurity",
        }
    }

    pub fn sites(&self) -> usize {
        match *self {
            ModelSpec::Heisenberg { sites, .. }
            | ModelSpec::Hubbard { sites, .. }
            | ModelSpec::QuantumImpurity { sites, .. } => sites,
        }
    }

    pub fn is_fermionic(&self) -> bool {
        !matches!(self, ModelSpec::Heisenberg { .. })
    }

    pub fn qn_components(&self) -> usize {
        if self.is_fermionic() {
            2
        } else {
            1
        }
    }

    pub fn num_modes(&self) -> usize {
        if self.is_fermionic() {
            2 * self.sites()
        } else {
            self.sites()
        }
    }

    pub fn mode_kinds(&self) -> Vec<ModeKind> {
        if self.is_fermionic() {
            (0..self.sites()).flat_map(|_| [ModeKind::Up, ModeKind::Down]).collect()
        } else {
            vec![ModeKind::Spin; self.sites()]
        }
    }

    pub fn fermion_mode(site: usize, spin: ModeKind) -> usize {
        match spin {
            ModeKind::Down => 2 * site + 1,
            _ => 2 * site,
        }
    }

    /// Smallest `|Sz|` for spins, half filling (`N↑ = ⌈S/2⌉`, `N↓ = ⌊S/2⌋`)
    /// for fermions.
    pub fn default_target(&self) -> QuantumNumber {
        let s = self.sites() as i32;
        if self.is_fermionic() {
            QuantumNumber::new(vec![(s + 1) / 2, s / 2])
        } else {
            QuantumNumber::new(vec![s % 2])
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.sites() < 2 {
            return bad(format!("need at least 2 sites, got {}", self.sites()));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            ModelSpec::Heisenberg { j, .. } if !j.is_finite() => bad("j must be finite".into()),
            ModelSpec::Hubbard { t, u, v, .. } if !finite(&[*t, *u, *v]) => {
                bad("t, u, v must be finite".into())
            }
            ModelSpec::QuantumImpurity {
                sites, u, impurity_energy, bath_energies, hybridizations,
            } => {
                if bath_energies.len() != sites - 1 || hybridizations.len() != sites - 1 {
                    return bad(format!(
                        "impurity model with {sites} sites needs {} bath energies and \
                         hybridizations, got {} and {}",
                        sites - 1,
                        bath_energies.len(),
                        hybridizations.len()
                    ));
                }
                if !finite(bath_energies)
                    || !finite(hybridizations)
                    || !u.is_finite()
                    || !impurity_energy.unwrap_or(0.0).is_finite()
                {
                    return bad("couplings must be finite".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalOp {
    SPlus,
    SMinus,
    Sz,
    Number,
    Create,
    Annihilate,
}

impl LocalOp {
    pub fn is_fermionic(self) -> bool {
        matches!(self, LocalOp::Create | LocalOp::Annihilate)
    }
}

/// `coefficient · Π factors`, leftmost factor applied last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerm {
    pub coefficient: f64,
    pub factors: Vec<(usize, LocalOp)>,
}

impl HamiltonianTerm {
    fn new(coefficient: f64, factors: Vec<(usize, LocalOp)>) -> Self {
        HamiltonianTerm { coefficient, factors }
    }
}

pub fn build_terms(spec: &ModelSpec) -> Result<Vec<HamiltonianTerm>> {
    use LocalOp::*;
    spec.validate()?;
    let mut terms = Vec::new();
    let mut push = |c: f64, f: Vec<(usize, LocalOp)>| {
        if c != 0.0 {
            terms.push(HamiltonianTerm::new(c, f));
        }
    };
    let spins = [ModeKind::Up, ModeKind::Down];
    match *spec {
        ModelSpec::Heisenberg { sites, j } => {
            for i in 0..sites - 1 {
                push(0.5 * j, vec![(i, SPlus), (i + 1, SMinus)]);
                push(0.5 * j, vec![(i, SMinus), (i + 1, SPlus)]);
                push(j, vec![(i, Sz), (i + 1, Sz)]);
            }
        }
        ModelSpec::Hubbard { sites, t, u, v } => {
            for i in 0..sites - 1 {
                for s in spins {
                    let a = ModelSpec::fermion_mode(i, s);
                    let b = ModelSpec::fermion_mode(i + 1, s);
                    push(-t, vec![(a, Create), (b, Annihilate)]);
                    push(-t, vec![(b, Create), (a, Annihilate)]);
                }
            }
            for i in 0..sites {
                push(
                    u,
                    vec![
                        (ModelSpec::fermion_mode(i, ModeKind::Up), Number),
                        (ModelSpec::fermion_mode(i, ModeKind::Down), Number),
                    ],
                );
            }
            for i in 0..sites - 1 {
                for s in spins {
                    for s2 in spins {
                        push(
                            v,
                            vec![
                                (ModelSpec::fermion_mode(i, s), Number),
                                (ModelSpec::fermion_mode(i + 1, s2), Number),
                            ],
                        );
                    }
                }
            }
        }
        ModelSpec::QuantumImpurity {
            sites, u, impurity_energy, ref bath_energies, ref hybridizations,
        } => {
            let ed = impurity_energy.unwrap_or(-0.5 * u);
            push(
                u,
                vec![
                    (ModelSpec::fermion_mode(0, ModeKind::Up), Number),
                    (ModelSpec::fermion_mode(0, ModeKind::Down), Number),
                ],
            );
            for s in spins {
                push(ed, vec![(ModelSpec::fermion_mode(0, s), Number)]);
            }
            for b in 1..sites {
                for s in spins {
                    let d = ModelSpec::fermion_mode(0, s);
                    let c = ModelSpec::fermion_mode(b, s);
                    push(bath_energies[b - 1], vec![(c, Number)]);
                    push(hybridizations[b - 1], vec![(d, Create), (c, Annihilate)]);
                    push(hybridizations[b - 1], vec![(c, Create), (d, Annihilate)]);
                }
            }
        }
    }
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    SPlus,
    SMinus,
    Sz,
    Number,
    Create,
    Annihilate,
    /// Total fermion parity of the partition; `bit` is ignored.
    Parity,
}

impl From<LocalOp> for FactorKind {
    fn from(op: LocalOp) -> Self {
        match op {
            LocalOp::SPlus => FactorKind::SPlus,
            LocalOp::SMinus => FactorKind::SMinus,
            LocalOp::Sz => FactorKind::Sz,
            LocalOp::Number => FactorKind::Number,
            LocalOp::Create => FactorKind::Create,
            LocalOp::Annihilate => FactorKind::Annihilate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorOp {
    pub kind: FactorKind,
    pub bit: usize,
}

/// Operator product acting on one partition, written left to right.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionFactor {
    pub ops: Vec<FactorOp>,
}

impl PartitionFactor {
    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    /// Applies the product to a basis pattern. Returns `None` when the
    /// result vanishes.
    pub fn apply(&self, state: u64) -> Option<(u64, f64)> {
        let mut s = state;
        let mut amp = 1.0;
        for op in self.ops.iter().rev() {
            let mask = 1u64 << op.bit;
            let occ = s & mask != 0;
            let below = (s & (mask - 1)).count_ones();
            match op.kind {
                FactorKind::SPlus => {
                    if occ {
                        return None;
                    }
                    s |= mask;
                }
                FactorKind::SMinus => {
                    if !occ {
                        return None;
                    }
                    s &= !mask;
                }
                FactorKind::Sz => amp *= if occ { 0.5 } else { -0.5 },
                FactorKind::Number => {
                    if !occ {
                        return None;
                    }
                }
                FactorKind::Create => {
                    if occ {
                        return None;
                    }
                    if below % 2 == 1 {
                        amp = -amp;
                    }
                    s |= mask;
                }
                FactorKind::Annihilate => {
                    if !occ {
                        return None;
                    }
                    if below % 2 == 1 {
                        amp = -amp;
                    }
                    s &= !mask;
                }
                FactorKind::Parity => {
                    if s.count_ones() % 2 == 1 {
                        amp = -amp;
                    }
                }
            }
        }
        Some((s, amp))
    }

    /// Quantum-number change produced by the factor on a partition with the
    /// given mode kinds.
    pub fn shift(&self, kinds: &[ModeKind], ncomp: usize) -> QuantumNumber {
        let mut q = vec![0i32; ncomp];
        for op in &self.ops {
            let delta = match op.kind {
                FactorKind::SPlus | FactorKind::Create => 1,
                FactorKind::SMinus | FactorKind::Annihilate => -1,
                _ => 0,
            };
            if delta == 0 {
                continue;
            }
            match kinds[op.bit] {
                ModeKind::Spin => q[0] += 2 * delta,
                ModeKind::Up => q[0] += delta,
                ModeKind::Down => q[1] += delta,
            }
        }
        QuantumNumber::new(q)
    }

    fn simplify(&mut self) {
        let mut out: Vec<FactorOp> = Vec::with_capacity(self.ops.len());
        for op in self.ops.drain(..) {
            if op.kind == FactorKind::Parity
                && out.last().is_some_and(|l| l.kind == FactorKind::Parity)
            {
                out.pop();
            } else {
                out.push(op);
            }
        }
        self.ops = out;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTerm {
    pub coefficient: f64,
    pub factor: PartitionFactor,
}

/// A cut-crossing term `coefficient · left ⊗ right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub coefficient: f64,
    pub left: PartitionFactor,
    pub right: PartitionFactor,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitTerms {
    pub left: Vec<FactorTerm>,
    pub right: Vec<FactorTerm>,
    /// Indexed by the boundary label `m`, one entry per primitive term.
    pub boundary: Vec<BoundaryPair>,
}

pub fn split_terms(terms: &[HamiltonianTerm], bip: &Bipartition) -> Result<SplitTerms> {
    let nmodes = bip.model.num_modes();
    let mut place = vec![None; nmodes];
    for (bit, &m) in bip.left.modes.iter().enumerate() {
        place[m] = Some((Side::Left, bit));
    }
    for (bit, &m) in bip.right.modes.iter().enumerate() {
        place[m] = Some((Side::Right, bit));
    }

    let mut out = SplitTerms::default();
    for (ti, term) in terms.iter().enumerate() {
        let mut left = PartitionFactor::default();
        let mut right = PartitionFactor::default();
        for &(mode, op) in &term.factors {
            let (side, bit) = place.get(mode).copied().flatten().ok_or_else(|| {
                Error::Structural(format!("term {ti} references mode {mode} outside the cut"))
            })?;
            let f = FactorOp { kind: op.into(), bit };
            match side {
                Side::Left => left.ops.push(f),
                Side::Right => {
                    if op.is_fermionic() {
                        left.ops.push(FactorOp { kind: FactorKind::Parity, bit: 0 });
                    }
                    right.ops.push(f);
                }
            }
        }
        left.simplify();
        let c = term.coefficient;
        match (left.is_identity(), right.is_identity()) {
            (_, true) => out.left.push(FactorTerm { coefficient: c, factor: left }),
            (true, false) => out.right.push(FactorTerm { coefficient: c, factor: right }),
            (false, false) => out.boundary.push(BoundaryPair { coefficient: c, left, right }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::EntanglementCut;
    use LocalOp::*;

    #[test]
    fn heisenberg_two_sites() {
        let t = build_terms(&ModelSpec::heisenberg(2, 1.0)).unwrap();
        assert_eq!(
            t,
            vec![
                HamiltonianTerm::new(0.5, vec![(0, SPlus), (1, SMinus)]),
                HamiltonianTerm::new(0.5, vec![(0, SMinus), (1, SPlus)]),
                HamiltonianTerm::new(1.0, vec![(0, Sz), (1, Sz)]),
            ]
        );
    }

    #[test]
    fn hubbard_two_sites_free() {
        let t = build_terms(&ModelSpec::hubbard(2, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|x| x.coefficient == -1.0 && x.factors.len() == 2));
    }

    #[test]
    fn hubbard_two_sites_interacting() {
        let t = build_terms(&ModelSpec::hubbard(2, 1.0, 2.0, 0.0)).unwrap();
        let onsite: Vec<_> = t.iter().filter(|x| x.coefficient == 2.0).collect();
        assert_eq!(onsite.len(), 2);
        assert_eq!(onsite[0].factors, vec![(0, Number), (1, Number)]);
        assert_eq!(onsite[1].factors, vec![(2, Number), (3, Number)]);
    }

    #[test]
    fn invalid_specs() {
        assert!(build_terms(&ModelSpec::heisenberg(1, 1.0)).is_err());
        let mut m = ModelSpec::impurity(4, 1.0);
        if let ModelSpec::QuantumImpurity { bath_energies, .. } = &mut m {
            bath_energies.pop();
        }
        assert!(matches!(m.validate(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn heisenberg_central_bond_splits() {
        let m = ModelSpec::heisenberg(4, 1.0);
        let b = Bipartition::new(&m, &EntanglementCut::central(4)).unwrap();
        let s = split_terms(&build_terms(&m).unwrap(), &b).unwrap();
        assert_eq!(s.left.len(), 3);
        assert_eq!(s.right.len(), 3);
        assert_eq!(s.boundary.len(), 3);
        let zz = &s.boundary[2];
        assert_eq!(zz.left.ops, vec![FactorOp { kind: FactorKind::Sz, bit: 1 }]);
        assert_eq!(zz.right.ops, vec![FactorOp { kind: FactorKind::Sz, bit: 0 }]);
    }

    #[test]
    fn cross_cut_hopping_carries_left_parity() {
        let m = ModelSpec::hubbard(4, 1.0, 0.0, 0.0);
        let b = Bipartition::new(&m, &EntanglementCut::central(4)).unwrap();
        let s = split_terms(&build_terms(&m).unwrap(), &b).unwrap();
        // c†_{1↑} c_{2↑}: left bit 1 (site 1 up), right bit 0 (site 2 up).
        let hop = s
            .boundary
            .iter()
            .find(|p| p.left.ops[0] == FactorOp { kind: FactorKind::Create, bit: 1 })
            .unwrap();
        assert_eq!(hop.left.ops[1].kind, FactorKind::Parity);
        assert_eq!(hop.right.ops, vec![FactorOp { kind: FactorKind::Annihilate, bit: 0 }]);
        // Right-only hopping has its parity strings cancelled.
        assert!(s.right.iter().all(|t| !t.factor.ops.iter().any(|o| o.kind == FactorKind::Parity)));
        assert_eq!(s.boundary.len(), 4);
    }

    #[test]
    fn impurity_interaction_is_diagonal_boundary_pair() {
        let m = ModelSpec::impurity(3, 4.0);
        let b = Bipartition::new(&m, &EntanglementCut::spin_space(3)).unwrap();
        let s = split_terms(&build_terms(&m).unwrap(), &b).unwrap();
        assert_eq!(s.boundary.len(), 1);
        let p = &s.boundary[0];
        assert_eq!(p.coefficient, 4.0);
        assert_eq!(p.left.ops, vec![FactorOp { kind: FactorKind::Number, bit: 0 }]);
        assert_eq!(p.right.ops, vec![FactorOp { kind: FactorKind::Number, bit: 0 }]);
    }

    #[test]
    fn factor_application() {
        let sz = PartitionFactor { ops: vec![FactorOp { kind: FactorKind::Sz, bit: 0 }] };
        assert_eq!(sz.apply(0b1), Some((0b1, 0.5)));
        assert_eq!(sz.apply(0b0), Some((0b0, -0.5)));
        let cdag = PartitionFactor { ops: vec![FactorOp { kind: FactorKind::Create, bit: 2 }] };
        assert_eq!(cdag.apply(0b001), Some((0b101, -1.0)));
        assert_eq!(cdag.apply(0b011), Some((0b111, 1.0)));
        assert_eq!(cdag.apply(0b100), None);
    }
}
