//! Symmetry-resolved Schmidt spectra, sector weights and fragmentation
//! statistics.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{
    default_ccdf_window, fit_ccdf_power_law, fit_exponential, n_eff, q_star, ExponentialFit, PowerLawFit,
};
use crate::linalg::{complex_singular_values, svd};
use crate::scalar::{Scalar, ScalarKind};
use crate::state::BlockWavefunction;
use crate::symmetry::QuantumNumber;
use crate::transport::{balanced_split, Communicator};

/// Default numerical-rank cutoff on `σ²`.
pub const SCHMIDT_CUTOFF: f64 = 1e-14;
/// Tolerance on `‖ψ‖² − 1` accepted by the decomposition.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorSpectrum {
    pub pair: usize,
    pub q_left: QuantumNumber,
    pub q_right: QuantumNumber,
    /// All singular values of the block, descending.
    pub singular_values: Vec<f64>,
    /// `ξ = −2 ln σ` for `σ² > cutoff`.
    pub xi: Vec<f64>,
    pub weight: f64,
    /// Schmidt rank above the cutoff.
    pub chi: usize,
    /// `Σ_r |Ψ_{r l}|²` for every column `l`.
    #[serde(skip)]
    pub column_weights: Vec<f64>,
}

impl SectorSpectrum {
    pub fn label(&self) -> String {
        label(&self.q_left)
    }
}

/// `a:b` form of a quantum number, safe inside CSV fields.
pub fn label(q: &QuantumNumber) -> String {
    q.components().iter().map(i32::to_string).collect::<Vec<_>>().join(":")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntanglementReport {
    pub cutoff: f64,
    pub sectors: Vec<SectorSpectrum>,
    /// `Σ_{q,i} e^{−ξ}` over retained values.
    pub total_weight: f64,
    pub entropy: f64,
}

fn block_singular_values<T: Scalar>(block: &[T], rows: usize, cols: usize) -> Vec<f64> {
    match T::KIND {
        ScalarKind::Real => svd(&block.iter().map(|x| x.re()).collect::<Vec<_>>(), rows, cols).s,
        ScalarKind::Complex => {
            let z: Vec<Complex64> = block.iter().map(|x| Complex64::new(x.re(), x.im())).collect();
            complex_singular_values(&z, rows, cols)
        }
    }
}

/// Schmidt decomposition across the cut, block by block.
pub fn schmidt_decompose<T: Scalar>(
    psi: &BlockWavefunction<T>,
    comm: &Communicator,
    cutoff: f64,
) -> Result<EntanglementReport> {
    let full = psi.gather_vector(comm)?;
    schmidt_from_vector(psi.table(), &full, cutoff)
}

/// Same as [`schmidt_decompose`] on a gathered coefficient vector.
pub fn schmidt_from_vector<T: Scalar>(
    table: &crate::symmetry::SectorPairTable,
    full: &[T],
    cutoff: f64,
) -> Result<EntanglementReport> {
    let norm_sq: f64 = full.iter().map(|x| x.abs_sq()).sum();
    if (norm_sq - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized { norm: norm_sq.sqrt() });
    }
    let offsets = table.offsets();
    let mut sectors = Vec::with_capacity(table.len());
    for (q, p) in table.pairs().iter().enumerate() {
        let block = &full[offsets[q]..offsets[q] + p.volume()];
        let singular_values = block_singular_values(block, p.d_right, p.d_left);
        let column_weights: Vec<f64> =
            block.chunks(p.d_right).map(|c| c.iter().map(|x| x.abs_sq()).sum()).collect();
        let xi: Vec<f64> =
            singular_values.iter().filter(|s| s.powi(2) > cutoff).map(|s| -2.0 * s.ln()).collect();
        sectors.push(SectorSpectrum {
            pair: q,
            q_left: p.left.clone(),
            q_right: p.right.clone(),
            weight: singular_values.iter().map(|s| s * s).sum(),
            chi: xi.len(),
            singular_values,
            xi,
            column_weights,
        });
    }
    let total: f64 = sectors.iter().map(|s| s.weight).sum();
    for s in &mut sectors {
        s.weight /= total;
    }
    let total_weight = sectors.iter().flat_map(|s| &s.xi).map(|x| (-x).exp()).sum();
    let entropy = sectors.iter().flat_map(|s| &s.xi).map(|x| x * (-x).exp()).sum();
    Ok(EntanglementReport { cutoff, sectors, total_weight, entropy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Whole sectors, contiguous in table order, balanced by `Σχ_q`.
    SectorLevel,
    /// Columns of every sector split as in the wavefunction layout.
    ColumnLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessWeights {
    pub assignment: Assignment,
    pub ranks: usize,
    /// Process owning each sector (sector-level mode only).
    pub owners: Vec<usize>,
    /// `W_P` for each process.
    pub ipr: Vec<f64>,
}

impl ProcessWeights {
    pub fn total(&self) -> f64 {
        self.ipr.iter().sum()
    }
}

/// Contiguous sector blocks: sector `i` goes to the process containing the
/// midpoint of its share of the cumulative `Σχ`.
pub fn sector_owners(chi: &[usize], ranks: usize) -> Vec<usize> {
    let total: usize = chi.iter().sum();
    let mut before = 0usize;
    chi.iter()
        .map(|&c| {
            let mid2 = 2 * before + c;
            before += c;
            if total == 0 {
                0
            } else {
                ((ranks * mid2) / (2 * total)).min(ranks - 1)
            }
        })
        .collect()
}

/// Process-resolved inverse participation ratio `W_P = Σ_{q ∈ Q_p} W_q²`.
/// In column-level mode each process holds the part of `W_q` carried by its
/// columns and `W_P` sums the squares of those parts.
pub fn sector_weights_and_ipr(report: &EntanglementReport, assignment: Assignment, ranks: usize) -> Result<ProcessWeights> {
    if ranks == 0 {
        return Err(Error::Structural("process count must be at least 1".into()));
    }
    let mut ipr = vec![0.0; ranks];
    let owners = match assignment {
        Assignment::SectorLevel => {
            let chi: Vec<usize> = report.sectors.iter().map(|s| s.chi).collect();
            let owners = sector_owners(&chi, ranks);
            for (s, &p) in report.sectors.iter().zip(&owners) {
                ipr[p] += s.weight * s.weight;
            }
            owners
        }
        Assignment::ColumnLevel => {
            for s in &report.sectors {
                let total: f64 = s.column_weights.iter().sum();
                if total == 0.0 {
                    continue;
                }
                let mut at = 0;
                for (p, n) in balanced_split(s.column_weights.len(), ranks).into_iter().enumerate() {
                    let part: f64 = s.column_weights[at..at + n].iter().sum::<f64>() / total * s.weight;
                    ipr[p] += part * part;
                    at += n;
                }
            }
            Vec::new()
        }
    };
    Ok(ProcessWeights { assignment, ranks, owners, ipr })
}

pub fn spectrum_csv(report: &EntanglementReport, header: &str) -> String {
    let mut s = String::from(header);
    s.push_str("q_index,q_label,i,xi\n");
    for sec in &report.sectors {
        for (i, xi) in sec.xi.iter().enumerate() {
            writeln!(s, "{},{},{},{:e}", sec.pair, sec.label(), i, xi).unwrap();
        }
    }
    s
}

pub fn weights_csv(report: &EntanglementReport, header: &str) -> String {
    let mut s = String::from(header);
    s.push_str("q,W_q,chi_q\n");
    for sec in &report.sectors {
        writeln!(s, "{},{:e},{}", sec.label(), sec.weight, sec.chi).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentationConfig {
    /// Model exponent `m` in `q*` and in the ratio-model relation.
    pub m: f64,
    pub ccdf_window: Option<(f64, f64)>,
    /// `Π`; defaults to `χ^{1/m}` at position `⌈N_eff⌉` of the sorted `χ_q`.
    pub pi: Option<f64>,
}

impl Default for FragmentationConfig {
    fn default() -> Self {
        FragmentationConfig { m: 1.0, ccdf_window: None, pi: None }
    }
}

/// A fit that may be absent, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Fitted<T> {
    Ok(T),
    Skipped { skipped: String },
}

impl<T> Fitted<T> {
    fn from(r: std::result::Result<T, crate::error::FitError>) -> Self {
        match r {
            Ok(v) => Fitted::Ok(v),
            Err(e) => Fitted::Skipped { skipped: e.to_string() },
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Fitted::Ok(v) => Some(v),
            Fitted::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentationReport {
    /// Schmidt ranks per sector, descending.
    pub chi_sorted: Vec<usize>,
    pub sectors: usize,
    pub exponential: Fitted<ExponentialFit>,
    pub ccdf: Vec<(f64, f64)>,
    pub ccdf_window: Option<(f64, f64)>,
    pub power_law: Fitted<PowerLawFit>,
    pub n_eff: f64,
    pub m: f64,
    pub pi: Option<f64>,
    pub q_star: Option<f64>,
}

pub fn fragmentation_report(report: &EntanglementReport, config: &FragmentationConfig) -> FragmentationReport {
    let mut chi_sorted: Vec<usize> = report.sectors.iter().map(|s| s.chi).filter(|&c| c > 0).collect();
    chi_sorted.sort_by(|a, b| b.cmp(a));
    let chi: Vec<f64> = chi_sorted.iter().map(|&c| c as f64).collect();
    let exponential = Fitted::from(fit_exponential(&chi));
    let window = config.ccdf_window.or_else(|| default_ccdf_window(&chi));
    let power_law = Fitted::from(fit_ccdf_power_law(&chi, window));
    let neff = if chi.is_empty() { 0.0 } else { n_eff(&chi) };
    let pi = config.pi.or_else(|| {
        let idx = (neff.ceil() as usize).clamp(1, chi.len().max(1)) - 1;
        chi.get(idx).map(|c| c.powf(1.0 / config.m))
    });
    let q_star = match (exponential.ok(), pi) {
        (Some(e), Some(pi)) if e.alpha > 0.0 => Some(q_star(e.c, e.alpha, pi, config.m)),
        _ => None,
    };
    FragmentationReport {
        sectors: chi_sorted.len(),
        ccdf: crate::fit::ccdf(&chi),
        chi_sorted,
        exponential,
        ccdf_window: window,
        power_law,
        n_eff: neff,
        m: config.m,
        pi,
        q_star,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::state::make_layout;
    use crate::symmetry::{Bipartition, EntanglementCut};

    fn two_site(coeffs: &[f64], sz: i32) -> EntanglementReport {
        let model = ModelSpec::heisenberg(2, 1.0);
        let bip = Bipartition::new(&model, &EntanglementCut::central(2)).unwrap();
        let table = bip.table(&QuantumNumber::new(vec![sz])).unwrap();
        let comm = Communicator::serial();
        let psi = BlockWavefunction::scatter(&make_layout(table, 1).unwrap(), coeffs, &comm).unwrap();
        schmidt_decompose(&psi, &comm, SCHMIDT_CUTOFF).unwrap()
    }

    #[test]
    fn singlet() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = two_site(&[-h, h], 0);
        assert_eq!(r.sectors.len(), 2);
        for s in &r.sectors {
            assert!((s.weight - 0.5).abs() < 1e-15);
            assert!((s.xi[0] - 2f64.ln()).abs() < 1e-14);
        }
        assert!((r.entropy - 2f64.ln()).abs() < 1e-14);
        assert!((r.total_weight - 1.0).abs() < 1e-14);
        let one = sector_weights_and_ipr(&r, Assignment::SectorLevel, 1).unwrap();
        assert!((one.ipr[0] - 0.5).abs() < 1e-15);
        let two = sector_weights_and_ipr(&r, Assignment::SectorLevel, 2).unwrap();
        assert_eq!(two.owners, vec![0, 1]);
        assert!(two.ipr.iter().all(|w| (w - 0.25).abs() < 1e-15));
        assert!(sector_weights_and_ipr(&r, Assignment::SectorLevel, 0).is_err());
    }

    #[test]
    fn product_state() {
        let r = two_site(&[1.0], 2);
        assert_eq!(r.sectors[0].xi, vec![0.0]);
        assert_eq!(r.entropy, 0.0);
        let w = sector_weights_and_ipr(&r, Assignment::ColumnLevel, 1).unwrap();
        assert_eq!(w.ipr, vec![1.0]);
    }

    #[test]
    fn unnormalized_is_rejected() {
        let model = ModelSpec::heisenberg(2, 1.0);
        let bip = Bipartition::new(&model, &EntanglementCut::central(2)).unwrap();
        let table = bip.table(&QuantumNumber::new(vec![0])).unwrap();
        assert!(matches!(schmidt_from_vector(&table, &[1.0, 1.0], SCHMIDT_CUTOFF), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn owners_are_contiguous_and_balanced() {
        let o = sector_owners(&[1, 1, 1, 1, 4], 2);
        assert_eq!(o, vec![0, 0, 0, 0, 1]);
        assert!(o.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(sector_owners(&[3, 3], 4), vec![1, 3]);
    }
}
