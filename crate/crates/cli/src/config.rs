//! Experiment configuration: TOML sections, defaults, validation and the
//! resolved form written next to every run.

use std::path::{Path, PathBuf};

use entwave_core::cost::CostModel;
use entwave_core::entanglement::{FragmentationConfig, SCHMIDT_CUTOFF};
use entwave_core::state_io::{hex, sha256};
use entwave_core::{
    Bipartition, CutKind, EntanglementCut, LanczosConfig, ModelSpec, QuantumNumber, ScalarKind, Schedule,
    DEFAULT_ORACLE_CAP,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable overriding `[output].dir`.
pub const OUTPUT_DIR_ENV: &str = "ENTWAVE_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub cut: CutSection,
    #[serde(default)]
    pub sector: SectorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyze: Option<AnalyzeSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutSection {
    pub kind: CutKind,
    /// Spatial cut after this many sites; defaults to the middle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    /// Explicit left sites of a spatial cut; the rest go right.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_sites: Option<Vec<usize>>,
}

impl Default for CutSection {
    fn default() -> Self {
        CutSection { kind: CutKind::Spatial, position: None, left_sites: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectorSection {
    /// `[2Sz]` for spins, `[N_up, N_down]` for fermions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub ranks: Vec<usize>,
    pub schedule: Schedule,
    pub seed: u64,
    pub oracle_cap: usize,
    pub scalar: ScalarKind,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            ranks: vec![1],
            schedule: Schedule::RoundRobin,
            seed: 0,
            oracle_cap: DEFAULT_ORACLE_CAP,
            scalar: ScalarKind::Real,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub check_orthogonality: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = LanczosConfig::default();
        SolverSection {
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            check_orthogonality: d.check_orthogonality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub entanglement: bool,
    pub schmidt_cutoff: f64,
    pub m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ccdf_window: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { entanglement: true, schmidt_cutoff: SCHMIDT_CUTOFF, m: 1.0, ccdf_window: None, pi: None }
    }
}

impl AnalysisSection {
    pub fn fragmentation(&self) -> FragmentationConfig {
        FragmentationConfig { m: self.m, ccdf_window: self.ccdf_window.map(|[a, b]| (a, b)), pi: self.pi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of simulated ranks.
    Ranks,
    /// Number of kept Schmidt states of the ground state.
    ChiCutoff,
    /// Interaction strength of a fermionic model.
    U,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub samples: usize,
    pub tolerance: f64,
    pub energy_tolerance: f64,
    /// Test hook: negate one block of this boundary term before comparing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupt_boundary: Option<usize>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { samples: 20, tolerance: 1e-12, energy_tolerance: 1e-10, corrupt_boundary: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub state: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub write_state: bool,
    pub write_plan: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("entwave-out"), write_state: true, write_plan: true }
    }
}

/// A validated configuration with every default made explicit.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub cut: EntanglementCut,
    pub target: QuantumNumber,
    /// Hex SHA-256 of the result-affecting part of the configuration.
    pub hash: String,
    pub hash_bytes: [u8; 32],
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// Name of the `[table]` header governing byte offset `at`.
fn section_at(text: &str, at: usize) -> Option<String> {
    let mut line_start = 0;
    let mut name = None;
    for line in text.split_inclusive('\n') {
        if line_start > at {
            break;
        }
        let t = line.trim();
        if t.starts_with('[') && !t.starts_with("[[") {
            if let Some(end) = t.find(']') {
                name = Some(t[1..end].trim().to_string());
            }
        }
        line_start += line.len();
    }
    name
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let section = e.span().and_then(|span| section_at(text, span.start));
            CliError::Config(match section {
                Some(name) => format!("{name}: {e}"),
                None => e.to_string(),
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn lanczos(&self) -> LanczosConfig {
        LanczosConfig {
            max_iterations: self.solver.max_iterations,
            tolerance: self.solver.tolerance,
            seed: self.run.seed,
            check_orthogonality: self.solver.check_orthogonality,
        }
    }

    fn build_cut(&self) -> Result<EntanglementCut, CliError> {
        let sites = self.model.sites();
        match self.cut.kind {
            CutKind::SpinSpace => {
                if self.cut.position.is_some() || self.cut.left_sites.is_some() {
                    return Err(invalid("cut", "position and left_sites apply to spatial cuts only"));
                }
                if !self.model.is_fermionic() {
                    return Err(invalid("cut.kind", "spin_space cuts need a fermionic model"));
                }
                Ok(EntanglementCut::spin_space(sites))
            }
            CutKind::Spatial => match (&self.cut.left_sites, self.cut.position) {
                (Some(_), Some(_)) => Err(invalid("cut", "give either position or left_sites")),
                (Some(left), None) => {
                    let right = (0..sites).filter(|s| !left.contains(s)).collect();
                    Ok(EntanglementCut::from_sites(left.clone(), right))
                }
                (None, p) => EntanglementCut::spatial(sites, p.unwrap_or(sites / 2))
                    .map_err(|e| invalid("cut.position", e)),
            },
        }
    }

    /// Checks every section and fills defaults. No Hilbert space is built
    /// beyond the per-partition sector tables.
    pub fn resolve(mut self) -> Result<Resolved, CliError> {
        self.model.validate().map_err(|e| invalid("model", e))?;
        let cut = self.build_cut()?;
        cut.validate(&self.model).map_err(|e| invalid("cut", e))?;
        if cut.kind == CutKind::Spatial {
            let contiguous = cut.left_sites.iter().enumerate().all(|(i, &s)| i == s);
            if contiguous && self.cut.left_sites.is_none() {
                self.cut.position = Some(cut.left_sites.len());
            }
        }

        let target = match &self.sector.target {
            Some(t) => QuantumNumber::new(t.clone()),
            None => self.model.default_target(),
        };
        if target.len() != self.model.qn_components() {
            return Err(invalid(
                "sector.target",
                format!("{} components given, the model needs {}", target.len(), self.model.qn_components()),
            ));
        }
        self.sector.target = Some(target.components().to_vec());

        if self.run.ranks.is_empty() {
            return Err(invalid("run.ranks", "need at least one rank count"));
        }
        if let Some(i) = self.run.ranks.iter().position(|&p| p == 0) {
            return Err(invalid(&format!("run.ranks[{i}]"), "rank counts must be positive"));
        }
        if self.run.oracle_cap == 0 {
            return Err(invalid("run.oracle_cap", "must be positive"));
        }
        self.lanczos().validate().map_err(|e| invalid("solver", e))?;

        let a = &self.analysis;
        if !(a.schmidt_cutoff > 0.0 && a.schmidt_cutoff < 1.0) {
            return Err(invalid("analysis.schmidt_cutoff", "must lie in (0, 1)"));
        }
        if !(a.m.is_finite() && a.m > 0.0) {
            return Err(invalid("analysis.m", "must be positive"));
        }
        if let Some([lo, hi]) = a.ccdf_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(invalid("analysis.ccdf_window", "need 0 < lo < hi"));
            }
        }
        if a.pi.is_some_and(|p| !(p > 0.0)) {
            return Err(invalid("analysis.pi", "must be positive"));
        }

        let c = &self.cost;
        if ![c.tau, c.phi, c.latency].iter().all(|x| x.is_finite() && *x >= 0.0) || c.phi == 0.0 {
            return Err(invalid("cost", "tau and latency must be non-negative, phi positive"));
        }

        if self.oracle.samples == 0 {
            return Err(invalid("oracle.samples", "must be positive"));
        }
        if !(self.oracle.tolerance > 0.0 && self.oracle.energy_tolerance > 0.0) {
            return Err(invalid("oracle", "tolerances must be positive"));
        }

        if let Some(s) = &self.sweep {
            self.validate_sweep(s)?;
        }

        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output.dir = PathBuf::from(dir);
            }
        }

        // Cheap structural check: the target sector must exist.
        let bip = Bipartition::new(&self.model, &cut).map_err(|e| invalid("cut", e))?;
        let table = bip.table(&target).map_err(|e| invalid("sector.target", e))?;
        if table.dimension() == 0 {
            return Err(invalid("sector.target", format!("sector {target} is empty for this model and cut")));
        }

        let hash_bytes = sha256(self.hash_view().as_bytes());
        Ok(Resolved { hash: hex(&hash_bytes), hash_bytes, config: self, cut, target })
    }

    fn validate_sweep(&self, s: &SweepSection) -> Result<(), CliError> {
        if s.values.is_empty() {
            return Err(invalid("sweep.values", "need at least one value"));
        }
        for (i, &v) in s.values.iter().enumerate() {
            let field = format!("sweep.values[{i}]");
            if !v.is_finite() {
                return Err(invalid(&field, "must be finite"));
            }
            if matches!(s.axis, SweepAxis::Ranks | SweepAxis::ChiCutoff) && !(v >= 1.0 && v.fract() == 0.0) {
                return Err(invalid(&field, "must be a positive integer for this axis"));
            }
        }
        if self.run.scalar == ScalarKind::Complex {
            return Err(invalid("run.scalar", "sweeps run with real amplitudes only"));
        }
        match s.axis {
            SweepAxis::U if !self.model.is_fermionic() => Err(invalid("sweep.axis", "the u axis needs a fermionic model")),
            _ => Ok(()),
        }
    }

    /// Configuration text covered by the hash: everything except where
    /// outputs go and how simulated ranks are scheduled.
    fn hash_view(&self) -> String {
        let mut view = self.clone();
        view.output = OutputSection::default();
        view.run.schedule = Schedule::default();
        toml::to_string(&view).expect("configuration serializes")
    }
}

impl Resolved {
    pub fn to_toml(&self) -> String {
        format!(
            "# config_hash: {}\n{}",
            self.hash,
            toml::to_string(&self.config).expect("configuration serializes")
        )
    }

    /// Copy of this configuration with another model, re-resolved.
    pub fn with_model(&self, model: ModelSpec) -> Result<Resolved, CliError> {
        let mut c = self.config.clone();
        c.model = model;
        c.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let r = ExperimentConfig::from_toml("[model]\nkind = \"heisenberg\"\nsites = 6\n").unwrap().resolve().unwrap();
        assert_eq!(r.config.cut.position, Some(3));
        assert_eq!(r.target.components(), &[0]);
        assert_eq!(r.config.run.ranks, vec![1]);
        assert_eq!(r.hash.len(), 64);
        let again = ExperimentConfig::from_toml(&r.to_toml()).unwrap().resolve().unwrap();
        assert_eq!(again.hash, r.hash);
    }

    #[test]
    fn unknown_model_names_the_field() {
        let e = ExperimentConfig::from_toml("[model]\nkind = \"ising\"\nsites = 4\n").unwrap_err();
        assert!(e.to_string().contains("model"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentConfig::from_toml("[model]\nkind = \"heisenberg\"\nsites = 4\n[run]\nrank = [1]\n")
            .unwrap_err();
        assert!(e.to_string().contains("rank"), "{e}");
    }

    #[test]
    fn schedule_and_output_excluded_from_hash() {
        let base = "[model]\nkind = \"heisenberg\"\nsites = 4\n";
        let a = ExperimentConfig::from_toml(base).unwrap().resolve().unwrap();
        let b = ExperimentConfig::from_toml(&format!("{base}[run]\nschedule = \"parallel\"\n[output]\ndir = \"x\"\n"))
            .unwrap()
            .resolve()
            .unwrap();
        let c = ExperimentConfig::from_toml(&format!("{base}[run]\nseed = 3\n")).unwrap().resolve().unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn validation_errors() {
        let bad = [
            "[model]\nkind = \"heisenberg\"\nsites = 1\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[cut]\nkind = \"spin_space\"\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[cut]\nposition = 9\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[sector]\ntarget = [0, 0]\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[sector]\ntarget = [40]\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[run]\nranks = [0]\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[sweep]\naxis = \"u\"\nvalues = [1.0]\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[sweep]\naxis = \"ranks\"\nvalues = [1.5]\n",
            "[model]\nkind = \"heisenberg\"\nsites = 4\n[solver]\nmax_iterations = 1\n",
        ];
        for text in bad {
            let r = ExperimentConfig::from_toml(text).and_then(ExperimentConfig::resolve);
            assert!(matches!(r, Err(CliError::Config(_))), "{text}");
        }
    }
}
