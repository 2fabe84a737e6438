//! Lanczos ground-state solver with full reorthogonalization.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{tridiagonal_eigen, tridiagonal_eigenvalues, tridiagonal_inverse_iteration};
use crate::scalar::Scalar;
use crate::state::{BlockWavefunction, DistributionLayout};
use crate::transport::Communicator;

/// Relative residual accepted for the returned eigenpair.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Ritz gaps below this flag a degenerate ground state.
pub const DEGENERACY_GAP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanczosConfig {
    pub max_iterations: usize,
    /// Bound on the change of the lowest Ritz value between iterations.
    pub tolerance: f64,
    pub seed: u64,
    /// Measure the largest Krylov-basis overlap at the end (quadratic cost).
    pub check_orthogonality: bool,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig { max_iterations: 500, tolerance: 1e-12, seed: 0, check_orthogonality: false }
    }
}

impl LanczosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 2 {
            return Err(Error::Structural(format!("max_iterations must be at least 2, got {}", self.max_iterations)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Structural(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanczosStep {
    pub iteration: usize,
    pub ritz_value: f64,
    pub residual_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct LanczosResult<T> {
    pub energy: f64,
    pub state: BlockWavefunction<T>,
    pub iterations: usize,
    pub trace: Vec<LanczosStep>,
    /// `‖Hψ − Eψ‖`.
    pub residual: f64,
    /// Distance to the next Ritz value, when the Krylov space has two.
    pub ritz_gap: Option<f64>,
    pub degenerate: bool,
    pub max_overlap: Option<f64>,
}

pub fn trace_csv(trace: &[LanczosStep]) -> String {
    let mut s = String::from("iteration,ritz_value,residual_estimate\n");
    for t in trace {
        writeln!(s, "{},{:e},{:e}", t.iteration, t.ritz_value, t.residual_estimate).unwrap();
    }
    s
}

/// Gram–Schmidt against the whole basis, repeated once more when the first
/// pass removed more than `1 − 1/√2` of the norm.
fn orthogonalize<T: Scalar>(w: &mut BlockWavefunction<T>, basis: &[BlockWavefunction<T>], comm: &Communicator) -> Result<()> {
    let mut before = w.norm(comm)?;
    for _ in 0..2 {
        for v in basis {
            let c = v.dot(w, comm)?;
            w.axpy(-c, v)?;
        }
        let after = w.norm(comm)?;
        if after >= std::f64::consts::FRAC_1_SQRT_2 * before {
            break;
        }
        before = after;
    }
    Ok(())
}

/// Lowest eigenpair of the Hermitian operator `apply` on the sector described
/// by `layout`.
pub fn lanczos_ground_state<T, F>(
    layout: &Arc<DistributionLayout>,
    comm: &Communicator,
    config: &LanczosConfig,
    mut apply: F,
) -> Result<LanczosResult<T>>
where
    T: Scalar,
    F: FnMut(&BlockWavefunction<T>) -> Result<BlockWavefunction<T>>,
{
    config.validate()?;
    let dim = layout.dimension();
    if dim == 0 {
        return Err(Error::EmptySector(layout.table().target.clone()));
    }
    let mut v = BlockWavefunction::<T>::random(layout, config.seed, comm);
    v.normalize(comm)?;
    let mut basis = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;

    for j in 0..config.max_iterations {
        let mut w = apply(&basis[j])?;
        let a = basis[j].dot(&w, comm)?.re();
        w.axpy(T::from_real(-a), &basis[j])?;
        if j > 0 {
            w.axpy(T::from_real(-beta[j - 1]), &basis[j - 1])?;
        }
        orthogonalize(&mut w, &basis, comm)?;
        let b = w.norm(comm)?;
        alpha.push(a);

        let ritz = tridiagonal_eigenvalues(&alpha, &beta);
        let theta = ritz[0];
        let y = tridiagonal_inverse_iteration(&alpha, &beta, theta);
        let estimate = b * y[j].abs();
        trace.push(LanczosStep { iteration: j + 1, ritz_value: theta, residual_estimate: estimate });

        let scale = theta.abs().max(1.0);
        let exhausted = basis.len() == dim || b <= 1e-14 * scale;
        let converged = estimate <= 1e-10 * scale
            || ((previous - theta).abs() < config.tolerance && estimate <= RESIDUAL_TOLERANCE * scale);
        previous = theta;

        if exhausted || converged {
            let (vals, vecs) = tridiagonal_eigen(&alpha, &beta);
            let k = alpha.len();
            let mut psi = BlockWavefunction::zeros(layout);
            for (i, v) in basis.iter().enumerate() {
                psi.axpy(T::from_real(vecs[i]), v)?;
            }
            psi.normalize(comm)?;
            let energy = vals[0];
            let mut r = apply(&psi)?;
            r.axpy(T::from_real(-energy), &psi)?;
            let residual = r.norm(comm)?;
            if residual <= RESIDUAL_TOLERANCE * energy.abs().max(1.0) || exhausted {
                let ritz_gap = (k > 1).then(|| vals[1] - vals[0]);
                let max_overlap = config.check_orthogonality.then(|| max_overlap(&basis, comm)).transpose()?;
                return Ok(LanczosResult {
                    energy,
                    state: psi,
                    iterations: j + 1,
                    trace,
                    residual,
                    ritz_gap,
                    degenerate: ritz_gap.is_some_and(|g| g < DEGENERACY_GAP),
                    max_overlap,
                });
            }
        }
        w.scale(T::from_real(1.0 / b));
        beta.push(b);
        basis.push(w);
    }
    Err(Error::NotConverged { iterations: config.max_iterations, last_ritz: previous })
}

fn max_overlap<T: Scalar>(basis: &[BlockWavefunction<T>], comm: &Communicator) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..basis.len() {
        for j in 0..i {
            worst = worst.max(basis[i].dot(&basis[j], comm)?.abs_sq().sqrt());
        }
    }
    Ok(worst)
}
