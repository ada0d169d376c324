//! Exact reduced dynamics of one auxiliary particle coupled to a thermal
//! non-interacting chain by the density-density term
//! `η Σ_k Σ_{μν} c†_μ(k) c_ν(k) a†_μ(k) a_ν(k)`.
//!
//! The coupling conserves momentum and the thermal state is a product over
//! momenta, so the auxiliary amplitude at `k` only entangles with the Fock
//! space of the same momentum. Per momentum the joint space is
//! `Fock(p) ⊗ C^p` (system-major, index `s * p + μ`) and two propagators
//! suffice: the joint one `W_k` and the bare system one `V_k`. With
//! `A_μ = <μ|W_k|φ0>` (an operator on the Fock space),
//!
//! ```text
//! g_μ = Tr[A_μ ρ_k V_k†]        (coherence with any other momentum)
//! G_μν = Tr[A_μ ρ_k A_ν†]       (diagonal block)
//! ```
//!
//! and the reduced state is `|C_k|² G_k` on the diagonal and
//! `C_k C̄_k' g_k g_k'†` between different momenta.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolve::{propagate_series, PropagatorConfig};
use crate::fock::{build_fock_ops, FockOperatorSet};
use crate::linalg::{eigh, hermiticity_defect, identity, kron, matrix_unit, min_eigenvalue, trace};
use crate::model::{BlochSampler, MomentumGrid};
use crate::observables::PositionDistribution;
use crate::single::{init_wannier, SpinorField};
use crate::thermal::{thermal_fock_state, MeanFieldSampler, ThermalParams};
use crate::{CMatrix, CVector, C64};

/// Allowed drift of `Tr G_k` away from one.
pub const TRACE_DRIFT_TOL: f64 = 1e-9;

/// `[Σ h_μν c†_μ c_ν] ⊗ I_p + η Σ c†_μ c_ν ⊗ E_μν`.
pub fn joint_generator(h_k: &CMatrix, eta: f64, ops: &FockOperatorSet) -> CMatrix {
    let p = ops.modes;
    let mut out = kron(&ops.quadratic_form(h_k), &identity(p));
    if eta != 0.0 {
        let eta = C64::new(eta, 0.0);
        for mu in 0..p {
            for nu in 0..p {
                out += kron(&ops.bilinears[mu][nu], &matrix_unit(p, mu, nu)) * eta;
            }
        }
    }
    out
}

/// Coherence vector and diagonal block of the auxiliary state at one momentum.
#[derive(Debug, Clone)]
pub struct JointBlock {
    pub g: CVector,
    pub gmat: CMatrix,
}

/// Operator blocks `A_μ = <μ|W|φ0>` acting on the Fock space.
fn aux_blocks(w: &CMatrix, phi0: &CVector, fock_dim: usize) -> Vec<CMatrix> {
    let p = phi0.len();
    (0..p)
        .map(|mu| {
            CMatrix::from_fn(fock_dim, fock_dim, |s, s2| {
                (0..p).map(|nu| w[(s * p + mu, s2 * p + nu)] * phi0[nu]).sum()
            })
        })
        .collect()
}

fn block_from(w: &CMatrix, v: &CMatrix, rho: &CMatrix, phi0: &CVector, fock_dim: usize) -> JointBlock {
    let a = aux_blocks(w, phi0, fock_dim);
    let rho_v = rho * v.adjoint();
    let g = CVector::from_iterator(a.len(), a.iter().map(|am| trace(&(am * &rho_v))));
    let a_rho: Vec<CMatrix> = a.iter().map(|am| am * rho).collect();
    let gmat = CMatrix::from_fn(a.len(), a.len(), |mu, nu| trace(&(&a_rho[mu] * a[nu].adjoint())));
    JointBlock { g, gmat }
}

/// Series of [`JointBlock`]s at one momentum, starting from the thermal
/// state of `h(k, 0)` and the auxiliary spinor `phi0`.
#[allow(clippy::too_many_arguments)]
pub fn gk_gmat(
    k: f64,
    sampler: &dyn BlochSampler,
    tp: &ThermalParams,
    eta: f64,
    phi0: &CVector,
    ops: &FockOperatorSet,
    times: &[f64],
    cfg: &PropagatorConfig,
) -> Result<Vec<JointBlock>> {
    if (phi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!("auxiliary spinor has norm {}", phi0.norm())));
    }
    let rho = thermal_fock_state(&sampler.eval(k, 0.0), tp, ops)?.rho;
    let joint = |t: f64| joint_generator(&sampler.eval(k, t), eta, ops);
    let bare = |t: f64| ops.quadratic_form(&sampler.eval(k, t));
    let dim = ops.dim();
    let ws = propagate_series(&joint, dim * ops.modes, 0.0, times, sampler.period(), cfg)?;
    let vs = propagate_series(&bare, dim, 0.0, times, sampler.period(), cfg)?;
    ws.iter()
        .zip(&vs)
        .map(|(w, v)| {
            let block = block_from(w, v, &rho, phi0, dim);
            let drift = (trace(&block.gmat).re - 1.0).abs();
            if drift > TRACE_DRIFT_TOL {
                return Err(Error::TraceDrift { drift });
            }
            Ok(block)
        })
        .collect()
}

/// Reduced auxiliary state in the `(k, μ)` basis, index `j * p + μ`.
#[derive(Debug, Clone)]
pub struct AuxDensityMatrix {
    pub grid: MomentumGrid,
    pub p: usize,
    pub rho: CMatrix,
}

impl AuxDensityMatrix {
    pub fn trace(&self) -> f64 {
        trace(&self.rho).re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho)
    }

    /// The same state in the `(n, μ)` position basis, `u_n = (1/√L) Σ_j e^{i n k_j} |k_j>`.
    pub fn position_basis(&self) -> CMatrix {
        let (len, p) = (self.grid.len(), self.p);
        let scale = 1.0 / (len as f64).sqrt();
        let f = CMatrix::from_fn(len * p, len * p, |row, col| {
            let (n, mu) = (row / p, row % p);
            let (j, nu) = (col / p, col % p);
            if mu == nu {
                C64::from_polar(scale, n as f64 * self.grid.k(j))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        &f * &self.rho * f.adjoint()
    }
}

/// Builds the reduced state from per-momentum blocks and initial amplitudes `C_k`.
pub fn assemble_rho_aux(
    grid: &MomentumGrid,
    blocks: &[JointBlock],
    coeffs: &[C64],
) -> Result<AuxDensityMatrix> {
    let len = grid.len();
    if blocks.len() != len || coeffs.len() != len {
        return Err(Error::Invalid(format!(
            "{} blocks and {} amplitudes for {len} momenta",
            blocks.len(),
            coeffs.len()
        )));
    }
    let weight: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if (weight - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!("momentum amplitudes carry weight {weight}")));
    }
    let p = blocks[0].g.len();
    let mut rho = CMatrix::zeros(len * p, len * p);
    for j in 0..len {
        for j2 in 0..len {
            if j == j2 {
                let w = C64::new(coeffs[j].norm_sqr(), 0.0);
                rho.view_mut((j * p, j * p), (p, p)).copy_from(&(&blocks[j].gmat * w));
            } else {
                let c = coeffs[j] * coeffs[j2].conj();
                let outer = &blocks[j].g * blocks[j2].g.adjoint() * c;
                rho.view_mut((j * p, j2 * p), (p, p)).copy_from(&outer);
            }
        }
    }
    Ok(AuxDensityMatrix { grid: *grid, p, rho })
}

/// `P_n = Σ_μ <n, μ|ρ|n, μ>`.
pub fn rho_to_position(rho: &AuxDensityMatrix) -> PositionDistribution {
    let (len, p) = (rho.grid.len(), rho.p);
    let probs = (0..len)
        .map(|n| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..len {
                for j2 in 0..len {
                    let phase = C64::from_polar(1.0, n as f64 * (rho.grid.k(j) - rho.grid.k(j2)));
                    for mu in 0..p {
                        acc += phase * rho.rho[(j * p + mu, j2 * p + mu)];
                    }
                }
            }
            acc.re / len as f64
        })
        .collect();
    PositionDistribution { probs }
}

/// Band whose Wannier state is loaded into the auxiliary chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialBand {
    /// Lowest band of the mean-field Hamiltonian `η m(k, 0)`.
    #[default]
    MeanFieldLowest,
    /// Lower band of the system Bloch matrix `h(k, 0)`.
    SystemLower,
}

/// Wannier state at `n0` used as the initial auxiliary state.
pub fn initial_aux_field(
    system: &dyn BlochSampler,
    tp: &ThermalParams,
    eta: f64,
    grid: &MomentumGrid,
    n0: i64,
    choice: InitialBand,
) -> Result<SpinorField> {
    match choice {
        InitialBand::MeanFieldLowest => {
            let mf = MeanFieldSampler { system, thermal: *tp, eta };
            init_wannier(&mf, grid, 0, n0)
        }
        InitialBand::SystemLower => init_wannier(system, grid, 0, n0),
    }
}

/// Per-momentum block series of a full-dynamics run, indexed `[time][k]`.
#[derive(Debug, Clone)]
pub struct FullRun {
    pub grid: MomentumGrid,
    pub times: Vec<f64>,
    pub coeffs: Vec<C64>,
    pub blocks: Vec<Vec<JointBlock>>,
}

impl FullRun {
    pub fn rho_at(&self, i: usize) -> Result<AuxDensityMatrix> {
        assemble_rho_aux(&self.grid, &self.blocks[i], &self.coeffs)
    }

    pub fn distribution_at(&self, i: usize) -> Result<PositionDistribution> {
        Ok(rho_to_position(&self.rho_at(i)?))
    }

    pub fn distributions(&self) -> Result<Vec<PositionDistribution>> {
        (0..self.times.len()).map(|i| self.distribution_at(i)).collect()
    }
}

/// Evolves the auxiliary particle prepared in `init` against the thermal chain.
///
/// `init` is split as `ψ(k) = C_k φ0(k)` with `|C_k| = 1/√L`.
pub fn run_full(
    system: &dyn BlochSampler,
    tp: &ThermalParams,
    eta: f64,
    init: &SpinorField,
    times: &[f64],
    cfg: &PropagatorConfig,
) -> Result<FullRun> {
    let ops = build_fock_ops(system.dim())?;
    let grid = init.grid;
    let len = grid.len();
    let amp = 1.0 / (len as f64).sqrt();
    let per_k = (0..len)
        .into_par_iter()
        .map(|j| {
            let k = grid.k(j);
            gk_gmat(k, system, tp, eta, &init.amps[j], &ops, times, cfg).map_err(|e| e.at_momentum(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let blocks = (0..times.len()).map(|i| per_k.iter().map(|series| series[i].clone()).collect()).collect();
    Ok(FullRun { grid, times: times.to_vec(), coeffs: vec![C64::new(amp, 0.0); len], blocks })
}

/// Eigenvalues of the diagonal block, for spectrum checks.
pub fn block_spectrum(block: &JointBlock) -> Vec<f64> {
    eigh(&block.gmat).0
}
