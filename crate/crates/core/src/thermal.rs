//! Thermal two-point functions, the mean-field Hamiltonian they induce on the
//! auxiliary chain, and exact thermal states on the per-momentum Fock space.
//!
//! Index convention: `m_{μν} = <c†_μ c_ν>`, which is the *transpose* of the
//! Fermi function of the Bloch matrix, `m = f(h)ᵀ`. The mean-field generator
//! seen by the auxiliary particle is `η m`, so for a traceless two-band `h`
//! with energies `±ε`:
//!
//! ```text
//! h_mf = (η/2) I - (η / 2ε) tanh(βε/2) hᵀ
//! ```
//!
//! For the Rice-Mele matrix `hᵀ(k) = h(-k)`.

use crate::error::{Error, Result};
use crate::fock::FockOperatorSet;
use crate::linalg::{eigh, identity, spectral_function};
use crate::model::BlochSampler;
use crate::spectral::eigh_gauged;
use crate::{CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    /// Inverse temperature; `f64::INFINITY` is the ground state.
    pub beta: f64,
    /// Chemical potential.
    pub mu: f64,
}

impl ThermalParams {
    pub fn new(beta: f64, mu: f64) -> Result<Self> {
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Invalid(format!("inverse temperature must be >= 0, got {beta}")));
        }
        if !mu.is_finite() {
            return Err(Error::Invalid(format!("chemical potential must be finite, got {mu}")));
        }
        Ok(ThermalParams { beta, mu })
    }

    /// `T = 0` maps to `β = ∞`.
    pub fn from_temperature(temperature: f64, mu: f64) -> Result<Self> {
        if temperature.is_nan() || temperature < 0.0 {
            return Err(Error::Invalid(format!("temperature must be >= 0, got {temperature}")));
        }
        let beta = if temperature == 0.0 { f64::INFINITY } else { 1.0 / temperature };
        Self::new(beta, mu)
    }

    pub fn is_ground_state(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Fermi-Dirac occupation of a level at `energy`.
    pub fn occupation(&self, energy: f64) -> f64 {
        let x = energy - self.mu;
        if self.beta.is_infinite() {
            return if x < 0.0 {
                1.0
            } else if x > 0.0 {
                0.0
            } else {
                0.5
            };
        }
        fermi(self.beta * x)
    }
}

/// `1 / (1 + e^x)`, evaluated without overflow.
pub fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `m_{μν} = <c†_μ c_ν>` at one momentum.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub m: CMatrix,
}

pub fn covariance(h: &CMatrix, tp: &ThermalParams) -> Result<CovarianceMatrix> {
    let sys = eigh_gauged(h)?;
    let f = spectral_function(&sys.energies, &sys.states, |e| C64::new(tp.occupation(e), 0.0));
    Ok(CovarianceMatrix { m: f.transpose() })
}

/// Single-particle matrix of the mean-field coupling, `η m`.
pub fn meanfield_h(m: &CovarianceMatrix, eta: f64) -> CMatrix {
    &m.m * C64::new(eta, 0.0)
}

/// The mean-field Hamiltonian `η m(k, t)` of a thermal system as a Bloch sampler.
///
/// The thermal occupations follow the instantaneous system Hamiltonian.
#[derive(Debug, Clone)]
pub struct MeanFieldSampler<S> {
    pub system: S,
    pub thermal: ThermalParams,
    pub eta: f64,
}

impl<S: BlochSampler> BlochSampler for MeanFieldSampler<S> {
    fn dim(&self) -> usize {
        self.system.dim()
    }

    fn period(&self) -> f64 {
        self.system.period()
    }

    fn eval(&self, k: f64, t: f64) -> CMatrix {
        let h = self.system.eval(k, t);
        let (e, v) = eigh(&h);
        let f = spectral_function(&e, &v, |x| C64::new(self.eta * self.thermal.occupation(x), 0.0));
        f.transpose()
    }
}

/// Thermal density matrix of `Σ (h - μ)_{μν} c†_μ c_ν` on the Fock space of one momentum.
#[derive(Debug, Clone)]
pub struct FockThermalState {
    pub rho: CMatrix,
}

pub fn thermal_fock_state(
    h: &CMatrix,
    tp: &ThermalParams,
    ops: &FockOperatorSet,
) -> Result<FockThermalState> {
    if h.nrows() != ops.modes {
        return Err(Error::Invalid(format!(
            "Bloch matrix is {}x{} but the Fock set has {} modes",
            h.nrows(),
            h.ncols(),
            ops.modes
        )));
    }
    let dim = ops.dim();
    if tp.beta == 0.0 {
        return Ok(FockThermalState { rho: identity(dim) / C64::new(dim as f64, 0.0) });
    }
    let shifted = h - identity(h.nrows()) * C64::new(tp.mu, 0.0);
    let k_op = ops.quadratic_form(&shifted);
    let (energies, vectors) = eigh(&k_op);
    let ground = energies[0];
    if tp.is_ground_state() {
        let splitting = energies[1] - ground;
        if splitting < 1e-10 * ground.abs().max(1.0) {
            return Err(Error::DegenerateGroundState { splitting });
        }
        let rho =
            spectral_function(&energies, &vectors, |e| C64::new(if e == ground { 1.0 } else { 0.0 }, 0.0));
        return Ok(FockThermalState { rho });
    }
    let weights: Vec<f64> = energies.iter().map(|e| (-tp.beta * (e - ground)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut scaled = vectors.clone();
    for (c, w) in weights.iter().enumerate() {
        scaled.column_mut(c).scale_mut(w / z);
    }
    let rho = scaled * vectors.adjoint();
    Ok(FockThermalState { rho: (&rho + rho.adjoint()) * C64::new(0.5, 0.0) })
}
