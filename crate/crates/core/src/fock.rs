//! Jordan-Wigner fermion operators on the Fock space of a few modes.
//!
//! Basis states `|n_1 n_2 ... n_p>` are indexed by `Σ_μ n_μ 2^(μ-1)`, i.e. the
//! first mode is the fastest-varying bit. `c_μ` carries the string
//! `(-1)^(n_1 + ... + n_{μ-1})`.

use crate::error::{Error, Result};
use crate::linalg::identity;
use crate::{CMatrix, C64};

pub const MAX_MODES: usize = 4;

#[derive(Debug, Clone)]
pub struct FockOperatorSet {
    pub modes: usize,
    pub annihilators: Vec<CMatrix>,
    pub creators: Vec<CMatrix>,
    /// `bilinears[μ][ν] = c†_μ c_ν`.
    pub bilinears: Vec<Vec<CMatrix>>,
}

/// Annihilator for mode at string position `pos` in a register of `modes` modes.
pub(crate) fn jw_annihilator(modes: usize, pos: usize) -> CMatrix {
    let dim = 1usize << modes;
    let mut c = CMatrix::zeros(dim, dim);
    let bit = 1usize << pos;
    for s in 0..dim {
        if s & bit != 0 {
            let parity = (s & (bit - 1)).count_ones();
            let sign = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
            c[(s ^ bit, s)] = C64::new(sign, 0.0);
        }
    }
    c
}

pub fn build_fock_ops(p: usize) -> Result<FockOperatorSet> {
    if p == 0 || p > MAX_MODES {
        return Err(Error::Invalid(format!("Fock operator set supports 1..={MAX_MODES} modes, got {p}")));
    }
    let annihilators: Vec<CMatrix> = (0..p).map(|mu| jw_annihilator(p, mu)).collect();
    let creators: Vec<CMatrix> = annihilators.iter().map(|c| c.adjoint()).collect();
    let bilinears = (0..p).map(|mu| (0..p).map(|nu| &creators[mu] * &annihilators[nu]).collect()).collect();
    Ok(FockOperatorSet { modes: p, annihilators, creators, bilinears })
}

impl FockOperatorSet {
    pub fn dim(&self) -> usize {
        1 << self.modes
    }

    pub fn number(&self, mu: usize) -> &CMatrix {
        &self.bilinears[mu][mu]
    }

    /// Second quantization of a single-particle matrix: `Σ_{μν} h_{μν} c†_μ c_ν`.
    pub fn quadratic_form(&self, h: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for mu in 0..self.modes {
            for nu in 0..self.modes {
                let w = h[(mu, nu)];
                if w != C64::new(0.0, 0.0) {
                    out += &self.bilinears[mu][nu] * w;
                }
            }
        }
        out
    }

    pub fn identity(&self) -> CMatrix {
        identity(self.dim())
    }
}
