//! Brute-force reference for the reduced auxiliary dynamics on tiny lattices.
//!
//! The whole many-body system (all momenta, one global Jordan-Wigner string)
//! and the auxiliary particle are evolved together as dense matrices, and the
//! system is traced out at the output times. Nothing here relies on the
//! momentum factorization used in [`crate::full`].

use crate::error::{Error, Result};
use crate::evolve::PropagatorConfig;
use crate::fock::{build_fock_ops, jw_annihilator};
use crate::full::AuxDensityMatrix;
use crate::linalg::{
    eigh, expm_hermitian, hermiticity_defect, identity, kron, matrix_unit, unitarity_defect,
};
use crate::model::BlochSampler;
use crate::single::SpinorField;
use crate::spectral::HERMITICITY_TOL;
use crate::thermal::{thermal_fock_state, ThermalParams};
use crate::{CMatrix, C64};

pub const MAX_CELLS: usize = 3;

/// Global many-body operators of the system modes `(j, μ)`, natural index `j * p + μ`.
struct SystemModes {
    modes: usize,
    annihilators: Vec<CMatrix>,
}

impl SystemModes {
    /// `order[m]` is the string position of natural mode `m`.
    fn new(modes: usize, order: &[usize]) -> Self {
        SystemModes { modes, annihilators: (0..modes).map(|m| jw_annihilator(modes, order[m])).collect() }
    }

    fn dim(&self) -> usize {
        1 << self.modes
    }

    fn bilinear(&self, a: usize, b: usize) -> CMatrix {
        self.annihilators[a].adjoint() * &self.annihilators[b]
    }
}

/// Embeds a density matrix on the Fock space of one momentum (local basis
/// `n_1 + 2 n_2 + ...`) into the global Fock space.
fn embed_local(rho: &CMatrix, modes: &SystemModes, first: usize, p: usize) -> CMatrix {
    let dim = modes.dim();
    let mut vacuum = identity(dim);
    for mu in 0..p {
        vacuum *= identity(dim) - modes.bilinear(first + mu, first + mu);
    }
    let create = |a: usize| -> CMatrix {
        let mut op = identity(dim);
        for mu in 0..p {
            if a & (1 << mu) != 0 {
                op *= modes.annihilators[first + mu].adjoint();
            }
        }
        op
    };
    let local = 1usize << p;
    let mut out = CMatrix::zeros(dim, dim);
    for a in 0..local {
        for b in 0..local {
            let w = rho[(a, b)];
            if w.norm() > 0.0 {
                out += create(a) * &vacuum * create(b).adjoint() * w;
            }
        }
    }
    out
}

/// Reduced auxiliary states at ascending `times` by exact joint evolution.
///
/// `order` permutes the global string positions of the system modes; `None`
/// uses the natural order.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_rho_aux(
    sampler: &dyn BlochSampler,
    tp: &ThermalParams,
    eta: f64,
    init: &SpinorField,
    times: &[f64],
    cfg: &PropagatorConfig,
    order: Option<&[usize]>,
) -> Result<Vec<AuxDensityMatrix>> {
    cfg.validate()?;
    let grid = init.grid;
    let len = grid.len();
    let p = sampler.dim();
    if len > MAX_CELLS || p != 2 {
        return Err(Error::Invalid(format!(
            "brute force limited to L <= {MAX_CELLS} and two bands (got L = {len}, p = {p})"
        )));
    }
    let n_modes = len * p;
    let natural: Vec<usize> = (0..n_modes).collect();
    let order = order.unwrap_or(&natural);
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != natural {
        return Err(Error::Invalid("mode order is not a permutation".into()));
    }
    let modes = SystemModes::new(n_modes, order);
    let sys_dim = modes.dim();
    let bilinears: Vec<Vec<CMatrix>> = (0..n_modes)
        .map(|a| {
            (0..n_modes)
                .map(|b| if a / p == b / p { modes.bilinear(a, b) } else { CMatrix::zeros(0, 0) })
                .collect()
        })
        .collect();

    let mut coupling = CMatrix::zeros(sys_dim * n_modes, sys_dim * n_modes);
    for (a, row) in bilinears.iter().enumerate() {
        for (b, op) in row.iter().enumerate() {
            if a / p == b / p {
                coupling += kron(op, &matrix_unit(n_modes, a, b));
            }
        }
    }
    coupling *= C64::new(eta, 0.0);
    let aux_identity = identity(n_modes);
    let generator = |t: f64| -> CMatrix {
        let mut h_sys = CMatrix::zeros(sys_dim, sys_dim);
        for j in 0..len {
            let h = sampler.eval(grid.k(j), t);
            for mu in 0..p {
                for nu in 0..p {
                    h_sys += &bilinears[j * p + mu][j * p + nu] * h[(mu, nu)];
                }
            }
        }
        kron(&h_sys, &aux_identity) + &coupling
    };

    let local_ops = build_fock_ops(p)?;
    let mut rho_sys = identity(sys_dim);
    for j in 0..len {
        let local = thermal_fock_state(&sampler.eval(grid.k(j), 0.0), tp, &local_ops)?.rho;
        rho_sys *= embed_local(&local, &modes, j * p, p);
    }
    let (weights, vectors) = eigh(&rho_sys);
    let mut sqrt_rho = vectors.clone();
    for (c, w) in weights.iter().enumerate() {
        sqrt_rho.column_mut(c).scale_mut(w.max(0.0).sqrt());
    }
    let amp = 1.0 / (len as f64).sqrt();
    let joint_dim = sys_dim * n_modes;
    let mut state = CMatrix::from_fn(joint_dim, sys_dim, |row, i| {
        let (s, a) = (row / n_modes, row % n_modes);
        sqrt_rho[(s, i)] * init.amps[a / p][a % p] * amp
    });

    let mut cache: Option<(CMatrix, f64, CMatrix)> = None;
    let mut exp_cached = |h: CMatrix, dt: f64| -> Result<CMatrix> {
        if let Some((ch, cdt, cu)) = &cache {
            if *cdt == dt && *ch == h {
                return Ok(cu.clone());
            }
        }
        let defect = hermiticity_defect(&h);
        if !(defect <= HERMITICITY_TOL) {
            return Err(Error::NotHermitian { defect });
        }
        let u = expm_hermitian(&h, dt);
        let defect = unitarity_defect(&u);
        if !(defect <= cfg.unitarity_tol) {
            return Err(Error::Unitarity { defect, tol: cfg.unitarity_tol });
        }
        cache = Some((h, dt, u.clone()));
        Ok(u)
    };

    let mut out = Vec::with_capacity(times.len());
    let mut last = 0.0;
    for &t in times {
        if !(t >= last) {
            return Err(Error::Invalid("output times must be ascending and non-negative".into()));
        }
        if t > last {
            let steps = cfg.steps_for(t - last, sampler.period());
            let dt = (t - last) / steps as f64;
            // Runs of identical midpoint generators are merged into one exponential.
            let mut pending: Option<(CMatrix, usize)> = None;
            for n in 0..steps {
                let h = generator(last + (n as f64 + 0.5) * dt);
                pending = match pending {
                    Some((ph, count)) if ph == h => Some((ph, count + 1)),
                    Some((ph, count)) => {
                        state = exp_cached(ph, dt * count as f64)? * &state;
                        Some((h, 1))
                    }
                    None => Some((h, 1)),
                };
            }
            if let Some((ph, count)) = pending {
                state = exp_cached(ph, dt * count as f64)? * &state;
            }
        }
        let mut rho = CMatrix::zeros(n_modes, n_modes);
        for s in 0..sys_dim {
            let rows = state.rows(s * n_modes, n_modes);
            rho += rows * rows.adjoint();
        }
        let drift = (rho.trace().re - 1.0).abs();
        if drift > 1e-9 {
            return Err(Error::TraceDrift { drift });
        }
        out.push(AuxDensityMatrix { grid, p, rho });
        last = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::full::{initial_aux_field, run_full, InitialBand};
    use crate::linalg::{max_abs, trace};
    use crate::model::{Frozen, MomentumGrid, PumpSchedule, RiceMele};

    fn setup(len: usize) -> (Frozen<RiceMele>, SpinorField, ThermalParams) {
        let frozen = Frozen { inner: RiceMele::new(PumpSchedule::unit(1.0).unwrap()), at: 0.125 };
        let tp = ThermalParams::new(1.0, 0.0).unwrap();
        let grid = MomentumGrid::new(len).unwrap();
        let init = initial_aux_field(&frozen, &tp, 0.3, &grid, 0, InitialBand::MeanFieldLowest).unwrap();
        (frozen, init, tp)
    }

    fn cfg() -> PropagatorConfig {
        PropagatorConfig::with_steps(64).unwrap()
    }

    #[test]
    fn embedded_thermal_state_is_a_product() {
        let (frozen, init, tp) = setup(2);
        let modes = SystemModes::new(4, &[0, 1, 2, 3]);
        let ops = build_fock_ops(2).unwrap();
        let mut rho = identity(16);
        for j in 0..2 {
            let local = thermal_fock_state(&frozen.eval(init.grid.k(j), 0.0), &tp, &ops).unwrap().rho;
            let embedded = embed_local(&local, &modes, 2 * j, 2);
            assert!((trace(&embedded) - C64::new(4.0, 0.0)).norm() < 1e-12);
            rho *= embedded;
        }
        assert!((trace(&rho) - C64::new(1.0, 0.0)).norm() < 1e-13);
        assert!(crate::linalg::min_eigenvalue(&rho) > -1e-13);
    }

    #[test]
    fn decoupled_aux_is_static() {
        let (frozen, init, tp) = setup(2);
        let series = brute_force_rho_aux(&frozen, &tp, 0.0, &init, &[0.0, 1.0, 3.0], &cfg(), None).unwrap();
        for r in &series[1..] {
            assert!(max_abs(&(&r.rho - &series[0].rho)) < 1e-12);
        }
    }

    #[test]
    fn infinite_temperature_stays_physical() {
        let (frozen, init, _) = setup(2);
        let hot = ThermalParams::new(0.0, 0.0).unwrap();
        for r in brute_force_rho_aux(&frozen, &hot, 0.7, &init, &[0.5, 2.0], &cfg(), None).unwrap() {
            assert!((r.trace() - 1.0).abs() < 1e-12);
            assert!(r.hermiticity_defect() < 1e-12);
            assert!(r.min_eigenvalue() > -1e-10);
        }
    }

    #[test]
    fn agrees_with_factorized_dynamics() {
        let (frozen, init, tp) = setup(3);
        let times = [1.25, 2.5, 5.0];
        let oracle = brute_force_rho_aux(&frozen, &tp, 0.3, &init, &times, &cfg(), None).unwrap();
        let full = run_full(&frozen, &tp, 0.3, &init, &times, &cfg()).unwrap();
        for (i, r) in oracle.iter().enumerate() {
            let fast = full.rho_at(i).unwrap();
            assert!(max_abs(&(&fast.rho - &r.rho)) <= 1e-8);
        }
    }

    #[test]
    fn agrees_under_time_dependent_driving() {
        let rm = RiceMele::new(PumpSchedule::unit(2.0).unwrap());
        let tp = ThermalParams::new(0.7, 0.1).unwrap();
        let grid = MomentumGrid::new(2).unwrap();
        let init = initial_aux_field(&rm, &tp, 0.4, &grid, 1, InitialBand::SystemLower).unwrap();
        let times = [0.5, 2.0];
        let oracle = brute_force_rho_aux(&rm, &tp, 0.4, &init, &times, &cfg(), None).unwrap();
        let full = run_full(&rm, &tp, 0.4, &init, &times, &cfg()).unwrap();
        for (i, r) in oracle.iter().enumerate() {
            assert!(max_abs(&(&full.rho_at(i).unwrap().rho - &r.rho)) <= 1e-10);
        }
    }

    #[test]
    fn mode_order_does_not_matter() {
        let (frozen, init, tp) = setup(2);
        let a = brute_force_rho_aux(&frozen, &tp, 0.3, &init, &[2.0], &cfg(), None).unwrap();
        let b = brute_force_rho_aux(&frozen, &tp, 0.3, &init, &[2.0], &cfg(), Some(&[3, 0, 2, 1])).unwrap();
        assert!(max_abs(&(&a[0].rho - &b[0].rho)) <= 1e-10);
        assert!(brute_force_rho_aux(&frozen, &tp, 0.3, &init, &[2.0], &cfg(), Some(&[0, 0, 1, 2])).is_err());
    }

    #[test]
    fn size_cap() {
        let (frozen, _, tp) = setup(2);
        let grid = MomentumGrid::new(4).unwrap();
        let init = initial_aux_field(&frozen, &tp, 0.3, &grid, 0, InitialBand::SystemLower).unwrap();
        assert!(brute_force_rho_aux(&frozen, &tp, 0.3, &init, &[1.0], &cfg(), None).is_err());
    }
}
