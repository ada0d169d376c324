//! Time-ordered propagators by the exponential midpoint rule,
//! `U ≈ Π_n exp(-i H(t_n + dt/2) dt)`, which is unitary by construction and
//! second order in `dt`.

use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, hermiticity_defect, identity, unitarity_defect};
use crate::spectral::HERMITICITY_TOL;
use crate::CMatrix;

pub const MIN_STEPS_PER_CYCLE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    /// Midpoint steps per cycle period; spans are discretized proportionally.
    pub steps_per_cycle: usize,
    pub unitarity_tol: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig { steps_per_cycle: 4096, unitarity_tol: 1e-9 }
    }
}

impl PropagatorConfig {
    pub fn with_steps(steps_per_cycle: usize) -> Result<Self> {
        let cfg = PropagatorConfig { steps_per_cycle, ..Default::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_cycle < MIN_STEPS_PER_CYCLE {
            return Err(Error::Invalid(format!(
                "at least {MIN_STEPS_PER_CYCLE} steps per cycle required, got {}",
                self.steps_per_cycle
            )));
        }
        if !(self.unitarity_tol > 0.0) {
            return Err(Error::Invalid("unitarity tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Number of midpoint steps for a span of length `span` when one cycle lasts `period`.
    pub fn steps_for(&self, span: f64, period: f64) -> usize {
        ((self.steps_per_cycle as f64 * span / period).round() as usize).max(1)
    }
}

fn checked_sample(generator: &dyn Fn(f64) -> CMatrix, t: f64) -> Result<CMatrix> {
    let h = generator(t);
    let defect = hermiticity_defect(&h);
    if !(defect <= HERMITICITY_TOL) {
        return Err(Error::NotHermitian { defect });
    }
    Ok(h)
}

fn step_into(
    u: &mut CMatrix,
    generator: &dyn Fn(f64) -> CMatrix,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<()> {
    let dt = (t1 - t0) / steps as f64;
    for n in 0..steps {
        let h = checked_sample(generator, t0 + (n as f64 + 0.5) * dt)?;
        *u = expm_hermitian(&h, dt) * &*u;
    }
    Ok(())
}

fn check_unitary(u: &CMatrix, cfg: &PropagatorConfig) -> Result<()> {
    let defect = unitarity_defect(u);
    if !(defect <= cfg.unitarity_tol) {
        return Err(Error::Unitarity { defect, tol: cfg.unitarity_tol });
    }
    Ok(())
}

/// `U(t1, t0)` in `steps` midpoint steps.
pub fn propagate(
    generator: &dyn Fn(f64) -> CMatrix,
    dim: usize,
    t0: f64,
    t1: f64,
    steps: usize,
    cfg: &PropagatorConfig,
) -> Result<CMatrix> {
    if !(t1 >= t0) || steps == 0 {
        return Err(Error::Invalid(format!(
            "propagation needs t1 >= t0 and at least one step (t0 = {t0}, t1 = {t1}, steps = {steps})"
        )));
    }
    let mut u = identity(dim);
    if t1 > t0 {
        step_into(&mut u, generator, t0, t1, steps)?;
    }
    check_unitary(&u, cfg)?;
    Ok(u)
}

/// Cumulative propagators `U(t_i, t0)` at ascending output times `t_i >= t0`.
///
/// Each segment between consecutive outputs gets [`PropagatorConfig::steps_for`]
/// steps relative to `period`.
pub fn propagate_series(
    generator: &dyn Fn(f64) -> CMatrix,
    dim: usize,
    t0: f64,
    times: &[f64],
    period: f64,
    cfg: &PropagatorConfig,
) -> Result<Vec<CMatrix>> {
    cfg.validate()?;
    let mut u = identity(dim);
    let mut last = t0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= last) {
            return Err(Error::Invalid(format!(
                "output times must be ascending and >= {t0}, got {t} after {last}"
            )));
        }
        if t > last {
            step_into(&mut u, generator, last, t, cfg.steps_for(t - last, period))?;
        }
        check_unitary(&u, cfg)?;
        out.push(u.clone());
        last = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, real_matrix};
    use crate::model::{BlochSampler, PumpSchedule, RiceMele};
    use crate::{CVector, C64};

    fn cfg() -> PropagatorConfig {
        PropagatorConfig::default()
    }

    #[test]
    fn constant_generator_is_exact() {
        let h = real_matrix(2, 2, &[0.3, 1.1, 1.1, -0.7]);
        let gen = |_: f64| h.clone();
        let u = propagate(&gen, 2, 0.0, 2.5, 7, &cfg()).unwrap();
        assert!(max_abs(&(u - expm_hermitian(&h, 2.5))) < 1e-13);
    }

    #[test]
    fn commuting_family_matches_integrated_phase() {
        let h = real_matrix(2, 2, &[1.0, 0.5, 0.5, -1.0]);
        let gen = |t: f64| &h * C64::new(t.cos(), 0.0);
        let u = propagate(&gen, 2, 0.0, 1.0, 400, &cfg()).unwrap();
        let exact = expm_hermitian(&h, 1f64.sin());
        assert!(max_abs(&(u - exact)) < 1e-5);
    }

    #[test]
    fn second_order_convergence() {
        let rm = RiceMele::new(PumpSchedule::unit(3.0).unwrap());
        let gen = |t: f64| rm.eval(0.7, t);
        let reference = propagate(&gen, 2, 0.0, 3.0, 8192, &cfg()).unwrap();
        let err = |n| max_abs(&(propagate(&gen, 2, 0.0, 3.0, n, &cfg()).unwrap() - &reference));
        let ratio = err(64) / err(128);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn series_composes_segments() {
        let rm = RiceMele::new(PumpSchedule::unit(2.0).unwrap());
        let gen = |t: f64| rm.eval(-1.3, t);
        let cfg = PropagatorConfig::with_steps(256).unwrap();
        let series = propagate_series(&gen, 2, 0.0, &[0.0, 1.0, 2.0], 2.0, &cfg).unwrap();
        assert!(max_abs(&(&series[0] - identity(2))) == 0.0);
        let first = propagate(&gen, 2, 0.0, 1.0, 128, &cfg).unwrap();
        let second = propagate(&gen, 2, 1.0, 2.0, 128, &cfg).unwrap();
        assert!(max_abs(&(&series[1] - &first)) < 1e-14);
        assert!(max_abs(&(&series[2] - second * first)) < 1e-13);
    }

    #[test]
    fn preserves_norm() {
        let rm = RiceMele::new(PumpSchedule::omega(1.0, 20.0).unwrap());
        let gen = |t: f64| rm.eval(2.1, t);
        let u = propagate(&gen, 2, 0.0, 20.0, 1000, &cfg()).unwrap();
        let psi = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        assert!(((u * psi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let gen = |_: f64| real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(propagate(&gen, 2, 0.0, 1.0, 4, &cfg()), Err(Error::NotHermitian { .. })));
        assert!(PropagatorConfig::with_steps(10).is_err());
        let ok = |_: f64| identity(2);
        assert!(propagate(&ok, 2, 1.0, 0.0, 4, &cfg()).is_err());
        assert!(propagate_series(&ok, 2, 0.0, &[1.0, 0.5], 1.0, &cfg()).is_err());
    }
}
