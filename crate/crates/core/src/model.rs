//! Bloch Hamiltonians, pump schedules and the momentum grid.
//!
//! The Rice-Mele chain has a two-site unit cell (A, B), alternating hoppings
//! `t1` (intra-cell) and `t2` (inter-cell) and a staggered potential `±delta`.
//! Two standard pump cycles are provided:
//!
//! * [`ScheduleKind::Omega`]: `t1,2 = -(omega0/4)(1 ± cos 2πt/τ)`,
//!   `delta = (omega0/2) sin 2πt/τ`; the instantaneous gap never drops below `omega0`.
//! * [`ScheduleKind::Unit`]: `t1,2 = 1 ± cos 2πt/τ`, `delta = -2 sin 2πt/τ`;
//!   minimum gap 4.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::eigh;
use crate::{CMatrix, C64};

/// Instantaneous Rice-Mele parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmParams {
    pub t1: f64,
    pub t2: f64,
    pub delta: f64,
}

impl RmParams {
    pub fn new(t1: f64, t2: f64, delta: f64) -> Self {
        RmParams { t1, t2, delta }
    }

    /// Band energy `ε(k) = sqrt(Δ² + t1² + t2² + 2 t1 t2 cos k)`; bands are `±ε`.
    pub fn band_energy(&self, k: f64) -> f64 {
        (self.delta * self.delta + self.t1 * self.t1 + self.t2 * self.t2 + 2.0 * self.t1 * self.t2 * k.cos())
            .sqrt()
    }
}

/// Rice-Mele Bloch matrix `[[Δ, -t1 - t2 e^{-ik}], [-t1 - t2 e^{ik}, -Δ]]`.
pub fn rmm_bloch(k: f64, t1: f64, t2: f64, delta: f64) -> CMatrix {
    let off = C64::new(-t1, 0.0) - C64::from_polar(t2, -k);
    CMatrix::from_row_slice(2, 2, &[C64::new(delta, 0.0), off, off.conj(), C64::new(-delta, 0.0)])
}

/// A `(k, t) -> h(k, t)` map producing `dim x dim` Hermitian matrices, periodic in
/// `k` with period 2π and in `t` with period [`BlochSampler::period`].
pub trait BlochSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    fn eval(&self, k: f64, t: f64) -> CMatrix;
}

impl<S: BlochSampler + ?Sized> BlochSampler for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn period(&self) -> f64 {
        (**self).period()
    }
    fn eval(&self, k: f64, t: f64) -> CMatrix {
        (**self).eval(k, t)
    }
}

impl<S: BlochSampler + ?Sized> BlochSampler for Arc<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn period(&self) -> f64 {
        (**self).period()
    }
    fn eval(&self, k: f64, t: f64) -> CMatrix {
        (**self).eval(k, t)
    }
}

pub type ParamFn = Arc<dyn Fn(f64) -> RmParams + Send + Sync>;

#[derive(Clone)]
pub enum ScheduleKind {
    /// Negative-hopping cycle scaled by `omega0`.
    Omega { omega0: f64 },
    /// Positive-hopping cycle with unit amplitudes.
    Unit,
    /// Time-independent parameters.
    Constant(RmParams),
    /// Arbitrary cyclic parameter path, `f(0) == f(tau)`.
    Custom(ParamFn),
}

impl fmt::Debug for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Omega { omega0 } => write!(f, "Omega {{ omega0: {omega0} }}"),
            ScheduleKind::Unit => write!(f, "Unit"),
            ScheduleKind::Constant(p) => write!(f, "Constant({p:?})"),
            ScheduleKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PumpSchedule {
    tau: f64,
    kind: ScheduleKind,
}

impl PumpSchedule {
    pub fn new(tau: f64, kind: ScheduleKind) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Invalid(format!("cycle period must be positive, got {tau}")));
        }
        if let ScheduleKind::Custom(f) = &kind {
            let (a, b) = (f(0.0), f(tau));
            let mismatch = (a.t1 - b.t1).abs().max((a.t2 - b.t2).abs()).max((a.delta - b.delta).abs());
            if mismatch > 1e-12 {
                return Err(Error::Invalid(format!(
                    "custom schedule is not cyclic: params(0) and params(tau) differ by {mismatch:.3e}"
                )));
            }
        }
        Ok(PumpSchedule { tau, kind })
    }

    pub fn omega(omega0: f64, tau: f64) -> Result<Self> {
        Self::new(tau, ScheduleKind::Omega { omega0 })
    }

    pub fn unit(tau: f64) -> Result<Self> {
        Self::new(tau, ScheduleKind::Unit)
    }

    pub fn constant(params: RmParams, tau: f64) -> Result<Self> {
        Self::new(tau, ScheduleKind::Constant(params))
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// Same cycle shape with a different period.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(tau, self.kind.clone())
    }

    /// Parameters at `t`, which must lie in `[0, tau]`.
    pub fn params(&self, t: f64) -> Result<RmParams> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::TimeOutOfRange { t, tau: self.tau });
        }
        Ok(self.params_unchecked(t))
    }

    /// Parameters at any `t`, wrapped into the cycle.
    pub fn params_periodic(&self, t: f64) -> RmParams {
        self.params_unchecked(t.rem_euclid(self.tau))
    }

    fn params_unchecked(&self, t: f64) -> RmParams {
        let phase = 2.0 * PI * t / self.tau;
        let (s, c) = phase.sin_cos();
        match &self.kind {
            ScheduleKind::Omega { omega0 } => RmParams {
                t1: -omega0 / 4.0 * (1.0 + c),
                t2: -omega0 / 4.0 * (1.0 - c),
                delta: omega0 / 2.0 * s,
            },
            ScheduleKind::Unit => RmParams { t1: 1.0 + c, t2: 1.0 - c, delta: -2.0 * s },
            ScheduleKind::Constant(p) => *p,
            ScheduleKind::Custom(f) => f(t),
        }
    }
}

/// Free function form of [`PumpSchedule::params`].
pub fn schedule_eval(schedule: &PumpSchedule, t: f64) -> Result<RmParams> {
    schedule.params(t)
}

/// The Rice-Mele Bloch Hamiltonian driven by a pump schedule.
#[derive(Debug, Clone)]
pub struct RiceMele {
    pub schedule: PumpSchedule,
}

impl RiceMele {
    pub fn new(schedule: PumpSchedule) -> Self {
        RiceMele { schedule }
    }
}

impl BlochSampler for RiceMele {
    fn dim(&self) -> usize {
        2
    }

    fn period(&self) -> f64 {
        self.schedule.tau()
    }

    fn eval(&self, k: f64, t: f64) -> CMatrix {
        let p = self.schedule.params_periodic(t);
        rmm_bloch(k, p.t1, p.t2, p.delta)
    }
}

/// Any sampler frozen at one instant of its cycle.
#[derive(Debug, Clone)]
pub struct Frozen<S> {
    pub inner: S,
    pub at: f64,
}

impl<S: BlochSampler> BlochSampler for Frozen<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn period(&self) -> f64 {
        self.inner.period()
    }
    fn eval(&self, k: f64, _t: f64) -> CMatrix {
        self.inner.eval(k, self.at)
    }
}

/// `L` equally spaced momenta `k_j = 2πj/L`, folded into `[-π, π)`.
///
/// Points are kept in index order `j = 0..L`, so neighbouring indices are
/// neighbouring momenta on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentumGrid {
    len: usize,
}

impl MomentumGrid {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Invalid("momentum grid needs at least one point".into()));
        }
        Ok(MomentumGrid { len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.len as f64
    }

    pub fn k(&self, j: usize) -> f64 {
        let k = 2.0 * PI * (j % self.len) as f64 / self.len as f64;
        if k >= PI {
            k - 2.0 * PI
        } else {
            k
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.k(j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    pub k: f64,
    pub t: f64,
}

pub const DEFAULT_GAP_THRESHOLD: f64 = 1e-9;

/// Minimum splitting between bands `band` and `band + 1` over an `nk x nt`
/// sample of the `(k, t)` torus.
pub fn min_gap_between(
    sampler: &dyn BlochSampler,
    band: usize,
    nk: usize,
    nt: usize,
    threshold: f64,
) -> Result<GapReport> {
    if nk < 8 || nt < 8 {
        return Err(Error::Invalid(format!("min_gap needs nk, nt >= 8 (got {nk}, {nt})")));
    }
    if band + 1 >= sampler.dim() {
        return Err(Error::Invalid(format!("no band above band {band}")));
    }
    let grid = MomentumGrid::new(nk)?;
    let tau = sampler.period();
    let best = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = tau * it as f64 / nt as f64;
            let mut best = GapReport { gap: f64::INFINITY, k: 0.0, t };
            for j in 0..nk {
                let k = grid.k(j);
                let (e, _) = eigh(&sampler.eval(k, t));
                let gap = e[band + 1] - e[band];
                if gap < best.gap {
                    best = GapReport { gap, k, t };
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(GapReport { gap: f64::INFINITY, k: 0.0, t: 0.0 }, |a, b| if b.gap < a.gap { b } else { a });
    if best.gap < threshold {
        return Err(Error::GapClosed { gap: best.gap, k: best.k, t: best.t });
    }
    Ok(best)
}

/// Gap between the two lowest bands; this is the `Δ_gap` energy unit.
pub fn min_gap(sampler: &dyn BlochSampler, nk: usize, nt: usize) -> Result<GapReport> {
    min_gap_between(sampler, 0, nk, nt, DEFAULT_GAP_THRESHOLD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_defect, max_abs};
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_dimer_at_zero_momentum() {
        let h = rmm_bloch(0.0, 1.0, 1.0, 0.0);
        assert_abs_diff_eq!(h[(0, 1)].re, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 0)].re, -2.0, epsilon = 1e-15);
        let (e, _) = eigh(&h);
        assert_abs_diff_eq!(e[0], -2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e[1], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn gap_closes_at_zone_edge_for_equal_hoppings() {
        let h = rmm_bloch(PI, 1.0, 1.0, 0.0);
        assert!(max_abs(&h) < 1e-15);
    }

    #[test]
    fn generic_point_matches_closed_form() {
        let h = rmm_bloch(PI / 2.0, 0.5, 0.25, 0.3);
        assert_abs_diff_eq!(h[(0, 1)].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 1)].im, 0.25, epsilon = 1e-15);
        let (e, _) = eigh(&h);
        let expected = (0.3f64 * 0.3 + 0.5 * 0.5 + 0.25 * 0.25).sqrt();
        assert_abs_diff_eq!(expected, 0.4025f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], expected, epsilon = 1e-13);
        assert_abs_diff_eq!(e[0], -expected, epsilon = 1e-13);
        assert_abs_diff_eq!(e[1], 0.63443, epsilon = 1e-5);
    }

    #[test]
    fn omega_cycle_values() {
        let s = PumpSchedule::omega(1.0, 100.0).unwrap();
        let p0 = s.params(0.0).unwrap();
        assert_eq!((p0.t1, p0.t2, p0.delta), (-0.5, 0.0, 0.0));
        let q = s.params(25.0).unwrap();
        assert_abs_diff_eq!(q.t1, -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(q.t2, -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(q.delta, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_cycle_half_period() {
        let s = PumpSchedule::unit(10.0).unwrap();
        let p = s.params(5.0).unwrap();
        assert_abs_diff_eq!(p.t1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.t2, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.delta, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn schedule_rejects_times_outside_cycle() {
        let s = PumpSchedule::unit(10.0).unwrap();
        assert!(matches!(s.params(-0.1), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(s.params(10.5), Err(Error::TimeOutOfRange { .. })));
        assert!(s.params(10.0).is_ok());
    }

    #[test]
    fn custom_schedule_must_close() {
        let open: ParamFn = Arc::new(|t| RmParams::new(t, 1.0, 0.0));
        assert!(PumpSchedule::new(1.0, ScheduleKind::Custom(open)).is_err());
        let closed: ParamFn =
            Arc::new(|t| RmParams::new(1.0 + (2.0 * PI * t).cos(), 0.5, (2.0 * PI * t).sin()));
        assert!(PumpSchedule::new(1.0, ScheduleKind::Custom(closed)).is_ok());
    }

    #[test]
    fn grid_covers_zone_once() {
        let g = MomentumGrid::new(8).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|&k| (-PI..PI).contains(&k)));
        for j in 0..8 {
            let d = (g.k(j + 1) - g.k(j)).rem_euclid(2.0 * PI);
            assert_abs_diff_eq!(d, g.spacing(), epsilon = 1e-14);
        }
        let mut sorted = pts.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
    }

    #[test]
    fn unit_cycle_gap_is_four() {
        let rm = RiceMele::new(PumpSchedule::unit(1.0).unwrap());
        let gap = min_gap(&rm, 64, 64).unwrap();
        assert_abs_diff_eq!(gap.gap, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn omega_cycle_gap_is_omega0() {
        for omega0 in [1.0, 2.5] {
            let rm = RiceMele::new(PumpSchedule::omega(omega0, 1.0).unwrap());
            let gap = min_gap(&rm, 64, 64).unwrap();
            assert_abs_diff_eq!(gap.gap, omega0, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_equal_hoppings_close_the_gap() {
        let rm = RiceMele::new(PumpSchedule::constant(RmParams::new(1.0, 1.0, 0.0), 1.0).unwrap());
        match min_gap(&rm, 16, 8) {
            Err(Error::GapClosed { k, .. }) => assert_abs_diff_eq!(k.abs(), PI, epsilon = 1e-12),
            other => panic!("expected gap closure, got {other:?}"),
        }
    }

    #[test]
    fn min_gap_rejects_coarse_sampling() {
        let rm = RiceMele::new(PumpSchedule::unit(1.0).unwrap());
        assert!(matches!(min_gap(&rm, 4, 16), Err(Error::Invalid(_))));
    }

    #[test]
    fn sampler_invariants() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for sched in [PumpSchedule::omega(1.3, 7.0).unwrap(), PumpSchedule::unit(3.0).unwrap()] {
            let tau = sched.tau();
            let rm = RiceMele::new(sched);
            for _ in 0..1000 {
                let k = rng.gen_range(-PI..PI);
                let t = rng.gen_range(0.0..tau);
                let h = rm.eval(k, t);
                assert!(hermiticity_defect(&h) <= 1e-13);
                assert!(max_abs(&(rm.eval(k + 2.0 * PI, t) - &h)) <= 1e-12);
            }
            let grid = MomentumGrid::new(32).unwrap();
            for k in grid.points() {
                assert!(max_abs(&(rm.eval(k, 0.0) - rm.eval(k, tau))) <= 1e-13);
            }
        }
    }
}
