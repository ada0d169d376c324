//! One particle pumped through a band structure: Wannier initialization,
//! momentum-diagonal evolution, and the transport observables of the
//! resulting wave packet.
//!
//! A field stores one normalized spinor per grid momentum. The position
//! amplitudes are `u_n = (1/L) Σ_j e^{i n k_j} ψ(k_j)`, so a state localized
//! in cell `n0` has `ψ(k) ∝ e^{-i n0 k}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolve::{propagate, propagate_series, PropagatorConfig};
use crate::model::{BlochSampler, MomentumGrid};
use crate::observables::{track_com, PositionDistribution};
use crate::spectral::smooth_band;
use crate::{CVector, C64};

/// Spinors with norm deviating more than this from one are rejected.
const NORM_TOL: f64 = 1e-10;
/// Neighbouring spinors overlapping less than this are treated as a gauge jump.
pub const GAUGE_JUMP_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SpinorField {
    pub grid: MomentumGrid,
    pub amps: Vec<CVector>,
}

impl SpinorField {
    pub fn new(grid: MomentumGrid, amps: Vec<CVector>) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "{} spinors for a grid of {} momenta",
                amps.len(),
                grid.len()
            )));
        }
        let p = amps[0].len();
        for (j, a) in amps.iter().enumerate() {
            if a.len() != p {
                return Err(Error::Invalid("spinors of mixed dimension".into()));
            }
            if (a.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::Invalid(format!("spinor at k index {j} has norm {}", a.norm())));
            }
        }
        Ok(SpinorField { grid, amps })
    }

    pub fn dim(&self) -> usize {
        self.amps[0].len()
    }

    /// Multiplies every spinor by `e^{i m k}`, moving the packet by `-m` cells.
    pub fn translated_phase(&self, m: i64) -> SpinorField {
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(j, a)| a * C64::from_polar(1.0, m as f64 * self.grid.k(j)))
            .collect();
        SpinorField { grid: self.grid, amps }
    }
}

/// Wannier state of `band` at `t = 0`, centred in cell `n0`, in the smooth gauge.
pub fn init_wannier(
    sampler: &dyn BlochSampler,
    grid: &MomentumGrid,
    band: usize,
    n0: i64,
) -> Result<SpinorField> {
    let field = smooth_band(sampler, *grid, 0.0, band)?;
    let amps = field
        .states
        .into_iter()
        .enumerate()
        .map(|(j, s)| s * C64::from_polar(1.0, -(n0 as f64) * grid.k(j)))
        .collect();
    Ok(SpinorField { grid: *grid, amps })
}

/// Advances every spinor from `t0` to `t1` under `sampler`.
pub fn evolve_field(
    field: &SpinorField,
    sampler: &dyn BlochSampler,
    t0: f64,
    t1: f64,
    cfg: &PropagatorConfig,
) -> Result<SpinorField> {
    cfg.validate()?;
    let steps = cfg.steps_for(t1 - t0, sampler.period());
    let amps = (0..field.grid.len())
        .into_par_iter()
        .map(|j| {
            let k = field.grid.k(j);
            let gen = |t: f64| sampler.eval(k, t);
            propagate(&gen, sampler.dim(), t0, t1, steps, cfg)
                .map(|u| u * &field.amps[j])
                .map_err(|e| e.at_momentum(k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpinorField { grid: field.grid, amps })
}

/// Snapshots of the field at ascending `times` (all `>= t0`).
pub fn evolve_field_series(
    field: &SpinorField,
    sampler: &dyn BlochSampler,
    t0: f64,
    times: &[f64],
    cfg: &PropagatorConfig,
) -> Result<Vec<SpinorField>> {
    let per_k = (0..field.grid.len())
        .into_par_iter()
        .map(|j| {
            let k = field.grid.k(j);
            let gen = |t: f64| sampler.eval(k, t);
            propagate_series(&gen, sampler.dim(), t0, times, sampler.period(), cfg)
                .map(|us| us.into_iter().map(|u| u * &field.amps[j]).collect::<Vec<_>>())
                .map_err(|e| e.at_momentum(k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..times.len())
        .map(|i| SpinorField { grid: field.grid, amps: per_k.iter().map(|s| s[i].clone()).collect() })
        .collect())
}

/// Position amplitudes `u_n` for `n = 0..L`.
pub fn position_amplitudes(field: &SpinorField) -> Vec<CVector> {
    let len = field.grid.len();
    let scale = C64::new(1.0 / len as f64, 0.0);
    (0..len)
        .map(|n| {
            let mut u = CVector::zeros(field.dim());
            for (j, a) in field.amps.iter().enumerate() {
                u += a * C64::from_polar(1.0, n as f64 * field.grid.k(j));
            }
            u * scale
        })
        .collect()
}

pub fn position_distribution(field: &SpinorField) -> PositionDistribution {
    PositionDistribution { probs: position_amplitudes(field).iter().map(|u| u.norm_squared()).collect() }
}

/// Site-resolved probabilities `|u_n,μ|²`, indexed `[n][μ]`.
pub fn site_distribution(field: &SpinorField) -> Vec<Vec<f64>> {
    position_amplitudes(field).iter().map(|u| u.iter().map(|z| z.norm_sqr()).collect()).collect()
}

/// Flatness (`a`) and geometric (`b`) contributions to the spread of a packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionTerms {
    /// Mean over k of `<∂φ|(1 - |φ><φ|)|∂φ>`.
    pub a: f64,
    /// Mean over k of `|<φ|∂φ>|²` minus the squared centre of mass.
    pub b: f64,
}

/// Splits the spread of a snapshot into flatness and geometric parts using
/// central differences in `k`.
///
/// The packet is first moved back by the integer part of its centre so that
/// the finite differences act on a slowly varying spinor field.
pub fn dispersion_terms(field: &SpinorField) -> Result<DispersionTerms> {
    let len = field.grid.len();
    if len < 3 {
        return Err(Error::Invalid("dispersion terms need at least 3 momenta".into()));
    }
    for j in 0..len {
        let overlap = field.amps[j].dotc(&field.amps[(j + 1) % len]).norm();
        if overlap < GAUGE_JUMP_OVERLAP {
            return Err(Error::GaugeDiscontinuity { overlap, link: j });
        }
    }
    let dk = field.grid.spacing();
    let berry_mean = |f: &SpinorField| -> f64 {
        (0..len)
            .map(|j| {
                let d = (&f.amps[(j + 1) % len] - &f.amps[(j + len - 1) % len]) / C64::new(2.0 * dk, 0.0);
                (C64::i() * f.amps[j].dotc(&d)).re
            })
            .sum::<f64>()
            / len as f64
    };
    let centred = field.translated_phase(berry_mean(field).round() as i64);
    let mut a = 0.0;
    let mut conn_sq = 0.0;
    let mut r = 0.0;
    for j in 0..len {
        let psi = &centred.amps[j];
        let d = (&centred.amps[(j + 1) % len] - &centred.amps[(j + len - 1) % len]) / C64::new(2.0 * dk, 0.0);
        let conn = psi.dotc(&d);
        a += d.norm_squared() - conn.norm_sqr();
        conn_sq += conn.norm_sqr();
        r += (C64::i() * conn).re;
    }
    let n = len as f64;
    r /= n;
    Ok(DispersionTerms { a: a / n, b: conn_sq / n - r * r })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportRecord {
    pub t: f64,
    /// Centre-of-mass displacement in unit cells.
    pub r: f64,
    /// Variance of the position distribution.
    pub var: f64,
    /// Flatness term; absent when the snapshot is too spread for finite differences.
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub times: Vec<f64>,
    pub fields: Vec<SpinorField>,
    pub distributions: Vec<PositionDistribution>,
    pub records: Vec<TransportRecord>,
}

impl SingleRun {
    pub fn last(&self) -> &TransportRecord {
        self.records.last().expect("run without output times")
    }
}

/// Starts from the Wannier state of `band` at `n0` and evolves it under the
/// same sampler, recording observables at `times`.
pub fn run_single(
    sampler: &dyn BlochSampler,
    grid: &MomentumGrid,
    band: usize,
    n0: i64,
    times: &[f64],
    cfg: &PropagatorConfig,
) -> Result<SingleRun> {
    let init = init_wannier(sampler, grid, band, n0)?;
    run_from(&init, sampler, n0, times, cfg)
}

/// Evolves a prepared field under `sampler` and records observables at `times`.
pub fn run_from(
    init: &SpinorField,
    sampler: &dyn BlochSampler,
    n0: i64,
    times: &[f64],
    cfg: &PropagatorConfig,
) -> Result<SingleRun> {
    let fields = evolve_field_series(init, sampler, 0.0, times, cfg)?;
    let distributions: Vec<PositionDistribution> = fields.iter().map(position_distribution).collect();
    let moments = track_com(&distributions, n0)?;
    let records = fields
        .iter()
        .zip(times)
        .zip(moments)
        .map(|((f, &t), (r, var))| {
            let (a, b) = match dispersion_terms(f) {
                Ok(d) => (Some(d.a), Some(d.b)),
                Err(Error::GaugeDiscontinuity { .. }) => (None, None),
                Err(e) => return Err(e),
            };
            Ok(TransportRecord { t, r, var, a, b })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SingleRun { times: times.to_vec(), fields, distributions, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_matrix;
    use crate::model::{PumpSchedule, RiceMele};
    use crate::observables::com_dispersion;
    use crate::CMatrix;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    struct Static(CMatrix);

    impl BlochSampler for Static {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn period(&self) -> f64 {
            1.0
        }
        fn eval(&self, _k: f64, _t: f64) -> CMatrix {
            self.0.clone()
        }
    }

    fn grid(len: usize) -> MomentumGrid {
        MomentumGrid::new(len).unwrap()
    }

    fn uniform_field(len: usize, v: &[C64]) -> SpinorField {
        let v = CVector::from_column_slice(v).normalize();
        SpinorField::new(grid(len), vec![v; len]).unwrap()
    }

    #[test]
    fn k_independent_spinor_sits_in_cell_zero() {
        let f = uniform_field(8, &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let p = position_distribution(&f);
        assert_abs_diff_eq!(p.probs[0], 1.0, epsilon = 1e-14);
        assert!(p.probs[1..].iter().all(|&x| x < 1e-28));
        let moved = f.translated_phase(-3);
        assert_abs_diff_eq!(position_distribution(&moved).probs[3], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn parseval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let len = 17;
        let amps = (0..len)
            .map(|_| {
                CVector::from_fn(2, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .normalize()
            })
            .collect();
        let f = SpinorField::new(grid(len), amps).unwrap();
        assert_abs_diff_eq!(position_distribution(&f).total(), 1.0, epsilon = 1e-12);
        let sites: f64 = site_distribution(&f).iter().flatten().sum();
        assert_abs_diff_eq!(sites, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wannier_state_of_dimerized_limit() {
        let rm = RiceMele::new(PumpSchedule::omega(1.0, 100.0).unwrap());
        let f = init_wannier(&rm, &grid(32), 0, 0).unwrap();
        let p = position_distribution(&f);
        assert_abs_diff_eq!(p.probs[0], 1.0, epsilon = 1e-12);
        assert!(p.probs[1..].iter().all(|&x| x <= 1e-12));
        let sites = site_distribution(&f);
        assert_abs_diff_eq!(sites[0][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sites[0][1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn wannier_translation_covariance() {
        let rm = RiceMele::new(PumpSchedule::unit(100.0).unwrap());
        let g = grid(32);
        let f0 = init_wannier(&rm, &g, 0, 0).unwrap();
        let f5 = init_wannier(&rm, &g, 0, 5).unwrap();
        for j in 0..32 {
            let expect = &f0.amps[j] * C64::from_polar(1.0, -5.0 * g.k(j));
            assert!((&f5.amps[j] - expect).norm() < 1e-14);
        }
        let (p0, p5) = (position_distribution(&f0), position_distribution(&f5));
        for n in 0..32 {
            assert_abs_diff_eq!(p5.probs[(n + 5) % 32], p0.probs[n], epsilon = 1e-14);
        }
    }

    #[test]
    fn generic_wannier_state_is_localized() {
        let rm = RiceMele::new(PumpSchedule::unit(100.0).unwrap());
        let p = position_distribution(&init_wannier(&rm, &grid(32), 0, 0).unwrap());
        let peak = p.probs[0];
        for d in 3..=16i64 {
            for n in [d, -d] {
                assert!(p.probs[n.rem_euclid(32) as usize] <= peak * 1e-2, "cell {n}");
            }
        }
    }

    #[test]
    fn trivial_generators() {
        let rm = RiceMele::new(PumpSchedule::unit(10.0).unwrap());
        let f = init_wannier(&rm, &grid(16), 0, 2).unwrap();
        let cfg = PropagatorConfig::with_steps(64).unwrap();
        let zero = Static(CMatrix::zeros(2, 2));
        let same = evolve_field(&f, &zero, 0.0, 3.0, &cfg).unwrap();
        for (a, b) in same.amps.iter().zip(&f.amps) {
            assert!((a - b).norm() < 1e-15);
        }
        let rot = Static(real_matrix(2, 2, &[0.2, 0.9, 0.9, -0.4]));
        let turned = evolve_field(&f, &rot, 0.0, 1.7, &cfg).unwrap();
        let (p, q) = (position_distribution(&f), position_distribution(&turned));
        for n in 0..16 {
            assert_abs_diff_eq!(p.probs[n], q.probs[n], epsilon = 1e-13);
        }
    }

    #[test]
    fn k_independent_packet_has_no_spread() {
        let f = uniform_field(16, &[C64::new(1.0, 0.0), C64::new(1.0, 1.0)]).translated_phase(4);
        let d = dispersion_terms(&f).unwrap();
        assert!(d.a.abs() < 1e-12 && d.b.abs() < 1e-12);
    }

    #[test]
    fn gauge_jumps_are_detected() {
        let mut f = uniform_field(8, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        f.amps[3] = CVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(dispersion_terms(&f), Err(Error::GaugeDiscontinuity { link: 2, .. })));
    }

    #[test]
    fn decomposition_matches_variance_of_smooth_packet() {
        // A Gaussian superposition of plane-wave phases has a small, known spread.
        let len = 64;
        let g = grid(len);
        let weights: Vec<f64> = (-6i64..=6).map(|n| (-(n as f64).powi(2) / 4.0).exp()).collect();
        let norm: f64 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        let amps = (0..len)
            .map(|j| {
                let k = g.k(j);
                let s: C64 = (-6i64..=6)
                    .zip(&weights)
                    .map(|(n, w)| C64::from_polar(w / norm, -(n as f64 + 7.0) * k))
                    .sum();
                CVector::from_vec(vec![s * C64::new(0.6, 0.0), s * C64::new(0.0, 0.8)]).normalize()
            })
            .collect();
        let f = SpinorField::new(g, amps).unwrap();
        let (r, var) = com_dispersion(&position_distribution(&f), 0).unwrap();
        assert!(r.abs() > 0.0);
        let d = dispersion_terms(&f).unwrap();
        assert!(d.a >= -1e-10 && d.b >= -1e-10);
        assert!((d.a + d.b - var).abs() < 0.05, "{} + {} vs {var}", d.a, d.b);
    }

    #[test]
    fn unnormalized_spinors_are_rejected() {
        let v = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(SpinorField::new(grid(4), vec![v; 4]).is_err());
        assert!(SpinorField::new(grid(4), vec![]).is_err());
    }
}
