//! Band eigenstates, smooth gauges and topological invariants.

use std::f64::consts::PI;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{column, eigh, hermiticity_defect, spectral_norm};
use crate::model::{BlochSampler, MomentumGrid};
use crate::{CMatrix, CVector, C64};

/// Inputs whose Hermiticity defect exceeds this are rejected.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Bands closer than this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Link overlaps below this make a Wilson loop or plaquette meaningless.
pub const LINK_TOL: f64 = 1e-8;

/// Eigenvalues ascending; eigenvector columns gauge-fixed so that the
/// component of largest modulus (lowest index on ties) is real and positive.
#[derive(Debug, Clone)]
pub struct GaugedEigensystem {
    pub energies: Vec<f64>,
    pub states: CMatrix,
}

impl GaugedEigensystem {
    pub fn state(&self, band: usize) -> CVector {
        column(&self.states, band)
    }

    /// Smallest distance from `band` to any other band.
    pub fn splitting(&self, band: usize) -> f64 {
        let e = &self.energies;
        let below = if band > 0 { e[band] - e[band - 1] } else { f64::INFINITY };
        let above = if band + 1 < e.len() { e[band + 1] - e[band] } else { f64::INFINITY };
        below.min(above)
    }
}

fn fix_gauge(v: &mut CVector) {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap_or(0);
    let a = v[pivot];
    let phase = a.conj() / C64::new(a.norm(), 0.0);
    for z in v.iter_mut() {
        *z *= phase;
    }
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

pub fn eigh_gauged(h: &CMatrix) -> Result<GaugedEigensystem> {
    let defect = hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(Error::NotHermitian { defect });
    }
    let (energies, mut states) = eigh(h);
    for c in 0..states.ncols() {
        let mut v = column(&states, c);
        fix_gauge(&mut v);
        states.set_column(c, &v);
    }
    Ok(GaugedEigensystem { energies, states })
}

fn band_state(sampler: &dyn BlochSampler, band: usize, k: f64, t: f64) -> Result<(f64, CVector)> {
    let sys = eigh_gauged(&sampler.eval(k, t))?;
    let splitting = sys.splitting(band);
    if splitting < DEGENERACY_TOL {
        return Err(Error::DegenerateBand { band, splitting, k, t });
    }
    Ok((sys.energies[band], sys.state(band)))
}

/// One band's Bloch spinors on a momentum grid in a smooth periodic gauge.
///
/// Parallel transport along the grid makes every link overlap real and
/// positive; the residual phase of the closing link (the Wilson loop) is then
/// spread evenly over all `L` links so the field closes on itself.
#[derive(Debug, Clone)]
pub struct SmoothBandField {
    pub band: usize,
    pub grid: MomentumGrid,
    pub states: Vec<CVector>,
}

impl SmoothBandField {
    /// `<φ(k_j)|φ(k_{j+1})>` for `j = 0..L`, the last link closing the loop.
    pub fn links(&self) -> Vec<C64> {
        let n = self.states.len();
        (0..n).map(|j| self.states[j].dotc(&self.states[(j + 1) % n])).collect()
    }

    /// Short hash of the link phases, used to tag results that depend on the gauge.
    pub fn gauge_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for link in self.links() {
            let rounded = (link.arg() * 1e9).round() as i64;
            hasher.update(rounded.to_le_bytes());
        }
        hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn smooth_band(
    sampler: &dyn BlochSampler,
    grid: MomentumGrid,
    t: f64,
    band: usize,
) -> Result<SmoothBandField> {
    if band >= sampler.dim() {
        return Err(Error::Invalid(format!("band {band} out of range for a {}-band model", sampler.dim())));
    }
    let mut states = (0..grid.len())
        .into_par_iter()
        .map(|j| band_state(sampler, band, grid.k(j), t).map(|(_, v)| v))
        .collect::<Result<Vec<_>>>()?;
    let n = states.len();
    for j in 1..n {
        let overlap = states[j - 1].dotc(&states[j]);
        if overlap.norm() < LINK_TOL {
            return Err(Error::IllConditionedLoop { overlap: overlap.norm(), link: j - 1 });
        }
        let fix = overlap.conj() / C64::new(overlap.norm(), 0.0);
        states[j] *= fix;
    }
    let closing = states[n - 1].dotc(&states[0]);
    if closing.norm() < LINK_TOL {
        return Err(Error::IllConditionedLoop { overlap: closing.norm(), link: n - 1 });
    }
    let twist = closing.arg();
    for (j, s) in states.iter_mut().enumerate() {
        *s *= C64::from_polar(1.0, twist * j as f64 / n as f64);
    }
    Ok(SmoothBandField { band, grid, states })
}

/// Discrete Berry phase `-arg Π_j <φ(k_j)|φ(k_{j+1})>`, in `(-π, π]`.
pub fn zak_phase(field: &SmoothBandField) -> Result<f64> {
    let mut product = C64::new(1.0, 0.0);
    for (link, overlap) in field.links().into_iter().enumerate() {
        let norm = overlap.norm();
        if norm < LINK_TOL {
            return Err(Error::IllConditionedLoop { overlap: norm, link });
        }
        product *= overlap / C64::new(norm, 0.0);
    }
    let phase = -product.arg();
    Ok(if phase <= -PI { phase + 2.0 * PI } else { phase })
}

/// Sum of plaquette field strengths over the `(k, t)` torus divided by 2π.
///
/// Orientation: positive when the Wilson-loop phase of the band increases
/// during the cycle, so the result is the number of unit cells a Wannier
/// state of the band moves in the `+x` direction.
pub fn chern_flux(sampler: &dyn BlochSampler, band: usize, nk: usize, nt: usize) -> Result<f64> {
    if nk < 2 || nt < 2 {
        return Err(Error::Invalid(format!("plaquette grid too small ({nk} x {nt})")));
    }
    if band >= sampler.dim() {
        return Err(Error::Invalid(format!("band {band} out of range")));
    }
    let grid = MomentumGrid::new(nk)?;
    let tau = sampler.period();
    let rows: Vec<Vec<CVector>> = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = tau * it as f64 / nt as f64;
            (0..nk)
                .map(|ik| band_state(sampler, band, grid.k(ik), t).map(|(_, v)| v))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let link = |a: &CVector, b: &CVector, ik: usize, it: usize| -> Result<C64> {
        let z = a.dotc(b);
        let n = z.norm();
        if n < LINK_TOL {
            return Err(Error::RefineGrid { overlap: n, ik, it });
        }
        Ok(z / C64::new(n, 0.0))
    };

    let per_row = (0..nt)
        .into_par_iter()
        .map(|it| {
            let row = &rows[it];
            let next = &rows[(it + 1) % nt];
            let mut sum = 0.0;
            for ik in 0..nk {
                let ik1 = (ik + 1) % nk;
                let u_k = link(&row[ik], &row[ik1], ik, it)?;
                let u_t_right = link(&row[ik1], &next[ik1], ik1, it)?;
                let u_k_up = link(&next[ik], &next[ik1], ik, (it + 1) % nt)?;
                let u_t_left = link(&row[ik], &next[ik], ik, it)?;
                sum += (u_k * u_t_right * u_k_up.conj() * u_t_left.conj()).arg();
            }
            Ok(sum)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_row.iter().sum::<f64>() / (2.0 * PI))
}

/// Plaquette (lattice field-strength) Chern number of `band` over one cycle.
pub fn chern_number(sampler: &dyn BlochSampler, band: usize, nk: usize, nt: usize) -> Result<i64> {
    let flux = chern_flux(sampler, band, nk, nt)?;
    let rounded = flux.round();
    debug_assert!((flux - rounded).abs() < 1e-6, "plaquette sum not integral: {flux}");
    Ok(rounded as i64)
}

/// Spectral norm of the non-adiabatic generator `(∂_t r) r^{-1}`, where `r`
/// holds the gauge-fixed instantaneous eigenvectors, by central differences.
pub fn nonadiabatic_norm(sampler: &dyn BlochSampler, k: f64, t: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {dt}")));
    }
    let gauged = |time: f64| -> Result<CMatrix> {
        let sys = eigh_gauged(&sampler.eval(k, time))?;
        for b in 0..sys.energies.len() {
            let splitting = sys.splitting(b);
            if splitting < DEGENERACY_TOL {
                return Err(Error::DegenerateBand { band: b, splitting, k, t: time });
            }
        }
        Ok(sys.states)
    };
    let r = gauged(t)?;
    let derivative = (gauged(t + dt)? - gauged(t - dt)?) / C64::new(2.0 * dt, 0.0);
    Ok(spectral_norm(&(derivative * r.adjoint())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_matrix;
    use crate::model::{rmm_bloch, Frozen, PumpSchedule, RiceMele, RmParams};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn constant(t1: f64, t2: f64, delta: f64) -> RiceMele {
        RiceMele::new(PumpSchedule::constant(RmParams::new(t1, t2, delta), 1.0).unwrap())
    }

    #[test]
    fn diagonal_input() {
        let sys = eigh_gauged(&real_matrix(2, 2, &[-1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(sys.energies, vec![-1.0, 1.0]);
        assert_abs_diff_eq!(sys.states[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.states[(1, 1)].re, 1.0, epsilon = 1e-15);
        assert!(sys.states[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn symmetric_dimer_gauge() {
        let sys = eigh_gauged(&rmm_bloch(0.0, 1.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(sys.energies[0], -2.0, epsilon = 1e-13);
        let s = 1.0 / 2f64.sqrt();
        let lower = sys.state(0);
        assert_abs_diff_eq!(lower[0].re, s, epsilon = 1e-13);
        assert_abs_diff_eq!(lower[1].re, s, epsilon = 1e-13);
        assert!(lower[0].im.abs() < 1e-15 && lower[1].im.abs() < 1e-13);
    }

    #[test]
    fn generic_residual() {
        let h = rmm_bloch(PI / 2.0, 0.5, 0.25, 0.3);
        let sys = eigh_gauged(&h).unwrap();
        let eps = 0.4025f64.sqrt();
        assert_abs_diff_eq!(sys.energies[0], -eps, epsilon = 1e-13);
        assert_abs_diff_eq!(sys.energies[1], eps, epsilon = 1e-13);
        for b in 0..2 {
            let v = sys.state(b);
            let r = &h * &v - &v * C64::new(sys.energies[b], 0.0);
            assert!(r.norm() <= 1e-11 * eps);
            let pivot = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let first = v.iter().position(|z| z.norm() >= pivot * (1.0 - 1e-10)).unwrap();
            assert!(v[first].im == 0.0 && v[first].re > 0.0);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(eigh_gauged(&h), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn k_independent_band_is_trivially_smooth() {
        let rm = RiceMele::new(PumpSchedule::omega(1.0, 10.0).unwrap());
        let field = smooth_band(&rm, MomentumGrid::new(16).unwrap(), 0.0, 0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for v in &field.states {
            assert_abs_diff_eq!(v[0].norm(), s, epsilon = 1e-13);
            assert_abs_diff_eq!((v - &field.states[0]).norm(), 0.0, epsilon = 1e-13);
        }
        for link in field.links() {
            assert_abs_diff_eq!(link.re, 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(link.im, 0.0, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(zak_phase(&field).unwrap(), 0.0, epsilon = 1e-13);
    }

    /// Brute-force Wilson loop over independently gauge-fixed eigenvectors.
    fn brute_wilson(t1: f64, t2: f64, delta: f64, n: usize) -> f64 {
        let mut product = C64::new(1.0, 0.0);
        let states: Vec<CVector> = (0..n)
            .map(|j| {
                let k = 2.0 * PI * j as f64 / n as f64;
                column(&eigh(&rmm_bloch(k, t1, t2, delta)).1, 0)
            })
            .collect();
        for j in 0..n {
            product *= states[j].dotc(&states[(j + 1) % n]);
        }
        -product.arg()
    }

    #[test]
    fn ssh_zak_phases() {
        let oracle = brute_wilson(0.0, 1.0, 0.0, 256);
        assert_abs_diff_eq!(oracle.abs(), PI, epsilon = 1e-10);
        let field = smooth_band(&constant(0.0, 1.0, 0.0), MomentumGrid::new(32).unwrap(), 0.0, 0).unwrap();
        assert_abs_diff_eq!(zak_phase(&field).unwrap(), PI, epsilon = 1e-10);
        let total: f64 = field.links().iter().map(|l| l.arg()).sum();
        assert_abs_diff_eq!(total.abs(), PI, epsilon = 1e-10);

        assert_abs_diff_eq!(brute_wilson(1.0, 0.0, 0.0, 256), 0.0, epsilon = 1e-10);
        let trivial = smooth_band(&constant(1.0, 0.0, 0.0), MomentumGrid::new(32).unwrap(), 0.0, 0).unwrap();
        assert_abs_diff_eq!(zak_phase(&trivial).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn smooth_gauge_links_share_one_phase() {
        let field = smooth_band(&constant(0.7, 0.4, 0.2), MomentumGrid::new(32).unwrap(), 0.0, 0).unwrap();
        let zak = zak_phase(&field).unwrap();
        let l = field.states.len() as f64;
        for (j, link) in field.links().iter().enumerate() {
            assert!(link.arg().abs() <= PI / l + zak.abs() / l + 1e-12, "link {j}");
            assert_abs_diff_eq!(link.arg(), -zak / l, epsilon = 1e-12);
        }
        for v in &field.states {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(brute_wilson(0.7, 0.4, 0.2, 32), zak, epsilon = 1e-10);
    }

    #[test]
    fn zak_phase_is_gauge_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let field = smooth_band(&constant(0.3, 0.9, 0.25), MomentumGrid::new(32).unwrap(), 0.0, 0).unwrap();
        let reference = zak_phase(&field).unwrap();
        for _ in 0..20 {
            let mut scrambled = field.clone();
            for v in scrambled.states.iter_mut() {
                *v *= C64::from_polar(1.0, rng.gen_range(-PI..PI));
            }
            let z = zak_phase(&scrambled).unwrap();
            let diff = (z - reference + PI).rem_euclid(2.0 * PI) - PI;
            assert!(diff.abs() <= 1e-10);
        }
    }

    #[test]
    fn smooth_band_rejects_closed_gap() {
        let err = smooth_band(&constant(1.0, 1.0, 0.0), MomentumGrid::new(8).unwrap(), 0.0, 0);
        assert!(matches!(err, Err(Error::DegenerateBand { .. })));
    }

    #[test]
    fn static_schedule_has_no_chern_number() {
        assert_eq!(chern_number(&constant(0.3, 1.0, 0.2), 0, 16, 16).unwrap(), 0);
    }

    #[test]
    fn pump_cycles_have_unit_chern_number() {
        let unit = RiceMele::new(PumpSchedule::unit(1.0).unwrap());
        let omega = RiceMele::new(PumpSchedule::omega(1.0, 1.0).unwrap());
        let c_unit = chern_number(&unit, 0, 64, 64).unwrap();
        let c_omega = chern_number(&omega, 0, 64, 64).unwrap();
        assert_eq!(c_unit.abs(), 1);
        assert_eq!(c_omega.abs(), 1);
        // Same cycle shape with opposite overall sign: the lower bands swap roles.
        assert_eq!(c_unit, -c_omega);
        assert_eq!(chern_number(&unit, 0, 128, 128).unwrap(), c_unit);
        assert_eq!(chern_number(&unit, 1, 64, 64).unwrap(), -c_unit);
        let flux = chern_flux(&unit, 0, 64, 64).unwrap();
        assert!((flux - flux.round()).abs() < 1e-12);
    }

    #[test]
    fn chern_number_rejects_gap_closure() {
        let closed = constant(1.0, 1.0, 0.0);
        assert!(matches!(chern_number(&closed, 0, 16, 16), Err(Error::DegenerateBand { .. })));
    }

    #[test]
    fn nonadiabatic_generator_scaling() {
        let static_rm = constant(0.4, 0.9, 0.1);
        assert!(nonadiabatic_norm(&static_rm, 0.3, 0.2, 1e-3).unwrap() < 1e-8);

        let norm_at = |tau: f64, dt_frac: f64| {
            let rm = RiceMele::new(PumpSchedule::omega(1.0, tau).unwrap());
            nonadiabatic_norm(&rm, 0.7, 0.3 * tau, tau * dt_frac).unwrap()
        };
        let a = norm_at(50.0, 1.0 / 1024.0);
        let b = norm_at(100.0, 1.0 / 1024.0);
        assert!(a > 0.0);
        assert!((a / b - 2.0).abs() < 0.1, "ratio {}", a / b);

        let fine = norm_at(50.0, 1.0 / 2048.0);
        let finer = norm_at(50.0, 1.0 / 4096.0);
        let dt = 50.0 / 1024.0;
        assert!((a - fine).abs() < dt * dt);
        assert!((fine - finer).abs() < (a - fine).abs() / 3.0 + 1e-12);
    }

    #[test]
    fn frozen_sampler_is_static() {
        let rm = RiceMele::new(PumpSchedule::unit(1.0).unwrap());
        let frozen = Frozen { inner: rm, at: 0.125 };
        assert!(nonadiabatic_norm(&frozen, 0.3, 0.5, 1e-3).unwrap() < 1e-8);
    }
}
