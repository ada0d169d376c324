//! Position distributions on the periodic lattice and the transport
//! observables extracted from them.

use crate::error::{Error, Result};

/// Weight at either edge of a moment window above which the window is
/// considered to clip the distribution.
pub const WRAPAROUND_EDGE_WEIGHT: f64 = 0.2;
/// Minimum localized fraction `1 - L * offset` for a peak analysis.
pub const MIN_LOCALIZED_FRACTION: f64 = 0.02;

/// Probability per unit cell, `P_n` for `n = 0..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDistribution {
    pub probs: Vec<f64>,
}

impl PositionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Invalid("empty position distribution".into()));
        }
        Ok(PositionDistribution { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Most probable cell; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (n, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = n;
            }
        }
        best
    }

    fn at(&self, n: i64) -> f64 {
        self.probs[n.rem_euclid(self.len() as i64) as usize]
    }

    /// Sum of `P` over `center - radius ..= center + radius` (periodic).
    pub fn weight_around(&self, center: i64, radius: i64) -> f64 {
        (center - radius..=center + radius).map(|n| self.at(n)).sum()
    }

    pub fn total_variation(&self, other: &PositionDistribution) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Invalid(format!(
                "distributions of different length ({} vs {})",
                self.len(),
                other.len()
            )));
        }
        Ok(0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }
}

/// Mean and variance of a distribution in a window of `L` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// Absolute (unwrapped) position, measured in the window's coordinates.
    pub mean: f64,
    pub var: f64,
}

/// Signed offsets `d` covered by a window of length `len`: `lo..=lo + len - 1`.
fn window_low(len: usize) -> i64 {
    -((len as i64 - 1) / 2)
}

/// Moments over the window of `L` cells around `center`, positions taken as
/// `center + d` with `d` from `-(L-1)/2` (integer division) upward.
pub fn windowed_moments(p: &PositionDistribution, center: i64) -> Result<Moments> {
    let len = p.len() as i64;
    let lo = window_low(p.len());
    let hi = lo + len - 1;
    let total = p.total();
    if !(total > 0.0) {
        return Err(Error::Invalid("distribution carries no weight".into()));
    }
    if len >= 4 {
        let edge = p.at(center + lo).max(p.at(center + hi)) / total;
        if edge > WRAPAROUND_EDGE_WEIGHT {
            return Err(Error::Wraparound { edge_weight: edge });
        }
    }
    let mut mean = 0.0;
    for d in lo..=hi {
        mean += d as f64 * p.at(center + d);
    }
    mean /= total;
    let mut var = 0.0;
    for d in lo..=hi {
        let x = d as f64 - mean;
        var += x * x * p.at(center + d);
    }
    var /= total;
    Ok(Moments { mean: center as f64 + mean, var })
}

/// Centre-of-mass displacement from `n_ref` and variance, window anchored at `n_ref`.
pub fn com_dispersion(p: &PositionDistribution, n_ref: i64) -> Result<(f64, f64)> {
    let m = windowed_moments(p, n_ref)?;
    Ok((m.mean - n_ref as f64, m.var))
}

/// Displacement and variance along a time series, with the window following
/// the packet: each frame is centred on the rounded mean of the previous one.
pub fn track_com(series: &[PositionDistribution], n0: i64) -> Result<Vec<(f64, f64)>> {
    let mut center = n0;
    let mut out = Vec::with_capacity(series.len());
    for p in series {
        let m = windowed_moments(p, center)?;
        out.push((m.mean - n0 as f64, m.var));
        center = m.mean.round() as i64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetEstimator {
    /// Smallest `P_n`.
    #[default]
    Minimum,
    /// Median of the `L/2` cells farthest from the peak.
    FarMedian,
}

/// Decomposition of a distribution into a uniform background and a localized peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakAnalysis {
    /// Peak displacement relative to the reference peak, wrapped into the window.
    pub peak_shift: i64,
    pub offset: f64,
    /// Displacement of the background-subtracted distribution relative to the
    /// background-subtracted reference.
    pub r_sub: f64,
    /// Variance of the background-subtracted distribution.
    pub var_sub: f64,
    /// `P` summed over the peak cell and its two neighbours.
    pub peak_weight: f64,
}

fn estimate_offset(p: &PositionDistribution, peak: usize, estimator: OffsetEstimator) -> f64 {
    match estimator {
        OffsetEstimator::Minimum => p.probs.iter().copied().fold(f64::INFINITY, f64::min),
        OffsetEstimator::FarMedian => {
            let len = p.len() as i64;
            let mut far: Vec<(i64, f64)> = (0..len)
                .map(|n| {
                    let d = (n - peak as i64).rem_euclid(len);
                    (d.min(len - d), p.probs[n as usize])
                })
                .collect();
            far.sort_by_key(|x| std::cmp::Reverse(x.0));
            let mut vals: Vec<f64> = far.iter().take((p.len() / 2).max(1)).map(|x| x.1).collect();
            vals.sort_by(f64::total_cmp);
            let m = vals.len();
            if m % 2 == 1 {
                vals[m / 2]
            } else {
                0.5 * (vals[m / 2 - 1] + vals[m / 2])
            }
        }
    }
}

fn subtract_background(p: &PositionDistribution, offset: f64) -> PositionDistribution {
    PositionDistribution { probs: p.probs.iter().map(|x| (x - offset).max(0.0)).collect() }
}

/// Subtracts a uniform background from `p` and locates the remaining peak,
/// relative to the peak of `reference` (usually the initial distribution).
pub fn offset_subtract_peak(
    p: &PositionDistribution,
    reference: &PositionDistribution,
    estimator: OffsetEstimator,
) -> Result<PeakAnalysis> {
    if p.len() != reference.len() {
        return Err(Error::Invalid("distribution lengths differ".into()));
    }
    let len = p.len() as i64;
    let peak = p.argmax();
    let offset = estimate_offset(p, peak, estimator);
    let localized = p.total() - len as f64 * offset;
    if localized < MIN_LOCALIZED_FRACTION {
        return Err(Error::NoPeak { residual: localized });
    }
    let r0 = reference.argmax() as i64;
    let offset0 = estimate_offset(reference, r0 as usize, estimator);
    let origin = windowed_moments(&subtract_background(reference, offset0), r0)?.mean;
    let lo = window_low(p.len());
    let peak_shift = (peak as i64 - r0 - lo).rem_euclid(len) + lo;
    let m = windowed_moments(&subtract_background(p, offset), r0 + peak_shift)?;
    Ok(PeakAnalysis {
        peak_shift,
        offset,
        r_sub: m.mean - origin,
        var_sub: m.var,
        peak_weight: p.weight_around(peak as i64, 1),
    })
}
