//! Artifact writers. CSV is RFC 4180 with LF line ends; floats use the shortest
//! round-trip representation.

use std::fmt::Write as _;
use std::path::Path;

use pumpsim::observables::{PeakAnalysis, PositionDistribution};

use crate::error::{CliError, CliResult};

pub const SERIES_PN: &str = "series_pn.csv";
pub const SERIES_OBS: &str = "series_obs.csv";
pub const META: &str = "meta.json";

/// `(A, B)`; empty where the smooth gauge is broken.
pub type Dispersion = (Option<f64>, Option<f64>);

/// Time series of one run, one entry per output time.
#[derive(Debug, Clone)]
pub struct Series {
    pub n0: i64,
    pub times: Vec<f64>,
    pub distributions: Vec<PositionDistribution>,
    /// `(R, Var)` with the window following the packet.
    pub moments: Vec<(f64, f64)>,
    pub dispersion: Vec<Dispersion>,
    /// Offset-subtracted peak; `None` where no peak stands out of the background.
    pub peaks: Vec<Option<PeakAnalysis>>,
}

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Cell labels `n0 - (L-1)/2 ..= n0 + L/2` with their lattice indices.
pub fn cell_window(len: usize, n0: i64) -> impl Iterator<Item = (i64, usize)> {
    let len = len as i64;
    let lo = n0 - (len - 1) / 2;
    (lo..lo + len).map(move |n| (n, n.rem_euclid(len) as usize))
}

pub fn series_pn(s: &Series) -> String {
    let mut out = String::from("t,n,P_n\n");
    for (t, p) in s.times.iter().zip(&s.distributions) {
        for (n, idx) in cell_window(p.len(), s.n0) {
            writeln!(out, "{},{n},{}", num(*t), num(p.probs[idx])).unwrap();
        }
    }
    out
}

pub fn series_obs(s: &Series) -> String {
    let mut out = String::from("t,R,Var,A,B,peak,offset,R_sub\n");
    for i in 0..s.times.len() {
        let (r, var) = s.moments[i];
        let (a, b) = s.dispersion[i];
        let (peak, offset, r_sub) = match &s.peaks[i] {
            Some(pk) => (pk.peak_shift.to_string(), num(pk.offset), num(pk.r_sub)),
            None => Default::default(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            num(s.times[i]),
            num(r),
            num(var),
            opt(a),
            opt(b),
            peak,
            offset,
            r_sub
        )
        .unwrap();
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

pub fn write_series(dir: &Path, s: &Series) -> CliResult<()> {
    write(dir, SERIES_PN, &series_pn(s))?;
    write(dir, SERIES_OBS, &series_obs(s))
}

pub fn write_meta(dir: &Path, meta: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(meta).expect("JSON values always serialize");
    text.push('\n');
    write(dir, META, &text)
}
