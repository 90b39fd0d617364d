//! Distances between generated and reference workloads: two-sample
//! Kolmogorov–Smirnov on per-job sizes and 1-D earth mover's distance on
//! key-frequency histograms.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::workload::{DependencyKind, JobSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub values: Vec<T>,
    pub label: String,
}

impl<T: Scalar> Sample<T> {
    pub fn new(label: impl Into<String>, values: Vec<T>) -> Result<Self> {
        let s = Self {
            values,
            label: label.into(),
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput(format!("sample {:?} is empty", self.label)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample {:?} has non-finite values",
                self.label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    pub bin_edges: Vec<T>,
    pub masses: Vec<T>,
}

impl<T: Scalar> Histogram<T> {
    pub fn new(bin_edges: Vec<T>, masses: Vec<T>) -> Result<Self> {
        let h = Self { bin_edges, masses };
        h.check()?;
        Ok(h)
    }

    /// Normalizes raw non-negative weights into a histogram.
    pub fn from_weights(bin_edges: Vec<T>, weights: Vec<T>) -> Result<Self> {
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        if !(total > T::zero()) {
            return Err(Error::InvalidInput("histogram weights sum to zero".into()));
        }
        Self::new(bin_edges, weights.into_iter().map(|w| w / total).collect())
    }

    fn check(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 || self.bin_edges.len() != n + 1 {
            return Err(Error::InvalidInput(format!(
                "histogram needs n+1 edges for n masses, got {} and {n}",
                self.bin_edges.len()
            )));
        }
        if self
            .bin_edges
            .windows(2)
            .any(|w| !(w[0] < w[1]) || !w[1].is_finite() || !w[0].is_finite())
        {
            return Err(Error::InvalidInput("bin edges must be strictly increasing".into()));
        }
        if self.masses.iter().any(|m| !(*m >= T::zero()) || !m.is_finite()) {
            return Err(Error::InvalidInput("masses must be finite and non-negative".into()));
        }
        let total = self.masses.iter().fold(T::zero(), |a, &m| a + m);
        let tol = T::c(1e-9).max(T::epsilon() * T::from_usize_lossy(4 * n));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "masses sum to {total:?}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn range(&self) -> T {
        self.bin_edges[self.bin_edges.len() - 1] - self.bin_edges[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult<T> {
    pub statistic: T,
    pub p_value: T,
}

/// Two-sample KS statistic with an asymptotic Kolmogorov p-value.
pub fn ks_two_sample<T: Scalar>(a: &Sample<T>, b: &Sample<T>) -> Result<KsResult<T>> {
    a.check()?;
    b.check()?;
    let mut xa = a.values.clone();
    let mut xb = b.values.clone();
    xa.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    xb.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let (na, nb) = (xa.len(), xb.len());
    let (fa, fb) = (T::from_usize_lossy(na), T::from_usize_lossy(nb));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        let gap = (T::from_usize_lossy(i) / fa - T::from_usize_lossy(j) / fb).abs();
        d = d.max(gap);
    }
    let ne = fa * fb / (fa + fb);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    })
}

/// P(K > λ) for the Kolmogorov distribution.
pub fn kolmogorov_sf<T: Scalar>(lambda: T) -> T {
    if !(lambda > T::zero()) {
        return T::one();
    }
    let l = lambda.to_f64().unwrap_or(0.0);
    let p = if l < 1.18 {
        // Jacobi theta form converges fast for small λ.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * pi2 / (8.0 * l * l)).exp();
        }
        1.0 - cdf * (2.0 * std::f64::consts::PI).sqrt() / l
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * l * l).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        2.0 * sum
    };
    T::c(p.clamp(0.0, 1.0))
}

/// 1-D Wasserstein-1 distance between histograms on the same grid.
pub fn emd_1d<T: Scalar>(a: &Histogram<T>, b: &Histogram<T>) -> Result<T> {
    a.check()?;
    b.check()?;
    if a.bin_edges != b.bin_edges {
        return Err(Error::InvalidInput("histograms have different bin edges".into()));
    }
    let mut ca = T::zero();
    let mut cb = T::zero();
    let mut total = T::zero();
    for i in 0..a.masses.len() {
        ca = ca + a.masses[i];
        cb = cb + b.masses[i];
        let width = a.bin_edges[i + 1] - a.bin_edges[i];
        total = total + (ca - cb).abs() * width;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub ks_max: f64,
    /// Fraction of the histogram's range.
    pub emd_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks_max: 0.1,
            emd_max: 0.05,
        }
    }
}

/// Per-job input sizes, shuffle volumes and a key-frequency histogram.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Channels<T> {
    pub input: Option<Sample<T>>,
    pub shuffle: Option<Sample<T>>,
    pub keys: Option<Histogram<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVerdict {
    pub channel: String,
    pub status: Status,
    pub statistic: Option<f64>,
    pub threshold: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub overall: Status,
    pub channels: Vec<ChannelVerdict>,
}

pub fn validate_class<T: Scalar>(
    generated: &Channels<T>,
    reference: &Channels<T>,
    thresholds: Thresholds,
) -> Result<ValidationVerdict> {
    let mut channels = Vec::new();
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    for (name, g, r) in [
        ("input_size_ks", &generated.input, &reference.input),
        ("shuffle_volume_ks", &generated.shuffle, &reference.shuffle),
    ] {
        channels.push(match (g, r) {
            (Some(g), Some(r)) => {
                let ks = ks_two_sample(g, r)?;
                let stat = f(ks.statistic);
                ChannelVerdict {
                    channel: name.into(),
                    status: pass_if(stat <= thresholds.ks_max),
                    statistic: Some(stat),
                    threshold: thresholds.ks_max,
                    p_value: Some(f(ks.p_value)),
                }
            }
            _ => skipped(name, thresholds.ks_max),
        });
    }
    channels.push(match (&generated.keys, &reference.keys) {
        (Some(g), Some(r)) => {
            let stat = f(emd_1d(g, r)?);
            let limit = thresholds.emd_max * f(r.range());
            ChannelVerdict {
                channel: "key_frequency_emd".into(),
                status: pass_if(stat <= limit),
                statistic: Some(stat),
                threshold: limit,
                p_value: None,
            }
        }
        _ => skipped("key_frequency_emd", thresholds.emd_max),
    });
    let overall = if channels.iter().any(|c| c.status == Status::Fail) {
        Status::Fail
    } else if channels.iter().all(|c| c.status == Status::Skipped) {
        Status::Skipped
    } else {
        Status::Pass
    };
    Ok(ValidationVerdict { overall, channels })
}

fn pass_if(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn skipped(name: &str, threshold: f64) -> ChannelVerdict {
    ChannelVerdict {
        channel: name.into(),
        status: Status::Skipped,
        statistic: None,
        threshold,
        p_value: None,
    }
}

/// Input-size, shuffle-volume and key-frequency channels of generated jobs.
/// Keys are placed at normalized rank `(k - 0.5) / n` of each shuffle-reading
/// stage and binned on `key_edges`; values outside fall in the end bins.
pub fn channels_from_jobs(jobs: &[JobSpec], key_edges: Option<&[f64]>) -> Result<Channels<f64>> {
    if jobs.is_empty() {
        return Err(Error::InvalidInput("no jobs".into()));
    }
    let input = Sample::new(
        "input_bytes",
        jobs.iter().map(|j| j.source_input_bytes() as f64).collect(),
    )?;
    let shuffle = Sample::new(
        "shuffle_bytes",
        jobs.iter().map(|j| j.shuffle_bytes() as f64).collect(),
    )?;
    let keys = match key_edges {
        None => None,
        Some(edges) => {
            if edges.len() < 2 {
                return Err(Error::InvalidInput("key histogram needs two edges".into()));
            }
            let bins = edges.len() - 1;
            let mut w = vec![0.0; bins];
            for stage in jobs
                .iter()
                .flat_map(|j| &j.stages)
                .filter(|s| s.dependency_kind == DependencyKind::Wide)
            {
                let n = stage.task_skew_shares.len() as f64;
                for (k, share) in stage.task_skew_shares.iter().enumerate() {
                    let x = (k as f64 + 0.5) / n;
                    let bin = edges[1..bins].partition_point(|&e| e <= x);
                    w[bin] += share;
                }
            }
            Some(Histogram::from_weights(edges.to_vec(), w)?)
        }
    };
    Ok(Channels {
        input: Some(input),
        shuffle: Some(shuffle),
        keys,
    })
}

fn csv_reader<R: Read>(input: R, tab: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(if tab { b'\t' } else { b',' })
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn is_tab_separated(text: &str) -> bool {
    text.lines().next().is_some_and(|h| h.contains('\t'))
}

/// Reads one column of a delimited file with a header line. `column` picks a
/// header by name; otherwise the first column is used.
pub fn read_sample_text(text: &str, label: &str, column: Option<&str>) -> Result<Sample<f64>> {
    let mut rdr = csv_reader(text.as_bytes(), is_tab_separated(text));
    let idx = match column {
        None => 0,
        Some(c) => rdr
            .headers()?
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::InvalidInput(format!("{label}: no column {c:?}")))?,
    };
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec
            .get(idx)
            .ok_or_else(|| Error::InvalidInput(format!("{label}: row {} too short", row + 2)))?;
        values.push(cell.parse::<f64>().map_err(|_| {
            Error::InvalidInput(format!("{label}: row {}: bad number {cell:?}", row + 2))
        })?);
    }
    Sample::new(label, values)
}

pub fn read_sample(path: &Path, column: Option<&str>) -> Result<Sample<f64>> {
    read_sample_text(&read_text(path)?, &path.display().to_string(), column)
}

/// Reads `lower,upper,mass` rows; bins must be contiguous. Masses are
/// normalized, so raw counts are accepted.
pub fn read_histogram_text(text: &str) -> Result<Histogram<f64>> {
    let mut rdr = csv_reader(text.as_bytes(), is_tab_separated(text));
    let mut edges: Vec<f64> = Vec::new();
    let mut weights = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidInput(format!("histogram row {}: bad field {i}", row + 2)))
        };
        let (lo, hi, m) = (num(0)?, num(1)?, num(2)?);
        match edges.last() {
            None => edges.push(lo),
            Some(&prev) if prev != lo => {
                return Err(Error::InvalidInput(format!(
                    "histogram row {}: bin starts at {lo}, previous ended at {prev}",
                    row + 2
                )))
            }
            Some(_) => {}
        }
        edges.push(hi);
        weights.push(m);
    }
    Histogram::from_weights(edges, weights)
}

pub fn read_histogram(path: &Path) -> Result<Histogram<f64>> {
    read_histogram_text(&read_text(path)?)
}
