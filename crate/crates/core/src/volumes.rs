//! Sector × time-bin count tensors, resampling, week-lag anomaly ratios
//! and per-bin spatial statistics.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDateTime, Timelike};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsio;
use crate::stats;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";
pub const MINUTES_PER_WEEK: usize = 7 * 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Calls,
    Texts,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Calls, Channel::Texts];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Calls => "calls",
            Channel::Texts => "texts",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Resolution {
    Minute,
    Hour,
    Day,
}

impl Resolution {
    pub fn minutes(self) -> usize {
        match self {
            Resolution::Minute => 1,
            Resolution::Hour => 60,
            Resolution::Day => 1440,
        }
    }

    /// Bins per week at this resolution.
    pub fn week_bins(self) -> usize {
        MINUTES_PER_WEEK / self.minutes()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Minute => "minute",
            Resolution::Hour => "hour",
            Resolution::Day => "day",
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minute" => Ok(Resolution::Minute),
            "hour" => Ok(Resolution::Hour),
            "day" => Ok(Resolution::Day),
            _ => Err(Error::input(format!("unknown resolution {s:?} (minute|hour|day)"))),
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense counts, row-major by sector: `counts[s * n_bins + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeTensor {
    pub channel: Channel,
    pub resolution: Resolution,
    pub t0: NaiveDateTime,
    pub sector_ids: Vec<String>,
    pub n_bins: usize,
    pub counts: Vec<u32>,
}

impl VolumeTensor {
    pub fn zeros(
        channel: Channel,
        resolution: Resolution,
        t0: NaiveDateTime,
        sector_ids: Vec<String>,
        n_bins: usize,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for id in &sector_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate sector id {id}")));
            }
        }
        let counts = vec![0; sector_ids.len() * n_bins];
        Ok(VolumeTensor {
            channel,
            resolution,
            t0,
            sector_ids,
            n_bins,
            counts,
        })
    }

    pub fn n_sectors(&self) -> usize {
        self.sector_ids.len()
    }

    pub fn get(&self, s: usize, b: usize) -> u32 {
        self.counts[s * self.n_bins + b]
    }

    pub fn row(&self, s: usize) -> &[u32] {
        &self.counts[s * self.n_bins..(s + 1) * self.n_bins]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [u32] {
        let n = self.n_bins;
        &mut self.counts[s * n..(s + 1) * n]
    }

    /// Counts of every sector in bin `b`, in sector order.
    pub fn column(&self, b: usize) -> Vec<u32> {
        (0..self.n_sectors()).map(|s| self.get(s, b)).collect()
    }

    pub fn bin_start(&self, b: usize) -> NaiveDateTime {
        self.t0 + Duration::minutes((b * self.resolution.minutes()) as i64)
    }

    /// Bin containing `ts`, if inside the span.
    pub fn bin_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let m = (ts - self.t0).num_minutes();
        if m < 0 {
            return None;
        }
        let b = m as usize / self.resolution.minutes();
        (b < self.n_bins).then_some(b)
    }

    pub fn sector_index(&self) -> HashMap<&str, usize> {
        self.sector_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Column sums over all sectors.
    pub fn spatial_sum(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.n_bins];
        for s in 0..self.n_sectors() {
            for (o, &c) in out.iter_mut().zip(self.row(s)) {
                *o += c as u64;
            }
        }
        out
    }

    /// Restrict to the bins `[start, start + len)`.
    pub fn slice_bins(&self, start: usize, len: usize) -> Result<VolumeTensor> {
        if start + len > self.n_bins || len == 0 {
            return Err(Error::input(format!(
                "bin window {start}..{} outside tensor of {} bins",
                start + len,
                self.n_bins
            )));
        }
        let mut counts = Vec::with_capacity(self.n_sectors() * len);
        for s in 0..self.n_sectors() {
            counts.extend_from_slice(&self.row(s)[start..start + len]);
        }
        Ok(VolumeTensor {
            channel: self.channel,
            resolution: self.resolution,
            t0: self.bin_start(start),
            sector_ids: self.sector_ids.clone(),
            n_bins: len,
            counts,
        })
    }
}

pub fn format_ts(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_ts(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|_| Error::input(format!("bad timestamp {s:?}, expected YYYY-MM-DD hh:mm")))
}

pub const VOLUMES_HEADER: [&str; 4] = ["timestamp", "sector_id", "calls", "texts"];

/// Read `timestamp,sector_id,calls,texts` rows into a calls tensor and a
/// texts tensor covering `n_bins` bins from `t0`. Absent rows are zero.
pub fn load_volumes(
    path: &Path,
    sector_ids: &[String],
    resolution: Resolution,
    t0: NaiveDateTime,
    n_bins: usize,
) -> Result<(VolumeTensor, VolumeTensor)> {
    let mut calls = VolumeTensor::zeros(Channel::Calls, resolution, t0, sector_ids.to_vec(), n_bins)?;
    let mut texts = VolumeTensor::zeros(Channel::Texts, resolution, t0, sector_ids.to_vec(), n_bins)?;
    let index: HashMap<String, usize> = sector_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let mut rdr = fsio::csv_reader(path)?;
    fsio::expect_header(path, &mut rdr, &VOLUMES_HEADER)?;
    let step = resolution.minutes() as i64;
    let mut unknown: Vec<String> = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::parse(path, line, e.to_string()));
            }
        }
        let line = fsio::csv_line(&rec);
        if rec.len() != 4 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 4 fields, got {}", rec.len()),
            ));
        }
        let ts = NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT)
            .map_err(|_| Error::parse(path, line, format!("bad timestamp {:?}", &rec[0])))?;
        let m = (ts - t0).num_minutes();
        if m < 0 || m % step != 0 || (m / step) as usize >= n_bins {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "timestamp {} outside the {} window or off the bin grid",
                    &rec[0], resolution
                ),
            ));
        }
        let b = (m / step) as usize;
        let Some(&s) = index.get(&rec[1]) else {
            if unknown.len() < 20 && !unknown.iter().any(|u| u == &rec[1]) {
                unknown.push(rec[1].to_string());
            }
            continue;
        };
        let c = parse_count(path, line, &rec[2])?;
        let t = parse_count(path, line, &rec[3])?;
        let idx = s * n_bins + b;
        calls.counts[idx] = calls.counts[idx]
            .checked_add(c)
            .ok_or_else(|| Error::parse(path, line, "count overflow"))?;
        texts.counts[idx] = texts.counts[idx]
            .checked_add(t)
            .ok_or_else(|| Error::parse(path, line, "count overflow"))?;
    }
    if !unknown.is_empty() {
        return Err(Error::input(format!(
            "{}: unknown sector ids: {}",
            path.display(),
            unknown.join(", ")
        )));
    }
    Ok((calls, texts))
}

fn parse_count(path: &Path, line: u64, s: &str) -> Result<u32> {
    let v: i64 = s
        .parse()
        .map_err(|_| Error::parse(path, line, format!("bad count {s:?}")))?;
    if v < 0 {
        return Err(Error::parse(path, line, format!("negative count {v}")));
    }
    u32::try_from(v).map_err(|_| Error::parse(path, line, format!("count {v} too large")))
}

/// Write both channels in time-major order. Rows where both counts are zero
/// are omitted when `skip_zero` is set; loading treats them as zero anyway.
pub fn write_volumes(calls: &VolumeTensor, texts: &VolumeTensor, path: &Path, skip_zero: bool) -> Result<()> {
    if calls.sector_ids != texts.sector_ids
        || calls.n_bins != texts.n_bins
        || calls.t0 != texts.t0
        || calls.resolution != texts.resolution
    {
        return Err(Error::input("calls and texts tensors have different shapes"));
    }
    fsio::write_atomic(path, |w| {
        writeln!(w, "{}", VOLUMES_HEADER.join(","))?;
        for b in 0..calls.n_bins {
            let ts = format_ts(calls.bin_start(b));
            for (s, id) in calls.sector_ids.iter().enumerate() {
                let c = calls.get(s, b);
                let t = texts.get(s, b);
                if skip_zero && c == 0 && t == 0 {
                    continue;
                }
                writeln!(w, "{ts},{id},{c},{t}")?;
            }
        }
        Ok(())
    })
}

/// Sum into coarser bins. Trailing source bins that do not fill a whole
/// target bin are dropped; their count is returned alongside the tensor.
pub fn resample(t: &VolumeTensor, to: Resolution) -> Result<(VolumeTensor, usize)> {
    if to < t.resolution {
        return Err(Error::input(format!(
            "cannot resample {} to finer {}",
            t.resolution, to
        )));
    }
    let f = to.minutes() / t.resolution.minutes();
    let offset = (t.t0.hour() as usize * 60 + t.t0.minute() as usize) % to.minutes();
    if offset != 0 {
        return Err(Error::input(format!(
            "tensor start {} is not aligned to {} bins",
            format_ts(t.t0),
            to
        )));
    }
    let n_out = t.n_bins / f;
    let dropped = t.n_bins - n_out * f;
    if dropped > 0 {
        log::warn!("resample to {to}: dropped {dropped} trailing {} bins", t.resolution);
    }
    let mut counts = vec![0u32; t.n_sectors() * n_out];
    let overflow = counts
        .par_chunks_mut(n_out.max(1))
        .enumerate()
        .take(t.n_sectors())
        .map(|(s, out)| {
            if n_out == 0 {
                return false;
            }
            let row = t.row(s);
            for (o, chunk) in out.iter_mut().zip(row.chunks_exact(f)) {
                let sum: u64 = chunk.iter().map(|&c| c as u64).sum();
                match u32::try_from(sum) {
                    Ok(v) => *o = v,
                    Err(_) => return true,
                }
            }
            false
        })
        .reduce(|| false, |a, b| a || b);
    if overflow {
        return Err(Error::input(format!("{to} sums overflow 32-bit counts")));
    }
    Ok((
        VolumeTensor {
            channel: t.channel,
            resolution: to,
            t0: t.t0,
            sector_ids: t.sector_ids.clone(),
            n_bins: n_out,
            counts,
        },
        dropped,
    ))
}

/// Per-sector ratio of each bin to the bin `lag_bins` earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyField {
    pub channel: Channel,
    pub resolution: Resolution,
    pub t0: NaiveDateTime,
    pub sector_ids: Vec<String>,
    pub n_bins: usize,
    pub lag_bins: usize,
    pub ratios: Vec<f64>,
    pub defined: Vec<bool>,
}

impl AnomalyField {
    /// Build a field from explicit values; non-finite or negative values are masked.
    pub fn from_values(
        sector_ids: Vec<String>,
        t0: NaiveDateTime,
        resolution: Resolution,
        n_bins: usize,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if values.len() != sector_ids.len() * n_bins {
            return Err(Error::input("anomaly value count does not match shape"));
        }
        let defined: Vec<bool> = values
            .iter()
            .map(|v| matches!(v, Some(x) if x.is_finite() && *x >= 0.0))
            .collect();
        let ratios = values
            .iter()
            .zip(&defined)
            .map(|(v, d)| if *d { v.unwrap() } else { 0.0 })
            .collect();
        Ok(AnomalyField {
            channel: Channel::Calls,
            resolution,
            t0,
            sector_ids,
            n_bins,
            lag_bins: 0,
            ratios,
            defined,
        })
    }

    pub fn n_sectors(&self) -> usize {
        self.sector_ids.len()
    }

    pub fn get(&self, s: usize, b: usize) -> Option<f64> {
        let i = s * self.n_bins + b;
        self.defined[i].then(|| self.ratios[i])
    }

    /// Defined values of bin `b` with their sector indices.
    pub fn column(&self, b: usize) -> Vec<(usize, f64)> {
        (0..self.n_sectors())
            .filter_map(|s| self.get(s, b).map(|v| (s, v)))
            .collect()
    }

    pub fn bin_start(&self, b: usize) -> NaiveDateTime {
        self.t0 + Duration::minutes((b * self.resolution.minutes()) as i64)
    }

    pub fn bin_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let m = (ts - self.t0).num_minutes();
        if m < 0 {
            return None;
        }
        let b = m as usize / self.resolution.minutes();
        (b < self.n_bins).then_some(b)
    }
}

/// Ratio of a count to its lagged counterpart: 0/0 is 1, k/0 is undefined.
pub fn ratio(num: u64, den: u64) -> Option<f64> {
    match (num, den) {
        (0, 0) => Some(1.0),
        (_, 0) => None,
        (n, d) => Some(n as f64 / d as f64),
    }
}

pub fn anomaly(t: &VolumeTensor, lag_bins: usize) -> Result<AnomalyField> {
    if lag_bins == 0 {
        return Err(Error::input("anomaly lag must be at least one bin"));
    }
    if lag_bins >= t.n_bins {
        return Err(Error::input(format!(
            "anomaly lag of {lag_bins} bins needs a longer tensor than {} bins",
            t.n_bins
        )));
    }
    let n = t.n_bins;
    let mut ratios = vec![0.0f64; t.counts.len()];
    let mut defined = vec![false; t.counts.len()];
    ratios
        .par_chunks_mut(n)
        .zip(defined.par_chunks_mut(n))
        .enumerate()
        .for_each(|(s, (r, d))| {
            let row = t.row(s);
            for b in lag_bins..n {
                if let Some(v) = ratio(row[b] as u64, row[b - lag_bins] as u64) {
                    r[b] = v;
                    d[b] = true;
                }
            }
        });
    Ok(AnomalyField {
        channel: t.channel,
        resolution: t.resolution,
        t0: t.t0,
        sector_ids: t.sector_ids.clone(),
        n_bins: n,
        lag_bins,
        ratios,
        defined,
    })
}

/// Ratio of spatial sums, `Σ_s c[s,t] / Σ_s c[s,t-lag]`, with the same
/// zero conventions as [`anomaly`].
pub fn ratio_of_means(t: &VolumeTensor, lag_bins: usize) -> Result<Vec<Option<f64>>> {
    if lag_bins == 0 || lag_bins >= t.n_bins {
        return Err(Error::input("anomaly lag out of range"));
    }
    let sums = t.spatial_sum();
    Ok((0..t.n_bins)
        .map(|b| {
            if b < lag_bins {
                None
            } else {
                ratio(sums[b], sums[b - lag_bins])
            }
        })
        .collect())
}

/// Spatial mean and population standard deviation per bin. `None` where no
/// sector contributes.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteStats {
    pub t0: NaiveDateTime,
    pub resolution: Resolution,
    pub mu: Vec<Option<f64>>,
    pub sigma: Vec<Option<f64>>,
    pub n: Vec<usize>,
}

impl MinuteStats {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn bin_start(&self, b: usize) -> NaiveDateTime {
        self.t0 + Duration::minutes((b * self.resolution.minutes()) as i64)
    }

    /// `mu + sigma` per bin.
    pub fn upper(&self) -> Vec<Option<f64>> {
        self.mu
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| Some((*m)? + (*s)?))
            .collect()
    }
}

const STATS_CHUNK: usize = 256;

fn column_stats<F>(n_sectors: usize, n_bins: usize, value: F) -> (Vec<Option<f64>>, Vec<Option<f64>>, Vec<usize>)
where
    F: Fn(usize, usize) -> Option<f64> + Sync,
{
    let chunks: Vec<(Vec<Option<f64>>, Vec<Option<f64>>, Vec<usize>)> = (0..n_bins.div_ceil(STATS_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * STATS_CHUNK;
            let hi = (lo + STATS_CHUNK).min(n_bins);
            let w = hi - lo;
            let mut sum = vec![0.0f64; w];
            let mut cnt = vec![0usize; w];
            for s in 0..n_sectors {
                for b in lo..hi {
                    if let Some(v) = value(s, b) {
                        sum[b - lo] += v;
                        cnt[b - lo] += 1;
                    }
                }
            }
            let mean: Vec<f64> = sum
                .iter()
                .zip(&cnt)
                .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
                .collect();
            let mut ss = vec![0.0f64; w];
            for s in 0..n_sectors {
                for b in lo..hi {
                    if let Some(v) = value(s, b) {
                        let d = v - mean[b - lo];
                        ss[b - lo] += d * d;
                    }
                }
            }
            let mu = (0..w).map(|i| (cnt[i] > 0).then_some(mean[i])).collect();
            let sigma = (0..w)
                .map(|i| (cnt[i] > 0).then(|| (ss[i] / cnt[i] as f64).sqrt()))
                .collect();
            (mu, sigma, cnt)
        })
        .collect();
    let mut mu = Vec::with_capacity(n_bins);
    let mut sigma = Vec::with_capacity(n_bins);
    let mut n = Vec::with_capacity(n_bins);
    for (m, s, c) in chunks {
        mu.extend(m);
        sigma.extend(s);
        n.extend(c);
    }
    (mu, sigma, n)
}

pub fn minute_stats(t: &VolumeTensor) -> Result<MinuteStats> {
    if t.n_sectors() < 2 {
        return Err(Error::input("spatial statistics need at least 2 sectors"));
    }
    let (mu, sigma, n) = column_stats(t.n_sectors(), t.n_bins, |s, b| Some(t.get(s, b) as f64));
    Ok(MinuteStats {
        t0: t.t0,
        resolution: t.resolution,
        mu,
        sigma,
        n,
    })
}

/// Statistics of counts divided by per-sector area.
pub fn minute_stats_density(t: &VolumeTensor, areas_km2: &[f64]) -> Result<MinuteStats> {
    if areas_km2.len() != t.n_sectors() || areas_km2.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::input("density statistics need one positive area per sector"));
    }
    if t.n_sectors() < 2 {
        return Err(Error::input("spatial statistics need at least 2 sectors"));
    }
    let (mu, sigma, n) = column_stats(t.n_sectors(), t.n_bins, |s, b| Some(t.get(s, b) as f64 / areas_km2[s]));
    Ok(MinuteStats {
        t0: t.t0,
        resolution: t.resolution,
        mu,
        sigma,
        n,
    })
}

/// Statistics over the defined cells of an anomaly field.
pub fn anomaly_stats(a: &AnomalyField) -> Result<MinuteStats> {
    if a.n_sectors() < 2 {
        return Err(Error::input("spatial statistics need at least 2 sectors"));
    }
    let (mu, sigma, n) = column_stats(a.n_sectors(), a.n_bins, |s, b| a.get(s, b));
    Ok(MinuteStats {
        t0: a.t0,
        resolution: a.resolution,
        mu,
        sigma,
        n,
    })
}

/// Per-bin sector with the highest count; ties go to the smallest sector id.
pub fn max_sector_trace(t: &VolumeTensor) -> Result<Vec<(usize, u32)>> {
    if t.n_sectors() == 0 || t.n_bins == 0 {
        return Err(Error::input("empty tensor"));
    }
    let mut best: Vec<(usize, u32)> = t.row(0).iter().map(|&c| (0, c)).collect();
    for s in 1..t.n_sectors() {
        for (b, &c) in t.row(s).iter().enumerate() {
            let (bs, bc) = best[b];
            if c > bc || (c == bc && t.sector_ids[s] < t.sector_ids[bs]) {
                best[b] = (s, c);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Fit `log10 y = slope · log10 x + intercept` over pairs with both values positive.
pub fn scaling_fit(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    if x.len() != y.len() {
        return Err(Error::input("covariate and density lists differ in length"));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.log10(), b.log10()))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::input(format!(
            "scaling fit needs 3 positive pairs, got {}",
            lx.len()
        )));
    }
    let fit = stats::linear_fit(&lx, &ly).ok_or_else(|| Error::input("covariate has no spread"))?;
    Ok(ScalingFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r: fit.r,
        n_used: lx.len(),
        n_excluded: x.len() - lx.len(),
    })
}

fn opt_g(v: Option<f64>) -> String {
    v.map(fsio::fmt_g6).unwrap_or_else(|| "NA".into())
}

/// `sector_id,bin,ratio,defined`, restricted to bins in `bins`.
pub fn write_anomaly_csv(a: &AnomalyField, bins: std::ops::Range<usize>, path: &Path) -> Result<()> {
    let bins = bins.start.min(a.n_bins)..bins.end.min(a.n_bins);
    fsio::write_atomic(path, |w| {
        writeln!(w, "sector_id,bin,ratio,defined")?;
        for (s, id) in a.sector_ids.iter().enumerate() {
            for b in bins.clone() {
                match a.get(s, b) {
                    Some(v) => writeln!(w, "{id},{b},{},1", fsio::fmt_g6(v))?,
                    None => writeln!(w, "{id},{b},NA,0")?,
                }
            }
        }
        Ok(())
    })
}

pub fn write_stats_csv(st: &MinuteStats, path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "bin,timestamp,mu,sigma,n")?;
        for b in 0..st.len() {
            writeln!(
                w,
                "{b},{},{},{},{}",
                format_ts(st.bin_start(b)),
                opt_g(st.mu[b]),
                opt_g(st.sigma[b]),
                st.n[b]
            )?;
        }
        Ok(())
    })
}

pub fn write_trace_csv(t: &VolumeTensor, trace: &[(usize, u32)], path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "bin,timestamp,sector_id,volume")?;
        for (b, (s, v)) in trace.iter().enumerate() {
            writeln!(w, "{b},{},{},{v}", format_ts(t.bin_start(b)), t.sector_ids[*s])?;
        }
        Ok(())
    })
}
