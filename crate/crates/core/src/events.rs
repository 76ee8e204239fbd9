//! Event analytics: earthquake response profiles and timing, and storm
//! zone series with call/text divergence detection.

use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::fsio;
use crate::geodesy::great_circle_km;
use crate::geom::{Polygon, Pt};
use crate::stats;
use crate::tessellation::Sector;
use crate::volumes::{self, AnomalyField, MinuteStats, Resolution, VolumeTensor};

pub const DEFAULT_BIN_KM: f64 = 25.0;
pub const DEFAULT_THETA: f64 = 0.3;
pub const MIN_PROFILE_SECTORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuakeScenario {
    pub onset: NaiveDateTime,
    pub epicenter_lat: f64,
    pub epicenter_lon: f64,
}

impl QuakeScenario {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.epicenter_lat) || !(-180.0..=180.0).contains(&self.epicenter_lon) {
            return Err(Error::input(format!(
                "epicenter ({}, {}) is not a valid coordinate",
                self.epicenter_lat, self.epicenter_lon
            )));
        }
        Ok(())
    }
}

/// Great-circle distance (km) from the epicenter to each sector centroid.
pub fn sector_distances(ids: &[String], sectors: &[Sector], scenario: &QuakeScenario) -> Result<Vec<f64>> {
    let by_id: HashMap<&str, &Sector> = sectors.iter().map(|s| (s.sector_id.as_str(), s)).collect();
    ids.iter()
        .map(|id| {
            let s = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::input(format!("no geometry for sector {id}")))?;
            let (lat, lon) = s.centroid_latlon;
            Ok(great_circle_km(
                lat,
                lon,
                scenario.epicenter_lat,
                scenario.epicenter_lon,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBin {
    pub lo_km: f64,
    pub hi_km: f64,
    pub n: usize,
    pub median_km: Option<f64>,
    pub q10: Option<f64>,
    pub q50: Option<f64>,
    pub q90: Option<f64>,
}

impl ProfileBin {
    pub fn center_km(&self) -> f64 {
        0.5 * (self.lo_km + self.hi_km)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseProfile {
    pub bin_km: f64,
    pub bins: Vec<ProfileBin>,
}

/// Quantiles of the anomaly at `bin` in equal-width distance bins.
pub fn quake_profile(
    a: &AnomalyField,
    bin: usize,
    sectors: &[Sector],
    scenario: &QuakeScenario,
    bin_km: f64,
) -> Result<ResponseProfile> {
    scenario.validate()?;
    if !(bin_km > 0.0) {
        return Err(Error::input("distance bin width must be positive"));
    }
    if bin >= a.n_bins {
        return Err(Error::input(format!(
            "bin {bin} outside anomaly field of {} bins",
            a.n_bins
        )));
    }
    let dist = sector_distances(&a.sector_ids, sectors, scenario)?;
    let pts: Vec<(f64, f64)> = a.column(bin).into_iter().map(|(s, v)| (dist[s], v)).collect();
    if pts.len() < MIN_PROFILE_SECTORS {
        return Err(Error::input(format!(
            "profile needs defined anomalies for at least {MIN_PROFILE_SECTORS} sectors, got {}",
            pts.len()
        )));
    }
    let dmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let dmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let first = (dmin / bin_km).floor() as i64;
    let last = (dmax / bin_km).floor() as i64;
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); (last - first + 1) as usize];
    for (d, v) in pts {
        let i = ((d / bin_km).floor() as i64 - first) as usize;
        groups[i].0.push(d);
        groups[i].1.push(v);
    }
    let bins = groups
        .into_iter()
        .enumerate()
        .map(|(i, (d, v))| {
            let lo = (first + i as i64) as f64 * bin_km;
            ProfileBin {
                lo_km: lo,
                hi_km: lo + bin_km,
                n: v.len(),
                median_km: stats::quantile(&d, 0.5),
                q10: stats::quantile(&v, 0.1),
                q50: stats::quantile(&v, 0.5),
                q90: stats::quantile(&v, 0.9),
            }
        })
        .collect();
    Ok(ResponseProfile { bin_km, bins })
}

/// Single-bin anomaly field of window sums: counts summed over
/// `[start, start + len)` divided by the sums `lag` bins earlier.
pub fn window_anomaly(t: &VolumeTensor, start: usize, len: usize, lag: usize) -> Result<AnomalyField> {
    if len == 0 || start < lag || start + len > t.n_bins || lag == 0 {
        return Err(Error::input("window anomaly outside tensor span"));
    }
    let values = (0..t.n_sectors())
        .map(|s| {
            let row = t.row(s);
            let cur: u64 = row[start..start + len].iter().map(|&c| c as u64).sum();
            let prev: u64 = row[start - lag..start - lag + len].iter().map(|&c| c as u64).sum();
            volumes::ratio(cur, prev)
        })
        .collect();
    let mut a = AnomalyField::from_values(t.sector_ids.clone(), t.bin_start(start), t.resolution, 1, values)?;
    a.channel = t.channel;
    a.lag_bins = lag;
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResponseLabel {
    Low,
    Normal,
    High,
}

impl ResponseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseLabel::Low => "low",
            ResponseLabel::Normal => "normal",
            ResponseLabel::High => "high",
        }
    }
}

/// Label each defined sector at `bin` against the spatial mean ± one
/// standard deviation. Undefined cells get `None`.
pub fn classify_response(a: &AnomalyField, bin: usize) -> Result<Vec<Option<ResponseLabel>>> {
    if bin >= a.n_bins {
        return Err(Error::input(format!("bin {bin} outside anomaly field")));
    }
    let col = a.column(bin);
    if col.is_empty() {
        return Err(Error::input(format!("no defined anomalies at bin {bin}")));
    }
    let vals: Vec<f64> = col.iter().map(|c| c.1).collect();
    let (mu, sigma) = stats::mean_std(&vals);
    let mut out = vec![None; a.n_sectors()];
    for (s, v) in col {
        out[s] = Some(if sigma == 0.0 {
            ResponseLabel::Normal
        } else if v > mu + sigma {
            ResponseLabel::High
        } else if v < mu - sigma {
            ResponseLabel::Low
        } else {
            ResponseLabel::Normal
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConfig {
    /// Minutes before and after the onset examined.
    pub window_min: usize,
    pub onset_k: f64,
    pub recovery_k: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            window_min: 180,
            onset_k: 5.0,
            recovery_k: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuakeTiming {
    pub onset: Option<NaiveDateTime>,
    pub peak: Option<NaiveDateTime>,
    pub peak_value: Option<f64>,
    pub recovery: Option<NaiveDateTime>,
    pub decay_tau_min: Option<f64>,
    pub pre_mean: f64,
    pub pre_sigma: f64,
}

impl QuakeTiming {
    pub fn peak_offset_min(&self, scenario: &QuakeScenario) -> Option<i64> {
        self.peak.map(|p| (p - scenario.onset).num_minutes())
    }

    pub fn recovery_offset_min(&self, scenario: &QuakeScenario) -> Option<i64> {
        self.recovery.map(|p| (p - scenario.onset).num_minutes())
    }
}

/// Onset, peak, recovery and decay constant of a minute-resolution anomaly mean.
pub fn quake_timing(st: &MinuteStats, scenario: &QuakeScenario, cfg: &TimingConfig) -> Result<QuakeTiming> {
    if st.resolution != Resolution::Minute {
        return Err(Error::input("quake timing needs minute-resolution statistics"));
    }
    let m = (scenario.onset - st.t0).num_minutes();
    if m < 0 || m as usize >= st.len() {
        return Err(Error::input("quake onset outside the statistics span"));
    }
    let o = m as usize;
    if o < cfg.window_min || o + cfg.window_min > st.len() {
        return Err(Error::input(format!(
            "statistics must cover {} minutes either side of the onset",
            cfg.window_min
        )));
    }
    let pre: Vec<f64> = st.mu[o - cfg.window_min..o].iter().flatten().copied().collect();
    if pre.len() < 2 {
        return Err(Error::input("too few defined minutes before the onset"));
    }
    let (pre_mean, pre_sigma) = stats::mean_std(&pre);
    let post = o..o + cfg.window_min;
    let onset = post
        .clone()
        .find(|&b| matches!(st.mu[b], Some(v) if v > pre_mean + cfg.onset_k * pre_sigma))
        .map(|b| st.bin_start(b));
    let peak_bin = post.clone().filter_map(|b| st.mu[b].map(|v| (b, v))).fold(
        None,
        |best: Option<(usize, f64)>, (b, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((b, v)),
        },
    );
    let (mut recovery, mut tau) = (None, None);
    if let (Some((pb, _)), Some(_)) = (peak_bin, onset) {
        let thresh = pre_mean + cfg.recovery_k * pre_sigma;
        recovery = (pb + 1..st.len())
            .find(|&b| matches!(st.mu[b], Some(v) if v <= thresh))
            .map(|b| st.bin_start(b));
        tau = decay_tau(&st.mu, pb);
    }
    Ok(QuakeTiming {
        onset,
        peak: peak_bin.map(|(b, _)| st.bin_start(b)),
        peak_value: peak_bin.map(|(_, v)| v),
        recovery,
        decay_tau_min: tau,
        pre_mean,
        pre_sigma,
    })
}

/// Fit `log(mu − 1)` against time over the monotone decrease after `peak`.
fn decay_tau(mu: &[Option<f64>], peak: usize) -> Option<f64> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut prev = f64::INFINITY;
    for (b, v) in mu.iter().enumerate().skip(peak) {
        match v {
            Some(v) if *v < prev && *v > 1.0 => {
                x.push((b - peak) as f64);
                y.push((v - 1.0).ln());
                prev = *v;
            }
            _ => break,
        }
    }
    if x.len() < 3 {
        return None;
    }
    let fit = stats::linear_fit(&x, &y)?;
    (fit.slope < 0.0).then(|| -1.0 / fit.slope)
}

/// Named polygon in WGS84 longitude/latitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub zone_id: String,
    pub polygon: Polygon,
}

impl Zone {
    pub fn contains_latlon(&self, lat: f64, lon: f64) -> bool {
        self.polygon.contains(Pt::new(lon, lat))
    }
}

pub fn read_zones(path: &Path) -> Result<Vec<Zone>> {
    let mut rdr = fsio::csv_reader(path)?;
    fsio::expect_header(path, &mut rdr, &["zone_id", "wkt"])?;
    let mut out: Vec<Zone> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = fsio::csv_line(&rec);
        if rec.len() != 2 {
            return Err(Error::parse(path, line, "expected zone_id,wkt"));
        }
        let polygon = Polygon::from_wkt(&rec[1]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        if out.iter().any(|z| z.zone_id == rec[0]) {
            return Err(Error::parse(path, line, format!("duplicate zone id {}", &rec[0])));
        }
        out.push(Zone {
            zone_id: rec[0].to_string(),
            polygon,
        });
    }
    Ok(out)
}

pub fn write_zones(zones: &[Zone], path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "zone_id,wkt")?;
        for z in zones {
            writeln!(w, "{},\"{}\"", z.zone_id, z.polygon.to_wkt())?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSeries {
    pub zone_id: String,
    pub members: Vec<String>,
    pub t0: NaiveDateTime,
    pub resolution: Resolution,
    pub calls: Vec<u64>,
    pub texts: Vec<u64>,
    pub call_anomaly: Vec<Option<f64>>,
    pub text_anomaly: Vec<Option<f64>>,
    pub lag_bins: usize,
}

impl ZoneSeries {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn bin_start(&self, b: usize) -> NaiveDateTime {
        self.t0 + chrono::Duration::minutes((b * self.resolution.minutes()) as i64)
    }
}

fn lagged_ratios(x: &[u64], lag: usize) -> Vec<Option<f64>> {
    (0..x.len())
        .map(|b| {
            if b < lag {
                None
            } else {
                volumes::ratio(x[b], x[b - lag])
            }
        })
        .collect()
}

/// Per-zone sums of both channels, with membership by centroid
/// point-in-polygon, and week-lag anomaly ratios of the sums.
pub fn zone_series(
    calls: &VolumeTensor,
    texts: &VolumeTensor,
    sectors: &[Sector],
    zones: &[Zone],
) -> Result<Vec<ZoneSeries>> {
    if calls.sector_ids != texts.sector_ids || calls.n_bins != texts.n_bins || calls.t0 != texts.t0 {
        return Err(Error::input("calls and texts tensors have different shapes"));
    }
    let by_id: HashMap<&str, &Sector> = sectors.iter().map(|s| (s.sector_id.as_str(), s)).collect();
    let mut centroids = Vec::with_capacity(calls.n_sectors());
    for id in &calls.sector_ids {
        let s = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::input(format!("no geometry for sector {id}")))?;
        centroids.push(s.centroid_latlon);
    }
    let lag = calls.resolution.week_bins();
    let mut out = Vec::with_capacity(zones.len());
    for z in zones {
        let members: Vec<usize> = centroids
            .iter()
            .enumerate()
            .filter(|(_, (lat, lon))| z.contains_latlon(*lat, *lon))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            log::warn!("zone {} contains no sector centroid", z.zone_id);
        }
        let sum = |t: &VolumeTensor| {
            let mut acc = vec![0u64; t.n_bins];
            for &s in &members {
                for (a, &c) in acc.iter_mut().zip(t.row(s)) {
                    *a += c as u64;
                }
            }
            acc
        };
        let c = sum(calls);
        let x = sum(texts);
        let (ca, xa) = if members.is_empty() {
            (vec![None; c.len()], vec![None; x.len()])
        } else {
            (lagged_ratios(&c, lag), lagged_ratios(&x, lag))
        };
        out.push(ZoneSeries {
            zone_id: z.zone_id.clone(),
            members: members.iter().map(|&i| calls.sector_ids[i].clone()).collect(),
            t0: calls.t0,
            resolution: calls.resolution,
            calls: c,
            texts: x,
            call_anomaly: ca,
            text_anomaly: xa,
            lag_bins: lag,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub onset_bin: Option<usize>,
    pub call_slope: Option<f64>,
    pub text_slope: Option<f64>,
}

pub const SLOPE_SPAN_BINS: usize = 6;

fn anomaly_slope(a: &[Option<f64>], from: usize) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = (from..(from + SLOPE_SPAN_BINS).min(a.len()))
        .filter_map(|b| a[b].map(|v| ((b - from) as f64, v)))
        .unzip();
    stats::linear_fit(&x, &y).map(|f| f.slope)
}

/// First bin in `window` where the call anomaly drops below `1 − θ` while the
/// text anomaly stays at or above `1 − θ/2`; slopes are fitted over the
/// following six bins.
pub fn divergence_detect(z: &ZoneSeries, window: Range<usize>, theta: f64) -> Result<Divergence> {
    if window.len() < 12 {
        return Err(Error::input("divergence window needs at least 12 bins"));
    }
    if window.end > z.calls.len() {
        return Err(Error::input("divergence window outside the zone series"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::input(format!("divergence threshold {theta} outside (0, 1)")));
    }
    let onset = window.clone().find(|&b| match (z.call_anomaly[b], z.text_anomaly[b]) {
        (Some(c), Some(t)) => c < 1.0 - theta && t >= 1.0 - theta / 2.0,
        _ => false,
    });
    Ok(match onset {
        Some(b) => Divergence {
            onset_bin: Some(b),
            call_slope: anomaly_slope(&z.call_anomaly, b),
            text_slope: anomaly_slope(&z.text_anomaly, b),
        },
        None => Divergence {
            onset_bin: None,
            call_slope: None,
            text_slope: None,
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fsio::fmt_g6).unwrap_or_else(|| "NA".into())
}

fn opt_ts(v: Option<NaiveDateTime>) -> String {
    v.map(volumes::format_ts).unwrap_or_else(|| "NA".into())
}

pub fn write_profile_csv(p: &ResponseProfile, path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "bin_km,q10,q50,q90,n")?;
        for b in &p.bins {
            writeln!(
                w,
                "{},{},{},{},{}",
                fsio::fmt_g6(b.center_km()),
                opt(b.q10),
                opt(b.q50),
                opt(b.q90),
                b.n
            )?;
        }
        Ok(())
    })
}

pub fn write_timing_csv(rows: &[(&str, &QuakeTiming)], scenario: &QuakeScenario, path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(
            w,
            "channel,onset_detected,peak_minute,peak_offset_min,peak_value,recovery_minute,recovery_offset_min,decay_tau_min,pre_mean,pre_sigma"
        )?;
        for (ch, t) in rows {
            writeln!(
                w,
                "{ch},{},{},{},{},{},{},{},{},{}",
                opt_ts(t.onset),
                opt_ts(t.peak),
                t.peak_offset_min(scenario)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "NA".into()),
                opt(t.peak_value),
                opt_ts(t.recovery),
                t.recovery_offset_min(scenario)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "NA".into()),
                opt(t.decay_tau_min),
                fsio::fmt_g6(t.pre_mean),
                fsio::fmt_g6(t.pre_sigma)
            )?;
        }
        Ok(())
    })
}

pub fn write_zone_series_csv(series: &[ZoneSeries], path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "zone_id,bin,timestamp,calls,texts,call_anomaly,text_anomaly")?;
        for z in series {
            for b in 0..z.calls.len() {
                writeln!(
                    w,
                    "{},{b},{},{},{},{},{}",
                    z.zone_id,
                    volumes::format_ts(z.bin_start(b)),
                    z.calls[b],
                    z.texts[b],
                    opt(z.call_anomaly[b]),
                    opt(z.text_anomaly[b])
                )?;
            }
        }
        Ok(())
    })
}

pub fn write_detections_csv(rows: &[(&ZoneSeries, Divergence)], path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "zone_id,members,onset_timestamp,onset_hour,call_slope,text_slope")?;
        for (z, d) in rows {
            let ts = d.onset_bin.map(|b| z.bin_start(b));
            writeln!(
                w,
                "{},{},{},{},{},{}",
                z.zone_id,
                z.members.len(),
                opt_ts(ts),
                ts.map(|t| t.hour().to_string()).unwrap_or_else(|| "NA".into()),
                opt(d.call_slope),
                opt(d.text_slope)
            )?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::UtmPoint;
    use crate::volumes::Channel;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2011, 8, 23)
            .unwrap()
            .and_hms_opt(11, 0, 0)
            .unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    fn sector(id: &str, lat: f64, lon: f64) -> Sector {
        Sector {
            sector_id: id.into(),
            tower_id: id.into(),
            azimuth_deg: None,
            polygon: vec![],
            centroid_latlon: (lat, lon),
            centroid_utm: UtmPoint::new(0.0, 0.0),
            area_km2: 1.0,
            site: UtmPoint::new(0.0, 0.0),
        }
    }

    fn stats_from(mu: Vec<f64>) -> MinuteStats {
        let n = mu.len();
        MinuteStats {
            t0: t0(),
            resolution: Resolution::Minute,
            mu: mu.into_iter().map(Some).collect(),
            sigma: vec![Some(0.0); n],
            n: vec![10; n],
        }
    }

    fn scenario() -> QuakeScenario {
        QuakeScenario {
            onset: t0() + chrono::Duration::minutes(180),
            epicenter_lat: 37.936,
            epicenter_lon: -77.933,
        }
    }

    #[test]
    fn flat_anomaly_has_no_onset() {
        let st = stats_from(vec![1.0; 400]);
        let t = quake_timing(&st, &scenario(), &TimingConfig::default()).unwrap();
        assert_eq!(t.onset, None);
        assert_eq!(t.recovery, None);
    }

    #[test]
    fn recovers_injected_decay() {
        let mu: Vec<f64> = (0..600)
            .map(|m| {
                if m < 180 {
                    1.0 + if m % 2 == 0 { 0.01 } else { -0.01 }
                } else {
                    1.0 + 3.0 * (-((m - 180) as f64) / 25.0).exp()
                }
            })
            .collect();
        let sc = scenario();
        let t = quake_timing(&stats_from(mu), &sc, &TimingConfig::default()).unwrap();
        assert_eq!(t.onset, Some(sc.onset));
        assert_eq!(t.peak_offset_min(&sc), Some(0));
        let tau = t.decay_tau_min.unwrap();
        assert!((tau / 25.0 - 1.0).abs() < 0.02, "{tau}");
        assert!(t.recovery.is_some());
    }

    #[test]
    fn classify_examples() {
        let a = AnomalyField::from_values(
            ids(5),
            t0(),
            Resolution::Minute,
            1,
            vec![Some(1.0), Some(1.0), Some(1.0), Some(1.0), Some(10.0)],
        )
        .unwrap();
        // mu = 2.8, sigma = 3.6: the outlier clears mu + sigma = 6.4.
        let l = classify_response(&a, 0).unwrap();
        assert!(l[..4].iter().all(|x| *x == Some(ResponseLabel::Normal)));
        assert_eq!(l[4], Some(ResponseLabel::High));
        let c = AnomalyField::from_values(ids(3), t0(), Resolution::Minute, 1, vec![Some(2.0); 3]).unwrap();
        assert!(classify_response(&c, 0)
            .unwrap()
            .iter()
            .all(|x| *x == Some(ResponseLabel::Normal)));
        let d = AnomalyField::from_values(
            ids(4),
            t0(),
            Resolution::Minute,
            1,
            vec![Some(0.0), Some(5.0), Some(5.0), Some(10.0)],
        )
        .unwrap();
        let l = classify_response(&d, 0).unwrap();
        assert_eq!(l[0], Some(ResponseLabel::Low));
        assert_eq!(l[3], Some(ResponseLabel::High));
    }

    #[test]
    fn uniform_profile_is_flat() {
        let n = 30;
        let secs: Vec<Sector> = ids(n)
            .iter()
            .enumerate()
            .map(|(i, id)| sector(id, 40.0 + i as f64 * 0.05, -74.0))
            .collect();
        let a = AnomalyField::from_values(ids(n), t0(), Resolution::Minute, 1, vec![Some(1.0); n]).unwrap();
        let p = quake_profile(&a, 0, &secs, &scenario(), DEFAULT_BIN_KM).unwrap();
        assert_eq!(p.bins.iter().map(|b| b.n).sum::<usize>(), n);
        for b in p.bins.iter().filter(|b| b.n > 0) {
            assert_eq!((b.q10, b.q50, b.q90), (Some(1.0), Some(1.0), Some(1.0)));
        }
        let few = AnomalyField::from_values(ids(5), t0(), Resolution::Minute, 1, vec![Some(1.0); 5]).unwrap();
        assert!(quake_profile(&few, 0, &secs, &scenario(), DEFAULT_BIN_KM).is_err());
    }

    fn zone(id: &str, lon0: f64, lat0: f64, lon1: f64, lat1: f64) -> Zone {
        Zone {
            zone_id: id.into(),
            polygon: Polygon::new(vec![
                Pt::new(lon0, lat0),
                Pt::new(lon1, lat0),
                Pt::new(lon1, lat1),
                Pt::new(lon0, lat1),
            ]),
        }
    }

    fn hourly(rows: &[Vec<u32>], ch: Channel) -> VolumeTensor {
        let ids = (0..rows.len()).map(|i| format!("s{i:02}")).collect();
        let t0 = NaiveDate::from_ymd_opt(2011, 8, 20)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let mut t = VolumeTensor::zeros(ch, Resolution::Hour, t0, ids, rows[0].len()).unwrap();
        for (s, r) in rows.iter().enumerate() {
            t.row_mut(s).copy_from_slice(r);
        }
        t
    }

    #[test]
    fn zones_partition_sums() {
        let rows: Vec<Vec<u32>> = (0..4)
            .map(|s| (0..200).map(|b| (s * 7 + b % 13) as u32).collect())
            .collect();
        let calls = hourly(&rows, Channel::Calls);
        let texts = hourly(&rows, Channel::Texts);
        let secs = vec![
            sector("s00", 40.1, -74.5),
            sector("s01", 40.9, -74.5),
            sector("s02", 40.1, -73.5),
            sector("s03", 40.9, -73.5),
        ];
        let zs = [
            zone("south", -75.0, 39.0, -73.0, 40.5),
            zone("north", -75.0, 40.5, -73.0, 42.0),
            zone("empty", 0.0, 0.0, 1.0, 1.0),
        ];
        let out = zone_series(&calls, &texts, &secs, &zs).unwrap();
        let total = calls.spatial_sum();
        for b in 0..200 {
            assert_eq!(out[0].calls[b] + out[1].calls[b], total[b]);
        }
        assert!(out[2].is_empty());
        assert!(out[2].call_anomaly.iter().all(|v| v.is_none()));
        let whole = zone_series(&calls, &texts, &secs, &[zone("all", -80.0, 35.0, -70.0, 45.0)]).unwrap();
        assert_eq!(whole[0].calls, total);
    }

    fn series(call: Vec<Option<f64>>, text: Vec<Option<f64>>) -> ZoneSeries {
        let n = call.len();
        ZoneSeries {
            zone_id: "z".into(),
            members: vec!["a".into()],
            t0: t0(),
            resolution: Resolution::Hour,
            calls: vec![0; n],
            texts: vec![0; n],
            call_anomaly: call,
            text_anomaly: text,
            lag_bins: 168,
        }
    }

    #[test]
    fn divergence_examples() {
        let flat = series(vec![Some(1.0); 24], vec![Some(1.0); 24]);
        assert_eq!(divergence_detect(&flat, 0..24, 0.3).unwrap().onset_bin, None);
        // Ramp 1 -> 0.4 over 6 bins from bin 5; crosses 0.7 at bin 8.
        let call: Vec<Option<f64>> = (0..24)
            .map(|b| {
                Some(if b < 5 {
                    1.0
                } else if b <= 11 {
                    1.0 - 0.1 * (b - 5) as f64
                } else {
                    0.4
                })
            })
            .collect();
        let d = divergence_detect(&series(call.clone(), vec![Some(1.0); 24]), 0..24, 0.3).unwrap();
        let b = d.onset_bin.unwrap();
        assert!((b as i64 - 8).abs() <= 1, "{b}");
        assert!(d.call_slope.unwrap() < 0.0);
        assert_eq!(d.text_slope, Some(0.0));
        assert_eq!(
            divergence_detect(&series(call.clone(), call), 0..24, 0.3)
                .unwrap()
                .onset_bin,
            None
        );
        assert!(divergence_detect(&flat, 0..6, 0.3).is_err());
    }

    #[test]
    fn zones_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        let zs = vec![zone("a", -74.0, 40.0, -73.5, 40.5), zone("b", -73.5, 40.0, -73.0, 40.5)];
        write_zones(&zs, &p).unwrap();
        assert_eq!(read_zones(&p).unwrap(), zs);
    }
}
