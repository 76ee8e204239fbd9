//! Seeded synthetic layouts and call/text counts with injected
//! earthquake and hurricane signatures.
//!
//! Randomness in counts is keyed by (seed, sector, bin, channel), so any
//! sub-window regenerates identically regardless of thread count.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::events::{QuakeScenario, Zone};
use crate::fsio;
use crate::geodesy::great_circle_km;
use crate::geom::{Polygon, Pt};
use crate::tessellation::{build_sectors, AntennaGroup, StudyArea, Tessellation, TowerSite};
use crate::volumes::{self, Channel, Resolution, VolumeTensor, MINUTES_PER_WEEK};

pub const DEFAULT_SPEC: &str = include_str!("../data/default.spec");
pub const MAX_RATE: f64 = 1e9;
const MINUTES_PER_DAY: usize = 1440;
const KM_PER_DEG: f64 = 111.32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub hour: f64,
    pub amplitude: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuakeInject {
    pub onset: NaiveDateTime,
    pub arrival_min: i64,
    pub epicenter_lat: f64,
    pub epicenter_lon: f64,
    pub a_near: f64,
    pub d_near_km: f64,
    pub a_far: f64,
    pub d_far_km: f64,
    pub call_rise_min: f64,
    pub call_peak_gain: f64,
    pub call_tau_min: f64,
    pub text_onset_gain: f64,
    pub text_rise_min: f64,
    pub text_peak_gain: f64,
    pub text_tau_min: f64,
    pub high_fraction: f64,
    pub high_lo_km: f64,
    pub high_lo_median: f64,
    pub high_hi_km: f64,
    pub high_hi_median: f64,
    pub high_sigma: f64,
    pub text_high_exponent: f64,
    pub cutoff_km: f64,
    pub window_h: f64,
}

impl QuakeInject {
    pub fn arrival(&self) -> NaiveDateTime {
        self.onset + Duration::minutes(self.arrival_min)
    }

    pub fn scenario(&self) -> QuakeScenario {
        QuakeScenario {
            onset: self.onset,
            epicenter_lat: self.epicenter_lat,
            epicenter_lon: self.epicenter_lon,
        }
    }

    /// Low-response multiplier at the arrival minute; affine in distance, floored at 1.
    pub fn a_of(&self, d_km: f64) -> f64 {
        let t = (d_km - self.d_near_km) / (self.d_far_km - self.d_near_km);
        (self.a_near + t * (self.a_far - self.a_near)).max(1.0)
    }

    fn high_median(&self, d_km: f64) -> f64 {
        let t = ((d_km - self.high_lo_km) / (self.high_hi_km - self.high_lo_km)).clamp(0.0, 1.0);
        self.high_lo_median + t * (self.high_hi_median - self.high_lo_median)
    }

    /// Multiplier `tau` minutes after arrival for a sector with low-response
    /// amplitude `a` and high-response factor `h`.
    pub fn multiplier(&self, ch: Channel, a: f64, h: f64, tau: f64) -> f64 {
        if tau < 0.0 || tau >= self.window_h * 60.0 {
            return 1.0;
        }
        let (g0, rise, peak, decay, hh) = match ch {
            Channel::Calls => (1.0, self.call_rise_min, self.call_peak_gain, self.call_tau_min, h),
            Channel::Texts => (
                self.text_onset_gain,
                self.text_rise_min,
                self.text_peak_gain,
                self.text_tau_min,
                h.powf(self.text_high_exponent),
            ),
        };
        let e = if tau <= rise {
            g0 + (peak - g0) * tau / rise
        } else {
            peak * (-(tau - rise) / decay).exp()
        };
        let grow = 1.0 + (hh - 1.0) * (tau / rise).min(1.0);
        1.0 + (a - 1.0) * e * grow
    }

    fn validate(&self) -> Result<()> {
        let pos = [
            ("quake_call_rise_min", self.call_rise_min),
            ("quake_call_tau_min", self.call_tau_min),
            ("quake_text_rise_min", self.text_rise_min),
            ("quake_text_tau_min", self.text_tau_min),
            ("quake_window_h", self.window_h),
            ("quake_high_lo_median", self.high_lo_median),
            ("quake_high_hi_median", self.high_hi_median),
        ];
        for (k, v) in pos {
            if !(v > 0.0) {
                return Err(Error::config(format!("{k} must be positive")));
            }
        }
        if self.a_near < 1.0 || self.a_far < 1.0 {
            return Err(Error::config("quake amplitudes must be >= 1 at onset"));
        }
        if self.d_far_km <= self.d_near_km || self.high_hi_km <= self.high_lo_km {
            return Err(Error::config("quake distance anchors must increase"));
        }
        if !(0.0..=1.0).contains(&self.high_fraction) || self.high_sigma < 0.0 {
            return Err(Error::config("quake high-response fraction or sigma out of range"));
        }
        if self.text_onset_gain < 0.0 || self.call_peak_gain < 1.0 || self.text_peak_gain < 0.0 {
            return Err(Error::config("quake gains out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormInject {
    pub day: NaiveDate,
    pub landfall: NaiveDateTime,
    pub start_earliest_h: f64,
    pub start_latest_h: f64,
    pub ramp_min: f64,
    pub depth: f64,
    pub recovery_start_h: f64,
    pub recovery_end_h: f64,
    pub text_surge: f64,
    pub surge_start_h: f64,
    pub field_mean: f64,
    pub field_sigma: f64,
    pub zones: usize,
    pub coast_south_km: (f64, f64),
    pub control_north_km: f64,
    pub anomalous_zone: Option<String>,
    pub anomalous_gain: f64,
}

impl StormInject {
    fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0 && self.depth <= 1.0) {
            return Err(Error::config("storm_depth must be in (0, 1]"));
        }
        if self.text_surge < 1.0 {
            return Err(Error::config("storm_text_surge must be >= 1"));
        }
        if !(self.start_earliest_h <= self.start_latest_h) || !(self.ramp_min > 0.0) {
            return Err(Error::config("storm start window or ramp invalid"));
        }
        if !(self.recovery_start_h < self.recovery_end_h) {
            return Err(Error::config("storm recovery must end after it starts"));
        }
        if self.zones == 0 || !(self.coast_south_km.0 < self.coast_south_km.1) {
            return Err(Error::config("storm coastal band invalid"));
        }
        if !(self.field_mean > 0.0) || self.field_sigma < 0.0 || self.anomalous_gain < 0.0 {
            return Err(Error::config("storm field parameters invalid"));
        }
        Ok(())
    }

    pub fn day_start(&self) -> NaiveDateTime {
        self.day.and_hms_opt(0, 0, 0).expect("midnight")
    }

    pub fn zone_id(i: usize) -> String {
        format!("coast{}", i + 1)
    }
}

pub const CONTROL_ZONE: &str = "control";

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub start: NaiveDateTime,
    pub days: usize,
    pub resolution: Resolution,
    pub deterministic: bool,
    pub n_towers: usize,
    pub azimuths_per_tower: usize,
    pub area: StudyArea,
    pub epsilon_m: f64,
    pub cluster_fraction: f64,
    pub cluster_sigma_km: f64,
    pub min_tower_spacing_m: f64,
    pub density_mu_dex: f64,
    pub density_peak_dex: f64,
    pub density_scale_km: f64,
    pub density_sigma_dex: f64,
    pub gamma: f64,
    pub base_rate: f64,
    pub scatter_sigma_dex: f64,
    pub weekend_sigma_dex: f64,
    pub flat_profile: bool,
    pub call_floor: f64,
    pub call_weekday_bumps: Vec<Bump>,
    pub call_weekend_bumps: Vec<Bump>,
    pub text_call_ratio: f64,
    pub text_lag_h: f64,
    pub text_fundamental_gain: f64,
    pub text_bump_kappa: f64,
    pub weekly_weights: [f64; 7],
    pub quake: Option<QuakeInject>,
    pub storm: Option<StormInject>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        parse_spec(DEFAULT_SPEC).expect("embedded default spec is valid")
    }
}

fn parse_bumps(v: &str) -> std::result::Result<Vec<Bump>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|b| {
            let p: Vec<&str> = b.split(':').map(str::trim).collect();
            if p.len() != 3 {
                return Err(format!("bump {b:?} is not hour:amplitude:kappa"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number {s:?}"));
            Ok(Bump {
                hour: num(p[0])?,
                amplitude: num(p[1])?,
                kappa: num(p[2])?,
            })
        })
        .collect()
}

fn fmt_bumps(b: &[Bump]) -> String {
    b.iter()
        .map(|b| format!("{}:{}:{}", b.hour, b.amplitude, b.kappa))
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("bad value {v:?}"))
}

fn parse_date(v: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| format!("bad date {v:?} (YYYY-MM-DD)"))
}

fn parse_time(v: &str) -> std::result::Result<NaiveDateTime, String> {
    volumes::parse_ts(v).map_err(|e| e.to_string())
}

/// Raw key/value view used while parsing; quake and storm fields are kept
/// even when the blocks are disabled so the text round-trips.
#[derive(Debug, Clone)]
struct Raw {
    spec: GeneratorSpec,
    quake_on: bool,
    storm_on: bool,
    quake: QuakeInject,
    storm: StormInject,
}

impl Raw {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.spec;
        let q = &mut self.quake;
        let st = &mut self.storm;
        match key {
            "seed" => s.seed = num(v)?,
            "start" => s.start = parse_time(v)?,
            "days" => s.days = num(v)?,
            "resolution" => s.resolution = v.parse().map_err(|e: Error| e.to_string())?,
            "deterministic" => s.deterministic = parse_bool(v)?,
            "n_towers" => s.n_towers = num(v)?,
            "azimuths_per_tower" => s.azimuths_per_tower = num(v)?,
            "center_lat" => s.area.center_lat = num(v)?,
            "center_lon" => s.area.center_lon = num(v)?,
            "radius_km" => s.area.radius_km = num(v)?,
            "epsilon_m" => s.epsilon_m = num(v)?,
            "cluster_fraction" => s.cluster_fraction = num(v)?,
            "cluster_sigma_km" => s.cluster_sigma_km = num(v)?,
            "min_tower_spacing_m" => s.min_tower_spacing_m = num(v)?,
            "density_mu_dex" => s.density_mu_dex = num(v)?,
            "density_peak_dex" => s.density_peak_dex = num(v)?,
            "density_scale_km" => s.density_scale_km = num(v)?,
            "density_sigma_dex" => s.density_sigma_dex = num(v)?,
            "gamma" => s.gamma = num(v)?,
            "base_rate" => s.base_rate = num(v)?,
            "scatter_sigma_dex" => s.scatter_sigma_dex = num(v)?,
            "weekend_sigma_dex" => s.weekend_sigma_dex = num(v)?,
            "flat_profile" => s.flat_profile = parse_bool(v)?,
            "call_floor" => s.call_floor = num(v)?,
            "call_weekday_bumps" => s.call_weekday_bumps = parse_bumps(v)?,
            "call_weekend_bumps" => s.call_weekend_bumps = parse_bumps(v)?,
            "text_call_ratio" => s.text_call_ratio = num(v)?,
            "text_lag_h" => s.text_lag_h = num(v)?,
            "text_fundamental_gain" => s.text_fundamental_gain = num(v)?,
            "text_bump_kappa" => s.text_bump_kappa = num(v)?,
            "weekly_weights" => {
                let w: Vec<f64> = v
                    .split(',')
                    .map(|x| num(x.trim()))
                    .collect::<std::result::Result<_, _>>()?;
                s.weekly_weights = w.try_into().map_err(|_| "weekly_weights needs 7 values".to_string())?;
            }
            "quake" => self.quake_on = parse_bool(v)?,
            "quake_onset" => q.onset = parse_time(v)?,
            "quake_arrival_min" => q.arrival_min = num(v)?,
            "epicenter_lat" => q.epicenter_lat = num(v)?,
            "epicenter_lon" => q.epicenter_lon = num(v)?,
            "quake_a_near" => q.a_near = num(v)?,
            "quake_d_near_km" => q.d_near_km = num(v)?,
            "quake_a_far" => q.a_far = num(v)?,
            "quake_d_far_km" => q.d_far_km = num(v)?,
            "quake_call_rise_min" => q.call_rise_min = num(v)?,
            "quake_call_peak_gain" => q.call_peak_gain = num(v)?,
            "quake_call_tau_min" => q.call_tau_min = num(v)?,
            "quake_text_onset_gain" => q.text_onset_gain = num(v)?,
            "quake_text_rise_min" => q.text_rise_min = num(v)?,
            "quake_text_peak_gain" => q.text_peak_gain = num(v)?,
            "quake_text_tau_min" => q.text_tau_min = num(v)?,
            "quake_high_fraction" => q.high_fraction = num(v)?,
            "quake_high_lo_km" => q.high_lo_km = num(v)?,
            "quake_high_lo_median" => q.high_lo_median = num(v)?,
            "quake_high_hi_km" => q.high_hi_km = num(v)?,
            "quake_high_hi_median" => q.high_hi_median = num(v)?,
            "quake_high_sigma" => q.high_sigma = num(v)?,
            "quake_text_high_exponent" => q.text_high_exponent = num(v)?,
            "quake_cutoff_km" => q.cutoff_km = num(v)?,
            "quake_window_h" => q.window_h = num(v)?,
            "storm" => self.storm_on = parse_bool(v)?,
            "storm_day" => st.day = parse_date(v)?,
            "storm_landfall" => st.landfall = parse_time(v)?,
            "storm_start_earliest_h" => st.start_earliest_h = num(v)?,
            "storm_start_latest_h" => st.start_latest_h = num(v)?,
            "storm_ramp_min" => st.ramp_min = num(v)?,
            "storm_depth" => st.depth = num(v)?,
            "storm_recovery_start_h" => st.recovery_start_h = num(v)?,
            "storm_recovery_end_h" => st.recovery_end_h = num(v)?,
            "storm_text_surge" => st.text_surge = num(v)?,
            "storm_surge_start_h" => st.surge_start_h = num(v)?,
            "storm_field_mean" => st.field_mean = num(v)?,
            "storm_field_sigma" => st.field_sigma = num(v)?,
            "storm_zones" => st.zones = num(v)?,
            "storm_coast_south_km" => {
                let (a, b) = v.split_once(':').ok_or("expected near_km:far_km")?;
                st.coast_south_km = (num(a.trim())?, num(b.trim())?);
            }
            "storm_control_north_km" => st.control_north_km = num(v)?,
            "storm_anomalous_zone" => st.anomalous_zone = (v != "none").then(|| v.to_string()),
            "storm_anomalous_gain" => st.anomalous_gain = num(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    fn finish(self) -> GeneratorSpec {
        let mut s = self.spec;
        s.quake = self.quake_on.then_some(self.quake);
        s.storm = self.storm_on.then_some(self.storm);
        s
    }
}

fn blank_raw() -> Raw {
    let t = NaiveDate::from_ymd_opt(2011, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    Raw {
        spec: GeneratorSpec {
            seed: 0,
            start: t,
            days: 0,
            resolution: Resolution::Hour,
            deterministic: false,
            n_towers: 0,
            azimuths_per_tower: 0,
            area: StudyArea::default(),
            epsilon_m: 0.0,
            cluster_fraction: 0.0,
            cluster_sigma_km: 0.0,
            min_tower_spacing_m: 0.0,
            density_mu_dex: 0.0,
            density_peak_dex: 0.0,
            density_scale_km: 0.0,
            density_sigma_dex: 0.0,
            gamma: 0.0,
            base_rate: 0.0,
            scatter_sigma_dex: 0.0,
            weekend_sigma_dex: 0.0,
            flat_profile: false,
            call_floor: 0.0,
            call_weekday_bumps: vec![],
            call_weekend_bumps: vec![],
            text_call_ratio: 0.0,
            text_lag_h: 0.0,
            text_fundamental_gain: 0.0,
            text_bump_kappa: 0.0,
            weekly_weights: [1.0; 7],
            quake: None,
            storm: None,
        },
        quake_on: false,
        storm_on: false,
        quake: QuakeInject {
            onset: t,
            arrival_min: 0,
            epicenter_lat: 0.0,
            epicenter_lon: 0.0,
            a_near: 1.0,
            d_near_km: 0.0,
            a_far: 1.0,
            d_far_km: 1.0,
            call_rise_min: 1.0,
            call_peak_gain: 1.0,
            call_tau_min: 1.0,
            text_onset_gain: 1.0,
            text_rise_min: 1.0,
            text_peak_gain: 1.0,
            text_tau_min: 1.0,
            high_fraction: 0.0,
            high_lo_km: 0.0,
            high_lo_median: 1.0,
            high_hi_km: 1.0,
            high_hi_median: 1.0,
            high_sigma: 0.0,
            text_high_exponent: 1.0,
            cutoff_km: 0.0,
            window_h: 1.0,
        },
        storm: StormInject {
            day: t.date(),
            landfall: t,
            start_earliest_h: 0.0,
            start_latest_h: 0.0,
            ramp_min: 1.0,
            depth: 1.0,
            recovery_start_h: 0.0,
            recovery_end_h: 1.0,
            text_surge: 1.0,
            surge_start_h: 0.0,
            field_mean: 1.0,
            field_sigma: 0.0,
            zones: 1,
            coast_south_km: (0.0, 1.0),
            control_north_km: 0.0,
            anomalous_zone: None,
            anomalous_gain: 1.0,
        },
    }
}

fn raw_from(spec: &GeneratorSpec) -> Raw {
    let mut r = blank_raw();
    r.quake_on = spec.quake.is_some();
    r.storm_on = spec.storm.is_some();
    if let Some(q) = &spec.quake {
        r.quake = q.clone();
    }
    if let Some(s) = &spec.storm {
        r.storm = s.clone();
    }
    r.spec = spec.clone();
    r
}

fn apply_lines(mut raw: Raw, text: &str, require_all: bool) -> Result<GeneratorSpec> {
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::config(format!("spec line {line_no}: expected key = value")))?;
        let (k, v) = (k.trim(), v.trim());
        if !seen.insert(k.to_string()) {
            return Err(Error::config(format!("spec line {line_no}: duplicate key {k:?}")));
        }
        raw.set(k, v)
            .map_err(|e| Error::config(format!("spec line {line_no}: {k}: {e}")))?;
    }
    if require_all {
        let all = spec_keys();
        let missing: Vec<&str> = all.iter().copied().filter(|k| !seen.contains(*k)).collect();
        if !missing.is_empty() {
            return Err(Error::config(format!("spec is missing keys: {}", missing.join(", "))));
        }
    }
    let spec = raw.finish();
    spec.validate()?;
    Ok(spec)
}

/// Parse a complete spec text; every key must be present.
pub fn parse_spec(text: &str) -> Result<GeneratorSpec> {
    apply_lines(blank_raw(), text, true)
}

/// Apply `key = value` overrides on top of `base`.
pub fn apply_overrides(base: &GeneratorSpec, text: &str) -> Result<GeneratorSpec> {
    apply_lines(raw_from(base), text, false)
}

pub fn read_spec(path: &Path) -> Result<GeneratorSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    apply_overrides(&GeneratorSpec::default(), &text)
}

fn spec_keys() -> Vec<&'static str> {
    DEFAULT_SPEC
        .lines()
        .filter_map(|l| {
            let b = l.split('#').next()?.trim();
            b.split_once('=').map(|(k, _)| k.trim())
        })
        .collect()
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_towers < 3 || self.azimuths_per_tower == 0 || self.azimuths_per_tower > 12 {
            return Err(Error::config("need at least 3 towers and 1..=12 azimuths per tower"));
        }
        if self.days == 0 {
            return Err(Error::config("span must be at least one day"));
        }
        if !(self.area.radius_km > 0.0) || !(self.epsilon_m > 0.0) {
            return Err(Error::config("radius_km and epsilon_m must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cluster_fraction) || !(self.cluster_sigma_km > 0.0) {
            return Err(Error::config("cluster parameters out of range"));
        }
        if self.min_tower_spacing_m <= 2.0 * self.epsilon_m {
            return Err(Error::config("min_tower_spacing_m must exceed twice epsilon_m"));
        }
        if !(self.base_rate >= 0.0) || !(self.density_scale_km > 0.0) {
            return Err(Error::config(
                "base_rate and density_scale_km must be non-negative/positive",
            ));
        }
        for (k, v) in [
            ("density_sigma_dex", self.density_sigma_dex),
            ("scatter_sigma_dex", self.scatter_sigma_dex),
            ("weekend_sigma_dex", self.weekend_sigma_dex),
            ("call_floor", self.call_floor),
            ("text_call_ratio", self.text_call_ratio),
            ("text_fundamental_gain", self.text_fundamental_gain),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("{k} must be non-negative")));
            }
        }
        if self.weekly_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::config("weekly weights must be positive"));
        }
        let bumps = self.call_weekday_bumps.iter().chain(&self.call_weekend_bumps);
        for b in bumps {
            if !(b.amplitude >= 0.0) || !(b.kappa > 0.0) {
                return Err(Error::config("bump amplitudes must be >= 0 and kappa > 0"));
            }
        }
        if !(self.text_bump_kappa > 0.0) {
            return Err(Error::config("text_bump_kappa must be positive"));
        }
        if let Some(q) = &self.quake {
            q.validate()?;
        }
        if let Some(s) = &self.storm {
            s.validate()?;
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::days(self.days as i64)
    }

    pub fn n_bins(&self) -> usize {
        self.days * MINUTES_PER_DAY / self.resolution.minutes()
    }

    /// Full spec text; `parse_spec` of the result reproduces `self`.
    pub fn to_spec_text(&self) -> String {
        let r = raw_from(self);
        let (q, st) = (&r.quake, &r.storm);
        let w = self.weekly_weights.map(|v| v.to_string()).join(", ");
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("start = {}", volumes::format_ts(self.start)),
            format!("days = {}", self.days),
            format!("resolution = {}", self.resolution),
            format!("deterministic = {}", self.deterministic),
            format!("n_towers = {}", self.n_towers),
            format!("azimuths_per_tower = {}", self.azimuths_per_tower),
            format!("center_lat = {}", self.area.center_lat),
            format!("center_lon = {}", self.area.center_lon),
            format!("radius_km = {}", self.area.radius_km),
            format!("epsilon_m = {}", self.epsilon_m),
            format!("cluster_fraction = {}", self.cluster_fraction),
            format!("cluster_sigma_km = {}", self.cluster_sigma_km),
            format!("min_tower_spacing_m = {}", self.min_tower_spacing_m),
            format!("density_mu_dex = {}", self.density_mu_dex),
            format!("density_peak_dex = {}", self.density_peak_dex),
            format!("density_scale_km = {}", self.density_scale_km),
            format!("density_sigma_dex = {}", self.density_sigma_dex),
            format!("gamma = {}", self.gamma),
            format!("base_rate = {}", self.base_rate),
            format!("scatter_sigma_dex = {}", self.scatter_sigma_dex),
            format!("weekend_sigma_dex = {}", self.weekend_sigma_dex),
            format!("flat_profile = {}", self.flat_profile),
            format!("call_floor = {}", self.call_floor),
            format!("call_weekday_bumps = {}", fmt_bumps(&self.call_weekday_bumps)),
            format!("call_weekend_bumps = {}", fmt_bumps(&self.call_weekend_bumps)),
            format!("text_call_ratio = {}", self.text_call_ratio),
            format!("text_lag_h = {}", self.text_lag_h),
            format!("text_fundamental_gain = {}", self.text_fundamental_gain),
            format!("text_bump_kappa = {}", self.text_bump_kappa),
            format!("weekly_weights = {w}"),
            format!("quake = {}", r.quake_on),
            format!("quake_onset = {}", volumes::format_ts(q.onset)),
            format!("quake_arrival_min = {}", q.arrival_min),
            format!("epicenter_lat = {}", q.epicenter_lat),
            format!("epicenter_lon = {}", q.epicenter_lon),
            format!("quake_a_near = {}", q.a_near),
            format!("quake_d_near_km = {}", q.d_near_km),
            format!("quake_a_far = {}", q.a_far),
            format!("quake_d_far_km = {}", q.d_far_km),
            format!("quake_call_rise_min = {}", q.call_rise_min),
            format!("quake_call_peak_gain = {}", q.call_peak_gain),
            format!("quake_call_tau_min = {}", q.call_tau_min),
            format!("quake_text_onset_gain = {}", q.text_onset_gain),
            format!("quake_text_rise_min = {}", q.text_rise_min),
            format!("quake_text_peak_gain = {}", q.text_peak_gain),
            format!("quake_text_tau_min = {}", q.text_tau_min),
            format!("quake_high_fraction = {}", q.high_fraction),
            format!("quake_high_lo_km = {}", q.high_lo_km),
            format!("quake_high_lo_median = {}", q.high_lo_median),
            format!("quake_high_hi_km = {}", q.high_hi_km),
            format!("quake_high_hi_median = {}", q.high_hi_median),
            format!("quake_high_sigma = {}", q.high_sigma),
            format!("quake_text_high_exponent = {}", q.text_high_exponent),
            format!("quake_cutoff_km = {}", q.cutoff_km),
            format!("quake_window_h = {}", q.window_h),
            format!("storm = {}", r.storm_on),
            format!("storm_day = {}", st.day.format("%Y-%m-%d")),
            format!("storm_landfall = {}", volumes::format_ts(st.landfall)),
            format!("storm_start_earliest_h = {}", st.start_earliest_h),
            format!("storm_start_latest_h = {}", st.start_latest_h),
            format!("storm_ramp_min = {}", st.ramp_min),
            format!("storm_depth = {}", st.depth),
            format!("storm_recovery_start_h = {}", st.recovery_start_h),
            format!("storm_recovery_end_h = {}", st.recovery_end_h),
            format!("storm_text_surge = {}", st.text_surge),
            format!("storm_surge_start_h = {}", st.surge_start_h),
            format!("storm_field_mean = {}", st.field_mean),
            format!("storm_field_sigma = {}", st.field_sigma),
            format!("storm_zones = {}", st.zones),
            format!("storm_coast_south_km = {}:{}", st.coast_south_km.0, st.coast_south_km.1),
            format!("storm_control_north_km = {}", st.control_north_km),
            format!(
                "storm_anomalous_zone = {}",
                st.anomalous_zone.as_deref().unwrap_or("none")
            ),
            format!("storm_anomalous_gain = {}", st.anomalous_gain),
        ];
        lines.push(String::new());
        lines.join("\n")
    }
}

// Key derivation for counter-based randomness.

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn key(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |h, &p| mix64(h ^ p))
}

fn unit(k: u64) -> f64 {
    (mix64(k) >> 11) as f64 / (1u64 << 53) as f64
}

fn keyed_rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(parts))
}

fn keyed_normal(parts: &[u64]) -> f64 {
    keyed_rng(parts).sample(StandardNormal)
}

const TAG_LAYOUT: u64 = 1;
const TAG_DENSITY: u64 = 2;
const TAG_SCATTER: u64 = 3;
const TAG_WEEKEND: u64 = 4;
const TAG_HIGH: u64 = 5;
const TAG_STORM_START: u64 = 6;
const TAG_STORM_FIELD: u64 = 7;
const TAG_COUNT: u64 = 8;
const TAG_DITHER: u64 = 9;

/// Minutes since 1970-01-01 00:00.
pub fn abs_minute(ts: NaiveDateTime) -> i64 {
    (ts - NaiveDate::from_ymd_opt(1970, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap())
    .num_minutes()
}

/// Minute of the week with Monday 00:00 as zero.
pub fn minute_of_week(abs_min: i64) -> usize {
    let day = abs_min.div_euclid(MINUTES_PER_DAY as i64);
    let dow = (day + 3).rem_euclid(7) as usize;
    dow * MINUTES_PER_DAY + abs_min.rem_euclid(MINUTES_PER_DAY as i64) as usize
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub towers: Vec<TowerSite>,
    pub antennas: Vec<AntennaGroup>,
    pub tessellation: Tessellation,
    /// Population density (km⁻²) per sector, aligned with `tessellation.sectors`.
    pub density: Vec<f64>,
    pub scatter: Vec<f64>,
    pub weekend_factor: Vec<f64>,
}

impl Layout {
    pub fn sector_ids(&self) -> Vec<String> {
        self.tessellation.sector_ids()
    }
}

fn offset_to_latlon(area: &StudyArea, x_km: f64, y_km: f64) -> (f64, f64) {
    let lat = area.center_lat + y_km / KM_PER_DEG;
    let lon = area.center_lon + x_km / (KM_PER_DEG * area.center_lat.to_radians().cos());
    (lat, lon)
}

fn latlon_to_offset(area: &StudyArea, lat: f64, lon: f64) -> (f64, f64) {
    (
        (lon - area.center_lon) * KM_PER_DEG * area.center_lat.to_radians().cos(),
        (lat - area.center_lat) * KM_PER_DEG,
    )
}

/// Towers clustered toward the center, azimuth groups evenly spaced from a
/// random integer rotation, and per-sector density, scatter and weekend factors.
pub fn gen_layout(spec: &GeneratorSpec) -> Result<Layout> {
    spec.validate()?;
    let area = spec.area;
    let r_max = 0.97 * area.radius_km;
    let mut rng = keyed_rng(&[spec.seed, TAG_LAYOUT]);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(spec.n_towers);
    let min_sep = spec.min_tower_spacing_m / 1000.0;
    let mut attempts = 0usize;
    while pts.len() < spec.n_towers {
        attempts += 1;
        if attempts > 1000 * spec.n_towers {
            return Err(Error::config("could not place towers with the requested spacing"));
        }
        let (x, y) = if rng.random::<f64>() < spec.cluster_fraction {
            let x: f64 = rng.sample::<f64, _>(StandardNormal) * spec.cluster_sigma_km;
            let y: f64 = rng.sample::<f64, _>(StandardNormal) * spec.cluster_sigma_km;
            (x, y)
        } else {
            let r = r_max * rng.random::<f64>().sqrt();
            let th = 2.0 * PI * rng.random::<f64>();
            (r * th.cos(), r * th.sin())
        };
        if x.hypot(y) > r_max || pts.iter().any(|p| (p.0 - x).hypot(p.1 - y) < min_sep) {
            continue;
        }
        pts.push((x, y));
    }
    let width = spec.n_towers.to_string().len().max(3);
    let mut towers = Vec::with_capacity(pts.len());
    let mut antennas = Vec::new();
    let step = 360.0 / spec.azimuths_per_tower as f64;
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (lat, lon) = offset_to_latlon(&area, x, y);
        let id = format!("T{:0width$}", i + 1);
        let rot = rng.random_range(0..step.floor() as u32) as f64;
        for k in 0..spec.azimuths_per_tower {
            antennas.push(AntennaGroup {
                tower_id: id.clone(),
                azimuth_deg: (rot + k as f64 * step).round(),
            });
        }
        towers.push(TowerSite { tower_id: id, lat, lon });
    }
    let tessellation = build_sectors(&towers, &antennas, area, spec.epsilon_m)?;
    let mut density = Vec::with_capacity(tessellation.sectors.len());
    let mut scatter = Vec::with_capacity(tessellation.sectors.len());
    let mut weekend_factor = Vec::with_capacity(tessellation.sectors.len());
    for s in &tessellation.sectors {
        let h = fnv1a(&s.sector_id);
        let (x, y) = latlon_to_offset(&area, s.centroid_latlon.0, s.centroid_latlon.1);
        let r = x.hypot(y);
        let dex = spec.density_mu_dex
            + spec.density_peak_dex * (-r / spec.density_scale_km).exp()
            + spec.density_sigma_dex * keyed_normal(&[spec.seed, TAG_DENSITY, h]);
        density.push(10f64.powf(dex));
        scatter.push(10f64.powf(spec.scatter_sigma_dex * keyed_normal(&[spec.seed, TAG_SCATTER, h])));
        weekend_factor.push(10f64.powf(spec.weekend_sigma_dex * keyed_normal(&[spec.seed, TAG_WEEKEND, h])));
    }
    Ok(Layout {
        towers,
        antennas,
        tessellation,
        density,
        scatter,
        weekend_factor,
    })
}

fn von_mises(minute: f64, hour: f64, kappa: f64) -> f64 {
    let th = 2.0 * PI * (minute - hour * 60.0) / MINUTES_PER_DAY as f64;
    (kappa * (th.cos() - 1.0)).exp()
}

fn daily_shape(floor: f64, bumps: &[Bump]) -> Vec<f64> {
    (0..MINUTES_PER_DAY)
        .map(|m| {
            floor
                + bumps
                    .iter()
                    .map(|b| b.amplitude * von_mises(m as f64, b.hour, b.kappa))
                    .sum::<f64>()
        })
        .collect()
}

/// Daily-fundamental Fourier coefficient.
pub fn daily_fundamental(x: &[f64]) -> Complex64 {
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(t, v)| Complex64::from_polar(*v, -2.0 * PI * t as f64 / n))
        .sum()
}

fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Text shape: `ratio · call + A · bump`, with the bump centre and `A`
/// solved so the text daily fundamental equals the call fundamental scaled
/// by `gain` and delayed by `lag_h`.
fn text_shape(call: &[f64], ratio: f64, lag_h: f64, gain: f64, kappa: f64) -> Vec<f64> {
    let c1 = daily_fundamental(call);
    if c1.norm() < 1e-9 * call.iter().sum::<f64>().max(1e-300) {
        return call.iter().map(|v| ratio * v).collect();
    }
    let phi = 2.0 * PI * lag_h / 24.0;
    let target = c1 * (Complex64::from_polar(gain, -phi) - ratio);
    let mut hour = (-target.arg()).rem_euclid(2.0 * PI) * 24.0 / (2.0 * PI);
    let bump = |h: f64| -> Vec<f64> { (0..MINUTES_PER_DAY).map(|m| von_mises(m as f64, h, kappa)).collect() };
    for _ in 0..20 {
        let err = wrap_pi(daily_fundamental(&bump(hour)).arg() - target.arg());
        hour = (hour + err * 24.0 / (2.0 * PI)).rem_euclid(24.0);
        if err.abs() < 1e-14 {
            break;
        }
    }
    let b = bump(hour);
    let amp = target.norm() / daily_fundamental(&b).norm();
    call.iter().zip(&b).map(|(c, bb)| ratio * c + amp * bb).collect()
}

/// Weekly profiles per channel (Monday 00:00 first), normalised so the call
/// profile has unit mean.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyProfiles {
    pub calls: Vec<f64>,
    pub texts: Vec<f64>,
}

impl WeeklyProfiles {
    pub fn get(&self, ch: Channel) -> &[f64] {
        match ch {
            Channel::Calls => &self.calls,
            Channel::Texts => &self.texts,
        }
    }
}

pub fn weekly_profiles(spec: &GeneratorSpec) -> WeeklyProfiles {
    let (cw, ce) = if spec.flat_profile {
        (vec![1.0; MINUTES_PER_DAY], vec![1.0; MINUTES_PER_DAY])
    } else {
        (
            daily_shape(spec.call_floor, &spec.call_weekday_bumps),
            daily_shape(spec.call_floor, &spec.call_weekend_bumps),
        )
    };
    let text = |c: &[f64]| {
        text_shape(
            c,
            spec.text_call_ratio,
            spec.text_lag_h,
            spec.text_fundamental_gain,
            spec.text_bump_kappa,
        )
    };
    let (tw, te) = (text(&cw), text(&ce));
    let mut calls = Vec::with_capacity(MINUTES_PER_WEEK);
    let mut texts = Vec::with_capacity(MINUTES_PER_WEEK);
    for (d, w) in spec.weekly_weights.iter().enumerate() {
        let (c, t) = if d < 5 { (&cw, &tw) } else { (&ce, &te) };
        calls.extend(c.iter().map(|v| v * w));
        texts.extend(t.iter().map(|v| v * w));
    }
    let norm = calls.iter().sum::<f64>() / calls.len() as f64;
    if spec.flat_profile {
        // Flat profiles are used as exact constants.
        let w = spec.weekly_weights;
        calls = (0..MINUTES_PER_WEEK).map(|m| w[m / MINUTES_PER_DAY]).collect();
        texts = calls.iter().map(|v| v * spec.text_call_ratio).collect();
    } else {
        calls.iter_mut().for_each(|v| *v /= norm);
        texts.iter_mut().for_each(|v| *v /= norm);
    }
    WeeklyProfiles { calls, texts }
}

#[derive(Debug, Clone)]
struct QuakeEffect {
    inject: QuakeInject,
    arrival: i64,
    a: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StormEffect {
    inject: StormInject,
    /// Coastal zone index per sector.
    zone_of: Vec<Option<usize>>,
    start: Vec<i64>,
    ramp: f64,
    recovery_start: i64,
    recovery_end: i64,
    surge_start: i64,
    surge_end: i64,
    day0: i64,
    /// Per-sector multiplicative field for the two storm days.
    field: [Vec<f64>; 2],
    anomalous: Option<usize>,
}

/// Expected per-minute rates λ(s, t, ch).
#[derive(Debug, Clone)]
pub struct RateModel {
    pub sector_ids: Vec<String>,
    /// Per-sector rate at unit profile, per channel.
    pub base: Vec<f64>,
    pub weekend_factor: Vec<f64>,
    pub profiles: WeeklyProfiles,
    quake: Option<QuakeEffect>,
    storm: Option<StormEffect>,
}

impl RateModel {
    pub fn n_sectors(&self) -> usize {
        self.sector_ids.len()
    }

    /// Rate without event multipliers.
    pub fn baseline(&self, s: usize, ch: Channel, abs_min: i64) -> f64 {
        let w = minute_of_week(abs_min);
        let f = if w >= 5 * MINUTES_PER_DAY {
            self.weekend_factor[s]
        } else {
            1.0
        };
        self.base[s] * f * self.profiles.get(ch)[w]
    }

    pub fn event_multiplier(&self, s: usize, ch: Channel, abs_min: i64) -> f64 {
        let mut m = 1.0;
        if let Some(q) = &self.quake {
            let tau = (abs_min - q.arrival) as f64;
            m *= q.inject.multiplier(ch, q.a[s], q.h[s], tau);
        }
        if let Some(st) = &self.storm {
            m *= st.multiplier(s, ch, abs_min);
        }
        m
    }

    pub fn rate(&self, s: usize, ch: Channel, abs_min: i64) -> f64 {
        self.baseline(s, ch, abs_min) * self.event_multiplier(s, ch, abs_min)
    }
}

impl StormEffect {
    fn multiplier(&self, s: usize, ch: Channel, t: i64) -> f64 {
        let day = (t - self.day0).div_euclid(MINUTES_PER_DAY as i64);
        if !(0..2).contains(&day) {
            return 1.0;
        }
        match self.zone_of[s] {
            None => self.field[day as usize][s],
            Some(z) => match ch {
                Channel::Calls => {
                    let target = if self.anomalous == Some(z) {
                        self.inject.anomalous_gain
                    } else {
                        self.inject.depth
                    };
                    1.0 + (target - 1.0) * self.envelope(z, t)
                }
                Channel::Texts => {
                    if t >= self.surge_start && t < self.surge_end {
                        self.inject.text_surge
                    } else {
                        1.0
                    }
                }
            },
        }
    }

    /// 0 before the zone's start, ramping to 1, then back to 0 over recovery.
    fn envelope(&self, z: usize, t: i64) -> f64 {
        let s = self.start[z];
        if t < s || t >= self.recovery_end {
            0.0
        } else if t >= self.recovery_start {
            1.0 - (t - self.recovery_start) as f64 / (self.recovery_end - self.recovery_start) as f64
        } else {
            ((t - s) as f64 / self.ramp).min(1.0)
        }
    }
}

/// Per-sector base rates `base_rate · density^γ · area · scatter`.
pub fn base_rates(spec: &GeneratorSpec, layout: &Layout) -> RateModel {
    let base = layout
        .tessellation
        .sectors
        .iter()
        .enumerate()
        .map(|(i, s)| spec.base_rate * layout.density[i].powf(spec.gamma) * s.area_km2 * layout.scatter[i])
        .collect();
    RateModel {
        sector_ids: layout.sector_ids(),
        base,
        weekend_factor: layout.weekend_factor.clone(),
        profiles: weekly_profiles(spec),
        quake: None,
        storm: None,
    }
}

/// Coastal evacuation zones (a band south of the centre split into equal
/// slices) followed by one large northern control zone, in lon/lat.
pub fn storm_zones(area: &StudyArea, storm: &StormInject) -> Vec<Zone> {
    let r = area.radius_km;
    let (near, far) = storm.coast_south_km;
    let mid = 0.5 * (near + far);
    let half = 0.95 * (r * r - mid * mid).max(0.0).sqrt();
    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
        let c = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
        Polygon::new(
            c.iter()
                .map(|&(x, y)| {
                    let (lat, lon) = offset_to_latlon(area, x, y);
                    Pt::new(lon, lat)
                })
                .collect(),
        )
    };
    let w = 2.0 * half / storm.zones as f64;
    let mut zones: Vec<Zone> = (0..storm.zones)
        .map(|i| Zone {
            zone_id: StormInject::zone_id(i),
            polygon: rect(-half + i as f64 * w, -far, -half + (i + 1) as f64 * w, -near),
        })
        .collect();
    zones.push(Zone {
        zone_id: CONTROL_ZONE.into(),
        polygon: rect(-r * 1.01, storm.control_north_km, r * 1.01, r * 1.01),
    });
    zones
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorQuakeTruth {
    pub sector_id: String,
    pub distance_km: f64,
    pub onset_multiplier: f64,
    pub call_peak_factor: f64,
    pub text_peak_factor: f64,
    pub high_response: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuakeTruth {
    pub onset: NaiveDateTime,
    pub arrival: NaiveDateTime,
    pub call_peak: NaiveDateTime,
    pub text_peak: NaiveDateTime,
    pub call_tau_min: f64,
    pub text_tau_min: f64,
    pub sectors: Vec<SectorQuakeTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneTruth {
    pub zone_id: String,
    pub members: usize,
    pub suppression_start: NaiveDateTime,
    pub suppression_full: NaiveDateTime,
    pub recovery_start: NaiveDateTime,
    pub recovery_end: NaiveDateTime,
    pub call_target: f64,
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormTruth {
    pub day: NaiveDate,
    pub landfall: NaiveDateTime,
    pub text_surge: f64,
    pub zones: Vec<ZoneTruth>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub quake: Option<QuakeTruth>,
    pub storm: Option<StormTruth>,
    /// Quake response window and storm days overlap.
    pub overlap: bool,
}

fn hours(h: f64) -> Duration {
    Duration::minutes((h * 60.0).round() as i64)
}

/// Attach event multipliers to `model`.
pub fn inject_events(
    model: &RateModel,
    layout: &Layout,
    seed: u64,
    quake: Option<&QuakeInject>,
    storm: Option<&StormInject>,
) -> Result<(RateModel, GroundTruth)> {
    let mut out = model.clone();
    let mut truth = GroundTruth::default();
    let sectors = &layout.tessellation.sectors;
    if out.sector_ids != layout.sector_ids() {
        return Err(Error::input("rate model and layout disagree on sectors"));
    }
    if let Some(q) = quake {
        q.validate()?;
        let mut a = Vec::with_capacity(sectors.len());
        let mut h = Vec::with_capacity(sectors.len());
        let mut st = Vec::with_capacity(sectors.len());
        for s in sectors {
            let d = great_circle_km(
                s.centroid_latlon.0,
                s.centroid_latlon.1,
                q.epicenter_lat,
                q.epicenter_lon,
            );
            let hk = fnv1a(&s.sector_id);
            let high = d < q.cutoff_km && unit(key(&[seed, TAG_HIGH, hk])) < q.high_fraction;
            let hs = if high {
                (q.high_median(d).ln() + q.high_sigma * keyed_normal(&[seed, TAG_HIGH, hk, 1]))
                    .exp()
                    .max(1.0)
            } else {
                1.0
            };
            let av = q.a_of(d);
            st.push(SectorQuakeTruth {
                sector_id: s.sector_id.clone(),
                distance_km: d,
                onset_multiplier: av,
                call_peak_factor: q.multiplier(Channel::Calls, av, hs, q.call_rise_min),
                text_peak_factor: q.multiplier(Channel::Texts, av, hs, q.text_rise_min),
                high_response: high,
            });
            a.push(av);
            h.push(hs);
        }
        let arrival = q.arrival();
        truth.quake = Some(QuakeTruth {
            onset: q.onset,
            arrival,
            call_peak: arrival + Duration::minutes(q.call_rise_min.round() as i64),
            text_peak: arrival + Duration::minutes(q.text_rise_min.round() as i64),
            call_tau_min: q.call_tau_min,
            text_tau_min: q.text_tau_min,
            sectors: st,
        });
        out.quake = Some(QuakeEffect {
            inject: q.clone(),
            arrival: abs_minute(arrival),
            a,
            h,
        });
    }
    if let Some(s) = storm {
        s.validate()?;
        let zones = storm_zones(&layout.tessellation.area, s);
        let coastal = &zones[..s.zones];
        let zone_of: Vec<Option<usize>> = sectors
            .iter()
            .map(|sec| {
                coastal
                    .iter()
                    .position(|z| z.contains_latlon(sec.centroid_latlon.0, sec.centroid_latlon.1))
            })
            .collect();
        let anomalous = match &s.anomalous_zone {
            None => None,
            Some(id) => Some(
                coastal
                    .iter()
                    .position(|z| &z.zone_id == id)
                    .ok_or_else(|| Error::config(format!("storm_anomalous_zone {id} is not a coastal zone")))?,
            ),
        };
        let day0 = s.day_start();
        let next = day0 + Duration::days(1);
        let span = ((s.start_latest_h - s.start_earliest_h) * 60.0).round() as i64;
        let starts: Vec<NaiveDateTime> = (0..s.zones)
            .map(|z| {
                let off = (unit(key(&[seed, TAG_STORM_START, z as u64])) * (span + 1) as f64).floor() as i64;
                day0 + hours(s.start_earliest_h) + Duration::minutes(off.min(span))
            })
            .collect();
        let field = [0u64, 1].map(|d| {
            let mu = s.field_mean.ln() - 0.5 * s.field_sigma * s.field_sigma;
            sectors
                .iter()
                .map(|sec| {
                    (mu + s.field_sigma * keyed_normal(&[seed, TAG_STORM_FIELD, d, fnv1a(&sec.sector_id)])).exp()
                })
                .collect::<Vec<f64>>()
        });
        let rec_start = next + hours(s.recovery_start_h);
        let rec_end = next + hours(s.recovery_end_h);
        truth.storm = Some(StormTruth {
            day: s.day,
            landfall: s.landfall,
            text_surge: s.text_surge,
            zones: (0..s.zones)
                .map(|z| ZoneTruth {
                    zone_id: coastal[z].zone_id.clone(),
                    members: zone_of.iter().filter(|v| **v == Some(z)).count(),
                    suppression_start: starts[z],
                    suppression_full: starts[z] + Duration::minutes(s.ramp_min.ceil() as i64),
                    recovery_start: rec_start,
                    recovery_end: rec_end,
                    call_target: if anomalous == Some(z) {
                        s.anomalous_gain
                    } else {
                        s.depth
                    },
                    anomalous: anomalous == Some(z),
                })
                .collect(),
        });
        out.storm = Some(StormEffect {
            inject: s.clone(),
            zone_of,
            start: starts.iter().map(|t| abs_minute(*t)).collect(),
            ramp: s.ramp_min,
            recovery_start: abs_minute(rec_start),
            recovery_end: abs_minute(rec_end),
            surge_start: abs_minute(day0 + hours(s.surge_start_h)),
            surge_end: abs_minute(next),
            day0: abs_minute(day0),
            field,
            anomalous,
        });
    }
    if let (Some(q), Some(s)) = (quake, storm) {
        let qa = q.arrival();
        let qe = qa + hours(q.window_h);
        let s0 = s.day_start();
        let s1 = s0 + Duration::days(2);
        truth.overlap = qa < s1 && s0 < qe;
    }
    Ok((out, truth))
}

fn channel_tag(ch: Channel) -> u64 {
    match ch {
        Channel::Calls => 0,
        Channel::Texts => 1,
    }
}

fn resolution_tag(r: Resolution) -> u64 {
    r.minutes() as u64
}

/// Counts for both channels over `n_bins` bins from `t0`: Poisson draws of
/// the bin's expected count, or the expectation rounded with a fixed
/// weekly-periodic dither in deterministic mode.
pub fn gen_counts(
    model: &RateModel,
    seed: u64,
    deterministic: bool,
    t0: NaiveDateTime,
    resolution: Resolution,
    n_bins: usize,
) -> Result<(VolumeTensor, VolumeTensor)> {
    let bm = resolution.minutes() as i64;
    let m0 = abs_minute(t0);
    if m0.rem_euclid(bm) != 0 {
        return Err(Error::input(format!("start {t0} is not aligned to {resolution} bins")));
    }
    let hashes: Vec<u64> = model.sector_ids.iter().map(|s| fnv1a(s)).collect();
    let rows: Vec<Result<[Vec<u32>; 2]>> = (0..model.n_sectors())
        .into_par_iter()
        .map(|s| {
            let mut out = [vec![0u32; n_bins], vec![0u32; n_bins]];
            for ch in Channel::ALL {
                let ct = channel_tag(ch);
                let row = &mut out[ct as usize];
                for (b, cell) in row.iter_mut().enumerate() {
                    let start = m0 + b as i64 * bm;
                    let lam: f64 = (start..start + bm).map(|m| model.rate(s, ch, m)).sum();
                    if !(lam <= MAX_RATE * bm as f64) || !lam.is_finite() {
                        return Err(Error::config(format!(
                            "expected count {lam} for sector {} exceeds the rate guard",
                            model.sector_ids[s]
                        )));
                    }
                    let v = if lam <= 0.0 {
                        0.0
                    } else if deterministic {
                        let wk = start.rem_euclid(MINUTES_PER_WEEK as i64) as u64;
                        let u = unit(key(&[seed, TAG_DITHER, hashes[s], wk, ct, resolution_tag(resolution)]));
                        (lam + u).floor()
                    } else {
                        let mut rng =
                            keyed_rng(&[seed, TAG_COUNT, hashes[s], start as u64, ct, resolution_tag(resolution)]);
                        Poisson::new(lam)
                            .map_err(|e| Error::internal(format!("poisson({lam}): {e}")))?
                            .sample(&mut rng)
                    };
                    if v > u32::MAX as f64 {
                        return Err(Error::config(format!("count {v} overflows u32")));
                    }
                    *cell = v as u32;
                }
            }
            Ok(out)
        })
        .collect();
    let mut calls = VolumeTensor::zeros(Channel::Calls, resolution, t0, model.sector_ids.clone(), n_bins)?;
    let mut texts = VolumeTensor::zeros(Channel::Texts, resolution, t0, model.sector_ids.clone(), n_bins)?;
    for (s, r) in rows.into_iter().enumerate() {
        let [c, x] = r?;
        calls.row_mut(s).copy_from_slice(&c);
        texts.row_mut(s).copy_from_slice(&x);
    }
    Ok((calls, texts))
}

/// Everything a synthetic run produces.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub layout: Layout,
    pub model: RateModel,
    pub truth: GroundTruth,
    pub zones: Vec<Zone>,
    pub calls: VolumeTensor,
    pub texts: VolumeTensor,
}

/// Layout, rates with events, and counts over the spec's span.
pub fn synthesize(spec: &GeneratorSpec) -> Result<Synthetic> {
    let layout = gen_layout(spec)?;
    let base = base_rates(spec, &layout);
    let (model, truth) = inject_events(&base, &layout, spec.seed, spec.quake.as_ref(), spec.storm.as_ref())?;
    let (calls, texts) = gen_counts(
        &model,
        spec.seed,
        spec.deterministic,
        spec.start,
        spec.resolution,
        spec.n_bins(),
    )?;
    let zones = spec
        .storm
        .as_ref()
        .map(|s| storm_zones(&spec.area, s))
        .unwrap_or_default();
    Ok(Synthetic {
        layout,
        model,
        truth,
        zones,
        calls,
        texts,
    })
}

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let ts = volumes::format_ts;
    fsio::write_atomic(path, |w| {
        writeln!(w, "event,id,field,value")?;
        if let Some(q) = &truth.quake {
            writeln!(w, "quake,,onset,{}", ts(q.onset))?;
            writeln!(w, "quake,,arrival,{}", ts(q.arrival))?;
            writeln!(w, "quake,,call_peak,{}", ts(q.call_peak))?;
            writeln!(w, "quake,,text_peak,{}", ts(q.text_peak))?;
            writeln!(w, "quake,,call_tau_min,{}", q.call_tau_min)?;
            writeln!(w, "quake,,text_tau_min,{}", q.text_tau_min)?;
            for s in &q.sectors {
                writeln!(w, "quake,{},distance_km,{}", s.sector_id, s.distance_km)?;
                writeln!(w, "quake,{},onset_multiplier,{}", s.sector_id, s.onset_multiplier)?;
                writeln!(w, "quake,{},call_peak_factor,{}", s.sector_id, s.call_peak_factor)?;
                writeln!(w, "quake,{},text_peak_factor,{}", s.sector_id, s.text_peak_factor)?;
                writeln!(w, "quake,{},high_response,{}", s.sector_id, s.high_response)?;
            }
        }
        if let Some(s) = &truth.storm {
            writeln!(w, "storm,,day,{}", s.day.format("%Y-%m-%d"))?;
            writeln!(w, "storm,,landfall,{}", ts(s.landfall))?;
            writeln!(w, "storm,,text_surge,{}", s.text_surge)?;
            for z in &s.zones {
                writeln!(w, "storm,{},members,{}", z.zone_id, z.members)?;
                writeln!(w, "storm,{},suppression_start,{}", z.zone_id, ts(z.suppression_start))?;
                writeln!(w, "storm,{},suppression_full,{}", z.zone_id, ts(z.suppression_full))?;
                writeln!(w, "storm,{},recovery_start,{}", z.zone_id, ts(z.recovery_start))?;
                writeln!(w, "storm,{},recovery_end,{}", z.zone_id, ts(z.recovery_end))?;
                writeln!(w, "storm,{},call_target,{}", z.zone_id, z.call_target)?;
                writeln!(w, "storm,{},anomalous,{}", z.zone_id, z.anomalous)?;
            }
        }
        writeln!(w, "events,,overlap,{}", truth.overlap)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorSpec {
        apply_overrides(
            &GeneratorSpec::default(),
            "n_towers = 20\ndays = 2\nstart = 2011-08-22 00:00\n",
        )
        .unwrap()
    }

    #[test]
    fn default_spec_round_trips() {
        let s = GeneratorSpec::default();
        assert_eq!(parse_spec(&s.to_spec_text()).unwrap(), s);
        assert!(s.quake.is_some() && s.storm.is_some());
    }

    #[test]
    fn spec_errors_name_the_line() {
        let e = apply_overrides(&GeneratorSpec::default(), "\n\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(apply_overrides(&GeneratorSpec::default(), "seed = 1\nseed = 2\n").is_err());
        assert!(apply_overrides(&GeneratorSpec::default(), "storm_depth = 0\n").is_err());
        assert!(parse_spec("seed = 1\n").is_err());
    }

    #[test]
    fn minute_of_week_origin() {
        // 2011-08-22 was a Monday.
        let t = NaiveDate::from_ymd_opt(2011, 8, 22)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        assert_eq!(minute_of_week(abs_minute(t)), 0);
        assert_eq!(
            minute_of_week(abs_minute(t + Duration::minutes(5 * 1440 + 61))),
            5 * 1440 + 61
        );
    }

    #[test]
    fn layout_is_deterministic() {
        let s = small();
        let a = gen_layout(&s).unwrap();
        let b = gen_layout(&s).unwrap();
        assert_eq!(a.towers, b.towers);
        assert_eq!(a.density, b.density);
        assert_eq!(a.tessellation.sectors.len(), 60);
    }

    #[test]
    fn text_fundamental_lags_calls() {
        let p = weekly_profiles(&GeneratorSpec::default());
        // One cycle per day over a week is the 7th coefficient.
        let f7 = |x: &[f64]| -> Complex64 {
            let n = x.len() as f64;
            x.iter()
                .enumerate()
                .map(|(i, v)| Complex64::from_polar(*v, -2.0 * PI * 7.0 * i as f64 / n))
                .sum()
        };
        let r = f7(&p.texts) / f7(&p.calls);
        let lag_h = -r.arg() * 24.0 / (2.0 * PI);
        assert!((lag_h - 4.0).abs() < 1e-9, "{lag_h}");
        assert!((r.norm() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn daily_peaks() {
        let p = weekly_profiles(&GeneratorSpec::default());
        let argmax = |x: &[f64]| x.iter().enumerate().fold(0, |b, (i, v)| if *v > x[b] { i } else { b });
        let monday = 0..MINUTES_PER_DAY;
        let c = argmax(&p.calls[monday.clone()]);
        let t = argmax(&p.texts[monday]);
        assert!((17 * 60..18 * 60).contains(&c), "call peak {c}");
        assert!((21 * 60..22 * 60).contains(&t), "text peak {t}");
        let sat = 5 * MINUTES_PER_DAY..6 * MINUTES_PER_DAY;
        let c = argmax(&p.calls[sat]);
        assert!((13 * 60..14 * 60).contains(&c), "weekend call peak {c}");
        let mean = p.calls.iter().sum::<f64>() / p.calls.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitude_quake_leaves_rates() {
        let s = small();
        let layout = gen_layout(&s).unwrap();
        let base = base_rates(&s, &layout);
        let mut q = s.quake.clone().unwrap();
        q.a_near = 1.0;
        q.a_far = 1.0;
        let (m, _) = inject_events(&base, &layout, s.seed, Some(&q), None).unwrap();
        let t = abs_minute(q.arrival());
        for sec in 0..m.n_sectors() {
            for dt in 0..120 {
                for ch in Channel::ALL {
                    assert_eq!(m.rate(sec, ch, t + dt), base.rate(sec, ch, t + dt));
                }
            }
        }
    }

    #[test]
    fn onset_multiplier_is_affine_in_distance() {
        let s = small();
        let layout = gen_layout(&s).unwrap();
        let base = base_rates(&s, &layout);
        let q = s.quake.clone().unwrap();
        let (m, truth) = inject_events(&base, &layout, s.seed, Some(&q), None).unwrap();
        let t = abs_minute(q.arrival());
        for (i, st) in truth.quake.unwrap().sectors.iter().enumerate() {
            let a = 3.0 + (st.distance_km - 100.0) / 500.0 * (1.5 - 3.0);
            assert_eq!(m.event_multiplier(i, Channel::Calls, t), a);
            assert_eq!(m.event_multiplier(i, Channel::Calls, t - 1), 1.0);
        }
    }

    #[test]
    fn flat_deterministic_counts_equal_rates() {
        let s = apply_overrides(
            &small(),
            "flat_profile = true\nweekly_weights = 1,1,1,1,1,1,1\nquake = false\nstorm = false\n",
        )
        .unwrap();
        let layout = gen_layout(&s).unwrap();
        let mut m = base_rates(&s, &layout);
        m.base = (0..m.n_sectors()).map(|i| (i % 7) as f64).collect();
        m.weekend_factor = vec![1.0; m.n_sectors()];
        let (c, x) = gen_counts(&m, s.seed, true, s.start, Resolution::Minute, 300).unwrap();
        for i in 0..m.n_sectors() {
            assert!(c.row(i).iter().all(|&v| v as usize == i % 7));
            assert!(x.row(i).iter().all(|&v| v as usize == 2 * (i % 7)));
        }
    }

    #[test]
    fn rate_guard() {
        let s = apply_overrides(&small(), "quake = false\nstorm = false\n").unwrap();
        let layout = gen_layout(&s).unwrap();
        let mut m = base_rates(&s, &layout);
        m.base[0] = 1e12;
        assert!(gen_counts(&m, 1, false, s.start, Resolution::Minute, 10).is_err());
    }

    #[test]
    fn sub_window_regenerates() {
        let s = apply_overrides(&small(), "quake = false\nstorm = false\n").unwrap();
        let layout = gen_layout(&s).unwrap();
        let m = base_rates(&s, &layout);
        let (a, _) = gen_counts(&m, 7, false, s.start, Resolution::Minute, 600).unwrap();
        let t1 = s.start + Duration::minutes(240);
        let (b, _) = gen_counts(&m, 7, false, t1, Resolution::Minute, 100).unwrap();
        for i in 0..m.n_sectors() {
            assert_eq!(&a.row(i)[240..340], b.row(i));
        }
    }
}
