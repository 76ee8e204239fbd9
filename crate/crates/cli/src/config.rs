//! Run configuration: a `key = value` file with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use sectorscope::correlation::Transform;
use sectorscope::error::{Error, Result};
use sectorscope::events::{QuakeScenario, DEFAULT_BIN_KM, DEFAULT_THETA};
use sectorscope::spectral::SpectralConfig;
use sectorscope::volumes::parse_ts;
use sectorscope::{Channel, Resolution, StudyArea};

pub const REQUIRED: [&str; 7] = ["towers", "antennas", "volumes", "outdir", "start", "days", "resolution"];

const OPTIONAL: [&str; 34] = [
    "zones",
    "covariate",
    "synth_spec",
    "seed",
    "center_lat",
    "center_lon",
    "radius_km",
    "epsilon_m",
    "lag_days",
    "window_start",
    "window_hours",
    "aggregate_resolution",
    "density_stats",
    "quake_onset",
    "epicenter_lat",
    "epicenter_lon",
    "profile_bin_km",
    "profile_offset_min",
    "timing_window_min",
    "onset_k",
    "recovery_k",
    "nw",
    "k",
    "adaptive",
    "corr_resolution",
    "corr_channel",
    "corr_transform",
    "grid_cell_m",
    "grid_channel",
    "tsmap_channel",
    "storm_day",
    "storm_window_h",
    "theta",
    "threads",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: PathBuf,
    pub towers: PathBuf,
    pub antennas: PathBuf,
    pub volumes: PathBuf,
    pub zones: Option<PathBuf>,
    pub covariate: Option<PathBuf>,
    pub synth_spec: Option<PathBuf>,
    pub outdir: PathBuf,
    pub seed: Option<u64>,
    pub area: StudyArea,
    pub epsilon_m: f64,
    pub start: NaiveDateTime,
    pub days: usize,
    pub resolution: Resolution,
    pub lag_days: usize,
    pub window_start: Option<NaiveDateTime>,
    pub window_hours: Option<usize>,
    pub aggregate_resolution: Resolution,
    pub density_stats: bool,
    pub quake: Option<QuakeScenario>,
    pub profile_bin_km: f64,
    /// Minutes after onset at which profiles are taken; the call peak when unset.
    pub profile_offset_min: Option<i64>,
    pub timing_window_min: usize,
    pub onset_k: f64,
    pub recovery_k: f64,
    pub spectral: SpectralConfig,
    pub corr_resolution: Resolution,
    pub corr_channel: Channel,
    pub corr_transform: Transform,
    pub grid_cell_m: f64,
    pub grid_channel: Channel,
    pub tsmap_channel: Channel,
    pub storm_day: Option<NaiveDate>,
    pub storm_window_h: usize,
    pub theta: f64,
    pub threads: Option<usize>,
}

struct Entry {
    value: String,
    line: u64,
}

fn parse_channel(s: &str) -> Result<Channel> {
    match s {
        "calls" => Ok(Channel::Calls),
        "texts" => Ok(Channel::Texts),
        _ => Err(Error::input(format!("unknown channel {s:?} (calls|texts)"))),
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::input(format!("expected true or false, got {s:?}"))),
    }
}

struct Reader<'a> {
    path: &'a Path,
    base: PathBuf,
    entries: BTreeMap<String, Entry>,
}

impl Reader<'_> {
    fn get<T>(&self, key: &str, f: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => f(&e.value)
                .map(Some)
                .map_err(|err| Error::parse(self.path, e.line, format!("{key}: {}", strip(err)))),
        }
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key, |v| {
            v.parse::<T>().map_err(|_| Error::input(format!("cannot parse {v:?}")))
        })
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        self.get(key, |v| Ok(self.base.join(v)))
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Input(m) | Error::Config(m) => m,
        other => other.to_string(),
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, 0, "config is not valid UTF-8"))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, path, &base)
}

/// Parse config text; relative paths are resolved against `base`.
pub fn parse_config_str(text: &str, path: &Path, base: &Path) -> Result<RunConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(Error::parse(path, line, format!("expected key = value, got {body:?}")));
        };
        let (k, v) = (k.trim(), v.trim());
        if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
            return Err(Error::parse(path, line, format!("unknown key {k:?}")));
        }
        if let Some(prev) = entries.get(k) {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "duplicate key {k:?} (first set on line {}, again on line {line})",
                    prev.line
                ),
            ));
        }
        entries.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line,
            },
        );
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !entries.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(Error::parse(
            path,
            0,
            format!("missing required keys: {}", missing.join(", ")),
        ));
    }
    let r = Reader {
        path,
        base: base.to_path_buf(),
        entries,
    };
    let line_of = |k: &str| r.entries.get(k).map(|e| e.line).unwrap_or(0);

    let def = StudyArea::default();
    let area = StudyArea {
        center_lat: r.num("center_lat")?.unwrap_or(def.center_lat),
        center_lon: r.num("center_lon")?.unwrap_or(def.center_lon),
        radius_km: r.num("radius_km")?.unwrap_or(def.radius_km),
    };
    if !(area.radius_km > 0.0) || !(-80.0..=84.0).contains(&area.center_lat) {
        return Err(Error::parse(
            path,
            line_of("radius_km").max(line_of("center_lat")),
            "study area is invalid",
        ));
    }

    let quake_keys = ["quake_onset", "epicenter_lat", "epicenter_lon"];
    let present = quake_keys.iter().filter(|k| r.entries.contains_key(**k)).count();
    let quake = match present {
        0 => None,
        3 => {
            let q = QuakeScenario {
                onset: r.get("quake_onset", parse_ts)?.unwrap(),
                epicenter_lat: r.num("epicenter_lat")?.unwrap(),
                epicenter_lon: r.num("epicenter_lon")?.unwrap(),
            };
            q.validate()
                .map_err(|e| Error::parse(path, line_of("epicenter_lat"), strip(e)))?;
            Some(q)
        }
        _ => {
            let line = quake_keys.iter().map(|k| line_of(k)).max().unwrap_or(0);
            return Err(Error::parse(
                path,
                line,
                "quake_onset, epicenter_lat and epicenter_lon must be given together",
            ));
        }
    };

    let nw: f64 = r.num("nw")?.unwrap_or(4.0);
    let mut spectral = SpectralConfig::new(nw);
    if let Some(k) = r.num("k")? {
        spectral.k = k;
    }
    if let Some(a) = r.get("adaptive", parse_bool)? {
        spectral.adaptive = a;
    }
    spectral
        .validate()
        .map_err(|e| Error::parse(path, line_of("nw").max(line_of("k")), strip(e)))?;

    let days: usize = r.num("days")?.unwrap();
    if days == 0 {
        return Err(Error::parse(path, line_of("days"), "days must be at least 1"));
    }
    let theta: f64 = r.num("theta")?.unwrap_or(DEFAULT_THETA);
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::parse(path, line_of("theta"), "theta must be in (0, 1)"));
    }
    let lag_days: usize = r.num("lag_days")?.unwrap_or(7);
    if lag_days == 0 {
        return Err(Error::parse(path, line_of("lag_days"), "lag_days must be at least 1"));
    }
    let threads: Option<usize> = r.num("threads")?;
    if threads == Some(0) {
        return Err(Error::parse(path, line_of("threads"), "threads must be at least 1"));
    }

    Ok(RunConfig {
        source: path.to_path_buf(),
        towers: r.path("towers")?.unwrap(),
        antennas: r.path("antennas")?.unwrap(),
        volumes: r.path("volumes")?.unwrap(),
        zones: r.path("zones")?,
        covariate: r.path("covariate")?,
        synth_spec: r.path("synth_spec")?,
        outdir: r.path("outdir")?.unwrap(),
        seed: r.num("seed")?,
        area,
        epsilon_m: r
            .num("epsilon_m")?
            .unwrap_or(sectorscope::tessellation::DEFAULT_EPSILON_M),
        start: r.get("start", parse_ts)?.unwrap(),
        days,
        resolution: r.get("resolution", Resolution::from_str)?.unwrap(),
        lag_days,
        window_start: r.get("window_start", parse_ts)?,
        window_hours: r.num("window_hours")?,
        aggregate_resolution: r
            .get("aggregate_resolution", Resolution::from_str)?
            .unwrap_or(Resolution::Day),
        density_stats: r.get("density_stats", parse_bool)?.unwrap_or(false),
        quake,
        profile_bin_km: r.num("profile_bin_km")?.unwrap_or(DEFAULT_BIN_KM),
        profile_offset_min: r.num("profile_offset_min")?,
        timing_window_min: r.num("timing_window_min")?.unwrap_or(180),
        onset_k: r.num("onset_k")?.unwrap_or(5.0),
        recovery_k: r.num("recovery_k")?.unwrap_or(2.0),
        spectral,
        corr_resolution: r
            .get("corr_resolution", Resolution::from_str)?
            .unwrap_or(Resolution::Day),
        corr_channel: r.get("corr_channel", parse_channel)?.unwrap_or(Channel::Calls),
        corr_transform: r.get("corr_transform", Transform::from_str)?.unwrap_or_default(),
        grid_cell_m: r.num("grid_cell_m")?.unwrap_or(1000.0),
        grid_channel: r.get("grid_channel", parse_channel)?.unwrap_or(Channel::Calls),
        tsmap_channel: r.get("tsmap_channel", parse_channel)?.unwrap_or(Channel::Calls),
        storm_day: r.get("storm_day", |v| {
            NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| Error::input(format!("bad date {v:?}")))
        })?,
        storm_window_h: r.num("storm_window_h")?.unwrap_or(24),
        theta,
        threads,
    })
}

impl RunConfig {
    pub fn n_bins(&self) -> usize {
        self.days * 1440 / self.resolution.minutes()
    }

    pub fn lag_bins(&self, res: Resolution) -> usize {
        self.lag_days * 1440 / res.minutes()
    }

    /// Fail with an input error naming every listed path that does not exist.
    pub fn require_files(&self, paths: &[(&str, Option<&Path>)]) -> Result<()> {
        let mut missing = Vec::new();
        for (key, p) in paths {
            match p {
                None => missing.push(format!("{key} (not set)")),
                Some(p) if !p.is_file() => missing.push(format!("{key} = {}", p.display())),
                _ => {}
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::input(format!(
                "{}: missing input files: {}",
                self.source.display(),
                missing.join(", ")
            )))
        }
    }

    /// Create the output directory and check that it accepts files.
    pub fn prepare_outdir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.outdir).map_err(|e| Error::io(&self.outdir, e))?;
        let probe = self.outdir.join(format!(".write-probe{}", std::process::id()));
        std::fs::write(&probe, b"").map_err(|e| Error::io(&self.outdir, e))?;
        let _ = std::fs::remove_file(probe);
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.outdir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("run.cfg"), Path::new("/data"))
    }

    const MINIMAL: &str = "towers = t.csv\nantennas = a.csv\nvolumes = v.csv\noutdir = out\nstart = 2011-08-01 00:00\ndays = 7\nresolution = hour\n";

    #[test]
    fn empty_file_lists_required_keys() {
        let err = parse("").unwrap_err().to_string();
        for k in REQUIRED {
            assert!(err.contains(k), "{err}");
        }
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let err = parse(&format!("{MINIMAL}days = 8\n")).unwrap_err().to_string();
        assert!(err.contains("\"days\""), "{err}");
        assert!(err.contains("line 6") && err.contains("line 8"), "{err}");
    }

    #[test]
    fn unknown_key_has_line_number() {
        let err = parse(&format!("# c\n{MINIMAL}colour = red\n")).unwrap_err().to_string();
        assert!(err.starts_with("run.cfg:9:"), "{err}");
    }

    #[test]
    fn bad_value_has_line_number() {
        let err = parse(&MINIMAL.replace("days = 7", "days = seven"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("run.cfg:6:"), "{err}");
    }

    #[test]
    fn defaults_and_relative_paths() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.towers, PathBuf::from("/data/t.csv"));
        assert_eq!(c.n_bins(), 168);
        assert_eq!(c.lag_bins(Resolution::Minute), 10080);
        assert_eq!(c.spectral.k, 7);
        assert_eq!(c.quake, None);
    }

    #[test]
    fn partial_quake_rejected() {
        assert!(parse(&format!("{MINIMAL}epicenter_lat = 37.9\n")).is_err());
    }
}
