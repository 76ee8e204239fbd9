//! One function per subcommand. Each reads its inputs through the config,
//! writes its outputs atomically under `outdir`, and never touches inputs.

use std::io::Write;

use chrono::Duration;
use log::info;
use sectorscope::correlation::{self, disruption_score, spatial_corr_matrix};
use sectorscope::error::{Error, Result};
use sectorscope::events::{self, classify_response, divergence_detect, quake_profile, quake_timing, zone_series};
use sectorscope::fsio;
use sectorscope::geodesy::density_values;
use sectorscope::geodesy::grid::{interpolate_grid, write_raster_asc};
use sectorscope::geodesy::tsmap::{time_space_map, write_tsmap_csv};
use sectorscope::spectral::{self, multitaper_cross, multitaper_psd};
use sectorscope::synthgen::{self, GeneratorSpec, CONTROL_ZONE};
use sectorscope::tessellation::{self, build_sectors, tower_only_tessellation};
use sectorscope::volumes::{self, anomaly, anomaly_stats, format_ts, minute_stats, resample};
use sectorscope::{stats, Channel, Resolution, Tessellation, VolumeTensor};

use crate::config::RunConfig;

fn tessellation(cfg: &RunConfig) -> Result<Tessellation> {
    cfg.require_files(&[("towers", Some(&cfg.towers)), ("antennas", Some(&cfg.antennas))])?;
    let towers = tessellation::read_towers(&cfg.towers)?;
    let antennas = tessellation::read_antennas(&cfg.antennas)?;
    build_sectors(&towers, &antennas, cfg.area, cfg.epsilon_m)
}

fn load(cfg: &RunConfig, tess: &Tessellation) -> Result<(VolumeTensor, VolumeTensor)> {
    cfg.require_files(&[("volumes", Some(&cfg.volumes))])?;
    volumes::load_volumes(
        &cfg.volumes,
        &tess.sector_ids(),
        cfg.resolution,
        cfg.start,
        cfg.n_bins(),
    )
}

fn coarsen(t: &VolumeTensor, to: Resolution) -> Result<VolumeTensor> {
    if t.resolution == to {
        Ok(t.clone())
    } else {
        Ok(resample(t, to)?.0)
    }
}

fn pick(channel: Channel, calls: VolumeTensor, texts: VolumeTensor) -> VolumeTensor {
    match channel {
        Channel::Calls => calls,
        Channel::Texts => texts,
    }
}

/// Bins covered by the configured output window, or the whole span.
fn window_bins(cfg: &RunConfig, n_bins: usize, res: Resolution) -> Result<std::ops::Range<usize>> {
    let start = match cfg.window_start {
        None => 0,
        Some(ts) => {
            let m = (ts - cfg.start).num_minutes();
            if m < 0 || m as usize % res.minutes() != 0 || m as usize / res.minutes() >= n_bins {
                return Err(Error::input(format!(
                    "window_start {} is outside the data or off the bin grid",
                    format_ts(ts)
                )));
            }
            m as usize / res.minutes()
        }
    };
    let end = match cfg.window_hours {
        None => n_bins,
        Some(h) => (start + (h * 60).div_ceil(res.minutes())).min(n_bins),
    };
    Ok(start..end)
}

pub fn tessellate(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let towers = tessellation::read_towers(&cfg.towers)?;
    let base = tower_only_tessellation(&towers, cfg.area)?;
    tessellation::write_sectors(&tess, &cfg.out("sectors.csv"), &cfg.out("sectors_wkt.csv"))?;
    tessellation::write_sectors(&base, &cfg.out("tower_cells.csv"), &cfg.out("tower_cells_wkt.csv"))?;
    let median = |t: &Tessellation| stats::quantile(&t.sectors.iter().map(|s| s.area_km2).collect::<Vec<_>>(), 0.5);
    if let (Some(a), Some(b)) = (median(&tess), median(&base)) {
        println!(
            "{} sectors on {} towers; median area {:.3} km2, tower cells {:.3} km2, ratio {:.3}",
            tess.sectors.len(),
            base.sectors.len(),
            a,
            b,
            a / b
        );
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, seed: Option<u64>) -> Result<()> {
    let mut spec = match &cfg.synth_spec {
        Some(p) => {
            cfg.require_files(&[("synth_spec", Some(p))])?;
            synthgen::read_spec(p)?
        }
        None => GeneratorSpec::default(),
    };
    spec.start = cfg.start;
    spec.days = cfg.days;
    spec.resolution = cfg.resolution;
    spec.area = cfg.area;
    spec.epsilon_m = cfg.epsilon_m;
    if let Some(s) = seed.or(cfg.seed) {
        spec.seed = s;
    }
    spec.validate()?;
    let syn = synthgen::synthesize(&spec)?;
    for p in [&cfg.towers, &cfg.antennas, &cfg.volumes] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    tessellation::write_towers(&syn.layout.towers, &cfg.towers)?;
    tessellation::write_antennas(&syn.layout.antennas, &cfg.antennas)?;
    volumes::write_volumes(&syn.calls, &syn.texts, &cfg.volumes, true)?;
    if !syn.zones.is_empty() {
        let path = cfg.zones.clone().unwrap_or_else(|| cfg.out("zones.csv"));
        events::write_zones(&syn.zones, &path)?;
    }
    synthgen::write_ground_truth(&syn.truth, &cfg.out("ground_truth.csv"))?;
    let spec_text = spec.to_spec_text();
    fsio::write_atomic(&cfg.out("generator.spec"), |w| w.write_all(spec_text.as_bytes()))?;
    fsio::write_atomic(&cfg.out("population.csv"), |w| {
        writeln!(w, "sector_id,density_km2")?;
        for (s, d) in syn.layout.tessellation.sectors.iter().zip(&syn.layout.density) {
            writeln!(w, "{},{}", s.sector_id, fsio::fmt_g(*d, 10))?;
        }
        Ok(())
    })?;
    println!(
        "{} sectors, {} bins at {}; {} calls, {} texts",
        syn.calls.n_sectors(),
        syn.calls.n_bins,
        spec.resolution,
        syn.calls.total(),
        syn.texts.total()
    );
    Ok(())
}

pub fn aggregate(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let to = cfg.aggregate_resolution;
    let (c, dropped) = resample(&calls, to)?;
    let (x, _) = resample(&texts, to)?;
    if dropped > 0 {
        println!(
            "dropped {dropped} trailing {} bins that do not fill a {to} bin",
            cfg.resolution
        );
    }
    volumes::write_volumes(&c, &x, &cfg.out(&format!("volumes_{to}.csv")), false)?;
    let (sc, sx) = (c.spatial_sum(), x.spatial_sum());
    fsio::write_atomic(&cfg.out(&format!("totals_{to}.csv")), |w| {
        writeln!(w, "bin,timestamp,calls,texts")?;
        for b in 0..c.n_bins {
            writeln!(w, "{b},{},{},{}", format_ts(c.bin_start(b)), sc[b], sx[b])?;
        }
        Ok(())
    })
}

pub fn anomaly_cmd(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let lag = cfg.lag_bins(cfg.resolution);
    let bins = window_bins(cfg, calls.n_bins, cfg.resolution)?;
    for t in [&calls, &texts] {
        let a = anomaly(t, lag)?;
        volumes::write_anomaly_csv(&a, bins.clone(), &cfg.out(&format!("anomaly_{}.csv", t.channel)))?;
    }
    Ok(())
}

fn read_covariate(cfg: &RunConfig, ids: &[String]) -> Result<Option<Vec<f64>>> {
    let Some(path) = &cfg.covariate else { return Ok(None) };
    cfg.require_files(&[("covariate", Some(path))])?;
    let mut rdr = fsio::csv_reader(path)?;
    rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let mut map = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = fsio::csv_line(&rec);
        if rec.len() != 2 {
            return Err(Error::parse(path, line, "expected sector_id,value"));
        }
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad value {:?}", &rec[1])))?;
        map.insert(rec[0].to_string(), v);
    }
    ids.iter()
        .map(|id| {
            map.get(id)
                .copied()
                .ok_or_else(|| Error::input(format!("{}: no value for sector {id}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

pub fn stats_cmd(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let areas: Vec<f64> = tess.sectors.iter().map(|s| s.area_km2).collect();
    let covariate = read_covariate(cfg, &calls.sector_ids)?;
    let lag = cfg.lag_bins(cfg.resolution);
    let mut fits = Vec::new();
    for t in [&calls, &texts] {
        let ch = t.channel;
        volumes::write_stats_csv(&minute_stats(t)?, &cfg.out(&format!("stats_{ch}.csv")))?;
        if cfg.density_stats {
            let st = volumes::minute_stats_density(t, &areas)?;
            volumes::write_stats_csv(&st, &cfg.out(&format!("stats_density_{ch}.csv")))?;
        }
        if lag < t.n_bins {
            let a = anomaly(t, lag)?;
            volumes::write_stats_csv(&anomaly_stats(&a)?, &cfg.out(&format!("anomaly_stats_{ch}.csv")))?;
            let rom = volumes::ratio_of_means(t, lag)?;
            fsio::write_atomic(&cfg.out(&format!("ratio_of_means_{ch}.csv")), |w| {
                writeln!(w, "bin,timestamp,ratio")?;
                for (b, r) in rom.iter().enumerate() {
                    let r = r.map_or("NA".to_string(), fsio::fmt_g6);
                    writeln!(w, "{b},{},{r}", volumes::format_ts(t.bin_start(b)))?;
                }
                Ok(())
            })?;
        }
        let trace = volumes::max_sector_trace(t)?;
        volumes::write_trace_csv(t, &trace, &cfg.out(&format!("trace_{ch}.csv")))?;
        if let Some(x) = &covariate {
            let total: Vec<f64> = (0..t.n_sectors())
                .map(|s| t.row(s).iter().map(|&c| c as f64).sum())
                .collect();
            let dens = density_values(&t.sector_ids, &total, &tess.sectors)?;
            fits.push((ch, volumes::scaling_fit(x, &dens)?));
        }
    }
    if !fits.is_empty() {
        fsio::write_atomic(&cfg.out("scaling.csv"), |w| {
            writeln!(w, "channel,slope,intercept,r,n_used,n_excluded")?;
            for (ch, f) in &fits {
                writeln!(
                    w,
                    "{ch},{},{},{},{},{}",
                    fsio::fmt_g6(f.slope),
                    fsio::fmt_g6(f.intercept),
                    fsio::fmt_g6(f.r),
                    f.n_used,
                    f.n_excluded
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Spatial mean per hour, truncated to whole weeks.
pub fn hourly_mean(t: &VolumeTensor) -> Result<Vec<f64>> {
    let h = coarsen(t, Resolution::Hour)?;
    let weeks = h.n_bins / 168;
    if weeks == 0 {
        return Err(Error::input("spectra need at least one week of data"));
    }
    let n = h.n_sectors() as f64;
    Ok(h.spatial_sum()[..weeks * 168].iter().map(|&v| v as f64 / n).collect())
}

pub fn spectrum(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let x = hourly_mean(&calls)?;
    let y = hourly_mean(&texts)?;
    for (ch, s) in [(Channel::Calls, &x), (Channel::Texts, &y)] {
        let psd = multitaper_psd(s, &cfg.spectral)?;
        spectral::write_spectrum_csv(&psd, &cfg.out(&format!("psd_{ch}.csv")))?;
    }
    let cross = multitaper_cross(&x, &y, &cfg.spectral)?;
    spectral::write_cross_csv(&cross, &cfg.out("cross.csv"))?;
    let b = spectral::nearest_bin(&cross.freqs, 1.0 / 24.0);
    let lag_h = cross.phase[b] / (2.0 * std::f64::consts::PI * cross.freqs[b]);
    println!(
        "daily band: coherency {:.4}, texts lag calls by {:.2} h",
        cross.coherency[b], lag_h
    );
    Ok(())
}

pub fn corr(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let t = coarsen(&pick(cfg.corr_channel, calls, texts), cfg.corr_resolution)?;
    let c = spatial_corr_matrix(&t, cfg.corr_transform)?;
    correlation::write_corr_csv(
        &c,
        &cfg.out(&format!("corr_{}_{}.csv", cfg.corr_channel, cfg.corr_resolution)),
    )?;
    let scores = (0..c.n())
        .map(|b| disruption_score(&c, b))
        .collect::<Result<Vec<_>>>()?;
    fsio::write_atomic(
        &cfg.out(&format!("disruption_{}_{}.csv", cfg.corr_channel, cfg.corr_resolution)),
        |w| {
            writeln!(w, "bin,label,score")?;
            for (b, s) in scores.iter().enumerate() {
                writeln!(
                    w,
                    "{b},{},{}",
                    c.labels[b],
                    s.map(fsio::fmt_g6).unwrap_or_else(|| "NA".into())
                )?;
            }
            Ok(())
        },
    )
}

pub fn grid(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let t = pick(cfg.grid_channel, calls, texts);
    let total: Vec<f64> = (0..t.n_sectors())
        .map(|s| t.row(s).iter().map(|&c| c as f64).sum())
        .collect();
    let dens = density_values(&t.sector_ids, &total, &tess.sectors)?;
    let pts: Vec<_> = tess.sectors.iter().map(|s| s.centroid_utm).zip(dens).collect();
    let r = interpolate_grid(&pts, cfg.grid_cell_m, None)?;
    write_raster_asc(&r, &cfg.out(&format!("density_{}.asc", cfg.grid_channel)))
}

pub fn tsmap(cfg: &RunConfig) -> Result<()> {
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let t = coarsen(&pick(cfg.tsmap_channel, calls, texts), Resolution::Day)?;
    let m = time_space_map(&t, &tess.sectors)?;
    write_tsmap_csv(&m, false, &cfg.out(&format!("tsmap_{}.csv", cfg.tsmap_channel)))?;
    write_tsmap_csv(&m, true, &cfg.out(&format!("tsmap_{}_display.csv", cfg.tsmap_channel)))
}

pub fn quake(cfg: &RunConfig) -> Result<()> {
    let scenario = cfg.quake.ok_or_else(|| {
        Error::config(format!(
            "{}: quake needs quake_onset, epicenter_lat and epicenter_lon",
            cfg.source.display()
        ))
    })?;
    if cfg.resolution != Resolution::Minute {
        return Err(Error::config("quake analysis needs minute-resolution volumes"));
    }
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let lag = cfg.lag_bins(Resolution::Minute);
    let timing_cfg = events::TimingConfig {
        window_min: cfg.timing_window_min,
        onset_k: cfg.onset_k,
        recovery_k: cfg.recovery_k,
    };
    let dist = events::sector_distances(&calls.sector_ids, &tess.sectors, &scenario)?;
    let mut timings = Vec::new();
    let onset_bin = (scenario.onset - cfg.start).num_minutes() as usize;
    let win = onset_bin.saturating_sub(cfg.timing_window_min)..(onset_bin + cfg.timing_window_min).min(calls.n_bins);
    for t in [&calls, &texts] {
        let ch = t.channel;
        let a = anomaly(t, lag)?;
        let st = anomaly_stats(&a)?;
        let tm = quake_timing(&st, &scenario, &timing_cfg)?;
        let sub = volumes::MinuteStats {
            t0: st.bin_start(win.start),
            resolution: st.resolution,
            mu: st.mu[win.clone()].to_vec(),
            sigma: st.sigma[win.clone()].to_vec(),
            n: st.n[win.clone()].to_vec(),
        };
        volumes::write_stats_csv(&sub, &cfg.out(&format!("quake_stats_{ch}.csv")))?;
        let at = match (cfg.profile_offset_min, tm.peak) {
            (Some(off), _) => scenario.onset + Duration::minutes(off),
            (None, Some(p)) => p,
            (None, None) => scenario.onset,
        };
        let bin = a
            .bin_of(at)
            .ok_or_else(|| Error::input(format!("profile time {} outside the data", format_ts(at))))?;
        let p = quake_profile(&a, bin, &tess.sectors, &scenario, cfg.profile_bin_km)?;
        events::write_profile_csv(&p, &cfg.out(&format!("quake_profile_{ch}.csv")))?;
        let labels = classify_response(&a, bin)?;
        fsio::write_atomic(&cfg.out(&format!("quake_classes_{ch}.csv")), |w| {
            writeln!(w, "sector_id,distance_km,anomaly,label")?;
            for (s, id) in a.sector_ids.iter().enumerate() {
                let v = a.get(s, bin).map(fsio::fmt_g6).unwrap_or_else(|| "NA".into());
                let l = labels[s].map(|l| l.as_str()).unwrap_or("NA");
                writeln!(w, "{id},{},{v},{l}", fsio::fmt_g6(dist[s]))?;
            }
            Ok(())
        })?;
        info!("{ch}: onset {:?} peak {:?}", tm.onset, tm.peak);
        timings.push((ch, tm));
    }
    let rows: Vec<(&str, &events::QuakeTiming)> = timings.iter().map(|(c, t)| (c.as_str(), t)).collect();
    events::write_timing_csv(&rows, &scenario, &cfg.out("quake_timing.csv"))?;
    for (ch, t) in &timings {
        println!(
            "{ch}: onset {} peak +{} min ({}), recovery +{} min",
            t.onset.map(format_ts).unwrap_or_else(|| "none".into()),
            t.peak_offset_min(&scenario)
                .map(|m| m.to_string())
                .unwrap_or_else(|| "NA".into()),
            t.peak_value.map(fsio::fmt_g6).unwrap_or_else(|| "NA".into()),
            t.recovery_offset_min(&scenario)
                .map(|m| m.to_string())
                .unwrap_or_else(|| "NA".into()),
        );
    }
    Ok(())
}

pub fn storm(cfg: &RunConfig) -> Result<()> {
    let day = cfg
        .storm_day
        .ok_or_else(|| Error::config(format!("{}: storm needs storm_day", cfg.source.display())))?;
    cfg.require_files(&[("zones", cfg.zones.as_deref())])?;
    let zones = events::read_zones(cfg.zones.as_deref().unwrap())?;
    let tess = tessellation(cfg)?;
    let (calls, texts) = load(cfg, &tess)?;
    let c = coarsen(&calls, Resolution::Hour)?;
    let x = coarsen(&texts, Resolution::Hour)?;
    let series = zone_series(&c, &x, &tess.sectors, &zones)?;
    events::write_zone_series_csv(&series, &cfg.out("zone_series.csv"))?;
    let start = c
        .bin_of(day.and_hms_opt(0, 0, 0).expect("midnight"))
        .ok_or_else(|| Error::input(format!("storm day {day} outside the data")))?;
    let window = start..(start + cfg.storm_window_h).min(c.n_bins);
    let mut rows = Vec::new();
    for z in series.iter().filter(|z| !z.is_empty() && z.zone_id != CONTROL_ZONE) {
        let d = divergence_detect(z, window.clone(), cfg.theta)?;
        match d.onset_bin {
            Some(b) => println!("{}: divergence at {}", z.zone_id, format_ts(z.bin_start(b))),
            None => println!("{}: no divergence", z.zone_id),
        }
        rows.push((z, d));
    }
    events::write_detections_csv(&rows, &cfg.out("detections.csv"))
}
