//! Day × latitude-ordered-sector volume maps.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use chrono::Datelike;

use crate::error::{Error, Result};
use crate::fsio;
use crate::stats;
use crate::tessellation::Sector;
use crate::volumes::{Resolution, VolumeTensor};

pub const DEFAULT_SATURATION_Q: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpaceMap {
    /// Day of year of each row.
    pub days: Vec<u32>,
    /// Sector ids ordered by centroid latitude, then id.
    pub sector_ids: Vec<String>,
    /// `values[d * n_sectors + j]`.
    pub values: Vec<f64>,
    pub saturation_q: f64,
}

impl TimeSpaceMap {
    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_sectors(&self) -> usize {
        self.sector_ids.len()
    }

    pub fn get(&self, day: usize, j: usize) -> f64 {
        self.values[day * self.n_sectors() + j]
    }

    /// Values above this are saturated in the display transform.
    pub fn clip_threshold(&self) -> f64 {
        stats::quantile(&self.values, self.saturation_q).unwrap_or(0.0)
    }

    /// `log10(min(v, clip) + 1) / log10(clip + 1)`, in [0, 1].
    pub fn display(&self) -> Vec<f64> {
        let clip = self.clip_threshold();
        let denom = (clip + 1.0).log10();
        self.values
            .iter()
            .map(|v| {
                if denom > 0.0 {
                    (v.min(clip) + 1.0).log10() / denom
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Mean over sectors for each day.
    pub fn day_means(&self) -> Vec<f64> {
        self.values.chunks(self.n_sectors()).map(stats::mean).collect()
    }
}

/// Order sector ids by centroid latitude, ties by id.
pub fn latitude_order(ids: &[String], sectors: &[Sector]) -> Result<Vec<usize>> {
    let lat: HashMap<&str, f64> = sectors
        .iter()
        .map(|s| (s.sector_id.as_str(), s.centroid_latlon.0))
        .collect();
    let mut keyed = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let l = *lat
            .get(id.as_str())
            .ok_or_else(|| Error::input(format!("no geometry for sector {id}")))?;
        keyed.push((l, id.as_str(), i));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    Ok(keyed.into_iter().map(|k| k.2).collect())
}

pub fn time_space_map(t: &VolumeTensor, sectors: &[Sector]) -> Result<TimeSpaceMap> {
    if t.resolution != Resolution::Day {
        return Err(Error::input("time-space map needs a daily tensor"));
    }
    if t.n_bins == 0 || t.n_sectors() == 0 {
        return Err(Error::input("empty tensor"));
    }
    let order = latitude_order(&t.sector_ids, sectors)?;
    let ns = order.len();
    let mut values = vec![0.0; t.n_bins * ns];
    for (j, &s) in order.iter().enumerate() {
        for (d, &c) in t.row(s).iter().enumerate() {
            values[d * ns + j] = c as f64;
        }
    }
    Ok(TimeSpaceMap {
        days: (0..t.n_bins).map(|d| t.bin_start(d).ordinal()).collect(),
        sector_ids: order.iter().map(|&s| t.sector_ids[s].clone()).collect(),
        values,
        saturation_q: DEFAULT_SATURATION_Q,
    })
}

/// Writes raw volumes, or the display transform when `display` is set.
pub fn write_tsmap_csv(m: &TimeSpaceMap, display: bool, path: &Path) -> Result<()> {
    let shown = if display { m.display() } else { m.values.clone() };
    fsio::write_atomic(path, |w| {
        write!(w, "day")?;
        for id in &m.sector_ids {
            write!(w, ",{id}")?;
        }
        writeln!(w)?;
        for (d, row) in shown.chunks(m.n_sectors()).enumerate() {
            write!(w, "{}", m.days[d])?;
            for v in row {
                write!(w, ",{}", fsio::fmt_g6(*v))?;
            }
            writeln!(w)?;
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

    fn sector(id: &str, lat: f64) -> Sector {
        Sector {
            sector_id: id.into(),
            tower_id: id.into(),
            azimuth_deg: None,
            polygon: vec![],
            centroid_latlon: (lat, -74.0),
            centroid_utm: UtmPoint::new(0.0, 0.0),
            area_km2: 1.0,
            site: UtmPoint::new(0.0, 0.0),
        }
    }

    fn daily(rows: &[&[u32]]) -> VolumeTensor {
        let t0 = NaiveDate::from_ymd_opt(2011, 8, 20)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        let mut t = VolumeTensor::zeros(Channel::Calls, Resolution::Day, t0, ids, rows[0].len()).unwrap();
        for (s, r) in rows.iter().enumerate() {
            t.row_mut(s).copy_from_slice(r);
        }
        t
    }

    #[test]
    fn constant_map() {
        let t = daily(&[&[4, 4, 4], &[4, 4, 4]]);
        let secs = [sector("s0", 41.0), sector("s1", 40.5)];
        let m = time_space_map(&t, &secs).unwrap();
        assert_eq!((m.n_days(), m.n_sectors()), (3, 2));
        assert_eq!(m.clip_threshold(), 4.0);
        assert!(m.display().iter().all(|v| *v == 1.0));
        assert_eq!(m.sector_ids, vec!["s1", "s0"]);
        assert_eq!(m.days, vec![232, 233, 234]);
    }

    #[test]
    fn latitude_ties_use_id() {
        let secs = [sector("b", 40.0), sector("a", 40.0), sector("c", 39.0)];
        let ids: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
        let ord = latitude_order(&ids, &secs).unwrap();
        assert_eq!(ord, vec![2, 1, 0]);
        let reordered: Vec<String> = ord.iter().map(|&i| ids[i].clone()).collect();
        assert_eq!(latitude_order(&reordered, &secs).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn needs_daily_tensor() {
        let mut t = daily(&[&[1]]);
        t.resolution = Resolution::Hour;
        assert!(time_space_map(&t, &[sector("s0", 40.0)]).is_err());
    }
}
