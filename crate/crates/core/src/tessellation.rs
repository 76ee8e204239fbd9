//! Sector tessellation.
//!
//! Each tower is split into one site per antenna azimuth by nudging the tower
//! location `epsilon_m` metres toward the azimuth. The Voronoi diagram of the
//! nudged sites, clipped to the study disc, gives one polygon per sector: cells
//! of sibling sites meet at the tower and bisect the angles between azimuths.
//!
//! All geometry is planar in UTM zone 18N, relative to the disc centre.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsio;
use crate::geodesy::utm::{latlon_to_utm, utm_to_latlon, UtmPoint};
use crate::geom::{self, Pt};

pub const DEFAULT_EPSILON_M: f64 = 1.0;
pub const DISC_VERTICES: usize = 720;
/// Azimuths on one tower closer than this are treated as one sector.
pub const AZIMUTH_MERGE_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TowerSite {
    pub tower_id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntennaGroup {
    pub tower_id: String,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyArea {
    pub center_lat: f64,
    pub center_lon: f64,
    pub radius_km: f64,
}

impl Default for StudyArea {
    /// 50 miles around Times Square.
    fn default() -> Self {
        StudyArea {
            center_lat: 40.7580,
            center_lon: -73.9855,
            radius_km: 80.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    /// `tower_id:azimuth`, or the bare tower id for tower-only cells.
    pub sector_id: String,
    pub tower_id: String,
    pub azimuth_deg: Option<f64>,
    /// Counter-clockwise ring in UTM metres, not closed.
    pub polygon: Vec<UtmPoint>,
    pub centroid_latlon: (f64, f64),
    pub centroid_utm: UtmPoint,
    pub area_km2: f64,
    /// The (possibly perturbed) Voronoi generator of this cell.
    pub site: UtmPoint,
}

impl Sector {
    pub fn polygon_wkt(&self) -> String {
        let ring = self.polygon.iter().map(|p| Pt::new(p.easting, p.northing)).collect();
        geom::Polygon::new(ring).to_wkt()
    }

    pub fn contains_utm(&self, p: UtmPoint) -> bool {
        let ring: Vec<Pt> = self.polygon.iter().map(|q| Pt::new(q.easting, q.northing)).collect();
        geom::point_in_ring(&ring, Pt::new(p.easting, p.northing))
    }
}

#[derive(Debug, Clone)]
pub struct Tessellation {
    pub area: StudyArea,
    pub center: UtmPoint,
    pub sectors: Vec<Sector>,
}

impl Tessellation {
    pub fn disc_polygon_area_km2(&self) -> f64 {
        geom::signed_area(&disc_polygon(self.area.radius_km * 1000.0)) / 1e6
    }

    pub fn total_area_km2(&self) -> f64 {
        self.sectors.iter().map(|s| s.area_km2).sum()
    }

    pub fn get(&self, sector_id: &str) -> Option<&Sector> {
        self.sectors
            .binary_search_by(|s| s.sector_id.as_str().cmp(sector_id))
            .ok()
            .map(|i| &self.sectors[i])
    }

    pub fn sector_ids(&self) -> Vec<String> {
        self.sectors.iter().map(|s| s.sector_id.clone()).collect()
    }

    /// Sector whose generator is nearest to the point, or `None` outside the
    /// study disc. Ties go to the lexicographically smallest sector id.
    pub fn locate_point(&self, lat: f64, lon: f64) -> Option<&str> {
        let p = latlon_to_utm(lat, lon).ok()?;
        if p.distance(&self.center) > self.area.radius_km * 1000.0 {
            return None;
        }
        let mut best: Option<(f64, &Sector)> = None;
        // Sectors are sorted by id, so a strict comparison keeps the smallest id on ties.
        for s in &self.sectors {
            let d2 = (s.site.easting - p.easting).powi(2) + (s.site.northing - p.northing).powi(2);
            if best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, s));
            }
        }
        best.map(|(_, s)| s.sector_id.as_str())
    }
}

/// Regular polygon with the same area as the disc of radius `r` (metres).
pub fn disc_polygon(r: f64) -> Vec<Pt> {
    let step = std::f64::consts::TAU / DISC_VERTICES as f64;
    let r_eq = r * (step / step.sin()).sqrt();
    (0..DISC_VERTICES)
        .map(|k| {
            let a = step * k as f64;
            Pt::new(r_eq * a.cos(), r_eq * a.sin())
        })
        .collect()
}

fn format_azimuth(az: f64) -> String {
    format!("{az}")
}

/// Group antennas per tower, merging azimuths within [`AZIMUTH_MERGE_DEG`]
/// (circularly). Each group is represented by the first azimuth of its run.
pub fn group_azimuths(antennas: &[AntennaGroup]) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut raw: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for a in antennas {
        if !a.azimuth_deg.is_finite() {
            return Err(Error::input(format!("tower {}: non-finite azimuth", a.tower_id)));
        }
        raw.entry(a.tower_id.clone())
            .or_default()
            .push(a.azimuth_deg.rem_euclid(360.0));
    }
    let mut out = BTreeMap::new();
    for (tower, mut az) in raw {
        az.sort_by(f64::total_cmp);
        let mut runs: Vec<Vec<f64>> = Vec::new();
        for a in az {
            match runs.last_mut() {
                Some(run) if a - *run.last().unwrap() < AZIMUTH_MERGE_DEG => run.push(a),
                _ => runs.push(vec![a]),
            }
        }
        if runs.len() > 1 {
            let first = runs[0][0];
            let last = *runs.last().unwrap().last().unwrap();
            if first + 360.0 - last < AZIMUTH_MERGE_DEG {
                let wrap = runs.pop().unwrap();
                let mut merged = wrap;
                merged.extend(runs[0].iter().copied());
                runs[0] = merged;
            }
        }
        let mut reps: Vec<f64> = runs.iter().map(|r| r[0]).collect();
        reps.sort_by(f64::total_cmp);
        out.insert(tower, reps);
    }
    Ok(out)
}

struct ProjectedTower {
    id: String,
    local: Pt,
}

fn project_towers(towers: &[TowerSite], area: &StudyArea) -> Result<(UtmPoint, Vec<ProjectedTower>)> {
    if !(area.radius_km > 0.0) || !area.radius_km.is_finite() {
        return Err(Error::input(format!(
            "study radius must be positive, got {}",
            area.radius_km
        )));
    }
    if towers.is_empty() {
        return Err(Error::input("no towers"));
    }
    let center = latlon_to_utm(area.center_lat, area.center_lon)?;
    let r = area.radius_km * 1000.0;
    let mut seen = HashSet::new();
    let mut outside = Vec::new();
    let mut out = Vec::with_capacity(towers.len());
    for t in towers {
        if !seen.insert(t.tower_id.as_str()) {
            return Err(Error::input(format!("duplicate tower_id {}", t.tower_id)));
        }
        if !(-90.0..=90.0).contains(&t.lat) || !(-180.0..=180.0).contains(&t.lon) {
            return Err(Error::input(format!("tower {}: coordinates out of range", t.tower_id)));
        }
        let p = latlon_to_utm(t.lat, t.lon).map_err(|e| Error::input(format!("tower {}: {e}", t.tower_id)))?;
        let local = Pt::new(p.easting - center.easting, p.northing - center.northing);
        if local.x.hypot(local.y) > r {
            outside.push(t.tower_id.clone());
            continue;
        }
        out.push(ProjectedTower {
            id: t.tower_id.clone(),
            local,
        });
    }
    if !outside.is_empty() {
        return Err(Error::input(format!(
            "towers outside study disc: {}",
            outside.join(", ")
        )));
    }
    Ok((center, out))
}

fn min_pair_distance(points: &[Pt]) -> f64 {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    let mut best = f64::INFINITY;
    for i in 0..idx.len() {
        let p = points[idx[i]];
        for &j in &idx[i + 1..] {
            let q = points[j];
            if q.x - p.x >= best {
                break;
            }
            best = best.min(p.dist2(&q).sqrt());
        }
    }
    best
}

struct SiteSpec {
    sector_id: String,
    tower_id: String,
    azimuth: Option<f64>,
    local: Pt,
}

/// Azimuth-refined sector tessellation.
pub fn build_sectors(
    towers: &[TowerSite],
    antennas: &[AntennaGroup],
    area: StudyArea,
    epsilon_m: f64,
) -> Result<Tessellation> {
    if !(epsilon_m > 0.0) || !epsilon_m.is_finite() {
        return Err(Error::input(format!("epsilon_m must be positive, got {epsilon_m}")));
    }
    let (center, projected) = project_towers(towers, &area)?;
    let groups = group_azimuths(antennas)?;
    let known: HashSet<&str> = projected.iter().map(|t| t.id.as_str()).collect();
    let unknown: Vec<&str> = groups
        .keys()
        .map(String::as_str)
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::input(format!(
            "antennas reference unknown towers: {}",
            unknown.join(", ")
        )));
    }
    let tower_pts: Vec<Pt> = projected.iter().map(|t| t.local).collect();
    let min_d = min_pair_distance(&tower_pts);
    if min_d <= 2.0 * epsilon_m {
        return Err(Error::input(format!(
            "epsilon_m {epsilon_m} is not below half the minimum tower spacing ({min_d:.3} m)"
        )));
    }

    let mut sites = Vec::new();
    for t in &projected {
        let Some(az) = groups.get(&t.id) else {
            log::warn!("tower {} has no antennas; no sectors emitted", t.id);
            continue;
        };
        for &a in az {
            let rad = a.to_radians();
            sites.push(SiteSpec {
                sector_id: format!("{}:{}", t.id, format_azimuth(a)),
                tower_id: t.id.clone(),
                azimuth: Some(a),
                local: Pt::new(t.local.x + epsilon_m * rad.sin(), t.local.y + epsilon_m * rad.cos()),
            });
        }
    }
    assemble(center, area, sites)
}

/// Baseline tessellation with one cell per tower.
pub fn tower_only_tessellation(towers: &[TowerSite], area: StudyArea) -> Result<Tessellation> {
    let (center, projected) = project_towers(towers, &area)?;
    let sites = projected
        .into_iter()
        .map(|t| SiteSpec {
            sector_id: t.id.clone(),
            tower_id: t.id,
            azimuth: None,
            local: t.local,
        })
        .collect();
    assemble(center, area, sites)
}

fn assemble(center: UtmPoint, area: StudyArea, mut sites: Vec<SiteSpec>) -> Result<Tessellation> {
    if sites.is_empty() {
        return Err(Error::input("no sectors to tessellate"));
    }
    sites.sort_by(|a, b| a.sector_id.cmp(&b.sector_id));
    if let Some(w) = sites.windows(2).find(|w| w[0].sector_id == w[1].sector_id) {
        return Err(Error::internal(format!("duplicate sector id {}", w[0].sector_id)));
    }
    let mut by_pos: Vec<usize> = (0..sites.len()).collect();
    by_pos.sort_by(|&a, &b| {
        (sites[a].local.x, sites[a].local.y)
            .partial_cmp(&(sites[b].local.x, sites[b].local.y))
            .unwrap()
    });
    if let Some(w) = by_pos.windows(2).find(|w| sites[w[0]].local == sites[w[1]].local) {
        return Err(Error::internal(format!(
            "perturbed sites coincide: {} and {}",
            sites[w[0]].sector_id, sites[w[1]].sector_id
        )));
    }

    let pts: Vec<Pt> = sites.iter().map(|s| s.local).collect();
    let r = area.radius_km * 1000.0;
    let cells = voronoi_cells(&pts, r);

    let sectors = sites
        .into_iter()
        .zip(cells)
        .map(|(site, cell)| {
            let a = geom::signed_area(&cell);
            if cell.len() < 3 || a <= 0.0 {
                return Err(Error::input(format!(
                    "sector {} has an empty cell (site on the disc edge?)",
                    site.sector_id
                )));
            }
            let c = geom::centroid(&cell);
            let centroid_utm = UtmPoint::new(center.easting + c.x, center.northing + c.y);
            let centroid_latlon = utm_to_latlon(centroid_utm)?;
            Ok(Sector {
                sector_id: site.sector_id,
                tower_id: site.tower_id,
                azimuth_deg: site.azimuth,
                polygon: cell
                    .iter()
                    .map(|p| UtmPoint::new(center.easting + p.x, center.northing + p.y))
                    .collect(),
                centroid_latlon,
                centroid_utm,
                area_km2: a / 1e6,
                site: UtmPoint::new(center.easting + site.local.x, center.northing + site.local.y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tessellation { area, center, sectors })
}

/// Voronoi cells of `sites` clipped to the area-preserving disc polygon of
/// radius `r`, by successive half-plane clipping against nearby sites.
fn voronoi_cells(sites: &[Pt], r: f64) -> Vec<Vec<Pt>> {
    let disc = disc_polygon(r);
    let extent = r * 1.001;
    let n = sites.len();
    let nb = ((n as f64).sqrt().ceil() as usize).clamp(1, 512);
    let bsize = 2.0 * extent / nb as f64;
    let bucket_of = |p: &Pt| {
        let bx = (((p.x + extent) / bsize).floor() as isize).clamp(0, nb as isize - 1);
        let by = (((p.y + extent) / bsize).floor() as isize).clamp(0, nb as isize - 1);
        (bx, by)
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nb * nb];
    for (i, p) in sites.iter().enumerate() {
        let (bx, by) = bucket_of(p);
        buckets[by as usize * nb + bx as usize].push(i);
    }

    (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sites[i];
            let mut cell = disc.clone();
            let (bx, by) = bucket_of(&s);
            let mut cand: Vec<(f64, usize)> = Vec::new();
            for ring in 0..=nb as isize {
                let rmax = cell.iter().map(|v| v.dist2(&s)).fold(0.0, f64::max).sqrt();
                if ring >= 1 && (ring - 1) as f64 * bsize > 2.0 * rmax {
                    break;
                }
                cand.clear();
                for y in (by - ring)..=(by + ring) {
                    if y < 0 || y >= nb as isize {
                        continue;
                    }
                    let on_edge = y == by - ring || y == by + ring;
                    let xs: Vec<isize> = if on_edge {
                        ((bx - ring)..=(bx + ring)).collect()
                    } else {
                        vec![bx - ring, bx + ring]
                    };
                    for x in xs {
                        if x < 0 || x >= nb as isize {
                            continue;
                        }
                        for &j in &buckets[y as usize * nb + x as usize] {
                            if j != i {
                                cand.push((sites[j].dist2(&s), j));
                            }
                        }
                    }
                }
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(d2, j) in &cand {
                    let rmax2 = cell.iter().map(|v| v.dist2(&s)).fold(0.0, f64::max);
                    if d2 > 4.0 * rmax2 {
                        break;
                    }
                    let o = sites[j];
                    let mid = Pt::new(0.5 * (s.x + o.x), 0.5 * (s.y + o.y));
                    let normal = Pt::new(o.x - s.x, o.y - s.y);
                    cell = geom::clip_halfplane(&cell, mid, normal);
                    if cell.len() < 3 {
                        return cell;
                    }
                }
                if ring > 0
                    && (bx - ring <= 0
                        && by - ring <= 0
                        && bx + ring >= nb as isize - 1
                        && by + ring >= nb as isize - 1)
                {
                    break;
                }
            }
            cell
        })
        .collect()
}

pub fn read_towers(path: &Path) -> Result<Vec<TowerSite>> {
    let mut rdr = fsio::csv_reader(path)?;
    fsio::expect_header(path, &mut rdr, &["tower_id", "lat", "lon"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = fsio::csv_line(&rec);
        let num = |k: usize, name: &str| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("bad {name} {:?}", &rec[k])))
        };
        if rec[0].is_empty() {
            return Err(Error::parse(path, line, "empty tower_id"));
        }
        out.push(TowerSite {
            tower_id: rec[0].to_string(),
            lat: num(1, "lat")?,
            lon: num(2, "lon")?,
        });
    }
    Ok(out)
}

pub fn read_antennas(path: &Path) -> Result<Vec<AntennaGroup>> {
    let mut rdr = fsio::csv_reader(path)?;
    fsio::expect_header(path, &mut rdr, &["tower_id", "azimuth_deg"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = fsio::csv_line(&rec);
        let az = rec[1]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(path, line, format!("bad azimuth_deg {:?}", &rec[1])))?;
        out.push(AntennaGroup {
            tower_id: rec[0].to_string(),
            azimuth_deg: az,
        });
    }
    Ok(out)
}

pub fn write_towers(towers: &[TowerSite], path: &Path) -> Result<()> {
    use std::io::Write;
    fsio::write_atomic(path, |w| {
        writeln!(w, "tower_id,lat,lon")?;
        for t in towers {
            writeln!(w, "{},{},{}", t.tower_id, t.lat, t.lon)?;
        }
        Ok(())
    })
}

pub fn write_antennas(antennas: &[AntennaGroup], path: &Path) -> Result<()> {
    use std::io::Write;
    fsio::write_atomic(path, |w| {
        writeln!(w, "tower_id,azimuth_deg")?;
        for a in antennas {
            writeln!(w, "{},{}", a.tower_id, a.azimuth_deg)?;
        }
        Ok(())
    })
}

/// Sector table plus the `sector_id,wkt` polygon sidecar.
pub fn write_sectors(tess: &Tessellation, path: &Path, wkt_path: &Path) -> Result<()> {
    use std::io::Write;
    fsio::write_atomic(path, |w| {
        writeln!(w, "sector_id,tower_id,azimuth_deg,centroid_lat,centroid_lon,area_km2")?;
        for s in &tess.sectors {
            let az = s.azimuth_deg.map(format_azimuth).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.sector_id, s.tower_id, az, s.centroid_latlon.0, s.centroid_latlon.1, s.area_km2
            )?;
        }
        Ok(())
    })?;
    fsio::write_atomic(wkt_path, |w| {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["sector_id", "wkt"])?;
        for s in &tess.sectors {
            cw.write_record([s.sector_id.as_str(), s.polygon_wkt().as_str()])?;
        }
        cw.flush()
    })
}
