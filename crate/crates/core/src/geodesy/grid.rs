//! Scattered-centroid interpolation onto regular UTM grids.
//!
//! Values are interpolated linearly inside the triangles of the Delaunay
//! triangulation of the centroids; cells outside the convex hull are nodata.

use std::io::Write;
use std::path::Path;

use spade::handles::FixedVertexHandle;
use spade::{DelaunayTriangulation, Point2, PositionInTriangulation, Triangulation};

use super::utm::UtmPoint;
use crate::error::{Error, Result};
use crate::fsio;

pub const DEFAULT_CELL_M: f64 = 30.0;
pub const DEFAULT_NODATA: f64 = -9999.0;

/// Axis-aligned extent in UTM metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min_e: f64,
    pub min_n: f64,
    pub max_e: f64,
    pub max_n: f64,
}

/// Row-major grid; row 0 is the northernmost row, matching the on-disk order.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub origin_easting: f64,
    pub origin_northing: f64,
    pub cell_m: f64,
    pub ncols: usize,
    pub nrows: usize,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(origin_easting: f64, origin_northing: f64, cell_m: f64, ncols: usize, nrows: usize) -> Self {
        Raster {
            origin_easting,
            origin_northing,
            cell_m,
            ncols,
            nrows,
            nodata: DEFAULT_NODATA,
            values: vec![DEFAULT_NODATA; ncols * nrows],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == self.nodata
    }

    pub fn cell_center(&self, row: usize, col: usize) -> UtmPoint {
        UtmPoint::new(
            self.origin_easting + (col as f64 + 0.5) * self.cell_m,
            self.origin_northing + (self.nrows as f64 - row as f64 - 0.5) * self.cell_m,
        )
    }

    /// Row/column of the cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: UtmPoint) -> Option<(usize, usize)> {
        let c = ((p.easting - self.origin_easting) / self.cell_m).floor();
        let r_from_bottom = ((p.northing - self.origin_northing) / self.cell_m).floor();
        if c < 0.0 || r_from_bottom < 0.0 || c >= self.ncols as f64 || r_from_bottom >= self.nrows as f64 {
            return None;
        }
        Some((self.nrows - 1 - r_from_bottom as usize, c as usize))
    }
}

/// Piecewise-linear interpolant over the Delaunay triangulation of the input points.
pub struct TinInterpolator {
    tri: DelaunayTriangulation<Point2<f64>>,
    values: Vec<f64>,
    origin: (f64, f64),
}

impl TinInterpolator {
    pub fn new(points: &[(UtmPoint, f64)]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::input(format!("need at least 3 centroids, got {}", points.len())));
        }
        if let Some((_, v)) = points
            .iter()
            .find(|(p, v)| !v.is_finite() || !p.easting.is_finite() || !p.northing.is_finite())
        {
            return Err(Error::input(format!("non-finite centroid or value ({v})")));
        }
        // Work relative to the first point to keep coordinates small.
        let origin = (points[0].0.easting, points[0].0.northing);
        let mut tri = DelaunayTriangulation::<Point2<f64>>::new();
        let mut values: Vec<f64> = Vec::with_capacity(points.len());
        for (p, v) in points {
            let before = tri.num_vertices();
            let h = tri
                .insert(Point2::new(p.easting - origin.0, p.northing - origin.1))
                .map_err(|e| Error::input(format!("cannot triangulate point: {e:?}")))?;
            if tri.num_vertices() == before {
                if values[h.index()] != *v {
                    return Err(Error::input(format!(
                        "duplicate centroid at ({}, {}) with conflicting values",
                        p.easting, p.northing
                    )));
                }
                continue;
            }
            debug_assert_eq!(h.index(), values.len());
            values.push(*v);
        }
        if tri.num_inner_faces() == 0 {
            return Err(Error::input("centroids are collinear"));
        }
        Ok(TinInterpolator { tri, values, origin })
    }

    fn value_of(&self, h: FixedVertexHandle) -> f64 {
        self.values[h.index()]
    }

    /// Interpolated value at `p`, or `None` outside the convex hull.
    pub fn value_at(&self, p: UtmPoint) -> Option<f64> {
        let q = Point2::new(p.easting - self.origin.0, p.northing - self.origin.1);
        match self.tri.locate(q) {
            PositionInTriangulation::OnVertex(h) => Some(self.value_of(h)),
            PositionInTriangulation::OnEdge(e) => {
                let e = self.tri.directed_edge(e);
                let face = if e.face().is_outer() { e.rev().face() } else { e.face() };
                let f = face.as_inner()?;
                let [a, b, c] = f.vertices();
                Some(barycentric_value(
                    [a.position(), b.position(), c.position()],
                    [self.value_of(a.fix()), self.value_of(b.fix()), self.value_of(c.fix())],
                    q,
                ))
            }
            PositionInTriangulation::OnFace(f) => {
                let f = self.tri.face(f);
                let [a, b, c] = f.vertices();
                Some(barycentric_value(
                    [a.position(), b.position(), c.position()],
                    [self.value_of(a.fix()), self.value_of(b.fix()), self.value_of(c.fix())],
                    q,
                ))
            }
            _ => None,
        }
    }

    pub fn rasterize(&self, cell_m: f64, extent: Extent) -> Result<Raster> {
        if !(cell_m > 0.0) {
            return Err(Error::input("cell size must be positive"));
        }
        if !(extent.max_e > extent.min_e && extent.max_n > extent.min_n) {
            return Err(Error::input("empty raster extent"));
        }
        let ncols = ((extent.max_e - extent.min_e) / cell_m).ceil().max(1.0) as usize;
        let nrows = ((extent.max_n - extent.min_n) / cell_m).ceil().max(1.0) as usize;
        let mut r = Raster::new(extent.min_e, extent.min_n, cell_m, ncols, nrows);
        // Cell-centre coordinates relative to the triangulation origin.
        let x0 = extent.min_e - self.origin.0;
        let y0 = extent.min_n - self.origin.1;
        for f in self.tri.inner_faces() {
            let [a, b, c] = f.vertices();
            let pos = [a.position(), b.position(), c.position()];
            let vals = [self.value_of(a.fix()), self.value_of(b.fix()), self.value_of(c.fix())];
            let min_x = pos.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
            let max_x = pos.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            let min_y = pos.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let max_y = pos.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            let c_lo = (((min_x - x0) / cell_m - 0.5).ceil().max(0.0)) as usize;
            let c_hi = ((max_x - x0) / cell_m - 0.5).floor();
            let b_lo = (((min_y - y0) / cell_m - 0.5).ceil().max(0.0)) as usize;
            let b_hi = ((max_y - y0) / cell_m - 0.5).floor();
            if c_hi < 0.0 || b_hi < 0.0 {
                continue;
            }
            let c_hi = (c_hi as usize).min(ncols - 1);
            let b_hi = (b_hi as usize).min(nrows - 1);
            let det = cross(sub(pos[1], pos[0]), sub(pos[2], pos[0]));
            let tol = 1e-12;
            for rb in b_lo..=b_hi {
                let y = y0 + (rb as f64 + 0.5) * cell_m;
                let row = nrows - 1 - rb;
                for col in c_lo..=c_hi {
                    let p = Point2::new(x0 + (col as f64 + 0.5) * cell_m, y);
                    let la = cross(sub(pos[1], p), sub(pos[2], p)) / det;
                    let lb = cross(sub(pos[2], p), sub(pos[0], p)) / det;
                    let lc = 1.0 - la - lb;
                    if la >= -tol && lb >= -tol && lc >= -tol {
                        r.values[row * ncols + col] = la * vals[0] + lb * vals[1] + lc * vals[2];
                    }
                }
            }
        }
        Ok(r)
    }
}

fn sub(a: Point2<f64>, b: Point2<f64>) -> Point2<f64> {
    Point2::new(a.x - b.x, a.y - b.y)
}

fn cross(a: Point2<f64>, b: Point2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn barycentric_value(pos: [Point2<f64>; 3], vals: [f64; 3], p: Point2<f64>) -> f64 {
    let det = cross(sub(pos[1], pos[0]), sub(pos[2], pos[0]));
    let la = cross(sub(pos[1], p), sub(pos[2], p)) / det;
    let lb = cross(sub(pos[2], p), sub(pos[0], p)) / det;
    la * vals[0] + lb * vals[1] + (1.0 - la - lb) * vals[2]
}

/// Bounding box of the points padded by one cell on every side.
pub fn default_extent(points: &[(UtmPoint, f64)], cell_m: f64) -> Extent {
    let mut e = Extent {
        min_e: f64::INFINITY,
        min_n: f64::INFINITY,
        max_e: f64::NEG_INFINITY,
        max_n: f64::NEG_INFINITY,
    };
    for (p, _) in points {
        e.min_e = e.min_e.min(p.easting);
        e.min_n = e.min_n.min(p.northing);
        e.max_e = e.max_e.max(p.easting);
        e.max_n = e.max_n.max(p.northing);
    }
    Extent {
        min_e: e.min_e - cell_m,
        min_n: e.min_n - cell_m,
        max_e: e.max_e + cell_m,
        max_n: e.max_n + cell_m,
    }
}

/// Triangulate the centroids and rasterize. `extent` defaults to the padded bounding box.
pub fn interpolate_grid(centroids: &[(UtmPoint, f64)], cell_m: f64, extent: Option<Extent>) -> Result<Raster> {
    let tin = TinInterpolator::new(centroids)?;
    tin.rasterize(cell_m, extent.unwrap_or_else(|| default_extent(centroids, cell_m)))
}

/// ESRI ASCII grid. Values use `%.6g`; nodata cells are written as the
/// header's `NODATA_value` token.
pub fn write_raster_asc(r: &Raster, path: &Path) -> Result<()> {
    if r.ncols == 0 || r.nrows == 0 || r.values.len() != r.ncols * r.nrows {
        return Err(Error::input("raster dimensions do not match its values"));
    }
    let nodata = format!("{}", r.nodata);
    fsio::write_atomic(path, |w| {
        writeln!(w, "ncols {}", r.ncols)?;
        writeln!(w, "nrows {}", r.nrows)?;
        writeln!(w, "xllcorner {}", r.origin_easting)?;
        writeln!(w, "yllcorner {}", r.origin_northing)?;
        writeln!(w, "cellsize {}", r.cell_m)?;
        writeln!(w, "NODATA_value {nodata}")?;
        let mut line = String::new();
        for row in r.values.chunks(r.ncols) {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                if *v == r.nodata {
                    line.push_str(&nodata);
                } else {
                    line.push_str(&fsio::fmt_g6(*v));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

pub fn read_raster_asc(path: &Path) -> Result<Raster> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let mut header = std::collections::HashMap::new();
    for key in ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"] {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("missing header {key}")))?;
        let mut it = line.split_whitespace();
        let (k, v) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
        if !k.eq_ignore_ascii_case(key) {
            return Err(Error::parse(path, ln as u64 + 1, format!("expected {key}, got {k:?}")));
        }
        let v: f64 = v
            .parse()
            .map_err(|_| Error::parse(path, ln as u64 + 1, format!("bad {key} value {v:?}")))?;
        header.insert(key, v);
    }
    let ncols = header["ncols"] as usize;
    let nrows = header["nrows"] as usize;
    let mut values = Vec::with_capacity(ncols * nrows);
    for (ln, line) in lines {
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(path, ln as u64 + 1, format!("bad value {tok:?}")))?,
            );
        }
        if values.len() - before != ncols && values.len() != before {
            return Err(Error::parse(path, ln as u64 + 1, "row length differs from ncols"));
        }
    }
    if values.len() != ncols * nrows {
        return Err(Error::parse(path, 0, "cell count differs from ncols*nrows"));
    }
    Ok(Raster {
        origin_easting: header["xllcorner"],
        origin_northing: header["yllcorner"],
        cell_m: header["cellsize"],
        ncols,
        nrows,
        nodata: header["nodata_value"],
        values,
    })
}
