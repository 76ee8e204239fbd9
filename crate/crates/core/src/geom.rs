//! Planar polygon helpers shared by the tessellation and zone code.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt {
    pub x: f64,
    pub y: f64,
}

impl Pt {
    pub const fn new(x: f64, y: f64) -> Self {
        Pt { x, y }
    }

    pub fn dist2(&self, o: &Pt) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Pt]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut acc = 0.0;
    for w in 1..ring.len() - 1 {
        let a = ring[w];
        let b = ring[w + 1];
        acc += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
    }
    0.5 * acc
}

/// Area-weighted centroid. Falls back to the vertex mean for degenerate rings.
pub fn centroid(ring: &[Pt]) -> Pt {
    let n = ring.len();
    if n == 0 {
        return Pt::new(f64::NAN, f64::NAN);
    }
    let o = ring[0];
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = Pt::new(ring[i].x - o.x, ring[i].y - o.y);
        let q = Pt::new(ring[(i + 1) % n].x - o.x, ring[(i + 1) % n].y - o.y);
        let cross = p.x * q.y - q.x * p.y;
        a2 += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    if a2.abs() < 1e-300 {
        let sx: f64 = ring.iter().map(|p| p.x).sum();
        let sy: f64 = ring.iter().map(|p| p.y).sum();
        return Pt::new(sx / n as f64, sy / n as f64);
    }
    Pt::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
}

/// Clip a convex ring to the half-plane `normal · (p - anchor) <= 0`.
pub fn clip_halfplane(ring: &[Pt], anchor: Pt, normal: Pt) -> Vec<Pt> {
    let side = |p: &Pt| normal.x * (p.x - anchor.x) + normal.y * (p.y - anchor.y);
    let n = ring.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let cur = ring[i];
        let nxt = ring[(i + 1) % n];
        let sc = side(&cur);
        let sn = side(&nxt);
        if sc <= 0.0 {
            out.push(cur);
        }
        if (sc < 0.0 && sn > 0.0) || (sc > 0.0 && sn < 0.0) {
            let t = sc / (sc - sn);
            out.push(Pt::new(cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)));
        }
    }
    dedup_ring(&mut out, 1e-9);
    out
}

fn dedup_ring(ring: &mut Vec<Pt>, tol: f64) {
    let tol2 = tol * tol;
    ring.dedup_by(|b, a| a.dist2(b) <= tol2);
    while ring.len() > 1 && ring[0].dist2(ring.last().unwrap()) <= tol2 {
        ring.pop();
    }
}

/// Winding number of `ring` around `p`. Points on the boundary count as inside.
pub fn point_in_ring(ring: &[Pt], p: Pt) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut winding = 0i32;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if cross == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y) {
            return true;
        }
        if a.y <= p.y {
            if b.y > p.y && cross > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// A polygon with an outer ring and optional holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Vec<Pt>,
    pub holes: Vec<Vec<Pt>>,
}

impl Polygon {
    pub fn new(outer: Vec<Pt>) -> Self {
        Polygon {
            outer,
            holes: Vec::new(),
        }
    }

    pub fn contains(&self, p: Pt) -> bool {
        // Hole boundaries belong to the polygon.
        point_in_ring(&self.outer, p)
            && !self
                .holes
                .iter()
                .any(|h| point_in_ring(h, p) && !on_ring_boundary(h, p))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.outer).abs() - self.holes.iter().map(|h| signed_area(h).abs()).sum::<f64>()
    }

    pub fn to_wkt(&self) -> String {
        let ring = |r: &[Pt]| {
            let mut s = String::from("(");
            for (i, p) in r.iter().chain(r.first()).enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                s.push_str(&format!("{} {}", p.x, p.y));
            }
            s.push(')');
            s
        };
        let mut out = String::from("POLYGON (");
        out.push_str(&ring(&self.outer));
        for h in &self.holes {
            out.push_str(", ");
            out.push_str(&ring(h));
        }
        out.push(')');
        out
    }

    /// Parse a WKT `POLYGON`. The closing vertex of each ring is optional.
    pub fn from_wkt(s: &str) -> Result<Polygon> {
        let t = s.trim();
        let upper = t.to_ascii_uppercase();
        if !upper.starts_with("POLYGON") {
            return Err(Error::input(format!("expected WKT POLYGON, got {:?}", truncate(t))));
        }
        let body = t["POLYGON".len()..].trim();
        let body = body
            .strip_prefix('(')
            .and_then(|b| b.strip_suffix(')'))
            .ok_or_else(|| Error::input("WKT polygon missing outer parentheses"))?;
        let mut rings = Vec::new();
        let mut rest = body.trim();
        while !rest.is_empty() {
            let open = rest
                .strip_prefix('(')
                .ok_or_else(|| Error::input("WKT ring must start with '('"))?;
            let close = open.find(')').ok_or_else(|| Error::input("unterminated WKT ring"))?;
            let mut ring = Vec::new();
            for pair in open[..close].split(',') {
                let mut it = pair.split_whitespace();
                let (x, y) = match (it.next(), it.next(), it.next()) {
                    (Some(x), Some(y), None) => (x, y),
                    _ => return Err(Error::input(format!("bad WKT coordinate {:?}", pair.trim()))),
                };
                let x: f64 = x.parse().map_err(|_| Error::input(format!("bad number {x:?}")))?;
                let y: f64 = y.parse().map_err(|_| Error::input(format!("bad number {y:?}")))?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::input("non-finite WKT coordinate"));
                }
                ring.push(Pt::new(x, y));
            }
            if ring.len() > 1 && ring[0] == *ring.last().unwrap() {
                ring.pop();
            }
            if ring.len() < 3 {
                return Err(Error::input("WKT ring needs at least 3 distinct vertices"));
            }
            rings.push(ring);
            rest = open[close + 1..].trim_start();
            rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        }
        let mut rings = rings.into_iter();
        let outer = rings.next().ok_or_else(|| Error::input("WKT polygon has no rings"))?;
        Ok(Polygon {
            outer,
            holes: rings.collect(),
        })
    }
}

fn on_ring_boundary(ring: &[Pt], p: Pt) -> bool {
    let n = ring.len();
    (0..n).any(|i| {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        cross == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    })
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(40) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
