use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sectorscope::synthgen::{gen_layout, GeneratorSpec};
use sectorscope::tessellation::{build_sectors, disc_polygon, tower_only_tessellation};
use sectorscope::{latlon_to_utm, stats, utm_to_latlon, AntennaGroup, StudyArea, Tessellation, TowerSite, UtmPoint};

fn area() -> StudyArea {
    StudyArea::default()
}

fn center() -> UtmPoint {
    latlon_to_utm(area().center_lat, area().center_lon).unwrap()
}

fn tower(id: &str, dx_km: f64, dy_km: f64) -> TowerSite {
    let c = center();
    let (lat, lon) = utm_to_latlon(UtmPoint::new(c.easting + dx_km * 1e3, c.northing + dy_km * 1e3)).unwrap();
    TowerSite {
        tower_id: id.into(),
        lat,
        lon,
    }
}

fn three_tower_fixture() -> Tessellation {
    let towers = [tower("A", -20.0, 0.0), tower("B", 15.0, 10.0), tower("C", 5.0, -25.0)];
    let antennas: Vec<AntennaGroup> = ["A", "B", "C"]
        .iter()
        .flat_map(|t| {
            [0.0, 120.0, 240.0].map(|az| AntennaGroup {
                tower_id: t.to_string(),
                azimuth_deg: az,
            })
        })
        .collect();
    build_sectors(&towers, &antennas, area(), 1.0).unwrap()
}

/// Independent oracle: a sample point belongs to the cell of its nearest
/// generator; the domain is the disc polygon.
#[test]
fn monte_carlo_area_oracle() {
    let t = three_tower_fixture();
    assert_eq!(t.sectors.len(), 9);
    let r = area().radius_km * 1e3 * 1.01;
    let disc: Vec<(f64, f64)> = disc_polygon(area().radius_km * 1e3)
        .iter()
        .map(|p| (p.x, p.y))
        .collect();
    let inside = |x: f64, y: f64| {
        // Convex, counter-clockwise ring.
        (0..disc.len()).all(|i| {
            let (ax, ay) = disc[i];
            let (bx, by) = disc[(i + 1) % disc.len()];
            (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0.0
        })
    };
    let c = t.center;
    let sites: Vec<(f64, f64)> = t
        .sectors
        .iter()
        .map(|s| (s.site.easting - c.easting, s.site.northing - c.northing))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 10_000_000usize;
    let mut counts = vec![0usize; sites.len()];
    for _ in 0..n {
        let x = (rng.random::<f64>() * 2.0 - 1.0) * r;
        let y = (rng.random::<f64>() * 2.0 - 1.0) * r;
        if !inside(x, y) {
            continue;
        }
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, (sx, sy)) in sites.iter().enumerate() {
            let d = (x - sx).powi(2) + (y - sy).powi(2);
            if d < bd {
                bd = d;
                best = i;
            }
        }
        counts[best] += 1;
    }
    let square_km2 = (2.0 * r / 1e3).powi(2);
    for (s, &k) in t.sectors.iter().zip(&counts) {
        let mc = k as f64 / n as f64 * square_km2;
        let rel = (mc - s.area_km2).abs() / s.area_km2;
        assert!(
            rel < 0.005,
            "{}: monte carlo {mc} vs {} ({rel})",
            s.sector_id,
            s.area_km2
        );
    }
}

#[test]
fn partition_sums_to_disc_area() {
    let t = three_tower_fixture();
    let rel = (t.total_area_km2() - t.disc_polygon_area_km2()).abs() / t.disc_polygon_area_km2();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn synthetic_layout_granularity() {
    let spec = GeneratorSpec::default();
    let t0 = Instant::now();
    let layout = gen_layout(&spec).unwrap();
    let base = tower_only_tessellation(&layout.towers, spec.area).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(layout.tessellation.sectors.len(), 600);
    let med =
        |t: &Tessellation| stats::quantile(&t.sectors.iter().map(|s| s.area_km2).collect::<Vec<_>>(), 0.5).unwrap();
    let ratio = med(&layout.tessellation) / med(&base);
    assert!((0.2..=0.4).contains(&ratio), "median area ratio {ratio}");
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");
    let rel = (layout.tessellation.total_area_km2() - layout.tessellation.disc_polygon_area_km2()).abs()
        / layout.tessellation.disc_polygon_area_km2();
    assert!(rel < 1e-6);
}

fn local_ring(t: &Tessellation, i: usize) -> Vec<(f64, f64)> {
    t.sectors[i]
        .polygon
        .iter()
        .map(|p| (p.easting - t.center.easting, p.northing - t.center.northing))
        .collect()
}

fn shoelace(r: &[(f64, f64)]) -> f64 {
    let n = r.len();
    (0..n)
        .map(|i| r[i].0 * r[(i + 1) % n].1 - r[(i + 1) % n].0 * r[i].1)
        .sum::<f64>()
        / 2.0
}

/// Intersection of two convex counter-clockwise rings.
fn convex_intersection(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = a.to_vec();
    for i in 0..b.len() {
        if out.is_empty() {
            break;
        }
        let p = b[i];
        let q = b[(i + 1) % b.len()];
        let side = |v: (f64, f64)| (q.0 - p.0) * (v.1 - p.1) - (q.1 - p.1) * (v.0 - p.0);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let c = input[j];
            let d = input[(j + 1) % input.len()];
            let (sc, sd) = (side(c), side(d));
            if sc >= 0.0 {
                out.push(c);
            }
            if (sc >= 0.0) != (sd >= 0.0) {
                let t = sc / (sc - sd);
                out.push((c.0 + t * (d.0 - c.0), c.1 + t * (d.1 - c.1)));
            }
        }
    }
    out
}

fn towers_strategy() -> impl Strategy<Value = Vec<(f64, f64, Vec<f64>)>> {
    let site = (
        0.0f64..75.0,
        0.0f64..std::f64::consts::TAU,
        prop::collection::vec(0.0f64..360.0, 1..4),
    )
        .prop_map(|(r, a, az)| (r * a.cos(), r * a.sin(), az));
    prop::collection::vec(site, 3..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_layouts_partition_without_overlap(spec in towers_strategy()) {
        let towers: Vec<TowerSite> = spec.iter().enumerate().map(|(i, (x, y, _))| tower(&format!("T{i}"), *x, *y)).collect();
        let pts: Vec<UtmPoint> = towers.iter().map(|t| latlon_to_utm(t.lat, t.lon).unwrap()).collect();
        let min_d = (0..pts.len()).flat_map(|i| (i + 1..pts.len()).map(move |j| (i, j))).map(|(i, j)| pts[i].distance(&pts[j])).fold(f64::INFINITY, f64::min);
        prop_assume!(min_d > 100.0);
        let antennas: Vec<AntennaGroup> = spec.iter().enumerate().flat_map(|(i, (_, _, az))| {
            az.iter().map(move |a| AntennaGroup { tower_id: format!("T{i}"), azimuth_deg: *a })
        }).collect();
        let t = build_sectors(&towers, &antennas, area(), 1.0).unwrap();
        let rel = (t.total_area_km2() - t.disc_polygon_area_km2()).abs() / t.disc_polygon_area_km2();
        prop_assert!(rel < 1e-6, "partition error {}", rel);
        for i in 0..t.sectors.len() {
            prop_assert!(t.sectors[i].contains_utm(t.sectors[i].site));
            for j in i + 1..t.sectors.len() {
                let ov = shoelace(&convex_intersection(&local_ring(&t, i), &local_ring(&t, j))).abs() / 1e6;
                prop_assert!(ov < 1e-9, "overlap {} km2 between {} and {}", ov, t.sectors[i].sector_id, t.sectors[j].sector_id);
            }
        }
        // Refined sectors lie inside their tower's baseline cell. Moving each site by
        // epsilon tilts a bisector by about epsilon / spacing, so the allowed excursion
        // grows with the disc diameter.
        let tol = 2.0 * (1.0 + 4.0 * area().radius_km * 1e3 / min_d) + 1e-6;
        let base = tower_only_tessellation(&towers, area()).unwrap();
        for s in &t.sectors {
            let cell = base.get(&s.tower_id).unwrap();
            let cr: Vec<(f64, f64)> = cell.polygon.iter().map(|p| (p.easting, p.northing)).collect();
            for v in &s.polygon {
                let worst = (0..cr.len()).map(|k| {
                    let (p, q) = (cr[k], cr[(k + 1) % cr.len()]);
                    let len = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
                    ((q.0 - p.0) * (v.northing - p.1) - (q.1 - p.1) * (v.easting - p.0)) / len
                }).fold(f64::INFINITY, f64::min);
                prop_assert!(worst >= -tol, "vertex {:.3} m outside its tower cell", -worst);
            }
        }
        let again = build_sectors(&towers, &antennas, area(), 1.0).unwrap();
        prop_assert_eq!(t.sectors, again.sectors);
    }
}
