use chrono::NaiveDate;
use proptest::prelude::*;
use sectorscope::geodesy::density_values;
use sectorscope::geodesy::grid::{interpolate_grid, TinInterpolator};
use sectorscope::geodesy::tsmap::time_space_map;
use sectorscope::tessellation::tower_only_tessellation;
use sectorscope::{great_circle_km, Channel, Resolution, StudyArea, Tessellation, TowerSite, UtmPoint, VolumeTensor};

fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().asin()
}

#[test]
fn great_circle_matches_haversine() {
    let pairs = [
        (40.758, -73.9855, 38.05, -77.93),
        (40.758, -73.9855, 40.758, -73.9855),
        (0.0, 0.0, 0.0, 90.0),
        (51.5, -0.12, -33.86, 151.2),
    ];
    for (a, b, c, d) in pairs {
        let g = great_circle_km(a, b, c, d);
        let h = haversine(a, b, c, d);
        assert!((g - h).abs() < 1e-9 * h.max(1.0), "{g} vs {h}");
    }
}

fn towers(n: usize, seed: u64) -> Tessellation {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let area = StudyArea::default();
    let t: Vec<TowerSite> = (0..n)
        .map(|i| TowerSite {
            tower_id: format!("T{i:02}"),
            lat: area.center_lat + rng.random_range(-0.5..0.5),
            lon: area.center_lon + rng.random_range(-0.6..0.6),
        })
        .collect();
    tower_only_tessellation(&t, area).unwrap()
}

fn points() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.0f64..50_000.0, 0.0f64..50_000.0, -10.0f64..10.0), 4..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interpolation_stays_within_data_range(pts in points()) {
        let input: Vec<(UtmPoint, f64)> = pts.iter().map(|&(e, n, v)| (UtmPoint::new(500_000.0 + e, 4_500_000.0 + n), v)).collect();
        let Ok(r) = interpolate_grid(&input, 1000.0, None) else { return Ok(()); };
        let lo = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
        for v in r.values.iter().filter(|v| **v != r.nodata) {
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9, "{} outside [{}, {}]", v, lo, hi);
        }
    }

    #[test]
    fn linear_fields_are_reproduced(pts in points(), a in -5.0f64..5.0, b in -1e-3f64..1e-3, c in -1e-3f64..1e-3) {
        let f = |e: f64, n: f64| a + b * e + c * n;
        let input: Vec<(UtmPoint, f64)> = pts.iter().map(|&(e, n, _)| (UtmPoint::new(500_000.0 + e, 4_500_000.0 + n), f(e, n))).collect();
        let Ok(tin) = TinInterpolator::new(&input) else { return Ok(()); };
        for i in 0..20 {
            for j in 0..20 {
                let (e, n) = (i as f64 * 2500.0 + 1.0, j as f64 * 2500.0 + 1.0);
                if let Some(v) = tin.value_at(UtmPoint::new(500_000.0 + e, 4_500_000.0 + n)) {
                    prop_assert!((v - f(e, n)).abs() < 1e-7, "{} vs {}", v, f(e, n));
                }
            }
        }
    }

    #[test]
    fn density_times_area_conserves_volume(seed in any::<u64>(), vols in prop::collection::vec(0.0f64..1e6, 12)) {
        let t = towers(12, seed);
        let ids = t.sector_ids();
        let d = density_values(&ids, &vols, &t.sectors).unwrap();
        let back: f64 = d.iter().zip(&t.sectors).map(|(d, s)| d * s.area_km2).sum();
        let total: f64 = vols.iter().sum();
        prop_assert!((back - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn tsmap_ignores_input_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let tess = towers(10, seed);
        let t0 = NaiveDate::from_ymd_opt(2011, 8, 22).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut order: Vec<usize> = (0..10).collect();
        let build = |order: &[usize]| {
            let ids = order.iter().map(|&i| tess.sectors[i].sector_id.clone()).collect();
            let mut v = VolumeTensor::zeros(Channel::Calls, Resolution::Day, t0, ids, 5).unwrap();
            for (s, &i) in order.iter().enumerate() {
                for b in 0..5 {
                    v.row_mut(s)[b] = (i * 7 + b * 3) as u32;
                }
            }
            v
        };
        let a = time_space_map(&build(&order), &tess.sectors).unwrap();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let b = time_space_map(&build(&order), &tess.sectors).unwrap();
        prop_assert_eq!(&a, &b);
        // Rebuilding from an already ordered tensor changes nothing.
        let ordered: Vec<usize> = a.sector_ids.iter().map(|id| tess.sectors.iter().position(|s| &s.sector_id == id).unwrap()).collect();
        let c = time_space_map(&build(&ordered), &tess.sectors).unwrap();
        prop_assert_eq!(&a, &c);
        for w in a.sector_ids.windows(2) {
            let la = tess.get(&w[0]).unwrap().centroid_latlon.0;
            let lb = tess.get(&w[1]).unwrap().centroid_latlon.0;
            prop_assert!(la <= lb);
        }
        prop_assert!(a.display().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
