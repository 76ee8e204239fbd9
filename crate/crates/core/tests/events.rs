use chrono::{Duration, NaiveDate, NaiveDateTime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sectorscope::events::{
    classify_response, divergence_detect, quake_profile, quake_timing, zone_series, QuakeScenario, TimingConfig, Zone,
};
use sectorscope::geom::{Polygon, Pt};
use sectorscope::tessellation::tower_only_tessellation;
use sectorscope::volumes::{AnomalyField, MinuteStats};
use sectorscope::{Channel, Resolution, StudyArea, Tessellation, TowerSite, VolumeTensor};

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2011, 8, 15)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn layout(n: usize, seed: u64) -> Tessellation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = StudyArea::default();
    let towers: Vec<TowerSite> = (0..n)
        .map(|i| TowerSite {
            tower_id: format!("T{i:03}"),
            lat: area.center_lat + rng.random_range(-0.45..0.45),
            lon: area.center_lon + rng.random_range(-0.55..0.55),
        })
        .collect();
    tower_only_tessellation(&towers, area).unwrap()
}

fn rect(id: &str, lon0: f64, lat0: f64, lon1: f64, lat1: f64) -> Zone {
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

fn random_tensors(tess: &Tessellation, res: Resolution, n_bins: usize, seed: u64) -> (VolumeTensor, VolumeTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = tess.sector_ids();
    let mut c = VolumeTensor::zeros(Channel::Calls, res, t0(), ids.clone(), n_bins).unwrap();
    let mut x = VolumeTensor::zeros(Channel::Texts, res, t0(), ids, n_bins).unwrap();
    c.counts.iter_mut().for_each(|v| *v = rng.random_range(0..200));
    x.counts.iter_mut().for_each(|v| *v = rng.random_range(0..200));
    (c, x)
}

fn scenario() -> QuakeScenario {
    QuakeScenario {
        onset: t0() + Duration::minutes(300),
        epicenter_lat: 37.94,
        epicenter_lon: -77.93,
    }
}

/// Exponential response with known constants; the pre-window has a small
/// alternating ripple so its standard deviation is non-zero.
#[test]
fn timing_recovers_known_decay() {
    let n = 700;
    let o = 300usize;
    let (rise, tau, amp) = (8usize, 35.0, 4.0);
    let mu: Vec<Option<f64>> = (0..n)
        .map(|b| {
            Some(if b < o {
                1.0 + if b % 2 == 0 { 0.01 } else { -0.01 }
            } else if b < o + rise {
                1.0 + amp * (b - o + 1) as f64 / rise as f64
            } else {
                1.0 + amp * (-((b - o - rise + 1) as f64) / tau).exp()
            })
        })
        .collect();
    let st = MinuteStats {
        t0: t0(),
        resolution: Resolution::Minute,
        sigma: vec![Some(0.0); n],
        n: vec![10; n],
        mu,
    };
    let s = scenario();
    let t = quake_timing(&st, &s, &TimingConfig::default()).unwrap();
    assert_eq!(t.onset, Some(s.onset));
    assert_eq!(t.peak_offset_min(&s), Some(rise as i64 - 1));
    let fitted = t.decay_tau_min.unwrap();
    assert!((fitted - tau).abs() < 1e-6 * tau, "{fitted}");
    // Oracle: first minute with amp·exp(-k/τ) ≤ 0.02.
    let k = (tau * (amp / 0.02f64).ln()).ceil() as i64;
    assert_eq!(t.recovery_offset_min(&s), Some(rise as i64 - 1 + k));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zone_sums_are_additive(seed in any::<u64>(), split in 0.1f64..0.9) {
        let tess = layout(30, seed);
        let (c, x) = random_tensors(&tess, Resolution::Hour, 24 * 8, seed ^ 1);
        let (lon0, lon1, lat0, lat1) = (-75.0, -73.0, 40.0, 41.5);
        let mid = lon0 + split * (lon1 - lon0);
        let zones = [rect("all", lon0, lat0, lon1, lat1), rect("west", lon0, lat0, mid, lat1), rect("east", mid, lat0, lon1, lat1)];
        let zs = zone_series(&c, &x, &tess.sectors, &zones).unwrap();
        prop_assume!(zs[0].members.len() == zs[1].members.len() + zs[2].members.len());
        for b in 0..c.n_bins {
            prop_assert_eq!(zs[0].calls[b], zs[1].calls[b] + zs[2].calls[b]);
            prop_assert_eq!(zs[0].texts[b], zs[1].texts[b] + zs[2].texts[b]);
        }
        prop_assert_eq!(zs[0].lag_bins, 168);
    }

    #[test]
    fn profile_quantiles_are_ordered(seed in any::<u64>(), bin_km in 5.0f64..40.0) {
        let tess = layout(40, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<Option<f64>> = (0..40).map(|_| Some(rng.random_range(0.0..5.0))).collect();
        let a = AnomalyField::from_values(tess.sector_ids(), t0(), Resolution::Minute, 1, vals).unwrap();
        let p = quake_profile(&a, 0, &tess.sectors, &scenario(), bin_km).unwrap();
        prop_assert_eq!(p.bins.iter().map(|b| b.n).sum::<usize>(), 40);
        for b in p.bins.iter().filter(|b| b.n > 0) {
            let (q10, q50, q90) = (b.q10.unwrap(), b.q50.unwrap(), b.q90.unwrap());
            prop_assert!(q10 <= q50 && q50 <= q90);
            let m = b.median_km.unwrap();
            prop_assert!(m >= b.lo_km && m < b.hi_km);
        }
    }

    #[test]
    fn labels_ignore_positive_scaling(vals in prop::collection::vec(0.0f64..10.0, 3..60), k in 0.01f64..100.0) {
        let ids: Vec<String> = (0..vals.len()).map(|i| format!("s{i}")).collect();
        let a = AnomalyField::from_values(ids.clone(), t0(), Resolution::Minute, 1, vals.iter().map(|v| Some(*v)).collect()).unwrap();
        let b = AnomalyField::from_values(ids, t0(), Resolution::Minute, 1, vals.iter().map(|v| Some(v * k)).collect()).unwrap();
        let la = classify_response(&a, 0).unwrap();
        let lb = classify_response(&b, 0).unwrap();
        // Values within rounding of a threshold may flip; require agreement elsewhere.
        let (mu, sd) = sectorscope::stats::mean_std(&vals);
        for (i, v) in vals.iter().enumerate() {
            let near = ((v - mu).abs() - sd).abs() < 1e-9 * (1.0 + sd);
            if !near {
                prop_assert_eq!(la[i], lb[i]);
            }
        }
    }

    #[test]
    fn identical_channels_never_diverge(seed in any::<u64>(), theta in 0.05f64..0.95) {
        let tess = layout(20, seed);
        let (c, _) = random_tensors(&tess, Resolution::Hour, 24 * 9, seed);
        let mut x = c.clone();
        x.channel = Channel::Texts;
        let zs = zone_series(&c, &x, &tess.sectors, &[rect("z", -76.0, 39.5, -72.0, 42.0)]).unwrap();
        prop_assume!(!zs[0].is_empty());
        let d = divergence_detect(&zs[0], 168..24 * 9, theta).unwrap();
        prop_assert_eq!(d.onset_bin, None);
    }
}
