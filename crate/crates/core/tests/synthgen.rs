use chrono::Duration;
use sectorscope::events::zone_series;
use sectorscope::synthgen::{
    apply_overrides, base_rates, gen_counts, gen_layout, synthesize, GeneratorSpec, CONTROL_ZONE,
};
use sectorscope::volumes::anomaly;
use sectorscope::{Channel, Resolution};

fn spec(overrides: &str) -> GeneratorSpec {
    apply_overrides(&GeneratorSpec::default(), overrides).unwrap()
}

#[test]
fn counts_do_not_depend_on_thread_count() {
    let s = spec("days = 2\nresolution = hour\nquake = false\nstorm = false\n");
    let layout = gen_layout(&s).unwrap();
    let m = base_rates(&s, &layout);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| gen_counts(&m, s.seed, false, s.start, Resolution::Hour, 48).unwrap())
    };
    let (c1, x1) = run(1);
    let (c4, x4) = run(4);
    assert_eq!(c1, c4);
    assert_eq!(x1, x4);
}

#[test]
fn poisson_and_deterministic_totals_match_expectation() {
    let s = spec("days = 7\nresolution = hour\nquake = false\nstorm = false\n");
    let layout = gen_layout(&s).unwrap();
    let m = base_rates(&s, &layout);
    let m0 = sectorscope::synthgen::abs_minute(s.start);
    let expected: f64 = (0..m.n_sectors())
        .map(|i| (m0..m0 + 7 * 1440).map(|t| m.rate(i, Channel::Calls, t)).sum::<f64>())
        .sum();
    let (p, _) = gen_counts(&m, s.seed, false, s.start, Resolution::Hour, 168).unwrap();
    let (d, _) = gen_counts(&m, s.seed, true, s.start, Resolution::Hour, 168).unwrap();
    let sd = expected.sqrt();
    assert!(
        (p.total() as f64 - expected).abs() < 4.0 * sd,
        "poisson {} vs {expected}",
        p.total()
    );
    // Dither rounding: each cell is off by less than one, with mean zero.
    let cells = (m.n_sectors() * 168) as f64;
    assert!(
        (d.total() as f64 - expected).abs() < 4.0 * (cells / 12.0).sqrt(),
        "deterministic {} vs {expected}",
        d.total()
    );
}

#[test]
fn deterministic_baseline_has_unit_weekly_anomaly() {
    let s = spec("days = 14\nresolution = hour\ndeterministic = true\nquake = false\nstorm = false\n");
    let syn = synthesize(&s).unwrap();
    for t in [&syn.calls, &syn.texts] {
        let a = anomaly(t, 168).unwrap();
        for i in 0..a.n_sectors() {
            for b in 168..a.n_bins {
                assert_eq!(a.get(i, b), Some(1.0), "sector {i} bin {b}");
            }
        }
    }
}

#[test]
fn layout_spans_four_decades_of_density() {
    let s = GeneratorSpec::default();
    let layout = gen_layout(&s).unwrap();
    assert_eq!(layout.tessellation.sectors.len(), 600);
    let m = base_rates(&s, &layout);
    // Weekly mean rate per km², from the model rather than sampled counts.
    let dens: Vec<f64> = layout
        .tessellation
        .sectors
        .iter()
        .enumerate()
        .map(|(i, sec)| m.base[i] / sec.area_km2)
        .collect();
    let lo = dens.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dens.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo >= 1e4, "density range {}", hi / lo);
}

#[test]
fn storm_depth_scales_coastal_afternoon() {
    let base = "start = 2011-08-20 00:00\ndays = 9\nresolution = hour\ndeterministic = true\nquake = false\n";
    let with = synthesize(&spec(&format!("{base}storm = true\nstorm_depth = 0.5\n"))).unwrap();
    let without = synthesize(&spec(&format!("{base}storm = false\n"))).unwrap();
    let sectors = &with.layout.tessellation.sectors;
    let zs = zone_series(&with.calls, &with.texts, sectors, &with.zones).unwrap();
    let zb = zone_series(&without.calls, &without.texts, sectors, &with.zones).unwrap();
    let storm_day = with.truth.storm.as_ref().unwrap().day.and_hms_opt(0, 0, 0).unwrap();
    let b0 = ((storm_day - with.calls.t0).num_hours() + 15) as usize;
    let hours = b0..b0 + 9;
    for (z, b) in zs.iter().zip(&zb) {
        if z.zone_id == CONTROL_ZONE || z.is_empty() {
            continue;
        }
        let got: u64 = z.calls[hours.clone()].iter().sum();
        let base: u64 = b.calls[hours.clone()].iter().sum();
        let ratio = got as f64 / base as f64;
        // Only rounding separates the two: at most one count per member-hour.
        let tol = (z.members.len() * 9) as f64 / base as f64 + 1e-9;
        assert!((ratio - 0.5).abs() <= tol, "{}: ratio {ratio} (tol {tol})", z.zone_id);
    }
    assert!(with
        .truth
        .storm
        .as_ref()
        .unwrap()
        .zones
        .iter()
        .all(|z| z.suppression_full <= storm_day + Duration::minutes(15 * 60)));
}
