//! Shared fixtures for the benchmarks.

use sectorscope::synthgen::{apply_overrides, synthesize, GeneratorSpec, Synthetic};

/// Default layout with the given generator overrides applied.
pub fn synthetic(overrides: &str) -> Synthetic {
    let spec = apply_overrides(&GeneratorSpec::default(), overrides).expect("bench overrides");
    synthesize(&spec).expect("synthesize")
}

/// A year of hourly volumes on the default 600-sector layout, no events.
pub fn quiet_year() -> Synthetic {
    synthetic("quake = false\nstorm = false\n")
}

/// Spatial mean per hour, truncated to whole weeks.
pub fn hourly_mean(s: &Synthetic) -> Vec<f64> {
    let n = s.calls.n_bins / 168 * 168;
    let ns = s.calls.n_sectors() as f64;
    s.calls.spatial_sum()[..n].iter().map(|&v| v as f64 / ns).collect()
}
