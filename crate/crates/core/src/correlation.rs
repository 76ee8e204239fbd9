//! Time-bin × time-bin Pearson correlation of the across-sector volume vector.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Timelike};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsio;
use crate::volumes::{Resolution, VolumeTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    None,
    Log10p1,
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Transform::None),
            "log10p1" => Ok(Transform::Log10p1),
            _ => Err(Error::input(format!("unknown transform {s:?} (none|log10p1)"))),
        }
    }
}

/// Symmetric correlation matrix; `None` marks bins with zero spatial variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub labels: Vec<String>,
    pub m: Vec<Option<f64>>,
}

impl CorrMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.m[i * self.n() + j]
    }
}

/// Label of bin `b`: day of year, with the hour appended at hourly resolution.
pub fn bin_label(t: &VolumeTensor, b: usize) -> String {
    let ts = t.bin_start(b);
    match t.resolution {
        Resolution::Day => format!("{}", ts.ordinal()),
        Resolution::Hour => format!("{}-{:02}", ts.ordinal(), ts.hour()),
        Resolution::Minute => crate::volumes::format_ts(ts),
    }
}

/// Pearson correlation between every pair of bins across sectors.
pub fn spatial_corr_matrix(t: &VolumeTensor, transform: Transform) -> Result<CorrMatrix> {
    let ns = t.n_sectors();
    let nb = t.n_bins;
    if ns < 3 {
        return Err(Error::input(format!("correlation needs at least 3 sectors, got {ns}")));
    }
    if nb < 2 {
        return Err(Error::input("correlation needs at least 2 bins"));
    }
    let f = |c: u32| match transform {
        Transform::None => c as f64,
        Transform::Log10p1 => (c as f64 + 1.0).log10(),
    };

    // Per-bin means, streaming over sectors in fixed order.
    let mut mean = vec![0.0f64; nb];
    for s in 0..ns {
        for (m, &c) in mean.iter_mut().zip(t.row(s)) {
            *m += f(c);
        }
    }
    mean.iter_mut().for_each(|m| *m /= ns as f64);

    // Bin-major centred values, then scale each bin to unit norm.
    let mut z = vec![0.0f64; nb * ns];
    for s in 0..ns {
        for (b, &c) in t.row(s).iter().enumerate() {
            z[b * ns + s] = f(c) - mean[b];
        }
    }
    let valid: Vec<bool> = z
        .par_chunks_mut(ns)
        .map(|col| {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                col.iter_mut().for_each(|v| *v /= norm);
                true
            } else {
                false
            }
        })
        .collect();

    let rows: Vec<Vec<Option<f64>>> = (0..nb)
        .into_par_iter()
        .map(|i| {
            let zi = &z[i * ns..(i + 1) * ns];
            (i..nb)
                .map(|j| {
                    if !valid[i] || !valid[j] {
                        None
                    } else if i == j {
                        Some(1.0)
                    } else {
                        let zj = &z[j * ns..(j + 1) * ns];
                        let d: f64 = zi.iter().zip(zj).map(|(a, b)| a * b).sum();
                        Some(d.clamp(-1.0, 1.0))
                    }
                })
                .collect()
        })
        .collect();
    let mut m = vec![None; nb * nb];
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + k;
            m[i * nb + j] = v;
            m[j * nb + i] = v;
        }
    }
    Ok(CorrMatrix {
        labels: (0..nb).map(|b| bin_label(t, b)).collect(),
        m,
    })
}

/// One minus the mean defined off-diagonal correlation of row `bin`.
pub fn disruption_score(c: &CorrMatrix, bin: usize) -> Result<Option<f64>> {
    if bin >= c.n() {
        return Err(Error::input(format!("bin {bin} outside matrix of {} bins", c.n())));
    }
    let vals: Vec<f64> = (0..c.n()).filter(|&j| j != bin).filter_map(|j| c.get(bin, j)).collect();
    if vals.is_empty() {
        return Ok(None);
    }
    Ok(Some(1.0 - vals.iter().sum::<f64>() / vals.len() as f64))
}

pub fn write_corr_csv(c: &CorrMatrix, path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        write!(w, "bin")?;
        for l in &c.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for i in 0..c.n() {
            write!(w, "{}", c.labels[i])?;
            for j in 0..c.n() {
                match c.get(i, j) {
                    Some(v) => write!(w, ",{}", fsio::fmt_g6(v))?,
                    None => write!(w, ",NA")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })
}
