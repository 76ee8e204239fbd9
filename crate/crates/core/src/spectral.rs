//! Multitaper spectral estimation with discrete prolate spheroidal
//! (Slepian) tapers.
//!
//! Frequencies are in cycles per sample; for hourly series that is cycles
//! per hour.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConfig {
    pub nw: f64,
    pub k: usize,
    pub adaptive: bool,
    pub detrend: bool,
}

impl SpectralConfig {
    /// `k = 2·nw − 1` tapers, adaptive weighting, mean removal.
    pub fn new(nw: f64) -> Self {
        SpectralConfig {
            nw,
            k: default_k(nw),
            adaptive: true,
            detrend: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nw >= 1.0) {
            return Err(Error::config(format!("nw must be >= 1, got {}", self.nw)));
        }
        if self.k == 0 || self.k as f64 > 2.0 * self.nw - 1.0 {
            return Err(Error::config(format!(
                "taper count k = {} outside 1..=2nw-1 for nw = {}",
                self.k, self.nw
            )));
        }
        Ok(())
    }
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig::new(4.0)
    }
}

pub fn default_k(nw: f64) -> usize {
    ((2.0 * nw - 1.0).floor() as usize).max(1)
}

/// Orthonormal tapers (`k` rows of length `n`) and their concentration ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Tapers {
    pub n: usize,
    pub nw: f64,
    pub tapers: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// Number of eigenvalues of the symmetric tridiagonal matrix that are < x.
fn sturm_count(diag: &[f64], off2: &[f64], x: f64, tiny: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q.abs() < tiny {
        q = -tiny;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        q = diag[i] - x - off2[i - 1] / q;
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solve `(T − mu I) x = rhs` with partial pivoting. `off` is the symmetric
/// off-diagonal; zero pivots are replaced by `tiny`.
fn tridiag_shifted_solve(diag: &[f64], off: &[f64], mu: f64, rhs: &mut [f64], tiny: f64) {
    let n = diag.len();
    let mut b: Vec<f64> = diag.iter().map(|d| d - mu).collect();
    let mut a: Vec<f64> = off.to_vec();
    let mut c: Vec<f64> = off.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    for i in 0..n - 1 {
        if b[i].abs() >= a[i].abs() {
            if b[i] == 0.0 {
                b[i] = tiny;
            }
            let f = a[i] / b[i];
            b[i + 1] -= f * c[i];
            rhs[i + 1] -= f * rhs[i];
            a[i] = 0.0;
        } else {
            let f = b[i] / a[i];
            b[i] = a[i];
            let old_b1 = b[i + 1];
            b[i + 1] = c[i] - f * old_b1;
            c[i] = old_b1;
            if i + 2 < n {
                du2[i] = c[i + 1];
                c[i + 1] *= -f;
            }
            rhs.swap(i, i + 1);
            rhs[i + 1] -= f * rhs[i];
        }
    }
    if b[n - 1] == 0.0 {
        b[n - 1] = tiny;
    }
    rhs[n - 1] /= b[n - 1];
    if n >= 2 {
        rhs[n - 2] = (rhs[n - 2] - c[n - 2] * rhs[n - 1]) / b[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - c[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / b[i];
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Spectral concentration `vᵀ A v` of a unit-norm taper in the band `|f| < w`,
/// with `A[i][j] = sin(2πw(i−j)) / (π(i−j))`, via the taper autocorrelation.
pub fn concentration(v: &[f64], w: f64, planner: &mut FftPlanner<f64>) -> f64 {
    let n = v.len();
    let m = (2 * n).next_power_of_two();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    fwd.process(&mut buf);
    buf.iter_mut().for_each(|z| *z = Complex64::new(z.norm_sqr(), 0.0));
    inv.process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut acc = 2.0 * w * buf[0].re * scale;
    for lag in 1..n {
        let r = buf[lag].re * scale;
        acc += 2.0 * r * (std::f64::consts::TAU * w * lag as f64).sin() / (std::f64::consts::PI * lag as f64);
    }
    acc
}

/// First `k` Slepian tapers for length `n` and time-bandwidth `nw`.
///
/// Eigenvectors of the commuting tridiagonal matrix are found by Sturm
/// bisection and inverse iteration. Even-order tapers have positive sum;
/// odd-order tapers start with a positive lobe.
pub fn dpss_tapers(n: usize, nw: f64, k: usize) -> Result<Tapers> {
    SpectralConfig {
        nw,
        k,
        adaptive: false,
        detrend: false,
    }
    .validate()?;
    if n < 8 {
        return Err(Error::input(format!("taper length {n} is below 8")));
    }
    let w = nw / n as f64;
    if w >= 0.5 {
        return Err(Error::config(format!("nw/n = {w} must be below 0.5")));
    }
    let cos_w = (std::f64::consts::TAU * w).cos();
    let diag: Vec<f64> = (0..n)
        .map(|t| {
            let h = (n as f64 - 1.0 - 2.0 * t as f64) / 2.0;
            h * h * cos_w
        })
        .collect();
    let off: Vec<f64> = (1..n).map(|t| t as f64 * (n - t) as f64 / 2.0).collect();
    let off2: Vec<f64> = off.iter().map(|e| e * e).collect();

    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let tiny = f64::EPSILON * scale * 1e-3;

    let mut planner = FftPlanner::new();
    let mut tapers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for j in 0..k {
        // Ascending index of the j-th largest eigenvalue.
        let m = n - 1 - j;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if sturm_count(&diag, &off2, mid, tiny) > m {
                b = mid;
            } else {
                a = mid;
            }
        }
        let mu = 0.5 * (a + b);

        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 * 0.754_877_666).fract() - 0.5))
            .collect();
        normalize(&mut v);
        for _ in 0..4 {
            tridiag_shifted_solve(&diag, &off, mu, &mut v, tiny);
            for prev in &tapers {
                let dot: f64 = v.iter().zip(prev).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(prev).for_each(|(x, y)| *x -= dot * y);
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::internal(format!(
                    "taper {j} inverse iteration diverged (n = {n}, nw = {nw}, shift = {mu})"
                )));
            }
            normalize(&mut v);
        }

        if j % 2 == 0 {
            if v.iter().sum::<f64>() < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        } else {
            let thresh = (1.0 / n as f64).max(1e-7);
            if let Some(first) = v.iter().find(|x| *x * *x > thresh) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
        }
        eigenvalues.push(concentration(&v, w, &mut planner));
        tapers.push(v);
    }
    if eigenvalues.windows(2).any(|p| !(p[0] > p[1]) && 1.0 - p[1] > 1e-12) {
        log::warn!("taper concentrations not strictly decreasing for n = {n}, nw = {nw}: {eigenvalues:?}");
    }
    Ok(Tapers {
        n,
        nw,
        tapers,
        eigenvalues,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub dof: Vec<f64>,
    /// False if adaptive weighting hit the iteration cap at any frequency.
    pub converged: bool,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Index of the frequency bin nearest `f`.
    pub fn nearest_bin(&self, f: f64) -> usize {
        nearest_bin(&self.freqs, f)
    }
}

pub fn nearest_bin(freqs: &[f64], f: f64) -> usize {
    let mut best = 0;
    for (i, x) in freqs.iter().enumerate() {
        if (x - f).abs() < (freqs[best] - f).abs() {
            best = i;
        }
    }
    best
}

/// True if `v[i]` is at least as large as both neighbours.
pub fn is_local_max(v: &[f64], i: usize) -> bool {
    let left = i == 0 || v[i] >= v[i - 1];
    let right = i + 1 >= v.len() || v[i] >= v[i + 1];
    left && right
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrum {
    pub freqs: Vec<f64>,
    pub coherency: Vec<f64>,
    pub phase: Vec<f64>,
    pub sxx: Vec<f64>,
    pub syy: Vec<f64>,
    pub sxy_abs: Vec<f64>,
}

fn prepare(series: &[f64], detrend: bool) -> Result<Vec<f64>> {
    if series.len() < 16 {
        return Err(Error::input(format!("series length {} is below 16", series.len())));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("series contains non-finite values"));
    }
    let mut x = series.to_vec();
    if detrend {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= m);
    }
    Ok(x)
}

/// Tapered DFTs, one per taper, each of length `n`.
fn eigencoefficients(x: &[f64], tapers: &Tapers, planner: &mut FftPlanner<f64>) -> Vec<Vec<Complex64>> {
    let fft = planner.plan_fft_forward(x.len());
    tapers
        .tapers
        .iter()
        .map(|v| {
            let mut buf: Vec<Complex64> = x.iter().zip(v).map(|(a, b)| Complex64::new(a * b, 0.0)).collect();
            fft.process(&mut buf);
            buf
        })
        .collect()
}

fn one_sided_len(n: usize) -> usize {
    n / 2 + 1
}

/// Doubling factor for one-sided folding at bin `j`.
fn fold_factor(n: usize, j: usize) -> f64 {
    if j == 0 || (n % 2 == 0 && j == n / 2) {
        1.0
    } else {
        2.0
    }
}

pub const ADAPTIVE_TOL: f64 = 1e-8;
pub const ADAPTIVE_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveEstimate {
    pub estimate: f64,
    pub weights: Vec<f64>,
    pub dof: f64,
    pub converged: bool,
}

/// Adaptive combination of eigenspectra `sk` at one frequency.
pub fn adaptive_combine(sk: &[f64], lambda: &[f64], sigma2: f64) -> AdaptiveEstimate {
    let k = sk.len();
    let mut s = if k >= 2 { 0.5 * (sk[0] + sk[1]) } else { sk[0] };
    let mut converged = false;
    let mut weights = vec![0.0; k];
    for _ in 0..ADAPTIVE_MAX_ITER {
        for i in 0..k {
            let den = lambda[i] * s + (1.0 - lambda[i]) * sigma2;
            weights[i] = if den > 0.0 { s / den } else { 1.0 / lambda[i] };
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..k {
            let wl = lambda[i] * weights[i] * weights[i];
            num += wl * sk[i];
            den += wl;
        }
        let next = if den > 0.0 { num / den } else { 0.0 };
        let done = (next - s).abs() <= ADAPTIVE_TOL * next.abs() || next == s;
        s = next;
        if done {
            converged = true;
            break;
        }
    }
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..k {
        let wl = lambda[i] * weights[i] * weights[i];
        a += wl;
        b += wl * wl;
    }
    let dof = if b > 0.0 { 2.0 * a * a / b } else { 2.0 * k as f64 };
    AdaptiveEstimate {
        estimate: s,
        weights,
        dof,
        converged,
    }
}

pub fn multitaper_psd(series: &[f64], cfg: &SpectralConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let x = prepare(series, cfg.detrend)?;
    let n = x.len();
    let tapers = dpss_tapers(n, cfg.nw, cfg.k)?;
    multitaper_psd_with(&x, &tapers, cfg.adaptive)
}

/// PSD of an already prepared series using precomputed tapers.
pub fn multitaper_psd_with(x: &[f64], tapers: &Tapers, adaptive: bool) -> Result<Spectrum> {
    let n = x.len();
    if tapers.n != n {
        return Err(Error::input("taper length differs from series length"));
    }
    let mut planner = FftPlanner::new();
    let coef = eigencoefficients(x, tapers, &mut planner);
    let lambda = &tapers.eigenvalues;
    let k = lambda.len();
    let sigma2 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let nf = one_sided_len(n);
    let mut psd = Vec::with_capacity(nf);
    let mut dof = Vec::with_capacity(nf);
    let mut converged = true;
    let lsum: f64 = lambda.iter().sum();
    let l2sum: f64 = lambda.iter().map(|l| l * l).sum();
    let mut sk = vec![0.0; k];
    for j in 0..nf {
        for i in 0..k {
            sk[i] = coef[i][j].norm_sqr();
        }
        let (s, d) = if adaptive && sigma2 > 0.0 {
            let a = adaptive_combine(&sk, lambda, sigma2);
            converged &= a.converged;
            (a.estimate, a.dof)
        } else {
            let s = sk.iter().zip(lambda).map(|(a, l)| a * l).sum::<f64>() / lsum;
            (s, 2.0 * lsum * lsum / l2sum)
        };
        psd.push(fold_factor(n, j) * s);
        dof.push(d);
    }
    if !converged {
        log::warn!("adaptive multitaper weights did not converge at every frequency");
    }
    Ok(Spectrum {
        freqs: (0..nf).map(|j| j as f64 / n as f64).collect(),
        psd,
        dof,
        converged,
    })
}

/// Eigenvalue-weighted cross spectrum, magnitude-squared coherence and phase.
///
/// Phase is `arg(Sxy)`; for `y(t) = x(t − Δ)` it is `+2πfΔ`.
pub fn multitaper_cross(x: &[f64], y: &[f64], cfg: &SpectralConfig) -> Result<CrossSpectrum> {
    cfg.validate()?;
    if cfg.k < 2 {
        return Err(Error::config("coherency needs at least 2 tapers"));
    }
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let xs = prepare(x, cfg.detrend)?;
    let ys = prepare(y, cfg.detrend)?;
    let n = xs.len();
    let tapers = dpss_tapers(n, cfg.nw, cfg.k)?;
    let mut planner = FftPlanner::new();
    let cx = eigencoefficients(&xs, &tapers, &mut planner);
    let cy = eigencoefficients(&ys, &tapers, &mut planner);
    let lambda = &tapers.eigenvalues;
    let lsum: f64 = lambda.iter().sum();
    let nf = one_sided_len(n);
    let mut out = CrossSpectrum {
        freqs: (0..nf).map(|j| j as f64 / n as f64).collect(),
        coherency: Vec::with_capacity(nf),
        phase: Vec::with_capacity(nf),
        sxx: Vec::with_capacity(nf),
        syy: Vec::with_capacity(nf),
        sxy_abs: Vec::with_capacity(nf),
    };
    for j in 0..nf {
        let mut sxy = Complex64::new(0.0, 0.0);
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (i, l) in lambda.iter().enumerate() {
            sxy += cx[i][j] * cy[i][j].conj() * *l;
            sxx += cx[i][j].norm_sqr() * l;
            syy += cy[i][j].norm_sqr() * l;
        }
        let f = fold_factor(n, j) / lsum;
        let (sxy, sxx, syy) = (sxy * f, sxx * f, syy * f);
        let denom = sxx * syy;
        let mut coh = if denom > 0.0 { sxy.norm_sqr() / denom } else { 0.0 };
        // Cauchy-Schwarz bounds this by 1; anything beyond rounding is a bug.
        if coh > 1.0 + 1e-10 {
            return Err(Error::internal(format!("coherency {coh} exceeds 1 at bin {j}")));
        }
        coh = coh.min(1.0);
        let mut ph = sxy.im.atan2(sxy.re);
        if ph <= -std::f64::consts::PI {
            ph = std::f64::consts::PI;
        }
        out.coherency.push(coh);
        out.phase.push(ph);
        out.sxx.push(sxx);
        out.syy.push(syy);
        out.sxy_abs.push(sxy.norm());
    }
    Ok(out)
}

fn period(f: f64) -> String {
    if f > 0.0 {
        fsio::fmt_g6(1.0 / f)
    } else {
        "NA".into()
    }
}

pub fn write_spectrum_csv(s: &Spectrum, path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "freq_cph,period_h,psd")?;
        for (f, p) in s.freqs.iter().zip(&s.psd) {
            writeln!(w, "{},{},{}", fsio::fmt_g6(*f), period(*f), fsio::fmt_g6(*p))?;
        }
        Ok(())
    })
}

/// Cross-spectrum table; the `psd` column holds `|Sxy|`.
pub fn write_cross_csv(c: &CrossSpectrum, path: &Path) -> Result<()> {
    fsio::write_atomic(path, |w| {
        writeln!(w, "freq_cph,period_h,psd,coherency,phase")?;
        for j in 0..c.freqs.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fsio::fmt_g6(c.freqs[j]),
                period(c.freqs[j]),
                fsio::fmt_g6(c.sxy_abs[j]),
                fsio::fmt_g6(c.coherency[j]),
                fsio::fmt_g6(c.phase[j])
            )?;
        }
        Ok(())
    })
}
