//! Continuous wavelet transform with the analytic Morlet wavelet, and the
//! fixed-size normalized scalogram maps fed to the classifiers.
//!
//! Coefficients follow the discrete form of the transform with time measured
//! in samples:
//!
//! ```text
//! W[k, b] = 1/sqrt(k) * sum_n x[n] * psi((n - b) / k)
//! psi(t)  = pi^(-1/4) * exp(i * w0 * t) * exp(-t^2 / 2),  w0 = 6
//! ```
//!
//! and are computed by FFT convolution with zero padding. Scale `k` maps to
//! center frequency `w0 * fs / (2 pi k)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::simgen::SignalSegment;

/// Morlet center frequency in radians per unit time.
pub const MORLET_W0: f64 = 6.0;

/// The wavelet is truncated at this many scale units from its center.
const SUPPORT_HALF_WIDTH: f64 = 8.0;

pub fn morlet(t: f64) -> Complex64 {
    let envelope = PI.powf(-0.25) * (-t * t / 2.0).exp();
    Complex64::from_polar(envelope, MORLET_W0 * t)
}

/// Scale (in samples) whose center frequency is `freq_hz`.
pub fn scale_for_freq(freq_hz: f64, fs_hz: f64) -> f64 {
    MORLET_W0 * fs_hz / (2.0 * PI * freq_hz)
}

pub fn freq_for_scale(scale: f64, fs_hz: f64) -> f64 {
    MORLET_W0 / (2.0 * PI * scale) * fs_hz
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    /// Increasing scales, in samples.
    pub scales: Vec<f64>,
    /// Decreasing center frequencies matching `scales`.
    pub center_freqs_hz: Vec<f64>,
    pub voices_per_octave: usize,
    pub fs_hz: f64,
}

impl ScaleGrid {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// Log-spaced grid starting at `fmax` and stepping down `1/voices` octave at
/// a time until `fmin` is reached or passed.
pub fn scales_for_band(fs_hz: f64, fmin_hz: f64, fmax_hz: f64, voices: usize) -> Result<ScaleGrid> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::invalid("sampling rate must be positive"));
    }
    if !(fmin_hz > 0.0 && fmin_hz <= fmax_hz) {
        return Err(Error::invalid(format!(
            "band [{fmin_hz}, {fmax_hz}] Hz is empty or non-positive"
        )));
    }
    if fmax_hz >= fs_hz / 2.0 {
        return Err(Error::invalid(format!(
            "fmax {fmax_hz} Hz is at or above Nyquist ({} Hz)",
            fs_hz / 2.0
        )));
    }
    if voices == 0 {
        return Err(Error::invalid("voices per octave must be at least 1"));
    }
    let steps = ((fmax_hz / fmin_hz).log2() * voices as f64 - 1e-9)
        .ceil()
        .max(0.0) as usize;
    let scales: Vec<f64> = (0..=steps)
        .map(|i| {
            let f = fmax_hz * 2f64.powf(-(i as f64) / voices as f64);
            scale_for_freq(f, fs_hz)
        })
        .collect();
    let center_freqs_hz = scales.iter().map(|&k| freq_for_scale(k, fs_hz)).collect();
    Ok(ScaleGrid {
        scales,
        center_freqs_hz,
        voices_per_octave: voices,
        fs_hz,
    })
}

/// Complex coefficients, one row per scale, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CwtMatrix {
    pub coeffs: Vec<Complex64>,
    pub n_samples: usize,
    pub grid: ScaleGrid,
}

impl CwtMatrix {
    pub fn n_scales(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, scale_idx: usize) -> &[Complex64] {
        &self.coeffs[scale_idx * self.n_samples..(scale_idx + 1) * self.n_samples]
    }

    pub fn get(&self, scale_idx: usize, sample: usize) -> Complex64 {
        self.coeffs[scale_idx * self.n_samples + sample]
    }

    /// Index of the row with the largest mean coefficient magnitude.
    pub fn ridge_row(&self) -> usize {
        (0..self.n_scales())
            .map(|i| self.row(i).iter().map(|c| c.norm()).sum::<f64>())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }
}

pub fn cwt(signal: &SignalSegment, grid: &ScaleGrid) -> Result<CwtMatrix> {
    cwt_samples(&signal.samples, signal.fs_hz, grid)
}

pub fn cwt_samples(samples: &[f64], fs_hz: f64, grid: &ScaleGrid) -> Result<CwtMatrix> {
    if samples.len() < 8 {
        return Err(Error::invalid(format!(
            "signal has {} samples, at least 8 required",
            samples.len()
        )));
    }
    if fs_hz != grid.fs_hz {
        return Err(Error::invalid(format!(
            "signal sampled at {fs_hz} Hz but scale grid built for {} Hz",
            grid.fs_hz
        )));
    }
    let n = samples.len();
    let max_half = grid
        .scales
        .iter()
        .map(|&k| (SUPPORT_HALF_WIDTH * k).ceil() as usize)
        .max()
        .unwrap_or(0);
    let len = (n + max_half + 1).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let mut spectrum: Vec<Complex64> = samples
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    fwd.process(&mut spectrum);

    let mut coeffs = Vec::with_capacity(grid.len() * n);
    let mut filter = vec![Complex64::new(0.0, 0.0); len];
    for &k in &grid.scales {
        // correlation with psi(m / k) is convolution with its time reverse
        let half = (SUPPORT_HALF_WIDTH * k).ceil() as i64;
        let norm = 1.0 / k.sqrt();
        filter
            .iter_mut()
            .for_each(|c| *c = Complex64::new(0.0, 0.0));
        for m in -half..=half {
            let idx = (-m).rem_euclid(len as i64) as usize;
            filter[idx] = morlet(m as f64 / k) * norm;
        }
        fwd.process(&mut filter);
        for (f, s) in filter.iter_mut().zip(&spectrum) {
            *f *= s;
        }
        inv.process(&mut filter);
        let scale = 1.0 / len as f64;
        coeffs.extend(filter[..n].iter().map(|c| c * scale));
    }
    Ok(CwtMatrix {
        coeffs,
        n_samples: n,
        grid: grid.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalogramConfig {
    /// Side length of the square output map.
    pub size: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub voices: usize,
}

impl Default for ScalogramConfig {
    fn default() -> Self {
        ScalogramConfig {
            size: 64,
            fmin_hz: 80.0,
            fmax_hz: 500.0,
            voices: 12,
        }
    }
}

impl ScalogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::invalid("scalogram size must be at least 2"));
        }
        if !(self.fmin_hz > 0.0 && self.fmin_hz < self.fmax_hz) {
            return Err(Error::invalid(
                "scalogram band must satisfy 0 < fmin < fmax",
            ));
        }
        if self.voices == 0 {
            return Err(Error::invalid("voices per octave must be at least 1"));
        }
        Ok(())
    }
}

/// Square single-channel map with values in `[0, 1]`. Row 0 is the highest
/// frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrequencyMap {
    pub values: Vec<f64>,
    pub size: usize,
    pub freq_axis_hz: Vec<f64>,
    pub time_axis_s: Vec<f64>,
    pub source_event_id: u64,
}

impl TimeFrequencyMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.size..(row + 1) * self.size]
    }

    /// Frequency of the row with the largest mean value.
    pub fn ridge_frequency(&self) -> f64 {
        let best = (0..self.size)
            .map(|r| self.row(r).iter().sum::<f64>())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0;
        self.freq_axis_hz[best]
    }

    /// Block-mean downsampling to `out x out`, flattened row-major.
    pub fn mean_pool(&self, out: usize) -> Result<Vec<f64>> {
        if out == 0 || out > self.size {
            return Err(Error::invalid(format!(
                "cannot pool a {s}x{s} map to {out}x{out}",
                s = self.size
            )));
        }
        let edges: Vec<usize> = (0..=out).map(|i| i * self.size / out).collect();
        let mut pooled = Vec::with_capacity(out * out);
        for r in 0..out {
            for c in 0..out {
                let mut sum = 0.0;
                for row in edges[r]..edges[r + 1] {
                    sum += self.row(row)[edges[c]..edges[c + 1]].iter().sum::<f64>();
                }
                let count = (edges[r + 1] - edges[r]) * (edges[c + 1] - edges[c]);
                pooled.push(sum / count as f64);
            }
        }
        Ok(pooled)
    }
}

/// Bilinear sampling of a row-major `rows x cols` image at fractional
/// positions.
pub fn bilinear_sample(
    src: &[f64],
    rows: usize,
    cols: usize,
    row_pos: &[f64],
    col_pos: &[f64],
) -> Vec<f64> {
    let lerp_idx = |p: f64, n: usize| {
        let p = p.clamp(0.0, (n - 1) as f64);
        let i0 = (p.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f64)
    };
    let mut out = Vec::with_capacity(row_pos.len() * col_pos.len());
    for &rp in row_pos {
        let (r0, r1, fr) = lerp_idx(rp, rows);
        for &cp in col_pos {
            let (c0, c1, fc) = lerp_idx(cp, cols);
            let top = src[r0 * cols + c0] * (1.0 - fc) + src[r0 * cols + c1] * fc;
            let bottom = src[r1 * cols + c0] * (1.0 - fc) + src[r1 * cols + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Corner-aligned bilinear resize of a row-major image.
pub fn resize_bilinear(
    src: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    let positions = |n_out: usize, n_in: usize| -> Vec<f64> {
        if n_out == 1 {
            return vec![0.0];
        }
        (0..n_out)
            .map(|i| i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64)
            .collect()
    };
    bilinear_sample(
        src,
        rows,
        cols,
        &positions(out_rows, rows),
        &positions(out_cols, cols),
    )
}

/// Magnitude scalogram: `|W|`, log1p compression, min-max normalization, then
/// bilinear resampling onto an `S x S` grid whose rows are log-spaced from
/// `fmax` down to `fmin` and whose columns span the window.
pub fn scalogram(signal: &SignalSegment, cfg: &ScalogramConfig) -> Result<TimeFrequencyMap> {
    cfg.validate()?;
    let grid = scales_for_band(signal.fs_hz, cfg.fmin_hz, cfg.fmax_hz, cfg.voices)?;
    let w = cwt(signal, &grid)?;
    let n = w.n_samples;
    let mut mag: Vec<f64> = w.coeffs.iter().map(|c| c.norm().ln_1p()).collect();
    let (lo, hi) = mag
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        mag.iter_mut()
            .for_each(|v| *v = ((*v - lo) / range).clamp(0.0, 1.0));
    } else {
        mag.iter_mut().for_each(|v| *v = 0.0);
    }

    let s = cfg.size;
    let octaves = (cfg.fmax_hz / cfg.fmin_hz).log2();
    let freq_axis_hz: Vec<f64> = (0..s)
        .map(|r| cfg.fmax_hz * 2f64.powf(-octaves * r as f64 / (s - 1) as f64))
        .collect();
    let row_pos: Vec<f64> = freq_axis_hz
        .iter()
        .map(|&f| (cfg.fmax_hz / f).log2() * cfg.voices as f64)
        .collect();
    let col_pos: Vec<f64> = (0..s)
        .map(|c| c as f64 * (n - 1) as f64 / (s - 1) as f64)
        .collect();
    let time_axis_s = col_pos.iter().map(|&p| p / signal.fs_hz).collect();
    let mut values = bilinear_sample(&mag, grid.len(), n, &row_pos, &col_pos);
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(TimeFrequencyMap {
        values,
        size: s,
        freq_axis_hz,
        time_axis_s,
        source_event_id: signal.event_id,
    })
}
