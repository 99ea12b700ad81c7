//! Angular velocities, DFT spectra, dissimilarity indices, and the
//! bus-frequency correlation matrix.
//!
//! The velocity transform over all buses feeds a finite DFT; the correlation
//! operates on magnitude spectra restricted to the configured frequency band
//! (default 0.1-1.0 Hz, the conventional inter-area oscillation range).

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::WaveformSet;

/// Per-bus angular-velocity series, one sample shorter than the source
/// waveforms.
#[derive(Debug, Clone)]
pub struct VelocitySet {
    labels: Vec<String>,
    dt_s: f64,
    /// series[b][k] = (theta[k+1] - theta[k]) / dt, rad/s.
    series: Vec<Vec<f64>>,
}

impl VelocitySet {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    pub fn bus_count(&self) -> usize {
        self.series.len()
    }

    /// Velocity sample count N' = N - 1.
    pub fn sample_count(&self) -> usize {
        self.series[0].len()
    }

    pub fn series(&self, bus: usize) -> &[f64] {
        &self.series[bus]
    }
}

/// Forward-difference angular velocity of every bus.
pub fn angular_velocity(w: &WaveformSet) -> VelocitySet {
    let dt = w.dt_s();
    let series = (0..w.bus_count())
        .map(|b| {
            let theta = w.series(b);
            theta.windows(2).map(|p| (p[1] - p[0]) / dt).collect()
        })
        .collect();
    VelocitySet {
        labels: w.labels().to_vec(),
        dt_s: dt,
        series,
    }
}

/// Window applied to velocity samples before the DFT. Rectangular (none) by
/// default; Hann is available but changes the spectra the correlations see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowFn {
    #[default]
    Rectangular,
    Hann,
}

/// Complex spectra of all buses restricted to a frequency band.
#[derive(Debug, Clone)]
pub struct FrequencySpectrumMatrix {
    labels: Vec<String>,
    /// rows x bins, row b = in-band spectrum of bus b.
    values: DMatrix<Complex64>,
    bin_freqs_hz: Vec<f64>,
    band_hz: (f64, f64),
}

impl FrequencySpectrumMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bus_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn bin_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn bin_freqs_hz(&self) -> &[f64] {
        &self.bin_freqs_hz
    }

    pub fn band_hz(&self) -> (f64, f64) {
        self.band_hz
    }

    pub fn value(&self, bus: usize, bin: usize) -> Complex64 {
        self.values[(bus, bin)]
    }

    /// Magnitude sequence |F_b(.)| over the in-band bins.
    pub fn magnitude_row(&self, bus: usize) -> Vec<f64> {
        (0..self.bin_count())
            .map(|j| self.values[(bus, j)].norm())
            .collect()
    }
}

/// Full finite DFT of every velocity series: bin f of bus i is
/// sum_k v_i(k) * exp(-j 2 pi f k / N') over the N' velocity samples.
pub fn dft_all_bins(v: &VelocitySet) -> Vec<Vec<Complex64>> {
    dft_all_bins_windowed(v, WindowFn::Rectangular)
}

fn dft_all_bins_windowed(v: &VelocitySet, window: WindowFn) -> Vec<Vec<Complex64>> {
    let n = v.sample_count();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let weights: Option<Vec<f64>> = match window {
        WindowFn::Rectangular => None,
        WindowFn::Hann => Some(
            (0..n)
                .map(|k| {
                    let x = std::f64::consts::TAU * k as f64 / n as f64;
                    0.5 * (1.0 - x.cos())
                })
                .collect(),
        ),
    };
    (0..v.bus_count())
        .map(|b| {
            let mut buf: Vec<Complex64> = v
                .series(b)
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let w = weights.as_ref().map_or(1.0, |ws| ws[k]);
                    Complex64::new(x * w, 0.0)
                })
                .collect();
            fft.process(&mut buf);
            buf
        })
        .collect()
}

/// DFT spectra restricted to the bins whose physical frequency
/// f = bin / (N' * dt) lies in `band_hz` (inclusive).
pub fn dft_spectrum(v: &VelocitySet, band_hz: (f64, f64)) -> Result<FrequencySpectrumMatrix> {
    dft_spectrum_windowed(v, band_hz, WindowFn::Rectangular)
}

pub fn dft_spectrum_windowed(
    v: &VelocitySet,
    band_hz: (f64, f64),
    window: WindowFn,
) -> Result<FrequencySpectrumMatrix> {
    let (lo, hi) = band_hz;
    let nyquist = 1.0 / (2.0 * v.dt_s());
    if !(lo >= 0.0 && hi >= lo && hi <= nyquist) {
        return Err(Error::Config(format!(
            "band {lo}..{hi} Hz must lie within 0..{nyquist} Hz (Nyquist)"
        )));
    }
    let n = v.sample_count();
    let spacing = 1.0 / (n as f64 * v.dt_s());
    let bins: Vec<usize> = (0..n)
        .filter(|&b| {
            let f = b as f64 * spacing;
            f >= lo && f <= hi
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::EmptyBand { lo, hi, spacing });
    }

    let full = dft_all_bins_windowed(v, window);
    let mut values = DMatrix::zeros(v.bus_count(), bins.len());
    for (row, spectrum) in full.iter().enumerate() {
        for (col, &bin) in bins.iter().enumerate() {
            values[(row, col)] = spectrum[bin];
        }
    }
    Ok(FrequencySpectrumMatrix {
        labels: v.labels().to_vec(),
        values,
        bin_freqs_hz: bins.iter().map(|&b| b as f64 * spacing).collect(),
        band_hz,
    })
}

/// Trapezoidal integral of uniformly sampled values.
pub(crate) fn trapezoid(values: &[f64], dt: f64) -> f64 {
    values
        .windows(2)
        .map(|p| 0.5 * (p[0] + p[1]) * dt)
        .sum()
}

/// Dissimilarity index between two buses over a time window: the trapezoidal
/// integral of the difference of their angle deviations, each measured from
/// that bus's value at the window start. Window bounds snap to the sample
/// grid.
pub fn dissimilarity_index(
    w: &WaveformSet,
    bus_i: usize,
    bus_j: usize,
    window_s: (f64, f64),
) -> Result<f64> {
    let (t0, t1) = window_s;
    let span = w.span_s();
    if !(t0 >= -1e-12 && t1 > t0 && t1 <= span + 1e-12) {
        return Err(Error::WindowOutOfRange(t0, t1, span));
    }
    let dt = w.dt_s();
    // Snap to the grid; a bound within 1e-6 samples of a grid point uses it.
    let k0 = ((t0 / dt) - 1e-6).ceil().max(0.0) as usize;
    let k1 = (((t1 / dt) + 1e-6).floor() as usize).min(w.sample_count() - 1);
    if k1 <= k0 {
        return Err(Error::WindowOutOfRange(t0, t1, span));
    }
    let theta_i = w.series(bus_i);
    let theta_j = w.series(bus_j);
    let base = theta_i[k0] - theta_j[k0];
    let integrand: Vec<f64> = (k0..=k1)
        .map(|k| (theta_i[k] - theta_j[k]) - base)
        .collect();
    Ok(trapezoid(&integrand, dt))
}

/// Pearson correlations of in-band magnitude spectra. Values are pre-clamp:
/// the diagonal is exactly 1 and entries lie in [-1, 1].
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    labels: Vec<String>,
    values: DMatrix<f64>,
    /// Buses whose in-band magnitude spectrum is constant; their correlation
    /// with every partner is defined as 0.
    zero_variance: Vec<usize>,
}

impl CorrelationMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn zero_variance_buses(&self) -> &[usize] {
        &self.zero_variance
    }
}

/// Builds the correlation coefficient similarity matrix from in-band
/// magnitude spectra. Needs at least 2 bins.
pub fn correlation_matrix(f: &FrequencySpectrumMatrix) -> Result<CorrelationMatrix> {
    let n_bins = f.bin_count();
    if n_bins < 2 {
        return Err(Error::Config(format!(
            "correlation needs at least 2 in-band bins, got {n_bins}"
        )));
    }
    let n = f.bus_count();
    let rows: Vec<Vec<f64>> = (0..n).map(|b| f.magnitude_row(b)).collect();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let avg = r.iter().sum::<f64>() / n_bins as f64;
            r.iter().map(|&x| x - avg).collect()
        })
        .collect();
    let variances: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|&x| x * x).sum::<f64>())
        .collect();
    let zero_variance: Vec<usize> = variances
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= 0.0)
        .map(|(i, _)| i)
        .collect();

    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        values[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let c = if variances[i] <= 0.0 || variances[j] <= 0.0 {
                0.0
            } else if rows[i] == rows[j] {
                // Bitwise-identical magnitude rows correlate exactly.
                1.0
            } else {
                let num: f64 = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(&a, &b)| a * b)
                    .sum();
                num / (variances[i].sqrt() * variances[j].sqrt())
            };
            values[(i, j)] = c;
            values[(j, i)] = c;
        }
    }
    Ok(CorrelationMatrix {
        labels: f.labels().to_vec(),
        values,
        zero_variance,
    })
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// Builds a spectrum directly from real magnitude rows, for tests that
    /// exercise the correlation path in isolation.
    pub(crate) fn spectrum_from_rows(rows: Vec<Vec<f64>>) -> FrequencySpectrumMatrix {
        let n = rows.len();
        let bins = rows[0].len();
        let mut values = DMatrix::zeros(n, bins);
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                values[(i, j)] = Complex64::new(x, 0.0);
            }
        }
        FrequencySpectrumMatrix {
            labels: (0..n).map(|i| format!("B{}", i + 1)).collect(),
            values,
            bin_freqs_hz: (0..bins).map(|b| 0.1 * (b + 1) as f64).collect(),
            band_hz: (0.1, 0.1 * bins as f64),
        }
    }
}
