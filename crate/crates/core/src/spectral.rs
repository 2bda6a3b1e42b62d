//! Analytic frequency responses, Bode tables, zero-order-hold signal
//! reconstruction and periodogram PSD estimation.
//!
//! The cascade transfer function evaluated here is
//!
//! ```text
//! H(jω) = (1 - e^{-jωτ₁})/(1 - ρ₁e^{-jωτ₁}) · (1 - ρ₂e^{-jωτ₂})/(1 - e^{-jωτ₂})
//! ```
//!
//! At ωτ₂ = 2πk the second denominator vanishes; when τ₁/τ₂ is an integer a
//! zero of the first numerator lands on the same frequency and the
//! singularity is removable. Those points are evaluated by series limit
//! rather than 0/0 arithmetic.

use std::io::{self, Write};

use num_complex::Complex;
use thiserror::Error;

use crate::comb::FilterConfig;
use crate::event::{Event, PixelRect};
use crate::Real;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("signal too short for PSD: {len} samples (need >= 16)")]
    SignalTooShort { len: usize },
    #[error("empty pixel region")]
    EmptyRegion,
    #[error("no PSD bins inside band {f_lo}..{f_hi} Hz")]
    EmptyBand { f_lo: f64, f_hi: f64 },
    #[error("spectra do not share a frequency grid")]
    GridMismatch,
    #[error("invalid frequency range: {0}")]
    InvalidRange(String),
}

/// One row of a Bode table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexFrequencyResponse<T> {
    /// Hz.
    pub frequency: T,
    pub magnitude: T,
    /// Radians in (-π, π].
    pub phase: T,
}

impl<T: Real> ComplexFrequencyResponse<T> {
    pub fn from_complex(frequency: T, h: Complex<T>) -> Self {
        let mut phase = h.im.atan2(h.re);
        let pi = T::from_f64(std::f64::consts::PI).unwrap();
        if phase <= -pi {
            phase = phase + pi + pi;
        }
        Self {
            frequency,
            magnitude: h.norm(),
            phase,
        }
    }

    pub fn magnitude_db(&self) -> T {
        T::from_f64(20.0).unwrap() * self.magnitude.log10()
    }

    pub fn phase_deg(&self) -> T {
        self.phase * T::from_f64(180.0 / std::f64::consts::PI).unwrap()
    }
}

/// One-sided power spectral density with its estimation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumData<T> {
    /// Strictly increasing, 0..=sample_rate/2, Hz.
    pub frequencies: Vec<T>,
    /// signal²/Hz, one value per frequency.
    pub power: Vec<T>,
    pub window: WindowMeta,
}

/// Provenance of a PSD estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMeta {
    pub start_time: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub taper: String,
}

#[inline]
fn unit_phasor<T: Real>(phase: T) -> Complex<T> {
    // e^{-jφ}
    Complex::new(phase.cos(), -phase.sin())
}

/// Feed-forward comb: H(jω) = 1 - e^{-jωτ}.
pub fn h_feedforward<T: Real>(omega: T, tau: T) -> Complex<T> {
    Complex::new(T::one(), T::zero()) - unit_phasor(omega * tau)
}

/// Feed-forward/feedback comb: H(jω) = (1 - e^{-jωτ}) / (1 - ρe^{-jωτ}).
pub fn h_feedback<T: Real>(omega: T, tau: T, rho: T) -> Complex<T> {
    let z = unit_phasor(omega * tau);
    let one = Complex::new(T::one(), T::zero());
    (one - z) / (one - z * rho)
}

/// Reduce a phase to (-π, π].
fn reduce_phase<T: Real>(phase: T) -> T {
    let two_pi = T::from_f64(std::f64::consts::TAU).unwrap();
    let pi = T::from_f64(std::f64::consts::PI).unwrap();
    let mut r = phase % two_pi;
    if r > pi {
        r = r - two_pi;
    } else if r <= -pi {
        r = r + two_pi;
    }
    r
}

/// 1 - e^{-jφ} by Maclaurin series, accurate for small |φ|.
fn one_minus_phasor_series<T: Real>(phi: T) -> Complex<T> {
    let two = T::from_f64(2.0).unwrap();
    let six = T::from_f64(6.0).unwrap();
    let twenty_four = T::from_f64(24.0).unwrap();
    let p2 = phi * phi;
    Complex::new(p2 / two - p2 * p2 / twenty_four, phi - p2 * phi / six)
}

/// Proposed cascade transfer function with removable singularities taken by
/// their analytic limit.
pub fn h_proposed<T: Real>(omega: T, config: &FilterConfig<T>) -> Complex<T> {
    let one = Complex::new(T::one(), T::zero());
    let phi1 = reduce_phase(omega * config.tau1);
    let phi2 = reduce_phase(omega * config.tau2);
    let branch_radius = T::from_f64(1e-6).unwrap();

    let z1 = unit_phasor(phi1);
    let z2 = unit_phasor(phi2);
    let smooth = (one - z2 * config.rho2) / (one - z1 * config.rho1);

    // Ratio of the coupled zero/pole pair (1 - e^{-jωτ₁}) / (1 - e^{-jωτ₂}).
    let ratio = if phi2.abs() < branch_radius {
        let r = config.tau1 / config.tau2;
        let integer_ratio = (r - r.round()).abs() < T::from_f64(1e-9).unwrap() * r.abs();
        if integer_ratio {
            // Removable singularity (or DC): near ωτ₂ = 2πk the reduced φ₁
            // is R·φ₂ up to float noise; evaluate both factors by series in
            // φ₂. At φ₂ = 0 exactly this is the L'Hôpital limit R.
            if phi2 == T::zero() {
                Complex::new(r, T::zero())
            } else {
                one_minus_phasor_series(r * phi2) / one_minus_phasor_series(phi2)
            }
        } else if phi2 == T::zero() {
            // Genuine pole on the evaluation grid.
            Complex::new(T::infinity(), T::zero())
        } else {
            (one - z1) / one_minus_phasor_series(phi2)
        }
    } else {
        (one - z1) / (one - z2)
    };

    ratio * smooth
}

/// Log-spaced table of the cascade response, endpoints inclusive.
pub fn bode_table<T: Real>(
    config: &FilterConfig<T>,
    f_min: T,
    f_max: T,
    points_per_decade: usize,
) -> Result<Vec<ComplexFrequencyResponse<T>>, SpectralError> {
    if !(f_min > T::zero() && f_max > f_min) {
        return Err(SpectralError::InvalidRange(format!(
            "need 0 < f_min < f_max, got {f_min}..{f_max}"
        )));
    }
    let decades = (f_max / f_min).log10();
    let n = ((decades.to_f64().unwrap() * points_per_decade as f64).round() as usize).max(1) + 1;
    let two_pi = T::from_f64(std::f64::consts::TAU).unwrap();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let frac = T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap();
        let f = if i == n - 1 {
            f_max
        } else {
            f_min * T::from_f64(10.0).unwrap().powf(decades * frac)
        };
        rows.push(ComplexFrequencyResponse::from_complex(
            f,
            h_proposed(two_pi * f, config),
        ));
    }
    Ok(rows)
}

/// Write a Bode table as `freq_hz,mag_db,phase_deg` CSV.
pub fn write_bode_csv<T: Real, W: Write>(
    rows: &[ComplexFrequencyResponse<T>],
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "freq_hz,mag_db,phase_deg")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{}",
            row.frequency,
            row.magnitude_db(),
            row.phase_deg()
        )?;
    }
    Ok(())
}

/// Region-mean zero-order-hold reconstruction of an event stream.
///
/// Each event steps its pixel's staircase by ±contrast; the returned signal
/// is the mean staircase value over the region sampled uniformly on
/// `[t_start, t_end)`. Events must be time-sorted; events before `t_start`
/// set the baseline.
pub fn reconstruct_zoh<T: Real>(
    events: &[Event<T>],
    region: PixelRect,
    sample_rate: f64,
    t_start: f64,
    t_end: f64,
    contrast: T,
) -> Result<Vec<T>, SpectralError> {
    if region.area() == 0 {
        return Err(SpectralError::EmptyRegion);
    }
    if !(sample_rate > 0.0) || !(t_end > t_start) {
        return Err(SpectralError::InvalidRange(format!(
            "bad sampling window rate={sample_rate} [{t_start}, {t_end})"
        )));
    }
    let n = ((t_end - t_start) * sample_rate).round() as usize;
    let area = T::from_usize(region.area()).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut sum = T::zero();
    let mut next = 0usize;
    for i in 0..n {
        let t_grid = t_start + i as f64 / sample_rate;
        while next < events.len() && events[next].t.to_f64().unwrap() <= t_grid {
            let ev = &events[next];
            if region.contains(ev.x, ev.y) {
                let step = if ev.polarity > 0 { contrast } else { -contrast };
                sum = sum + step;
            }
            next += 1;
        }
        out.push(sum / area);
    }
    Ok(out)
}

/// In-place iterative radix-2 FFT. Length must be a power of two.
pub fn fft<T: Real>(data: &mut [Complex<T>]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let angle = -std::f64::consts::TAU / len as f64;
        let w_len = Complex::new(
            T::from_f64(angle.cos()).unwrap(),
            T::from_f64(angle.sin()).unwrap(),
        );
        for chunk in data.chunks_mut(len) {
            let mut w = Complex::new(T::one(), T::zero());
            for i in 0..len / 2 {
                let a = chunk[i];
                let b = chunk[i + len / 2] * w;
                chunk[i] = a + b;
                chunk[i + len / 2] = a - b;
                w = w * w_len;
            }
        }
        len <<= 1;
    }
}

/// Single-window Hann-tapered periodogram.
///
/// The signal is mean-removed, Hann-tapered, zero-padded to the next power
/// of two and transformed; the one-sided power is normalized so that
/// Σ power·Δf recovers the tapered signal variance.
pub fn psd<T: Real>(signal: &[T], sample_rate: f64) -> Result<SpectrumData<T>, SpectralError> {
    let n = signal.len();
    if n < 16 {
        return Err(SpectralError::SignalTooShort { len: n });
    }
    let mean = signal.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize(n).unwrap();
    let m = n.next_power_of_two();
    let mut data = vec![Complex::new(T::zero(), T::zero()); m];
    let mut window_power = T::zero();
    for i in 0..n {
        let w =
            T::from_f64(0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n as f64 - 1.0)).cos()))
                .unwrap();
        window_power = window_power + w * w;
        data[i] = Complex::new((signal[i] - mean) * w, T::zero());
    }
    fft(&mut data);

    let df = sample_rate / m as f64;
    // One-sided normalization: sum(power)·Δf == Σ|x·w|²/Σw².
    let norm = T::from_f64(m as f64 / sample_rate).unwrap() / window_power;
    let half = m / 2;
    let mut frequencies = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    let two = T::from_f64(2.0).unwrap();
    for (k, bin) in data.iter().take(half + 1).enumerate() {
        let p = bin.norm_sqr() * norm;
        let one_sided = if k == 0 || k == half { p } else { p * two };
        frequencies.push(T::from_f64(k as f64 * df).unwrap());
        power.push(one_sided);
    }
    Ok(SpectrumData {
        frequencies,
        power,
        window: WindowMeta {
            start_time: 0.0,
            duration: n as f64 / sample_rate,
            sample_rate,
            taper: "hann".into(),
        },
    })
}

/// Write a PSD as `freq_hz,power` CSV.
pub fn write_psd_csv<T: Real, W: Write>(spec: &SpectrumData<T>, mut w: W) -> io::Result<()> {
    writeln!(w, "freq_hz,power")?;
    for (f, p) in spec.frequencies.iter().zip(&spec.power) {
        writeln!(w, "{f},{p}")?;
    }
    Ok(())
}

/// Band-power attenuation in dB between a raw and a filtered spectrum.
///
/// Positive means the filtered spectrum carries less power in the band
/// `[f - bandwidth/2, f + bandwidth/2]`.
pub fn attenuation_at<T: Real>(
    raw: &SpectrumData<T>,
    filtered: &SpectrumData<T>,
    f: f64,
    bandwidth: f64,
) -> Result<T, SpectralError> {
    if raw.frequencies.len() != filtered.frequencies.len()
        || raw
            .frequencies
            .iter()
            .zip(&filtered.frequencies)
            .any(|(a, b)| a != b)
    {
        return Err(SpectralError::GridMismatch);
    }
    let f_lo = f - bandwidth / 2.0;
    let f_hi = f + bandwidth / 2.0;
    let mut raw_power = T::zero();
    let mut filtered_power = T::zero();
    let mut bins = 0usize;
    for (i, freq) in raw.frequencies.iter().enumerate() {
        let fz = freq.to_f64().unwrap();
        if fz >= f_lo && fz <= f_hi {
            raw_power = raw_power + raw.power[i];
            filtered_power = filtered_power + filtered.power[i];
            bins += 1;
        }
    }
    if bins == 0 {
        return Err(SpectralError::EmptyBand { f_lo, f_hi });
    }
    Ok(T::from_f64(10.0).unwrap() * (raw_power / filtered_power).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn feedforward_magnitude_identity_points() {
        assert!(h_feedforward(0.0f64, 0.01).norm() < 1e-15);
        // ωτ = π → |H| = 2
        assert_relative_eq!(
            h_feedforward(PI / 0.01, 0.01).norm(),
            2.0,
            max_relative = 1e-12
        );
        // ωτ = π/2 → |H| = √2
        assert_relative_eq!(
            h_feedforward(PI / 2.0 / 0.01, 0.01).norm(),
            2.0f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn feedback_comb_examples() {
        let tau = 0.01f64;
        // Numerator zero at ωτ = 2π, denominator 1-ρ ≠ 0.
        assert!(h_feedback(TAU / tau, tau, 0.6).norm() < 1e-12);
        // ωτ = π, ρ = 0.6 → |1+1|/|1+0.6| = 1.25
        assert_relative_eq!(
            h_feedback(PI / tau, tau, 0.6).norm(),
            1.25,
            max_relative = 1e-12
        );
    }

    #[test]
    fn feedback_with_zero_rho_recovers_feedforward() {
        let tau = 0.007f64;
        for i in 1..50 {
            let omega = i as f64 * 37.0;
            let a = h_feedback(omega, tau, 1e-300);
            let b = h_feedforward(omega, tau);
            assert_relative_eq!(a.norm(), b.norm(), max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    fn defaults() -> FilterConfig<f64> {
        FilterConfig::default_50hz()
    }

    #[test]
    fn proposed_has_unit_dc_gain_under_tuning() {
        let cfg = defaults();
        let h = h_proposed(TAU * 1e-6, &cfg);
        assert!((h.norm() - 1.0).abs() < 1e-6, "|H| = {}", h.norm());
    }

    #[test]
    fn proposed_notches_the_base_frequency() {
        let cfg = defaults();
        let h = h_proposed(TAU * 50.0, &cfg);
        assert!(h.norm() <= 1e-9, "|H(50 Hz)| = {}", h.norm());
    }

    #[test]
    fn proposed_removable_singularity_at_500hz() {
        let cfg = defaults();
        let h = h_proposed(TAU * 500.0, &cfg);
        assert!((h.norm() - 1.0).abs() <= 1e-3, "|H(500 Hz)| = {}", h.norm());
        // Cross-check against nearby regular points.
        for f in [499.99, 500.01] {
            let href = h_proposed(TAU * f, &cfg);
            assert!((href.norm() - h.norm()).abs() < 1e-2);
        }
    }

    #[test]
    fn proposed_zero_pattern_skips_multiples_of_the_delay_ratio() {
        let cfg = defaults();
        for k in 1..=9 {
            let h = h_proposed(TAU * 50.0 * k as f64, &cfg);
            assert!(h.norm() <= 1e-9, "|H({} Hz)| = {}", 50 * k, h.norm());
        }
        let h10 = h_proposed(TAU * 500.0, &cfg);
        assert!(h10.norm() > 0.5);
    }

    #[test]
    fn degenerate_cascade_cancels_exactly() {
        let mut cfg = defaults();
        cfg.tau2 = cfg.tau1;
        cfg.rho2 = cfg.rho1;
        for i in 1..200 {
            let h = h_proposed(i as f64 * 13.7, &cfg);
            assert_relative_eq!(h.norm(), 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn bode_table_endpoints_notch_and_finiteness() {
        let cfg = defaults();
        let rows = bode_table(&cfg, 1.0, 5000.0, 64).unwrap();
        assert_eq!(rows.first().unwrap().frequency, 1.0);
        assert_eq!(rows.last().unwrap().frequency, 5000.0);
        assert!(rows.iter().all(|r| r.magnitude_db().is_finite()));

        // The minimum over [45, 55] Hz sits within one grid step of 50 Hz.
        let in_band: Vec<_> = rows
            .iter()
            .filter(|r| r.frequency >= 45.0 && r.frequency <= 55.0)
            .collect();
        let min = in_band
            .iter()
            .min_by(|a, b| a.magnitude.partial_cmp(&b.magnitude).unwrap())
            .unwrap();
        let step = (5000.0f64 / 1.0).log10() / (rows.len() as f64 - 1.0);
        let grid_ratio = 10f64.powf(step);
        assert!(min.frequency / 50.0 < grid_ratio && 50.0 / min.frequency < grid_ratio);

        // Exact multiples of 500 Hz stay finite.
        let row_500 = bode_table(&cfg, 500.0, 1000.0, 1).unwrap();
        assert!(row_500.iter().all(|r| r.magnitude.is_finite()));
    }

    #[test]
    fn bode_rejects_bad_range() {
        let cfg = defaults();
        assert!(bode_table(&cfg, 10.0, 1.0, 8).is_err());
        assert!(bode_table(&cfg, 0.0, 1.0, 8).is_err());
    }

    #[test]
    fn zoh_reconstruction_examples() {
        let region = PixelRect::new(0, 0, 1, 1);
        let zeros = reconstruct_zoh::<f64>(&[], region, 1000.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(zeros.len(), 1000);
        assert!(zeros.iter().all(|&v| v == 0.0));

        let one = vec![Event {
            t: 0.5f64,
            x: 0,
            y: 0,
            polarity: 1,
        }];
        let sig = reconstruct_zoh(&one, region, 1000.0, 0.0, 1.0, 1.0).unwrap();
        assert!(sig[..500].iter().all(|&v| v == 0.0));
        assert!(sig[500..].iter().all(|&v| v == 1.0));

        // Alternating ±1 every 5 ms → 10 ms square wave.
        let mut alternating = Vec::new();
        let mut polarity = 1i8;
        let mut t = 0.005f64;
        while t < 0.1 {
            alternating.push(Event {
                t,
                x: 0,
                y: 0,
                polarity,
            });
            polarity = -polarity;
            t += 0.005;
        }
        let sq = reconstruct_zoh(&alternating, region, 1000.0, 0.0, 0.1, 1.0).unwrap();
        for (i, &v) in sq.iter().enumerate() {
            if i % 5 == 0 {
                // Event times accumulate float error, so samples that land
                // exactly on a toggle may fall on either side of it.
                continue;
            }
            let expect = if (i / 5) % 2 == 1 { 1.0 } else { 0.0 };
            assert_eq!(v, expect, "sample {i}");
        }
    }

    #[test]
    fn zoh_rejects_empty_region() {
        let region = PixelRect::new(0, 0, 0, 3);
        assert!(matches!(
            reconstruct_zoh::<f64>(&[], region, 1000.0, 0.0, 1.0, 1.0),
            Err(SpectralError::EmptyRegion)
        ));
    }

    #[test]
    fn psd_peak_at_sinusoid_frequency() {
        let rate = 1000.0;
        let n = 1000;
        let signal: Vec<f64> = (0..n)
            .map(|i| (TAU * 100.0 * i as f64 / rate).sin())
            .collect();
        let spec = psd(&signal, rate).unwrap();
        let peak = spec
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let duration = n as f64 / rate;
        assert!((spec.frequencies[peak] - 100.0).abs() <= 1.0 / duration + 1e-9);
    }

    #[test]
    fn psd_of_constant_is_numerically_zero() {
        let signal = vec![3.25f64; 256];
        let spec = psd(&signal, 1000.0).unwrap();
        assert!(spec.power.iter().all(|&p| p <= 1e-12 * 3.25 * 3.25));
    }

    #[test]
    fn psd_rejects_short_signal() {
        assert!(matches!(
            psd(&[0.0f64; 8], 100.0),
            Err(SpectralError::SignalTooShort { len: 8 })
        ));
    }

    #[test]
    fn attenuation_examples() {
        let rate = 1000.0;
        let signal: Vec<f64> = (0..512)
            .map(|i| (TAU * 100.0 * i as f64 / rate).sin())
            .collect();
        let spec = psd(&signal, rate).unwrap();
        let zero = attenuation_at(&spec, &spec, 100.0, 4.0).unwrap();
        assert_relative_eq!(zero, 0.0, epsilon = 1e-12);

        let mut hundredth = spec.clone();
        for p in &mut hundredth.power {
            *p /= 100.0;
        }
        let twenty = attenuation_at(&spec, &hundredth, 100.0, 4.0).unwrap();
        assert_relative_eq!(twenty, 20.0, max_relative = 1e-12);

        assert!(matches!(
            attenuation_at(&spec, &spec, 100.0, 1e-6),
            Err(SpectralError::EmptyBand { .. })
        ));
    }

    #[test]
    fn csv_headers() {
        let cfg = defaults();
        let rows = bode_table(&cfg, 1.0, 10.0, 4).unwrap();
        let mut buf = Vec::new();
        write_bode_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("freq_hz,mag_db,phase_deg\n"));

        let spec = psd(&vec![0.0f64; 32], 100.0).unwrap();
        let mut buf = Vec::new();
        write_psd_csv(&spec, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("freq_hz,power\n"));
    }
}
