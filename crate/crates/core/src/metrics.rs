//! Evaluation quantities: SNR (foreground/flicker event-count ratio),
//! relative SNR improvement, and per-pixel event-rate heat maps.

use std::io::{self, Write};

use thiserror::Error;

use crate::event::{Event, Label, LabeledEvent, PixelRect, SensorGeometry};
use crate::Real;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("snr undefined: flicker count is zero")]
    UndefinedSnr,
    #[error("window duration must be > 0, got {0}")]
    BadWindow(f64),
}

/// Event counts and their ratio over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrReport<T> {
    pub foreground_count: u64,
    pub flicker_count: u64,
    /// foreground/flicker; undefined when no flicker events were counted.
    pub snr: Option<T>,
    /// (t_start, t_end), seconds.
    pub window: (f64, f64),
}

impl<T: Real> SnrReport<T> {
    /// Build a report from raw counts; SNR is undefined when no flicker
    /// events were seen.
    pub fn from_counts(foreground: u64, flicker: u64, window: (f64, f64)) -> Self {
        let snr =
            (flicker > 0).then(|| T::from_u64(foreground).unwrap() / T::from_u64(flicker).unwrap());
        Self {
            foreground_count: foreground,
            flicker_count: flicker,
            snr,
            window,
        }
    }

    /// Single-line key-value record.
    pub fn to_record(&self) -> String {
        let snr = match self.snr {
            Some(v) => format!("{v}"),
            None => "undefined".into(),
        };
        format!(
            "{{\"foreground_count\": {}, \"flicker_count\": {}, \"snr\": \"{}\", \"t_start\": {}, \"t_end\": {}}}",
            self.foreground_count, self.flicker_count, snr, self.window.0, self.window.1
        )
    }
}

#[inline]
fn in_window<T: Real>(t: T, window: (f64, f64)) -> bool {
    let t = t.to_f64().unwrap();
    t >= window.0 && t < window.1
}

/// SNR from ground-truth labels.
pub fn snr_labeled<T: Real>(events: &[LabeledEvent<T>], window: (f64, f64)) -> SnrReport<T> {
    let mut foreground = 0u64;
    let mut flicker = 0u64;
    for ev in events {
        if in_window(ev.event.t, window) {
            match ev.label {
                Label::Flicker => flicker += 1,
                Label::Foreground => foreground += 1,
            }
        }
    }
    SnrReport::from_counts(foreground, flicker, window)
}

/// SNR by region membership: events inside the flicker-region mask count as
/// flicker, everything else as foreground.
pub fn snr_masked<T: Real>(
    events: &[Event<T>],
    flicker_region: PixelRect,
    window: (f64, f64),
) -> SnrReport<T> {
    let mut foreground = 0u64;
    let mut flicker = 0u64;
    for ev in events {
        if in_window(ev.t, window) {
            if flicker_region.contains(ev.x, ev.y) {
                flicker += 1;
            } else {
                foreground += 1;
            }
        }
    }
    SnrReport::from_counts(foreground, flicker, window)
}

/// Relative improvement (filtered - raw)/raw of the SNR.
pub fn snr_improvement<T: Real>(
    raw: &SnrReport<T>,
    filtered: &SnrReport<T>,
) -> Result<T, MetricsError> {
    let (Some(r), Some(f)) = (raw.snr, filtered.snr) else {
        return Err(MetricsError::UndefinedSnr);
    };
    Ok((f - r) / r)
}

/// Per-pixel event rate over a fixed accumulation window.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMap<T> {
    pub width: u16,
    pub height: u16,
    /// Row-major events/second.
    pub rates: Vec<T>,
    /// Window duration, seconds.
    pub duration: f64,
}

impl<T: Real> RateMap<T> {
    #[inline]
    pub fn at(&self, x: u16, y: u16) -> T {
        self.rates[y as usize * self.width as usize + x as usize]
    }

    pub fn max(&self) -> T {
        self.rates.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    /// Pixel with the highest rate (first in row-major order on ties).
    pub fn argmax(&self) -> (u16, u16) {
        let mut best = 0usize;
        for (i, r) in self.rates.iter().enumerate() {
            if *r > self.rates[best] {
                best = i;
            }
        }
        (
            (best % self.width as usize) as u16,
            (best / self.width as usize) as u16,
        )
    }

    /// Row-major CSV, one row of the sensor per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| format!("{}", self.at(x, y)))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// 8-bit binary PGM with rates scaled linearly by the map maximum.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "P5")?;
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "255")?;
        let max = self.max().to_f64().unwrap();
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let bytes: Vec<u8> = self
            .rates
            .iter()
            .map(|r| (r.to_f64().unwrap() * scale).round().clamp(0.0, 255.0) as u8)
            .collect();
        w.write_all(&bytes)
    }
}

/// Accumulate events over `[t_start, t_start + duration)` into a rate map.
pub fn rate_map<T: Real>(
    events: &[Event<T>],
    geometry: SensorGeometry,
    t_start: f64,
    duration: f64,
) -> Result<RateMap<T>, MetricsError> {
    if !(duration > 0.0) {
        return Err(MetricsError::BadWindow(duration));
    }
    let mut counts = vec![0u64; geometry.num_pixels()];
    for ev in events {
        if in_window(ev.t, (t_start, t_start + duration)) {
            counts[ev.y as usize * geometry.width as usize + ev.x as usize] += 1;
        }
    }
    let d = T::from_f64(duration).unwrap();
    let rates = counts
        .into_iter()
        .map(|c| T::from_u64(c).unwrap() / d)
        .collect();
    Ok(RateMap {
        width: geometry.width,
        height: geometry.height,
        rates,
        duration,
    })
}
