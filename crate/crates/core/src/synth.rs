//! Labeled synthetic event streams: a harmonically rich flickering region
//! plus a moving foreground bar.
//!
//! The per-pixel log intensity is composed as
//! `L(p, t) = dc + flicker(p, t) + foreground(p, t)` where the flicker term
//! is a Fourier series over harmonics of the supply frequency, restricted to
//! a rectangular region. Events are generated by level crossing against a
//! per-pixel reference on a `contrast` lattice, with crossing times linearly
//! interpolated inside each simulation step.

use std::collections::HashMap;
use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::event::{Event, Label, LabeledEvent, PixelRect, SensorGeometry};
use crate::Real;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One Fourier component of the flicker waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic<T> {
    /// Harmonic index of the supply frequency.
    pub k: u32,
    /// Cosine coefficient, log-intensity units.
    pub a: T,
    /// Sine coefficient, log-intensity units.
    pub b: T,
}

/// Fourier-series flicker confined to a pixel rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct FlickerModel<T> {
    /// Supply frequency in Hz (e.g. 50).
    pub supply_frequency: T,
    pub harmonics: Vec<Harmonic<T>>,
    pub region: PixelRect,
    pub dc_level: T,
}

impl<T: Real> FlickerModel<T> {
    /// Region-wide flicker value at time t (seconds).
    pub fn value(&self, t: f64) -> T {
        let omega0 = std::f64::consts::TAU * self.supply_frequency.to_f64().unwrap();
        let mut sum = self.dc_level;
        for h in &self.harmonics {
            let phase = omega0 * h.k as f64 * t;
            sum = sum
                + h.a * T::from_f64(phase.cos()).unwrap()
                + h.b * T::from_f64(phase.sin()).unwrap();
        }
        sum
    }

    pub fn highest_frequency(&self) -> f64 {
        let f0 = self.supply_frequency.to_f64().unwrap();
        self.harmonics.iter().map(|h| h.k).max().unwrap_or(0) as f64 * f0
    }
}

/// A rectangular object translating at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForegroundModel<T> {
    pub width: u16,
    pub height: u16,
    /// Top-left corner position at t = 0, pixels (may start off-frame).
    pub start: (f64, f64),
    /// Pixels per second.
    pub velocity: (f64, f64),
    /// Log-intensity step at the object boundary.
    pub edge_contrast: T,
}

impl<T: Real> ForegroundModel<T> {
    fn corner_at(&self, t: f64) -> (f64, f64) {
        (
            self.start.0 + self.velocity.0 * t,
            self.start.1 + self.velocity.1 * t,
        )
    }

    pub fn covers(&self, x: u16, y: u16, t: f64) -> bool {
        let (cx, cy) = self.corner_at(t);
        let (fx, fy) = (x as f64, y as f64);
        fx >= cx && fx < cx + self.width as f64 && fy >= cy && fy < cy + self.height as f64
    }

    /// Pixels covered at time t, clipped to the geometry.
    fn covered_pixels(&self, geometry: SensorGeometry, t: f64) -> Vec<(u16, u16)> {
        let (cx, cy) = self.corner_at(t);
        let x_lo = cx.ceil().max(0.0) as i64;
        let y_lo = cy.ceil().max(0.0) as i64;
        let x_hi = ((cx + self.width as f64).ceil() as i64).min(geometry.width as i64);
        let y_hi = ((cy + self.height as f64).ceil() as i64).min(geometry.height as i64);
        let mut pixels = Vec::new();
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                if self.covers(x as u16, y as u16, t) {
                    pixels.push((x as u16, y as u16));
                }
            }
        }
        pixels
    }
}

/// Full description of a synthetic recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene<T> {
    pub geometry: SensorGeometry,
    /// Seconds.
    pub duration: f64,
    pub flicker: FlickerModel<T>,
    pub foreground: Option<ForegroundModel<T>>,
    /// Contrast threshold: log-intensity per event.
    pub contrast: T,
    /// Internal sampling rate, Hz.
    pub simulation_rate: f64,
    pub rng_seed: u64,
    /// Optional uniform random noise events per second per pixel; 0 = off.
    pub noise_rate: f64,
}

impl<T: Real> SyntheticScene<T> {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidScene(msg));
        if self.duration < 0.0 || !self.duration.is_finite() {
            return bad(format!(
                "duration {} must be finite and >= 0",
                self.duration
            ));
        }
        if !(self.contrast > T::zero()) {
            return bad("contrast must be > 0".into());
        }
        if !(self.simulation_rate > 0.0) {
            return bad("simulation rate must be > 0".into());
        }
        let r = &self.flicker.region;
        if r.x as u32 + r.width as u32 > self.geometry.width as u32
            || r.y as u32 + r.height as u32 > self.geometry.height as u32
        {
            return bad("flicker region exceeds sensor geometry".into());
        }
        let f_max = self.flicker.highest_frequency();
        if f_max > 0.0 && self.simulation_rate < 20.0 * f_max {
            return bad(format!(
                "simulation rate {} Hz below 20x highest harmonic {} Hz",
                self.simulation_rate, f_max
            ));
        }
        if self.noise_rate < 0.0 {
            return bad("noise rate must be >= 0".into());
        }
        if let Some(fg) = &self.foreground {
            if !fg.velocity.0.is_finite() || !fg.velocity.1.is_finite() {
                return bad("foreground velocity must be finite".into());
            }
            if self.duration > 0.0 && !self.foreground_intersects_frame() {
                return bad("foreground never intersects the frame".into());
            }
        }
        Ok(())
    }

    fn foreground_intersects_frame(&self) -> bool {
        let Some(fg) = &self.foreground else {
            return false;
        };
        let steps = 200;
        (0..=steps).any(|i| {
            let t = self.duration * i as f64 / steps as f64;
            let (cx, cy) = fg.corner_at(t);
            cx + fg.width as f64 > 0.0
                && cx < self.geometry.width as f64
                && cy + fg.height as f64 > 0.0
                && cy < self.geometry.height as f64
        })
    }

    /// Log intensity of pixel (x, y) at time t.
    pub fn log_intensity(&self, x: u16, y: u16, t: f64) -> T {
        let mut level = T::zero();
        if self.flicker.region.contains(x, y) {
            level = level + self.flicker.value(t);
        }
        if let Some(fg) = &self.foreground {
            if fg.covers(x, y, t) {
                level = level + fg.edge_contrast;
            }
        }
        level
    }

    fn label_at(&self, x: u16, y: u16, t: f64) -> Label {
        let covered = self
            .foreground
            .as_ref()
            .is_some_and(|fg| fg.covers(x, y, t));
        if self.flicker.region.contains(x, y) && !covered {
            Label::Flicker
        } else {
            Label::Foreground
        }
    }
}

/// The desk-scale scene used throughout the evaluation tooling: a 50 Hz
/// supply flickering mostly at 100 Hz inside a central block, crossed by a
/// small bar.
pub fn default_scene<T: Real>(
    geometry: SensorGeometry,
    duration: f64,
    seed: u64,
) -> SyntheticScene<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rw = geometry.width / 4;
    let rh = geometry.height / 4;
    let region = PixelRect::new(
        (geometry.width - rw) / 2,
        (geometry.height - rh) / 2,
        rw,
        rh,
    );
    let c = |v: f64| T::from_f64(v).unwrap();
    let flicker = FlickerModel {
        supply_frequency: c(50.0),
        harmonics: vec![
            Harmonic {
                k: 1,
                a: T::zero(),
                b: c(0.125),
            },
            Harmonic {
                k: 2,
                a: T::zero(),
                b: c(0.5),
            },
            Harmonic {
                k: 4,
                a: T::zero(),
                b: c(0.05),
            },
            Harmonic {
                k: 6,
                a: T::zero(),
                b: c(0.05),
            },
        ],
        region,
        dc_level: T::zero(),
    };
    let bar_w = 6u16;
    let bar_h = 4u16;
    let max_y = geometry.height.saturating_sub(bar_h).max(1);
    let start_y = rng.gen_range(0..max_y) as f64;
    let duration_for_speed = if duration > 0.0 { duration } else { 1.0 };
    let foreground = ForegroundModel {
        width: bar_w,
        height: bar_h,
        start: (-(bar_w as f64), start_y),
        velocity: (
            (geometry.width as f64 + bar_w as f64) / duration_for_speed,
            0.0,
        ),
        edge_contrast: c(0.5),
    };
    SyntheticScene {
        geometry,
        duration,
        flicker,
        foreground: Some(foreground),
        contrast: c(0.1),
        simulation_rate: 10_000.0,
        rng_seed: seed,
        noise_rate: 0.0,
    }
}

/// Generate the labeled event stream of a scene, sorted by (t, y, x).
///
/// Pure function of the scene (including its seed).
pub fn generate<T: Real>(scene: &SyntheticScene<T>) -> Result<Vec<LabeledEvent<T>>, SynthError> {
    scene.validate()?;
    let n_steps = (scene.duration * scene.simulation_rate).round() as usize;
    let dt = 1.0 / scene.simulation_rate;
    let c = scene.contrast;
    // Quantization cell per pixel: cell k spans [(k-1/2)c, (k+1/2)c).
    let mut cells: HashMap<(u16, u16), i64> = HashMap::new();
    let mut out: Vec<LabeledEvent<T>> = Vec::new();
    let mut fg_scratch: HashSet<(u16, u16)> = HashSet::new();
    let half = T::from_f64(0.5).unwrap();
    let cell_of = move |l: T| -> i64 { (l / c + half).floor().to_i64().unwrap() };

    for step in 0..n_steps {
        let t0 = step as f64 * dt;
        let t1 = (step + 1) as f64 * dt;

        fg_scratch.clear();
        if let Some(fg) = &scene.foreground {
            for p in fg.covered_pixels(scene.geometry, t0) {
                if !scene.flicker.region.contains(p.0, p.1) {
                    fg_scratch.insert(p);
                }
            }
            for p in fg.covered_pixels(scene.geometry, t1) {
                if !scene.flicker.region.contains(p.0, p.1) {
                    fg_scratch.insert(p);
                }
            }
        }

        let mut emit = |x: u16, y: u16, l0: T, l1: T, cell: &mut i64| {
            let k1 = cell_of(l1);
            while k1 > *cell {
                // Upward crossing of the boundary between cell k and k+1.
                let boundary = (T::from_i64(*cell).unwrap() + half) * c;
                let frac = ((boundary - l0) / (l1 - l0))
                    .to_f64()
                    .unwrap()
                    .clamp(0.0, 1.0);
                let t = t0 + frac * dt;
                out.push(LabeledEvent {
                    event: Event::new(T::from_f64(t).unwrap(), x, y, 1),
                    label: scene.label_at(x, y, t),
                });
                *cell += 1;
            }
            while k1 < *cell {
                let boundary = (T::from_i64(*cell).unwrap() - half) * c;
                let frac = ((l0 - boundary) / (l0 - l1))
                    .to_f64()
                    .unwrap()
                    .clamp(0.0, 1.0);
                let t = t0 + frac * dt;
                out.push(LabeledEvent {
                    event: Event::new(T::from_f64(t).unwrap(), x, y, -1),
                    label: scene.label_at(x, y, t),
                });
                *cell -= 1;
            }
        };

        // Flicker-region pixels share the waveform; foreground coverage
        // differs per pixel. Each pixel quantizes its log intensity onto
        // a fixed lattice of cells of width `contrast`, with boundaries at
        // half-integer multiples so a zero-mean signal straddles cell 0,
        // and emits one event per boundary crossing.
        for (x, y) in scene.flicker.region.pixels() {
            let l0 = scene.log_intensity(x, y, t0);
            let l1 = scene.log_intensity(x, y, t1);
            let cell = cells.entry((x, y)).or_insert_with(|| cell_of(l0));
            emit(x, y, l0, l1, cell);
        }
        for &(x, y) in &fg_scratch {
            let l0 = scene.log_intensity(x, y, t0);
            let l1 = scene.log_intensity(x, y, t1);
            let cell = cells.entry((x, y)).or_insert_with(|| cell_of(l0));
            emit(x, y, l0, l1, cell);
        }
    }

    if scene.noise_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
        let count = (scene.noise_rate * scene.geometry.num_pixels() as f64 * scene.duration).round()
            as usize;
        for _ in 0..count {
            let t = rng.gen_range(0.0..scene.duration);
            let x = rng.gen_range(0..scene.geometry.width);
            let y = rng.gen_range(0..scene.geometry.height);
            let polarity = if rng.gen_bool(0.5) { 1 } else { -1 };
            out.push(LabeledEvent {
                event: Event::new(T::from_f64(t).unwrap(), x, y, polarity),
                label: scene.label_at(x, y, t),
            });
        }
    }

    out.sort_by(|a, b| {
        a.event
            .t
            .partial_cmp(&b.event.t)
            .unwrap()
            .then(a.event.y.cmp(&b.event.y))
            .then(a.event.x.cmp(&b.event.x))
    });
    Ok(out)
}

/// Parse a flat key-value scene description.
///
/// Recognized keys (one `key = value` per line, `#` comments):
/// `width`, `height`, `duration`, `contrast`, `simulation_rate`, `rng_seed`,
/// `noise_rate`, `supply_frequency`, `dc_level`, `flicker_region = x y w h`,
/// `harmonic = k a b` (repeatable), `foreground = w h x0 y0 vx vy contrast`.
pub fn parse_scene<T: Real>(text: &str) -> Result<SyntheticScene<T>, SynthError> {
    let mut width: Option<u16> = None;
    let mut height: Option<u16> = None;
    let mut duration = 1.0f64;
    let mut contrast = T::from_f64(0.1).unwrap();
    let mut simulation_rate = 10_000.0f64;
    let mut rng_seed = 0u64;
    let mut noise_rate = 0.0f64;
    let mut supply_frequency = T::from_f64(50.0).unwrap();
    let mut dc_level = T::zero();
    let mut region: Option<PixelRect> = None;
    let mut harmonics: Vec<Harmonic<T>> = Vec::new();
    let mut foreground: Option<ForegroundModel<T>> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SynthError::Parse {
            line: lineno,
            reason: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let err = |reason: String| SynthError::Parse {
            line: lineno,
            reason,
        };
        let fields: Vec<&str> = value.split_whitespace().collect();
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(format!("invalid number {s:?}")))
        };
        let parse_t = |s: &str| {
            s.parse::<T>()
                .map_err(|_| err(format!("invalid number {s:?}")))
        };
        match key {
            "width" => {
                width = Some(
                    value
                        .parse()
                        .map_err(|_| err(format!("invalid width {value:?}")))?,
                )
            }
            "height" => {
                height = Some(
                    value
                        .parse()
                        .map_err(|_| err(format!("invalid height {value:?}")))?,
                )
            }
            "duration" => duration = parse_f64(value)?,
            "contrast" => contrast = parse_t(value)?,
            "simulation_rate" => simulation_rate = parse_f64(value)?,
            "rng_seed" => {
                rng_seed = value
                    .parse()
                    .map_err(|_| err(format!("invalid seed {value:?}")))?
            }
            "noise_rate" => noise_rate = parse_f64(value)?,
            "supply_frequency" => supply_frequency = parse_t(value)?,
            "dc_level" => dc_level = parse_t(value)?,
            "flicker_region" => {
                if fields.len() != 4 {
                    return Err(err("flicker_region needs `x y w h`".into()));
                }
                let v: Result<Vec<u16>, _> = fields.iter().map(|s| s.parse()).collect();
                let v = v.map_err(|_| err("invalid flicker_region values".into()))?;
                region = Some(PixelRect::new(v[0], v[1], v[2], v[3]));
            }
            "harmonic" => {
                if fields.len() != 3 {
                    return Err(err("harmonic needs `k a b`".into()));
                }
                harmonics.push(Harmonic {
                    k: fields[0]
                        .parse()
                        .map_err(|_| err("invalid harmonic index".into()))?,
                    a: parse_t(fields[1])?,
                    b: parse_t(fields[2])?,
                });
            }
            "foreground" => {
                if fields.len() != 7 {
                    return Err(err("foreground needs `w h x0 y0 vx vy contrast`".into()));
                }
                foreground = Some(ForegroundModel {
                    width: fields[0]
                        .parse()
                        .map_err(|_| err("invalid foreground width".into()))?,
                    height: fields[1]
                        .parse()
                        .map_err(|_| err("invalid foreground height".into()))?,
                    start: (parse_f64(fields[2])?, parse_f64(fields[3])?),
                    velocity: (parse_f64(fields[4])?, parse_f64(fields[5])?),
                    edge_contrast: parse_t(fields[6])?,
                });
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }

    let width = width.ok_or(SynthError::Parse {
        line: 0,
        reason: "missing `width`".into(),
    })?;
    let height = height.ok_or(SynthError::Parse {
        line: 0,
        reason: "missing `height`".into(),
    })?;
    let geometry =
        SensorGeometry::new(width, height).map_err(|e| SynthError::InvalidScene(e.to_string()))?;
    let scene = SyntheticScene {
        geometry,
        duration,
        flicker: FlickerModel {
            supply_frequency,
            harmonics,
            region: region.unwrap_or(PixelRect::new(0, 0, width, height)),
            dc_level,
        },
        foreground,
        contrast,
        simulation_rate,
        rng_seed,
        noise_rate,
    };
    scene.validate()?;
    Ok(scene)
}

/// Serialize a scene in the format accepted by [`parse_scene`].
pub fn write_scene<T: Real>(scene: &SyntheticScene<T>) -> String {
    let mut s = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(s, "width = {}", scene.geometry.width);
    let _ = writeln!(s, "height = {}", scene.geometry.height);
    let _ = writeln!(s, "duration = {}", scene.duration);
    let _ = writeln!(s, "contrast = {}", scene.contrast);
    let _ = writeln!(s, "simulation_rate = {}", scene.simulation_rate);
    let _ = writeln!(s, "rng_seed = {}", scene.rng_seed);
    let _ = writeln!(s, "noise_rate = {}", scene.noise_rate);
    let _ = writeln!(s, "supply_frequency = {}", scene.flicker.supply_frequency);
    let _ = writeln!(s, "dc_level = {}", scene.flicker.dc_level);
    let r = scene.flicker.region;
    let _ = writeln!(
        s,
        "flicker_region = {} {} {} {}",
        r.x, r.y, r.width, r.height
    );
    for h in &scene.flicker.harmonics {
        let _ = writeln!(s, "harmonic = {} {} {}", h.k, h.a, h.b);
    }
    if let Some(fg) = &scene.foreground {
        let _ = writeln!(
            s,
            "foreground = {} {} {} {} {} {} {}",
            fg.width,
            fg.height,
            fg.start.0,
            fg.start.1,
            fg.velocity.0,
            fg.velocity.1,
            fg.edge_contrast
        );
    }
    s
}
