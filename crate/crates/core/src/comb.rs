//! Event-domain realization of the comb-filter cascade.
//!
//! Each pixel integrates its events into a zero-order-hold staircase x(t).
//! Every step of x triggers the causal recursion
//!
//! ```text
//! dy(t) = dx(t) - dx(t-τ₁) - ρ₂·dx(t-τ₂) + ρ₂·dx(t-(τ₁+τ₂))
//!       + ρ₁·dy(t-τ₁) + dy(t-τ₂) - ρ₁·dy(t-(τ₁+τ₂))
//! ```
//!
//! realized by scheduling delayed copies of each step into three fixed-lag
//! FIFO queues (lags τ₂, τ₁, τ₁+τ₂). Insertions are time-monotone, so the
//! queues stay sorted and maturation is a 3-way merge. A threshold sampler
//! compares the filtered staircase y(t) against a moving reference and
//! regenerates an output event stream.
//!
//! The recursion is applied in one combined update rather than as two
//! cascaded comb stages: the 1/(1-e^{-sτ₂}) stage is only marginally stable
//! on its own, and the combined form keeps its pole cancelled exactly.
//!
//! Scheduling times are kept as integer nanosecond ticks. Delta chains that
//! must cancel (e.g. the τ₁ copy against ten chained τ₂ copies) land on the
//! same tick by integer arithmetic, which float accumulation would not
//! guarantee.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::collections::VecDeque;

use thiserror::Error;

use crate::event::{sort_stream, Event, SensorGeometry};
use crate::Real;

/// Internal clock resolution: 1 ns.
pub const TICKS_PER_SEC: f64 = 1e9;

#[inline]
pub(crate) fn secs_to_ticks(t: f64) -> i64 {
    (t * TICKS_PER_SEC).round() as i64
}

#[inline]
pub(crate) fn ticks_to_secs(ticks: i64) -> f64 {
    ticks as f64 / TICKS_PER_SEC
}

#[derive(Debug, Error)]
pub enum CombError {
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error("non-monotone time at pixel ({x}, {y}){}: t = {t} s precedes pixel state", match index { Some(i) => format!(", event index {i}"), None => String::new() })]
    NonMonotone {
        index: Option<usize>,
        x: u16,
        y: u16,
        t: f64,
    },
    #[error("event index {index}: pixel ({x}, {y}) outside geometry {w}x{h}")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        w: u16,
        h: u16,
    },
    #[error("grid step {grid_dt} s does not divide delay {tau} s")]
    GridMismatch { grid_dt: f64, tau: f64 },
}

/// All comb parameters.
///
/// `tau1 = 1/f₀` places notches at every harmonic of the base frequency;
/// `tau2 = tau1/10` and the tuning condition `τ₂(1-ρ₁) = τ₁(1-ρ₂)` cancel
/// the DC notch so the passband keeps unit gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig<T> {
    /// Base (notch) frequency in Hz.
    pub base_frequency: T,
    /// Long delay, seconds. Default 1/f₀.
    pub tau1: T,
    /// Short delay, seconds. Default tau1/10.
    pub tau2: T,
    /// Long-delay feedback gain in (0,1). Default 0.6.
    pub rho1: T,
    /// Short-delay feed-forward gain in (0,1). Default 1 - (1-rho1)/10.
    pub rho2: T,
    /// Contrast threshold: log-intensity step per input event. Default 1.0.
    pub contrast: T,
    /// Output sampler threshold. Default = contrast.
    pub sampler_threshold: T,
    /// Relative amplitude floor below which spawned deltas are discarded.
    pub prune_epsilon: T,
}

impl<T: Real> FilterConfig<T> {
    /// Build a config from the base frequency and ρ₁, applying the default
    /// tuning for the remaining parameters.
    pub fn new(base_frequency: T, rho1: T) -> Result<Self, CombError> {
        let one = T::one();
        let tau1 = one / base_frequency;
        let ten = T::from_f64(10.0).unwrap();
        let tau2 = tau1 / ten;
        // Tuning condition τ₂(1-ρ₁) = τ₁(1-ρ₂) solved for ρ₂.
        let rho2 = one - (tau2 / tau1) * (one - rho1);
        let cfg = Self {
            base_frequency,
            tau1,
            tau2,
            rho1,
            rho2,
            contrast: one,
            sampler_threshold: one,
            prune_epsilon: T::from_f64(1e-9).unwrap(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_50hz() -> Self {
        Self::new(T::from_f64(50.0).unwrap(), T::from_f64(0.6).unwrap()).unwrap()
    }

    pub fn with_contrast(mut self, contrast: T) -> Self {
        self.contrast = contrast;
        self.sampler_threshold = contrast;
        self
    }

    pub fn with_sampler_threshold(mut self, theta: T) -> Self {
        self.sampler_threshold = theta;
        self
    }

    pub fn with_prune_epsilon(mut self, eps: T) -> Self {
        self.prune_epsilon = eps;
        self
    }

    pub fn validate(&self) -> Result<(), CombError> {
        let zero = T::zero();
        let one = T::one();
        let bad = |msg: &str| Err(CombError::InvalidConfig(msg.into()));
        if !(self.base_frequency > zero) {
            return bad("base frequency must be > 0");
        }
        if !(self.rho1 > zero && self.rho1 < one) {
            return bad("rho1 must be in (0, 1)");
        }
        if !(self.rho2 > zero && self.rho2 < one) {
            return bad("rho2 must be in (0, 1)");
        }
        if !(self.tau1 > zero && self.tau2 > zero && self.tau2 < self.tau1) {
            return bad("delays must satisfy 0 < tau2 < tau1");
        }
        if !(self.contrast > zero) {
            return bad("contrast must be > 0");
        }
        if !(self.sampler_threshold > zero) {
            return bad("sampler threshold must be > 0");
        }
        if self.prune_epsilon < zero {
            return bad("prune epsilon must be >= 0");
        }
        Ok(())
    }

    /// Whether ρ₂ satisfies the unit-DC-gain tuning condition.
    pub fn is_tuned(&self) -> bool {
        let lhs = self.tau2 * (T::one() - self.rho1);
        let rhs = self.tau1 * (T::one() - self.rho2);
        let scale = lhs.abs().max(rhs.abs()).max(T::epsilon());
        (lhs - rhs).abs() <= T::from_f64(1e-12).unwrap() * scale
    }

    /// Default post-input drain horizon, seconds.
    pub fn default_drain(&self) -> T {
        T::from_f64(5.0).unwrap() * self.tau1
    }
}

/// Tick-domain delays for the three queues.
#[derive(Debug, Clone, Copy)]
struct DelayTicks {
    short: i64,    // τ₂
    long: i64,     // τ₁
    combined: i64, // τ₁+τ₂
}

impl DelayTicks {
    fn from_config<T: Real>(cfg: &FilterConfig<T>) -> Self {
        let tau1 = cfg.tau1.to_f64().unwrap();
        let tau2 = cfg.tau2.to_f64().unwrap();
        let short = secs_to_ticks(tau2);
        // Snap τ₁ onto an integer multiple of τ₂ when the config intends one,
        // so the pole-zero cancellation happens on exact ticks.
        let ratio = tau1 / tau2;
        let long = if (ratio - ratio.round()).abs() < 1e-9 * ratio {
            ratio.round() as i64 * short
        } else {
            secs_to_ticks(tau1)
        };
        Self {
            short,
            long,
            combined: long + short,
        }
    }
}

/// Run-time constants derived from a [`FilterConfig`].
#[derive(Debug, Clone, Copy)]
pub struct CombParams<T> {
    rho1: T,
    rho2: T,
    theta: T,
    prune_floor: T,
    delays: DelayTicks,
}

impl<T: Real> CombParams<T> {
    pub fn new(cfg: &FilterConfig<T>) -> Self {
        Self {
            rho1: cfg.rho1,
            rho2: cfg.rho2,
            theta: cfg.sampler_threshold,
            prune_floor: cfg.prune_epsilon * cfg.contrast,
            delays: DelayTicks::from_config(cfg),
        }
    }
}

/// A delayed copy of a past input or output step, waiting to mature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledDelta<T> {
    /// Maturation time in ticks.
    pub due: i64,
    /// Signed log-intensity step applied to y at maturation.
    pub amplitude: T,
    pub kind: DeltaKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaKind {
    /// Delayed copy of an input step (an x-term of the recursion).
    InputPath,
    /// Delayed copy of an output step (a y-term of the recursion).
    OutputPath,
}

/// One applied change of the filter output staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputChange<T> {
    pub ticks: i64,
    pub dy: T,
    pub y_now: T,
}

impl<T: Real> OutputChange<T> {
    pub fn time_secs(&self) -> f64 {
        ticks_to_secs(self.ticks)
    }
}

/// Per-pixel delay-line state and sampler reference.
#[derive(Debug, Clone)]
pub struct PixelFilterState<T> {
    queue_short: VecDeque<ScheduledDelta<T>>,
    queue_long: VecDeque<ScheduledDelta<T>>,
    queue_combined: VecDeque<ScheduledDelta<T>>,
    /// Current output staircase value.
    pub y_now: T,
    /// Sampler reference value.
    pub reference: T,
    /// Tick of the last processed change, or `i64::MIN` for a fresh state.
    pub last_update: i64,
}

impl<T: Real> Default for PixelFilterState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> PixelFilterState<T> {
    pub fn new() -> Self {
        Self {
            queue_short: VecDeque::new(),
            queue_long: VecDeque::new(),
            queue_combined: VecDeque::new(),
            y_now: T::zero(),
            reference: T::zero(),
            last_update: i64::MIN,
        }
    }

    pub fn pending_deltas(&self) -> usize {
        self.queue_short.len() + self.queue_long.len() + self.queue_combined.len()
    }

    fn next_due(&self) -> Option<i64> {
        let mut due = None;
        for q in [&self.queue_short, &self.queue_long, &self.queue_combined] {
            if let Some(front) = q.front() {
                due = Some(due.map_or(front.due, |d: i64| d.min(front.due)));
            }
        }
        due
    }

    /// Net amplitude of all deltas maturing exactly at `tick`.
    fn pop_due(&mut self, tick: i64) -> T {
        let mut net = T::zero();
        for q in [
            &mut self.queue_short,
            &mut self.queue_long,
            &mut self.queue_combined,
        ] {
            while q.front().is_some_and(|d| d.due == tick) {
                net = net + q.pop_front().unwrap().amplitude;
            }
        }
        net
    }

    fn schedule(
        &mut self,
        params: &CombParams<T>,
        origin: i64,
        kind: DeltaKind,
        amp: T,
        queue: Queue,
    ) {
        if amp == T::zero() || amp.abs() < params.prune_floor {
            return;
        }
        let (due, q) = match queue {
            Queue::Short => (origin + params.delays.short, &mut self.queue_short),
            Queue::Long => (origin + params.delays.long, &mut self.queue_long),
            Queue::Combined => (origin + params.delays.combined, &mut self.queue_combined),
        };
        debug_assert!(q.back().is_none_or(|d| d.due <= due));
        q.push_back(ScheduledDelta {
            due,
            amplitude: amp,
            kind,
        });
    }

    /// Spawn the delayed output-path copies of a realized output step dy.
    fn schedule_output_children(&mut self, params: &CombParams<T>, t: i64, dy: T) {
        self.schedule(
            params,
            t,
            DeltaKind::OutputPath,
            params.rho1 * dy,
            Queue::Long,
        );
        self.schedule(params, t, DeltaKind::OutputPath, dy, Queue::Short);
        self.schedule(
            params,
            t,
            DeltaKind::OutputPath,
            -(params.rho1 * dy),
            Queue::Combined,
        );
    }

    /// Pop and apply every scheduled delta due at or before `t` (ticks),
    /// merging the three queues in time order. Returns the applied changes.
    pub fn mature_until(&mut self, params: &CombParams<T>, t: i64) -> Vec<OutputChange<T>> {
        let mut changes = Vec::new();
        while let Some(due) = self.next_due() {
            if due > t {
                break;
            }
            let dy = self.pop_due(due);
            self.y_now = self.y_now + dy;
            self.last_update = self.last_update.max(due);
            self.schedule_output_children(params, due, dy);
            changes.push(OutputChange {
                ticks: due,
                dy,
                y_now: self.y_now,
            });
        }
        changes
    }

    /// Apply an input step dx at tick `t` and schedule its delayed copies.
    ///
    /// The caller must mature the state up to just before `t` first. Deltas
    /// maturing exactly at `t` are absorbed into the step, so the change is
    /// reported (and sampled) once per time point; the spawned children are
    /// identical either way since their amplitudes are linear in dy.
    pub fn apply_input_step(
        &mut self,
        params: &CombParams<T>,
        t: i64,
        dx: T,
    ) -> Result<OutputChange<T>, CombError> {
        if self.last_update != i64::MIN && t < self.last_update {
            return Err(CombError::NonMonotone {
                index: None,
                x: 0,
                y: 0,
                t: ticks_to_secs(t),
            });
        }
        debug_assert!(
            self.next_due().is_none_or(|due| due >= t),
            "mature before stepping"
        );

        // With no history the recursion reduces to dy = dx; coincident
        // matured copies contribute their amplitude directly.
        let dy = dx + self.pop_due(t);
        self.y_now = self.y_now + dy;
        self.last_update = t;

        self.schedule(params, t, DeltaKind::InputPath, -dx, Queue::Long);
        self.schedule(
            params,
            t,
            DeltaKind::InputPath,
            -(params.rho2 * dx),
            Queue::Short,
        );
        self.schedule(
            params,
            t,
            DeltaKind::InputPath,
            params.rho2 * dx,
            Queue::Combined,
        );
        self.schedule_output_children(params, t, dy);

        Ok(OutputChange {
            ticks: t,
            dy,
            y_now: self.y_now,
        })
    }

    /// Threshold sampler: emit output events while |y_now - ref| >= θ,
    /// stepping the reference by θ per emitted event.
    pub fn sample(
        &mut self,
        params: &CombParams<T>,
        ticks: i64,
        x: u16,
        y: u16,
        out: &mut Vec<Event<T>>,
    ) {
        let theta = params.theta;
        let t = T::from_f64(ticks_to_secs(ticks)).unwrap();
        while self.y_now - self.reference >= theta {
            self.reference = self.reference + theta;
            out.push(Event {
                t,
                x,
                y,
                polarity: 1,
            });
        }
        while self.reference - self.y_now >= theta {
            self.reference = self.reference - theta;
            out.push(Event {
                t,
                x,
                y,
                polarity: -1,
            });
        }
    }
}

enum Queue {
    Short,
    Long,
    Combined,
}

/// Per-pixel filter states over a sensor, created lazily on first event.
#[derive(Debug)]
pub struct FilterBank<T> {
    pub geometry: SensorGeometry,
    pub config: FilterConfig<T>,
    params: CombParams<T>,
    states: HashMap<(u16, u16), PixelFilterState<T>>,
    last_input_ticks: i64,
}

impl<T: Real> FilterBank<T> {
    pub fn new(geometry: SensorGeometry, config: FilterConfig<T>) -> Result<Self, CombError> {
        config.validate()?;
        Ok(Self {
            geometry,
            params: CombParams::new(&config),
            config,
            states: HashMap::new(),
            last_input_ticks: 0,
        })
    }

    pub fn params(&self) -> &CombParams<T> {
        &self.params
    }

    pub fn state(&self, x: u16, y: u16) -> Option<&PixelFilterState<T>> {
        self.states.get(&(x, y))
    }

    pub fn active_pixels(&self) -> usize {
        self.states.len()
    }

    /// Process one input event: mature the pixel up to its timestamp, apply
    /// the contrast step, and run the sampler at every change time.
    pub fn process_event(
        &mut self,
        index: usize,
        ev: &Event<T>,
        out: &mut Vec<Event<T>>,
    ) -> Result<(), CombError> {
        if !self.geometry.contains(ev.x, ev.y) {
            return Err(CombError::OutOfBounds {
                index,
                x: ev.x,
                y: ev.y,
                w: self.geometry.width,
                h: self.geometry.height,
            });
        }
        let ticks = secs_to_ticks(ev.t.to_f64().unwrap());
        let dx = if ev.polarity > 0 {
            self.config.contrast
        } else {
            -self.config.contrast
        };
        let state = match self.states.entry((ev.x, ev.y)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(PixelFilterState::new()),
        };
        if state.last_update != i64::MIN && ticks < state.last_update {
            return Err(CombError::NonMonotone {
                index: Some(index),
                x: ev.x,
                y: ev.y,
                t: ev.t.to_f64().unwrap(),
            });
        }
        // Mature strictly before the event time; coincident deltas merge
        // into the input step below so each time point is sampled once.
        for change in state.mature_until(&self.params, ticks - 1) {
            state.sample(&self.params, change.ticks, ev.x, ev.y, out);
        }
        state
            .apply_input_step(&self.params, ticks, dx)
            .map_err(|e| match e {
                CombError::NonMonotone { t, .. } => CombError::NonMonotone {
                    index: Some(index),
                    x: ev.x,
                    y: ev.y,
                    t,
                },
                other => other,
            })?;
        state.sample(&self.params, ticks, ev.x, ev.y, out);
        self.last_input_ticks = self.last_input_ticks.max(ticks);
        Ok(())
    }

    /// Mature every pixel up to `end_ticks` and sample the resulting changes.
    pub fn drain(&mut self, end_ticks: i64, out: &mut Vec<Event<T>>) {
        for (&(x, y), state) in self.states.iter_mut() {
            for change in state.mature_until(&self.params, end_ticks) {
                state.sample(&self.params, change.ticks, x, y, out);
            }
        }
    }

    pub fn last_input_ticks(&self) -> i64 {
        self.last_input_ticks
    }
}

/// Options for a full-stream filter run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Seconds to keep maturing after the last input event. `None` uses the
    /// config default of 5·τ₁.
    pub drain: Option<f64>,
    /// Number of pixel shards processed by independent workers.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            drain: None,
            workers: 1,
        }
    }
}

/// Filter a whole stream through a fresh [`FilterBank`].
///
/// Input must be nondecreasing in time per pixel (globally nondecreasing is
/// sufficient). Output is sorted by (t, y, x) with per-pixel emission order
/// preserved on ties.
pub fn filter_stream<T: Real>(
    events: &[Event<T>],
    geometry: SensorGeometry,
    config: &FilterConfig<T>,
) -> Result<Vec<Event<T>>, CombError> {
    filter_stream_with(events, geometry, config, RunOptions::default())
}

pub fn filter_stream_with<T: Real>(
    events: &[Event<T>],
    geometry: SensorGeometry,
    config: &FilterConfig<T>,
    options: RunOptions,
) -> Result<Vec<Event<T>>, CombError> {
    if options.workers > 1 {
        return filter_stream_sharded(events, geometry, config, options);
    }
    let mut bank = FilterBank::new(geometry, *config)?;
    let mut out = Vec::new();
    for (index, ev) in events.iter().enumerate() {
        bank.process_event(index, ev, &mut out)?;
    }
    if !events.is_empty() {
        let drain = options
            .drain
            .unwrap_or_else(|| config.default_drain().to_f64().unwrap());
        let end = bank.last_input_ticks() + secs_to_ticks(drain);
        bank.drain(end, &mut out);
    }
    sort_stream(&mut out);
    Ok(out)
}

/// Shard pixels across worker threads.
///
/// Each worker owns a disjoint pixel set and sees its pixels' events in the
/// original order; outputs are merged and re-sorted, so the result is
/// identical for any worker count.
fn filter_stream_sharded<T: Real>(
    events: &[Event<T>],
    geometry: SensorGeometry,
    config: &FilterConfig<T>,
    options: RunOptions,
) -> Result<Vec<Event<T>>, CombError> {
    let workers = options.workers.max(1);
    let width = geometry.width as usize;
    let mut shards: Vec<Vec<Event<T>>> = vec![Vec::new(); workers];
    for ev in events {
        let shard = (ev.y as usize * width + ev.x as usize) % workers;
        shards[shard].push(*ev);
    }
    let shard_options = RunOptions {
        drain: options.drain,
        workers: 1,
    };
    let results: Vec<Result<Vec<Event<T>>, CombError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| {
                scope.spawn(move || filter_stream_with(shard, geometry, config, shard_options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::new();
    for result in results {
        out.extend(result?);
    }
    sort_stream(&mut out);
    Ok(out)
}

/// Brute-force reference: evaluate the recursion on a uniform grid.
///
/// `grid_dt` must divide both delays exactly; events are snapped to the
/// nearest grid point. Returns y at every grid point up to `t_end`
/// inclusive. This is the equivalence oracle for the event-driven path and
/// shares none of its queue machinery.
pub fn dense_oracle<T: Real>(
    events: &[Event<T>],
    config: &FilterConfig<T>,
    grid_dt: f64,
    t_end: f64,
) -> Result<Vec<T>, CombError> {
    config.validate()?;
    let tau1 = config.tau1.to_f64().unwrap();
    let tau2 = config.tau2.to_f64().unwrap();
    let lag = |tau: f64| -> Result<usize, CombError> {
        let steps = tau / grid_dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(CombError::GridMismatch { grid_dt, tau });
        }
        Ok(steps.round() as usize)
    };
    let d1 = lag(tau1)?;
    let d2 = lag(tau2)?;
    let n = (t_end / grid_dt).round() as usize + 1;

    // Input staircase on the grid.
    let mut x = vec![T::zero(); n];
    for ev in events {
        let idx = (ev.t.to_f64().unwrap() / grid_dt).round() as usize;
        if idx < n {
            let dx = if ev.polarity > 0 {
                config.contrast
            } else {
                -config.contrast
            };
            x[idx] = x[idx] + dx;
        }
    }
    for i in 1..n {
        x[i] = x[i] + x[i - 1];
    }

    let at = |arr: &[T], i: usize, lag: usize| {
        if i >= lag {
            arr[i - lag]
        } else {
            T::zero()
        }
    };
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        y[i] = x[i] - at(&x, i, d1) - config.rho2 * at(&x, i, d2)
            + config.rho2 * at(&x, i, d1 + d2)
            + config.rho1 * at(&y, i, d1)
            + at(&y, i, d2)
            - config.rho1 * at(&y, i, d1 + d2);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn defaults() -> FilterConfig<f64> {
        FilterConfig::default_50hz()
    }

    #[test]
    fn default_config_matches_reported_parameters() {
        let cfg = defaults();
        assert_relative_eq!(cfg.tau1, 0.02, max_relative = 1e-12);
        assert_relative_eq!(cfg.tau2, 0.002, max_relative = 1e-12);
        assert_relative_eq!(cfg.rho1, 0.6);
        assert_relative_eq!(cfg.rho2, 0.96, max_relative = 1e-12);
        assert!(cfg.is_tuned());
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        assert!(FilterConfig::new(0.0, 0.6).is_err());
        assert!(FilterConfig::new(50.0, 1.0).is_err());
        assert!(FilterConfig::new(50.0, 0.0).is_err());
        let mut cfg = defaults();
        cfg.tau2 = cfg.tau1 * 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fresh_state_unit_step_gives_unit_output() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        let change = state.apply_input_step(&params, 0, 1.0).unwrap();
        assert_eq!(change.dy, 1.0);
        assert_eq!(state.y_now, 1.0);
    }

    #[test]
    fn step_response_hand_trace_at_tau2() {
        // At τ₂ the input-path copy (-ρ₂·1) and the output-path copy (+dy(0))
        // arrive together: net 0.04 with ρ₂ = 0.96.
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        state.apply_input_step(&params, 0, 1.0).unwrap();
        let tau2_ticks = secs_to_ticks(cfg.tau2);
        let changes = state.mature_until(&params, tau2_ticks);
        assert_eq!(changes.len(), 1);
        assert_eq!(changes[0].ticks, tau2_ticks);
        assert_relative_eq!(changes[0].dy, 0.04, max_relative = 1e-12);
        assert_relative_eq!(state.y_now, 1.04, max_relative = 1e-12);
    }

    #[test]
    fn step_response_converges_to_unit_dc_gain() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        state.apply_input_step(&params, 0, 1.0).unwrap();
        state.mature_until(&params, secs_to_ticks(2.0));
        assert!((state.y_now - 1.0).abs() < 1e-3, "y_now = {}", state.y_now);
    }

    #[test]
    fn mature_spawns_output_children_with_cascade_gains() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        let due = secs_to_ticks(0.002);
        state.queue_short.push_back(ScheduledDelta {
            due,
            amplitude: 0.04,
            kind: DeltaKind::OutputPath,
        });
        // Horizon past τ₂ but short of the child's own maturation at 2τ₂.
        let changes = state.mature_until(&params, secs_to_ticks(0.003));
        assert_eq!(changes.len(), 1);
        assert_eq!(changes[0].ticks, due);
        assert_relative_eq!(changes[0].dy, 0.04);
        // Children: +dy at +τ₂, +ρ₁·dy at +τ₁, -ρ₁·dy at +τ₁+τ₂.
        assert_eq!(state.queue_short.len(), 1);
        assert_eq!(state.queue_short[0].due, due + secs_to_ticks(cfg.tau2));
        assert_relative_eq!(state.queue_short[0].amplitude, 0.04);
        assert_eq!(state.queue_long.len(), 1);
        assert_eq!(state.queue_long[0].due, due + secs_to_ticks(cfg.tau1));
        assert_relative_eq!(state.queue_long[0].amplitude, 0.024, max_relative = 1e-12);
        assert_eq!(state.queue_combined.len(), 1);
        assert_eq!(
            state.queue_combined[0].due,
            due + secs_to_ticks(cfg.tau1 + cfg.tau2)
        );
        assert_relative_eq!(
            state.queue_combined[0].amplitude,
            -0.024,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mature_with_no_pending_deltas_is_a_no_op() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        let changes = state.mature_until(&params, secs_to_ticks(10.0));
        assert!(changes.is_empty());
        assert_eq!(state.y_now, 0.0);
        assert_eq!(state.pending_deltas(), 0);
    }

    #[test]
    fn small_deltas_apply_but_spawn_no_children() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        let tiny = cfg.prune_epsilon * cfg.contrast / 2.0;
        state.queue_short.push_back(ScheduledDelta {
            due: 100,
            amplitude: tiny,
            kind: DeltaKind::OutputPath,
        });
        let changes = state.mature_until(&params, 1000);
        assert_eq!(changes.len(), 1);
        assert_eq!(state.y_now, tiny);
        assert_eq!(state.pending_deltas(), 0);
    }

    #[test]
    fn sampler_floor_semantics() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        let mut out = Vec::new();

        state.y_now = 2.5;
        state.sample(&params, 0, 3, 4, &mut out);
        assert_eq!(
            out.iter().map(|e| e.polarity).collect::<Vec<_>>(),
            vec![1, 1]
        );
        assert_eq!(state.reference, 2.0);

        out.clear();
        state.y_now = 0.5;
        state.reference = 0.0;
        let mut fresh = PixelFilterState::<f64>::new();
        fresh.y_now = 0.5;
        fresh.sample(&params, 0, 0, 0, &mut out);
        assert!(out.is_empty());

        // Continuing the first trace: y drops to 0.4 against ref = 2.
        out.clear();
        state.reference = 2.0;
        state.y_now = 0.4;
        state.sample(&params, secs_to_ticks(0.001), 3, 4, &mut out);
        assert_eq!(out.iter().map(|e| e.polarity).collect::<Vec<_>>(), vec![-1]);
        assert_eq!(state.reference, 1.0);
        assert!((state.y_now - state.reference).abs() < params.theta);
    }

    #[test]
    fn empty_stream_filters_to_empty() {
        let cfg = defaults();
        let geom = SensorGeometry::new(4, 4).unwrap();
        let out = filter_stream::<f64>(&[], geom, &cfg).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn single_event_net_output_is_one_positive_event() {
        let cfg = defaults();
        let geom = SensorGeometry::new(4, 4).unwrap();
        let input = vec![Event {
            t: 0.0f64,
            x: 1,
            y: 2,
            polarity: 1,
        }];
        let out = filter_stream(&input, geom, &cfg).unwrap();
        let net: i32 = out.iter().map(|e| e.polarity as i32).sum();
        assert_eq!(net, 1, "DC gain 1 with c = θ keeps exactly one net event");
        assert!(out.iter().all(|e| e.x == 1 && e.y == 2));
    }

    #[test]
    fn harmonic_square_wave_is_suppressed() {
        // ±1 alternating every 5 ms is a 100 Hz square wave: on the notch.
        let cfg = defaults();
        let geom = SensorGeometry::new(1, 1).unwrap();
        let mut input = Vec::new();
        let mut t = 0.0f64;
        let mut polarity = 1i8;
        while t < 1.0 {
            input.push(Event {
                t,
                x: 0,
                y: 0,
                polarity,
            });
            polarity = -polarity;
            t += 0.005;
        }
        let out = filter_stream(&input, geom, &cfg).unwrap();
        let window =
            |evs: &[Event<f64>]| evs.iter().filter(|e| e.t >= 0.2 && e.t <= 1.0).count() as f64;
        let in_rate = window(&input);
        let out_rate = window(&out);
        assert!(
            out_rate <= 0.1 * in_rate,
            "output rate {out_rate} not reduced 90% from {in_rate}"
        );
    }

    #[test]
    fn non_monotone_input_is_rejected_with_context() {
        let cfg = defaults();
        let geom = SensorGeometry::new(4, 4).unwrap();
        let input = vec![
            Event {
                t: 0.2f64,
                x: 1,
                y: 1,
                polarity: 1,
            },
            Event {
                t: 0.1,
                x: 1,
                y: 1,
                polarity: 1,
            },
        ];
        let err = filter_stream(&input, geom, &cfg).unwrap_err();
        match err {
            CombError::NonMonotone { index, x, y, .. } => {
                assert_eq!(index, Some(1));
                assert_eq!((x, y), (1, 1));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn out_of_bounds_event_is_rejected() {
        let cfg = defaults();
        let geom = SensorGeometry::new(2, 2).unwrap();
        let input = vec![Event {
            t: 0.0f64,
            x: 5,
            y: 0,
            polarity: 1,
        }];
        assert!(matches!(
            filter_stream(&input, geom, &cfg).unwrap_err(),
            CombError::OutOfBounds { index: 0, x: 5, .. }
        ));
    }

    #[test]
    fn queues_drain_after_transient_decays() {
        let cfg = defaults();
        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        state.apply_input_step(&params, 0, 1.0).unwrap();
        state.mature_until(&params, secs_to_ticks(3.0));
        assert_eq!(state.pending_deltas(), 0, "pruned cascade must terminate");
    }

    #[test]
    fn dense_oracle_zero_input_is_zero() {
        let cfg = defaults();
        let y = dense_oracle::<f64>(&[], &cfg, 1e-4, 0.1).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_oracle_rejects_non_dividing_grid() {
        let cfg = defaults();
        assert!(matches!(
            dense_oracle::<f64>(&[], &cfg, 3e-4, 0.1),
            Err(CombError::GridMismatch { .. })
        ));
    }

    #[test]
    fn dense_oracle_matches_event_driven_single_step() {
        let cfg = defaults().with_prune_epsilon(0.0);
        let grid_dt = 1e-4;
        let t_end = 0.5;
        let input = vec![Event {
            t: 0.0f64,
            x: 0,
            y: 0,
            polarity: 1,
        }];
        let y = dense_oracle(&input, &cfg, grid_dt, t_end).unwrap();

        let params = CombParams::new(&cfg);
        let mut state = PixelFilterState::<f64>::new();
        state.apply_input_step(&params, 0, cfg.contrast).unwrap();
        assert!((state.y_now - y[0]).abs() < 1e-9);
        let changes = state.mature_until(&params, secs_to_ticks(t_end));
        for change in changes {
            let idx = (change.time_secs() / grid_dt).round() as usize;
            assert!(
                (change.y_now - y[idx]).abs() < 1e-9,
                "mismatch at t = {} s: event-driven {} vs grid {}",
                change.time_secs(),
                change.y_now,
                y[idx]
            );
        }
    }
}
