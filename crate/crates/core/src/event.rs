//! Event types, the on-disk text stream format, and stream validation.
//!
//! The text format is one event per line, `t x y p`, with `t` a decimal
//! timestamp in seconds, `x`/`y` pixel coordinates and `p` the polarity
//! stored as `0`/`1` on disk (`-1`/`+1` in memory). Lines starting with `#`
//! are comments; blank lines are ignored. This matches common public
//! event-camera text datasets.

use std::cmp::Ordering;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::Real;

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, StreamError> {
        if width == 0 || height == 0 {
            return Err(StreamError::InvalidGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn num_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Axis-aligned pixel rectangle, used for flicker regions and masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: u16,
    pub y: u16,
    pub width: u16,
    pub height: u16,
}

impl PixelRect {
    pub fn new(x: u16, y: u16, width: u16, height: u16) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x >= self.x
            && y >= self.y
            && (x as u32) < self.x as u32 + self.width as u32
            && (y as u32) < self.y as u32 + self.height as u32
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u16, u16)> + '_ {
        let (x0, y0, w, h) = (self.x, self.y, self.width, self.height);
        (0..h).flat_map(move |dy| (0..w).map(move |dx| (x0 + dx, y0 + dy)))
    }
}

/// One asynchronous brightness-change sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<T> {
    /// Timestamp in seconds, finite and non-negative.
    pub t: T,
    /// Column index.
    pub x: u16,
    /// Row index.
    pub y: u16,
    /// Sign of the brightness change: -1 or +1.
    pub polarity: i8,
}

impl<T: Real> Event<T> {
    pub fn new(t: T, x: u16, y: u16, polarity: i8) -> Self {
        debug_assert!(polarity == 1 || polarity == -1);
        Self { t, x, y, polarity }
    }

    /// Deterministic stream order: (t, y, x), ties keep emission order.
    pub fn stream_key(&self) -> (T, u16, u16) {
        (self.t, self.y, self.x)
    }
}

/// Ground-truth classification of a synthetic event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Flicker,
    Foreground,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Flicker => "flicker",
            Label::Foreground => "foreground",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledEvent<T> {
    pub event: Event<T>,
    pub label: Label,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed event line: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: invalid polarity {value} (expected 0 or 1)")]
    InvalidPolarity { line: usize, value: String },
    #[error("line {line}: negative timestamp {t}")]
    NegativeTimestamp { line: usize, t: String },
    #[error("line {line}: non-finite timestamp")]
    NonFiniteTimestamp { line: usize },
    #[error("line {line}: pixel ({x}, {y}) outside sensor geometry {w}x{h}")]
    OutOfBounds {
        line: usize,
        x: u16,
        y: u16,
        w: u16,
        h: u16,
    },
    #[error("invalid sensor geometry {width}x{height}")]
    InvalidGeometry { width: u16, height: u16 },
    #[error("line {line}: unknown label {value:?}")]
    UnknownLabel { line: usize, value: String },
    #[error("label sidecar has {labels} lines for {events} events")]
    LabelCountMismatch { labels: usize, events: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sort events into the deterministic stream order (t, y, x).
///
/// The sort is stable, so same-pixel same-timestamp events keep their
/// emission order.
pub fn sort_stream<T: Real>(events: &mut [Event<T>]) {
    events.sort_by(|a, b| cmp_events(a, b));
}

fn cmp_events<T: Real>(a: &Event<T>, b: &Event<T>) -> Ordering {
    a.t.partial_cmp(&b.t)
        .unwrap_or(Ordering::Equal)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

/// Parse a `t x y p` text stream.
///
/// Returns events in file order. When a geometry is given, every pixel is
/// checked against it. Errors carry 1-based line numbers.
pub fn parse_stream<T: Real, R: BufRead>(
    reader: R,
    geometry: Option<SensorGeometry>,
) -> Result<Vec<Event<T>>, StreamError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        events.push(parse_line(trimmed, lineno, geometry)?);
    }
    Ok(events)
}

/// Convenience wrapper over [`parse_stream`] for in-memory text.
pub fn parse_str<T: Real>(
    text: &str,
    geometry: Option<SensorGeometry>,
) -> Result<Vec<Event<T>>, StreamError> {
    parse_stream(text.as_bytes(), geometry)
}

fn parse_line<T: Real>(
    line: &str,
    lineno: usize,
    geometry: Option<SensorGeometry>,
) -> Result<Event<T>, StreamError> {
    let mut fields = line.split_whitespace();
    let mut next = |name: &str| {
        fields.next().ok_or_else(|| StreamError::Malformed {
            line: lineno,
            reason: format!("missing field `{name}`"),
        })
    };
    let t_str = next("t")?;
    let x_str = next("x")?;
    let y_str = next("y")?;
    let p_str = next("p")?;
    if fields.next().is_some() {
        return Err(StreamError::Malformed {
            line: lineno,
            reason: "expected exactly 4 fields `t x y p`".into(),
        });
    }

    let t: T = t_str.parse().map_err(|_| StreamError::Malformed {
        line: lineno,
        reason: format!("invalid timestamp {t_str:?}"),
    })?;
    if !t.is_finite() {
        return Err(StreamError::NonFiniteTimestamp { line: lineno });
    }
    if t < T::zero() {
        return Err(StreamError::NegativeTimestamp {
            line: lineno,
            t: t_str.into(),
        });
    }
    let x: u16 = x_str.parse().map_err(|_| StreamError::Malformed {
        line: lineno,
        reason: format!("invalid x {x_str:?}"),
    })?;
    let y: u16 = y_str.parse().map_err(|_| StreamError::Malformed {
        line: lineno,
        reason: format!("invalid y {y_str:?}"),
    })?;
    let polarity = match p_str {
        "0" => -1,
        "1" => 1,
        other => {
            return Err(StreamError::InvalidPolarity {
                line: lineno,
                value: other.into(),
            })
        }
    };
    if let Some(geom) = geometry {
        if !geom.contains(x, y) {
            return Err(StreamError::OutOfBounds {
                line: lineno,
                x,
                y,
                w: geom.width,
                h: geom.height,
            });
        }
    }
    Ok(Event { t, x, y, polarity })
}

/// Serialize events in the `t x y p` format.
///
/// Timestamps are rendered with the shortest representation that
/// round-trips exactly, so `parse . serialize` is the identity.
pub fn serialize_stream<T: Real, W: Write>(events: &[Event<T>], mut w: W) -> io::Result<()> {
    for ev in events {
        let p = if ev.polarity > 0 { 1 } else { 0 };
        writeln!(w, "{} {} {} {}", ev.t, ev.x, ev.y, p)?;
    }
    Ok(())
}

pub fn serialize_to_string<T: Real>(events: &[Event<T>]) -> String {
    let mut buf = Vec::new();
    serialize_stream(events, &mut buf).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("event text is ASCII")
}

/// Result of a global timestamp-order check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotoneReport {
    /// Index of the first event whose timestamp is below its predecessor's.
    pub first_violation: Option<usize>,
}

impl MonotoneReport {
    pub fn is_ok(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Check that timestamps are globally nondecreasing.
pub fn validate_monotone<T: Real>(events: &[Event<T>]) -> MonotoneReport {
    for i in 1..events.len() {
        if events[i].t < events[i - 1].t {
            return MonotoneReport {
                first_violation: Some(i),
            };
        }
    }
    MonotoneReport {
        first_violation: None,
    }
}

/// Parse a label sidecar: one `flicker`/`foreground` token per line.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<Vec<Label>, StreamError> {
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        labels.push(match trimmed {
            "flicker" => Label::Flicker,
            "foreground" => Label::Foreground,
            other => {
                return Err(StreamError::UnknownLabel {
                    line: idx + 1,
                    value: other.into(),
                })
            }
        });
    }
    Ok(labels)
}

pub fn write_labels<W: Write>(labels: &[Label], mut w: W) -> io::Result<()> {
    for label in labels {
        writeln!(w, "{}", label.as_str())?;
    }
    Ok(())
}

/// Zip an event stream with its label sidecar.
pub fn attach_labels<T: Real>(
    events: Vec<Event<T>>,
    labels: Vec<Label>,
) -> Result<Vec<LabeledEvent<T>>, StreamError> {
    if events.len() != labels.len() {
        return Err(StreamError::LabelCountMismatch {
            labels: labels.len(),
            events: events.len(),
        });
    }
    Ok(events
        .into_iter()
        .zip(labels)
        .map(|(event, label)| LabeledEvent { event, label })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_line() {
        let evs: Vec<Event<f64>> = parse_str("0.5 3 4 1", None).unwrap();
        assert_eq!(
            evs,
            vec![Event {
                t: 0.5,
                x: 3,
                y: 4,
                polarity: 1
            }]
        );
    }

    #[test]
    fn parses_zero_line_as_negative_polarity() {
        let evs: Vec<Event<f64>> = parse_str("0.0 0 0 0", None).unwrap();
        assert_eq!(
            evs,
            vec![Event {
                t: 0.0,
                x: 0,
                y: 0,
                polarity: -1
            }]
        );
    }

    #[test]
    fn rejects_invalid_polarity_with_line_number() {
        let err = parse_str::<f64>("0.5 3 4 2", None).unwrap_err();
        match err {
            StreamError::InvalidPolarity { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_negative_timestamp() {
        let err = parse_str::<f64>("# header\n-0.5 3 4 1", None).unwrap_err();
        match err {
            StreamError::NegativeTimestamp { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_out_of_bounds_pixel_when_geometry_attached() {
        let geom = SensorGeometry::new(4, 4).unwrap();
        let err = parse_str::<f64>("0.1 4 0 1", Some(geom)).unwrap_err();
        assert!(matches!(
            err,
            StreamError::OutOfBounds { line: 1, x: 4, .. }
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped_not_dropped_silently() {
        let text = "# comment\n\n0.1 1 1 1\n# more\n0.2 1 1 0\n";
        let evs: Vec<Event<f64>> = parse_str(text, None).unwrap();
        let data_lines = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .count();
        assert_eq!(evs.len(), data_lines);
    }

    #[test]
    fn serializes_expected_format() {
        let evs = vec![Event {
            t: 0.5f64,
            x: 3,
            y: 4,
            polarity: 1,
        }];
        assert_eq!(serialize_to_string(&evs), "0.5 3 4 1\n");
        assert_eq!(serialize_to_string::<f64>(&[]), "");
    }

    #[test]
    fn monotone_report() {
        let pass = vec![
            Event {
                t: 0.1f64,
                x: 0,
                y: 0,
                polarity: 1,
            },
            Event {
                t: 0.2,
                x: 0,
                y: 0,
                polarity: 1,
            },
        ];
        assert!(validate_monotone(&pass).is_ok());

        let fail = vec![
            Event {
                t: 0.2f64,
                x: 0,
                y: 0,
                polarity: 1,
            },
            Event {
                t: 0.1,
                x: 0,
                y: 0,
                polarity: 1,
            },
        ];
        assert_eq!(validate_monotone(&fail).first_violation, Some(1));

        assert!(validate_monotone::<f64>(&[]).is_ok());
    }

    #[test]
    fn label_sidecar_roundtrip() {
        let labels = vec![Label::Flicker, Label::Foreground, Label::Flicker];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        let parsed = parse_labels(&buf[..]).unwrap();
        assert_eq!(parsed, labels);
    }

    #[test]
    fn attach_labels_rejects_count_mismatch() {
        let evs = vec![Event {
            t: 0.1f64,
            x: 0,
            y: 0,
            polarity: 1,
        }];
        let err = attach_labels(evs, vec![]).unwrap_err();
        assert!(matches!(err, StreamError::LabelCountMismatch { .. }));
    }
}
