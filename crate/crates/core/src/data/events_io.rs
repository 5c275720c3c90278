use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{Event, EventSet, SensorGeometry};

/// Loads `t x y p` lines (seconds, pixels, polarity 0/1).
///
/// Blank lines and `#` comments are skipped. With a geometry, coordinates
/// outside the sensor are rejected; timestamps must be non-decreasing.
pub fn load_events_text(path: &Path, geometry: Option<SensorGeometry>) -> Result<EventSet> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(line_no, format!("expected 4 fields `t x y p`, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| err(line_no, format!("bad {what} {s:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line_no, format!("non-finite {what}")))
            }
        };
        let t = num(fields[0], "timestamp")?;
        let x = num(fields[1], "x")?;
        let y = num(fields[2], "y")?;
        let p = match fields[3] {
            "1" => 1,
            "0" => -1,
            other => return Err(err(line_no, format!("polarity must be 0 or 1, got {other:?}"))),
        };
        let in_range = match geometry {
            Some(g) => g.contains(x, y),
            None => x >= 0.0 && y >= 0.0,
        };
        if !in_range {
            return Err(err(line_no, format!("coordinate ({x}, {y}) is outside the sensor")));
        }
        if events.last().is_some_and(|e: &Event| t < e.t) {
            return Err(err(line_no, "timestamps are not sorted".into()));
        }
        events.push(Event::new(x, y, t, p));
    }
    if events.is_empty() {
        return Err(Error::invalid(format!("{} contains no events", path.display())));
    }
    EventSet::new(events)
}

/// Writes events in the same `t x y p` layout; values round-trip exactly.
pub fn write_events_text(path: &Path, events: &EventSet) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in events.events() {
        let p = if e.p > 0 { 1 } else { 0 };
        writeln!(w, "{} {} {} {}", e.t, e.x, e.y, p)?;
    }
    w.flush()?;
    Ok(())
}

/// The first `n_target` events at or after `t_start` (fewer if the stream
/// runs out).
pub fn select_window(events: &EventSet, t_start: f64, n_target: usize) -> Result<EventSet> {
    if n_target == 0 {
        return Err(Error::invalid("window size must be >= 1"));
    }
    let ev = events.events();
    let start = ev.partition_point(|e| e.t < t_start);
    if start == ev.len() {
        return Err(Error::invalid(format!("no events at or after t={t_start}")));
    }
    let end = (start + n_target).min(ev.len());
    EventSet::new(ev[start..end].to_vec())
}

/// Consecutive non-overlapping windows of `n` events; the last may be short.
pub fn split_windows(events: &EventSet, n: usize) -> Result<Vec<EventSet>> {
    if n == 0 {
        return Err(Error::invalid("window size must be >= 1"));
    }
    events
        .events()
        .chunks(n)
        .map(|c| EventSet::new(c.to_vec()))
        .collect()
}
