use super::EventStream;
use crate::{Error, Result};

/// Keeps the `max_events` consecutive events with the smallest time span.
///
/// Streams at or under the cap are returned unchanged. Among windows with
/// equal span the earliest start wins.
pub fn densest_window_select(stream: &EventStream, max_events: usize) -> Result<EventStream> {
    if max_events == 0 {
        return Err(Error::config("max_events must be at least 1"));
    }
    let n = stream.len();
    if n <= max_events {
        return Ok(stream.clone());
    }
    let ev = &stream.events;
    let (mut best_start, mut best_span) = (0, u64::MAX);
    for start in 0..=n - max_events {
        let span = ev[start + max_events - 1].t - ev[start].t;
        if span < best_span {
            best_span = span;
            best_start = start;
        }
    }
    Ok(EventStream {
        events: ev[best_start..best_start + max_events].to_vec(),
        ..stream.clone_header()
    })
}

impl EventStream {
    fn clone_header(&self) -> EventStream {
        EventStream {
            events: Vec::new(),
            width: self.width,
            height: self.height,
            label: self.label,
            bbox: self.bbox,
        }
    }
}
