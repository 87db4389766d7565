use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LsmError, Result};

pub const EVENT_MAGIC: &[u8; 4] = b"EVS1";
const NO_LABEL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: u32,
    pub height: u32,
    pub label: Option<u32>,
}

impl EventStream {
    pub fn new(events: Vec<Event>, width: u32, height: u32, label: Option<u32>) -> Result<Self> {
        let s = Self {
            events,
            width,
            height,
            label,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(LsmError::Dataset("events are not sorted by timestamp".into()));
        }
        if let Some(e) = self
            .events
            .iter()
            .find(|e| u32::from(e.x) >= self.width || u32::from(e.y) >= self.height || e.p > 1)
        {
            return Err(LsmError::Dataset(format!(
                "event {e:?} outside a {}x{} sensor",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Little-endian `EVS1` container: magic, u32 width, u32 height, u32 label
/// (`u32::MAX` when unlabeled), u64 count, then packed `(u64 t, u16 x, u16 y, u8 p)`.
pub fn write_events(stream: &EventStream, mut w: impl Write) -> io::Result<()> {
    let mut buf = Vec::with_capacity(24 + 13 * stream.events.len());
    buf.extend_from_slice(EVENT_MAGIC);
    buf.extend_from_slice(&stream.width.to_le_bytes());
    buf.extend_from_slice(&stream.height.to_le_bytes());
    buf.extend_from_slice(&stream.label.unwrap_or(NO_LABEL).to_le_bytes());
    buf.extend_from_slice(&(stream.events.len() as u64).to_le_bytes());
    for e in &stream.events {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(e.p);
    }
    w.write_all(&buf)
}

pub fn read_events(mut r: impl Read) -> Result<EventStream> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |m: &str| LsmError::Parse(format!("event file: {m}"));
    if bytes.len() < 24 || &bytes[..4] != EVENT_MAGIC {
        return Err(bad("missing EVS1 header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (width, height, label) = (u32_at(4), u32_at(8), u32_at(12));
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if body.len() != count.checked_mul(13).ok_or_else(|| bad("count overflow"))? {
        return Err(bad(&format!("expected {count} records, found {} bytes", body.len())));
    }
    let events = body
        .chunks_exact(13)
        .map(|c| Event {
            t: u64::from_le_bytes(c[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(c[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(c[10..12].try_into().unwrap()),
            p: c[12],
        })
        .collect();
    let stream = EventStream {
        events,
        width,
        height,
        label: (label != NO_LABEL).then_some(label),
    };
    stream.validate()?;
    Ok(stream)
}

/// CSV interchange with a `t,x,y,p` header. Sensor size and label travel
/// out of band.
pub fn read_csv(r: impl Read, width: u32, height: u32, label: Option<u32>) -> Result<EventStream> {
    let mut rdr = csv::Reader::from_reader(r);
    let events = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<Event>, _>>()
        .map_err(|e| LsmError::Parse(e.to_string()))?;
    EventStream::new(events, width, height, label)
}

pub fn write_csv(stream: &EventStream, w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if stream.events.is_empty() {
        wtr.write_record(["t", "x", "y", "p"]).map_err(|e| LsmError::Parse(e.to_string()))?;
    }
    for e in &stream.events {
        wtr.serialize(e).map_err(|e| LsmError::Parse(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
