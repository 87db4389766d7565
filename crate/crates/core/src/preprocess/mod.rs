//! Event streams to per-timestep input drive.

mod events;
mod frames;
mod gabor;

pub use events::{read_csv, read_events, write_csv, write_events, Event, EventStream, EVENT_MAGIC};
pub use frames::{
    bin_events, bin_events_from, downscale, frames_to_spike_drive, merge_channels, BinOrigin, FrameSequence,
    PresentationSpec,
};
pub use gabor::{gabor_bank, gabor_kernel, GaborSpec};
