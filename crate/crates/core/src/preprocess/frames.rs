use serde::{Deserialize, Serialize};

use super::events::EventStream;
use crate::error::{config_err, Result};

/// Dense `T x C x H x W` stack of per-window event counts (or filtered
/// responses after the Gabor stage).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub steps: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub time_window: u64,
}

impl FrameSequence {
    pub fn zeros(steps: usize, channels: usize, height: usize, width: usize, time_window: u64) -> Self {
        Self {
            steps,
            channels,
            height,
            width,
            data: vec![0.0; steps * channels * height * width],
            time_window,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    #[inline]
    pub fn offset(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.channels + c) * self.height + y) * self.width + x
    }

    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(t, c, y, x)]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinOrigin {
    /// Frame 0 starts at the first event.
    #[default]
    FirstEvent,
    /// Frame 0 starts at t = 0 so phase structure tied to absolute time survives.
    Zero,
}

/// Bins events into frames of `time_window` microseconds, channel = polarity.
pub fn bin_events(stream: &EventStream, time_window: u64) -> Result<FrameSequence> {
    bin_events_from(stream, time_window, BinOrigin::FirstEvent)
}

pub fn bin_events_from(stream: &EventStream, time_window: u64, origin: BinOrigin) -> Result<FrameSequence> {
    if time_window == 0 {
        return config_err("time window must be positive");
    }
    let (w, h) = (stream.width as usize, stream.height as usize);
    let Some(first) = stream.events.first() else {
        return Ok(FrameSequence::zeros(0, 2, h, w, time_window));
    };
    let t0 = match origin {
        BinOrigin::FirstEvent => first.t,
        BinOrigin::Zero => 0,
    };
    let last = stream.events.last().unwrap().t;
    let steps = ((last - t0) / time_window) as usize + 1;
    let mut frames = FrameSequence::zeros(steps, 2, h, w, time_window);
    for e in &stream.events {
        let t = ((e.t - t0) / time_window) as usize;
        let o = frames.offset(t, e.p as usize, e.y as usize, e.x as usize);
        frames.data[o] += 1.0;
    }
    Ok(frames)
}

/// Count-preserving sum pooling over `factor x factor` blocks.
pub fn downscale(frames: &FrameSequence, factor: usize) -> Result<FrameSequence> {
    if factor == 0 || frames.height % factor != 0 || frames.width % factor != 0 {
        return config_err(format!(
            "{}x{} frames are not divisible by factor {factor}",
            frames.height, frames.width
        ));
    }
    if factor == 1 {
        return Ok(frames.clone());
    }
    let (oh, ow) = (frames.height / factor, frames.width / factor);
    let mut out = FrameSequence::zeros(frames.steps, frames.channels, oh, ow, frames.time_window);
    for t in 0..frames.steps {
        for c in 0..frames.channels {
            for y in 0..frames.height {
                for x in 0..frames.width {
                    let v = frames.get(t, c, y, x);
                    if v != 0.0 {
                        let o = out.offset(t, c, y / factor, x / factor);
                        out.data[o] += v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Sums all channels into one.
pub fn merge_channels(frames: &FrameSequence) -> FrameSequence {
    let mut out = FrameSequence::zeros(frames.steps, 1, frames.height, frames.width, frames.time_window);
    let plane = frames.height * frames.width;
    for t in 0..frames.steps {
        let dst = &mut out.data[t * plane..(t + 1) * plane];
        for chunk in frames.frame(t).chunks_exact(plane) {
            for (d, s) in dst.iter_mut().zip(chunk) {
                *d += s;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresentationSpec {
    /// Pads with silence or truncates to this many steps; `None` keeps `T`.
    pub steps: Option<usize>,
    /// Multiplier from frame value to input-neuron drive.
    pub input_scale: f64,
}

impl Default for PresentationSpec {
    fn default() -> Self {
        Self {
            steps: None,
            input_scale: 1.0,
        }
    }
}

/// One drive vector per simulation step, flattened channel-major then row-major.
pub fn frames_to_spike_drive(frames: &FrameSequence, presentation: &PresentationSpec) -> Vec<Vec<f64>> {
    let steps = presentation.steps.unwrap_or(frames.steps);
    let n = frames.frame_len();
    (0..steps)
        .map(|t| {
            if t < frames.steps {
                frames.frame(t).iter().map(|v| v * presentation.input_scale).collect()
            } else {
                vec![0.0; n]
            }
        })
        .collect()
}
