use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::frames::{merge_channels, FrameSequence};
use crate::error::{config_err, Result};

/// Orientation x wavelength Gabor bank. Kernels are ordered wavelength-major:
/// index `w * orientations + o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborSpec {
    pub orientations: usize,
    pub wavelengths: Vec<f64>,
    pub kernel_size: usize,
    /// Envelope width as a fraction of the wavelength.
    pub sigma_ratio: f64,
    /// Sum input channels before filtering (output has one channel per kernel).
    pub merge_channels: bool,
}

impl Default for GaborSpec {
    fn default() -> Self {
        Self {
            orientations: 6,
            wavelengths: vec![2.0, 4.0, 8.0],
            kernel_size: 7,
            sigma_ratio: 0.5,
            merge_channels: true,
        }
    }
}

impl GaborSpec {
    pub fn len(&self) -> usize {
        self.orientations * self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn orientation(&self, o: usize) -> f64 {
        PI * o as f64 / self.orientations as f64
    }

    pub fn kernels(&self) -> Vec<Vec<f64>> {
        self.wavelengths
            .iter()
            .flat_map(|&lambda| {
                (0..self.orientations)
                    .map(move |o| gabor_kernel(self.kernel_size, self.orientation(o), lambda, self.sigma_ratio * lambda))
            })
            .collect()
    }
}

/// Real, zero-phase, unit-aspect Gabor kernel, row-major `size x size`.
pub fn gabor_kernel(size: usize, theta: f64, lambda: f64, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let (s, c) = theta.sin_cos();
    let mut k = Vec::with_capacity(size * size);
    for row in 0..size as isize {
        for col in 0..size as isize {
            let (x, y) = ((col - half) as f64, (row - half) as f64);
            let xr = x * c + y * s;
            let yr = -x * s + y * c;
            k.push((-(xr * xr + yr * yr) / (2.0 * sigma * sigma)).exp() * (2.0 * PI * xr / lambda).cos());
        }
    }
    k
}

/// Zero-padded "same" correlation of every frame with every kernel,
/// rectified at zero. Output channel = `in_channel * bank.len() + kernel`.
pub fn gabor_bank(frames: &FrameSequence, bank: &GaborSpec) -> Result<FrameSequence> {
    if bank.is_empty() || bank.kernel_size == 0 {
        return config_err("empty Gabor bank");
    }
    if bank.kernel_size > frames.height || bank.kernel_size > frames.width {
        return config_err(format!(
            "{0}x{0} kernel is larger than {1}x{2} frames",
            bank.kernel_size, frames.height, frames.width
        ));
    }
    let src = if bank.merge_channels { merge_channels(frames) } else { frames.clone() };
    let kernels = bank.kernels();
    let (h, w, ks) = (src.height as isize, src.width as isize, bank.kernel_size as isize);
    let half = ks / 2;
    let mut out = FrameSequence::zeros(src.steps, src.channels * kernels.len(), src.height, src.width, src.time_window);
    for t in 0..src.steps {
        for c in 0..src.channels {
            for (ki, kernel) in kernels.iter().enumerate() {
                let oc = c * kernels.len() + ki;
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for ky in 0..ks {
                            let sy = y + ky - half;
                            if sy < 0 || sy >= h {
                                continue;
                            }
                            for kx in 0..ks {
                                let sx = x + kx - half;
                                if sx < 0 || sx >= w {
                                    continue;
                                }
                                acc += kernel[(ky * ks + kx) as usize] * src.get(t, c, sy as usize, sx as usize);
                            }
                        }
                        let o = out.offset(t, oc, y as usize, x as usize);
                        out.data[o] = acc.max(0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_line(size: usize) -> FrameSequence {
        let mut f = FrameSequence::zeros(1, 1, size, size, 1);
        for y in 0..size {
            let o = f.offset(0, 0, y, size / 2);
            f.data[o] = 1.0;
        }
        f
    }

    #[test]
    fn default_bank_has_18_kernels() {
        let bank = GaborSpec::default();
        assert_eq!(bank.len(), 18);
        let out = gabor_bank(&FrameSequence::zeros(2, 2, 16, 16, 1), &bank).unwrap();
        assert_eq!(out.channels, 18);
        assert!(out.data.iter().all(|v| *v == 0.0));
        let split = GaborSpec { merge_channels: false, ..bank };
        assert_eq!(gabor_bank(&FrameSequence::zeros(1, 2, 8, 8, 1), &split).unwrap().channels, 36);
    }

    #[test]
    fn kernel_larger_than_frame_rejected() {
        assert!(gabor_bank(&FrameSequence::zeros(1, 1, 5, 5, 1), &GaborSpec::default()).is_err());
    }

    #[test]
    fn vertical_line_prefers_zero_orientation() {
        let size = 17;
        let bank = GaborSpec::default();
        let out = gabor_bank(&vertical_line(size), &bank).unwrap();
        // brute-force oracle at the line centre: correlate each kernel directly
        let c = size / 2;
        let mut oracle = Vec::new();
        for &lambda in &bank.wavelengths {
            for o in 0..bank.orientations {
                let theta = std::f64::consts::PI * o as f64 / 6.0;
                let sigma = 0.5 * lambda;
                let mut acc = 0.0;
                for dy in -3i32..=3 {
                    let (x, y) = (0.0f64, dy as f64);
                    let xr = x * theta.cos() + y * theta.sin();
                    let yr = -x * theta.sin() + y * theta.cos();
                    acc += (-(xr * xr + yr * yr) / (2.0 * sigma * sigma)).exp() * (2.0 * std::f64::consts::PI * xr / lambda).cos();
                }
                oracle.push(acc.max(0.0));
            }
        }
        for (k, expect) in oracle.iter().enumerate() {
            assert!((out.get(0, k, c, c) - expect).abs() < 1e-12);
        }
        let best = (0..18).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
        assert_eq!(best % 6, 0, "argmax kernel {best} is not the vertical-aligned orientation");
    }

    #[test]
    fn responses_scale_linearly() {
        let bank = GaborSpec::default();
        let f = vertical_line(12);
        let mut g = f.clone();
        g.data.iter_mut().for_each(|v| *v *= 2.5);
        let (a, b) = (gabor_bank(&f, &bank).unwrap(), gabor_bank(&g, &bank).unwrap());
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((2.5 * x - y).abs() < 1e-12);
        }
    }
}
