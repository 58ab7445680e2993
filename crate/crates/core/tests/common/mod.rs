//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.
#![allow(dead_code)]

use deeptraj::image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Band-limited random texture: a sum of sinusoids evaluated at continuous
/// coordinates, so translated copies are exact.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..8)
            .map(|_| {
                let freq = rng.random_range(0.15..0.6);
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = rng.random_range(0.02..0.06);
                (freq * angle.cos(), freq * angle.sin(), phase, amp)
            })
            .collect();
        Self { waves }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        0.5 + self
            .waves
            .iter()
            .map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin())
            .sum::<f64>()
    }

    /// Frame whose content is this texture shifted by `(dx, dy)`.
    pub fn render(&self, w: usize, h: usize, dx: f64, dy: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| self.value(x as f64 - dx, y as f64 - dy))
    }
}

/// Exhaustive block matching: for every interior pixel, the integer
/// displacement in `[-radius, radius]^2` minimizing the SSD between the
/// `patch`x`patch` neighbourhood in `prev` and its displaced copy in `next`.
/// Returns the displacement chosen by the most pixels.
pub fn block_match_mode(prev: &GrayImage, next: &GrayImage, patch: usize, radius: i64) -> (i64, i64) {
    let half = (patch / 2) as i64;
    let margin = half + radius;
    let (w, h) = (prev.width() as i64, prev.height() as i64);
    let side = (2 * radius + 1) as usize;
    let mut votes = vec![0usize; side * side];
    for cy in margin..h - margin {
        for cx in margin..w - margin {
            let mut best = (f64::INFINITY, 0usize);
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let mut ssd = 0.0;
                    for py in -half..=half {
                        for px in -half..=half {
                            let a = prev.get((cx + px) as usize, (cy + py) as usize);
                            let b = next.get((cx + px + dx) as usize, (cy + py + dy) as usize);
                            ssd += (a - b) * (a - b);
                        }
                    }
                    if ssd < best.0 {
                        best = (ssd, ((dy + radius) as usize) * side + (dx + radius) as usize);
                    }
                }
            }
            votes[best.1] += 1;
        }
    }
    let (idx, _) = votes
        .iter()
        .enumerate()
        .max_by_key(|(i, &v)| (v, std::cmp::Reverse(*i)))
        .unwrap();
    ((idx % side) as i64 - radius, (idx / side) as i64 - radius)
}

/// Average endpoint error against a constant ground truth over the pixels at
/// least `border` away from the frame edge.
pub fn interior_aee(u: &[f64], v: &[f64], w: usize, h: usize, gt: (f64, f64), border: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in border..h - border {
        for x in border..w - border {
            let i = y * w + x;
            sum += ((u[i] - gt.0).powi(2) + (v[i] - gt.1).powi(2)).sqrt();
            n += 1;
        }
    }
    sum / n as f64
}

/// Straight-line reimplementation of the gated advection recurrence over
/// plain arrays. Flows are `(u, v)` row-major pairs of `w * h` values.
/// Returns, per source in row-major grid order, the visited positions with
/// the sampled displacement.
pub struct AdvectOracle {
    pub stride: usize,
    pub magnitude_min: f64,
    pub cos_min: f64,
    pub use_mask: bool,
}

impl AdvectOracle {
    pub fn run(
        &self,
        w: usize,
        h: usize,
        flows: &[(Vec<f64>, Vec<f64>)],
        masks: Option<&[Vec<f64>]>,
    ) -> Vec<Vec<(usize, f64, f64, f64, f64)>> {
        fn lerp(g: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
            let x = x.max(0.0).min((w - 1) as f64);
            let y = y.max(0.0).min((h - 1) as f64);
            let (xi, yi) = (x.floor() as usize, y.floor() as usize);
            let (xj, yj) = (if xi + 1 < w { xi + 1 } else { xi }, if yi + 1 < h { yi + 1 } else { yi });
            let (a, b) = (x - xi as f64, y - yi as f64);
            let r0 = g[yi * w + xi] + a * (g[yi * w + xj] - g[yi * w + xi]);
            let r1 = g[yj * w + xi] + a * (g[yj * w + xj] - g[yj * w + xi]);
            r0 + b * (r1 - r0)
        }
        let mut out = Vec::new();
        let mut sy = 0;
        while sy < h {
            let mut sx = 0;
            while sx < w {
                let (mut x, mut y) = (sx as f64, sy as f64);
                let mut prev: Option<(f64, f64)> = None;
                let mut pts = Vec::new();
                for (t, (fu, fv)) in flows.iter().enumerate() {
                    if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
                        break;
                    }
                    if self.use_mask {
                        if let Some(ms) = masks {
                            let m = ms[t][(y.round() as usize) * w + x.round() as usize];
                            if m < 0.5 {
                                break;
                            }
                        }
                    }
                    let u = lerp(fu, w, h, x, y);
                    let v = lerp(fv, w, h, x, y);
                    let mag = (u * u + v * v).sqrt();
                    if mag < self.magnitude_min {
                        break;
                    }
                    if let Some((pu, pv)) = prev {
                        let pm = (pu * pu + pv * pv).sqrt();
                        if mag * pm > 0.0 && (u * pu + v * pv) / (mag * pm) < self.cos_min {
                            break;
                        }
                    }
                    pts.push((t, x, y, u, v));
                    x += u;
                    y += v;
                    prev = Some((u, v));
                }
                out.push(pts);
                sx += self.stride;
            }
            sy += self.stride;
        }
        out
    }
}

pub mod nn;
