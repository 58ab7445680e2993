//! Dense optical flow: coarse-to-fine variational solver with gray value
//! constancy, gradient constancy and smoothness terms.

mod flo;
mod pyramid;
mod solver;

pub use flo::{read_flo, write_flo, FLO_TAG};
pub use pyramid::{build_pyramid, pyramid_dims};
pub use solver::{compute_flow, warp_image};

use crate::image::GrayImage;
use crate::{Error, Result};

/// Per-pixel displacement from one frame to the next, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || u.len() != width * height || v.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "flow components {}/{} for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidImage("non-finite flow vector".into()));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    /// Uniform flow `(u, v)` everywhere.
    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut flow = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                flow.u[y * width + x] = u;
                flow.v[y * width + x] = v;
            }
        }
        flow
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Bilinear sample at a real position (edge clamped).
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (
            crate::image::bilinear(&self.u, self.width, self.height, x, y),
            crate::image::bilinear(&self.v, self.width, self.height, x, y),
        )
    }

    /// Zeroes every vector whose mask value is below 0.5.
    pub fn masked(&self, mask: &GrayImage) -> Result<FlowField> {
        if mask.dims() != self.dims() {
            return Err(Error::FrameSizeMismatch(
                self.width,
                self.height,
                mask.width(),
                mask.height(),
            ));
        }
        let mut out = self.clone();
        for (i, &m) in mask.data().iter().enumerate() {
            if m < 0.5 {
                out.u[i] = 0.0;
                out.v[i] = 0.0;
            }
        }
        Ok(out)
    }

    /// Largest vector length in the field.
    pub fn max_magnitude(&self) -> f64 {
        flow_magnitude(self).into_iter().fold(0.0, f64::max)
    }
}

/// Per-pixel `sqrt(u^2 + v^2)`, row-major.
pub fn flow_magnitude(flow: &FlowField) -> Vec<f64> {
    flow.u.iter().zip(&flow.v).map(|(u, v)| u.hypot(*v)).collect()
}

/// Solver parameters. Defaults follow the usual settings for this family of
/// warping solvers on `[0, 1]` intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Smoothness weight.
    pub alpha: f64,
    /// Gradient constancy weight.
    pub gamma: f64,
    pub pyramid_factor: f64,
    pub min_level_size: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub sor_relaxation: f64,
    /// Regularizer of the robust penalty `sqrt(s^2 + eps^2)`.
    pub epsilon: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 30.0,
            gamma: 80.0,
            pyramid_factor: 0.5,
            min_level_size: 16,
            outer_iterations: 10,
            inner_iterations: 5,
            sor_relaxation: 1.8,
            epsilon: 1e-3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("flow: {what}")));
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if !(self.pyramid_factor > 0.0 && self.pyramid_factor < 1.0) {
            return bad("pyramid_factor must lie in (0, 1)");
        }
        if self.min_level_size < 8 {
            return bad("min_level_size must be >= 8");
        }
        if !(self.sor_relaxation > 0.0 && self.sor_relaxation < 2.0) {
            return bad("sor_relaxation must lie in (0, 2)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        Ok(())
    }
}
