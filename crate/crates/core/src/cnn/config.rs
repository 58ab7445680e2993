use super::LrnSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

/// Architecture and training hyperparameters.
///
/// Layer order: each of the four stages is conv, ReLU, (LRN on the first
/// two stages), max pool; then fc, ReLU, fc, ReLU, fc, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub input_size: usize,
    pub conv: [ConvSpec; 4],
    pub pool: [PoolSpec; 4],
    pub lrn: LrnSpec,
    pub fc: [usize; 3],
    pub class_count: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Number of stages followed by a normalization layer.
pub const LRN_STAGES: usize = 2;

impl NetworkConfig {
    /// Default architecture for `input_channels` stacked 165x165 canvases.
    pub fn new(input_channels: usize, class_count: usize) -> Self {
        let conv = |filters, kernel| ConvSpec {
            filters,
            kernel,
            stride: 1,
        };
        let pool = PoolSpec {
            window: 2,
            stride: 2,
        };
        Self {
            input_channels,
            input_size: crate::canvas::DESCRIPTOR_SIZE,
            conv: [conv(16, 7), conv(32, 5), conv(64, 3), conv(64, 3)],
            pool: [pool; 4],
            lrn: LrnSpec::default(),
            fc: [256, 128, class_count],
            class_count,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 8,
            seed: 0,
        }
    }

    /// Narrow variant for single-core runs: strided first convolution and
    /// fewer filters, same layer order.
    pub fn compact(input_channels: usize, class_count: usize) -> Self {
        let mut cfg = Self::new(input_channels, class_count);
        cfg.conv = [
            ConvSpec { filters: 8, kernel: 7, stride: 2 },
            ConvSpec { filters: 16, kernel: 5, stride: 1 },
            ConvSpec { filters: 16, kernel: 3, stride: 1 },
            ConvSpec { filters: 16, kernel: 3, stride: 1 },
        ];
        cfg.fc = [64, 32, class_count];
        cfg.epochs = 60;
        cfg
    }

    /// Spatial side length after every conv and pool, in layer order:
    /// `[conv1, pool1, ..., conv4, pool4]`.
    pub fn spatial_sizes(&self) -> Result<[usize; 8]> {
        let mut sizes = [0; 8];
        let mut n = self.input_size;
        for s in 0..4 {
            let c = self.conv[s];
            if c.kernel % 2 == 0 || c.kernel == 0 || c.stride == 0 || n < c.kernel {
                return Err(Error::InvalidConfig(format!(
                    "conv{}: kernel {} stride {} on {n}x{n} input",
                    s + 1,
                    c.kernel,
                    c.stride
                )));
            }
            n = (n - c.kernel) / c.stride + 1;
            sizes[2 * s] = n;
            let p = self.pool[s];
            if p.window == 0 || p.stride == 0 || n < p.window {
                return Err(Error::InvalidConfig(format!(
                    "pool{}: window {} stride {} on {n}x{n} map",
                    s + 1,
                    p.window,
                    p.stride
                )));
            }
            n = (n - p.window) / p.stride + 1;
            sizes[2 * s + 1] = n;
        }
        Ok(sizes)
    }

    /// Length of the conv4 feature vector (post-ReLU, before pooling).
    pub fn feature_len(&self) -> Result<usize> {
        let s = self.spatial_sizes()?;
        Ok(self.conv[3].filters * s[6] * s[6])
    }

    /// Inputs of the first fully connected layer.
    pub fn flat_len(&self) -> Result<usize> {
        let s = self.spatial_sizes()?;
        Ok(self.conv[3].filters * s[7] * s[7])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.input_channels == 0 || self.class_count < 2 {
            return bad("need at least one input channel and two classes".into());
        }
        if self.fc[2] != self.class_count {
            return bad(format!(
                "final fc width {} must equal class_count {}",
                self.fc[2], self.class_count
            ));
        }
        if self.conv.iter().any(|c| c.filters == 0) || self.fc.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.lrn.depth % 2 == 0 {
            return bad("lrn depth must be odd".into());
        }
        if !(self.learning_rate >= 0.0) || self.batch_size == 0 {
            return bad("learning_rate must be >= 0 and batch_size >= 1".into());
        }
        self.spatial_sizes().map(|_| ())
    }
}
