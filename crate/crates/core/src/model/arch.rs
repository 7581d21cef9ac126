//! Declarative description of the convolutional stack.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv_output_size, pool_output_size, LrnParams, PoolSpec};

/// One entry of the stack. Convolution and dense layers are always
/// followed by a ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: usize,
    },
    Lrn(LrnParams),
    Pool(PoolSpec),
    PoolDropout {
        #[serde(flatten)]
        pool: PoolSpec,
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
        /// Expected input width; checked against the incoming size when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inputs: Option<usize>,
    },
    DenseDropout {
        units: usize,
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inputs: Option<usize>,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv { filters, kernel: (kernel, kernel), stride, pad }
    }

    pub fn pool(window: usize, stride: usize) -> Self {
        LayerSpec::Pool(PoolSpec { window: (window, window), stride })
    }

    pub fn pool_dropout(window: usize, stride: usize, rate: f64) -> Self {
        LayerSpec::PoolDropout { pool: PoolSpec { window: (window, window), stride }, rate }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, inputs: None }
    }

    pub fn dense_dropout(units: usize, rate: f64) -> Self {
        LayerSpec::DenseDropout { units, rate, inputs: None }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. })
    }
}

/// Per-sample activation shape after a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationShape {
    Map { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl fmt::Display for ActivationShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationShape::Map { channels, height, width } => write!(f, "{channels}x{height}x{width}"),
            ActivationShape::Flat(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    pub embedding_dim: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self::signet()
    }
}

impl ArchitectureConfig {
    /// The full network: 155×220 grayscale input, 128-d embedding.
    pub fn signet() -> Self {
        let lrn = LayerSpec::Lrn(LrnParams::default());
        ArchitectureConfig {
            input_height: 155,
            input_width: 220,
            layers: vec![
                LayerSpec::conv(96, 11, 1, 0),
                lrn,
                LayerSpec::pool(3, 2),
                LayerSpec::conv(256, 5, 1, 2),
                lrn,
                LayerSpec::pool_dropout(3, 2, 0.3),
                LayerSpec::conv(384, 3, 1, 1),
                LayerSpec::conv(256, 3, 1, 1),
                LayerSpec::pool_dropout(3, 2, 0.3),
                LayerSpec::Flatten,
                LayerSpec::dense_dropout(1024, 0.5),
                LayerSpec::dense(128),
            ],
            embedding_dim: 128,
        }
    }

    /// A scaled-down stack with the same layer pattern, small enough to
    /// train on a CPU in minutes.
    pub fn tiny() -> Self {
        let lrn = LayerSpec::Lrn(LrnParams::default());
        ArchitectureConfig {
            input_height: 32,
            input_width: 48,
            layers: vec![
                LayerSpec::conv(8, 5, 1, 2),
                lrn,
                LayerSpec::pool(3, 2),
                LayerSpec::conv(16, 3, 1, 1),
                LayerSpec::pool_dropout(3, 2, 0.3),
                LayerSpec::Flatten,
                LayerSpec::dense_dropout(64, 0.5),
                LayerSpec::dense(16),
            ],
            embedding_dim: 16,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" | "signet" => Ok(Self::signet()),
            "tiny" => Ok(Self::tiny()),
            other => {
                Err(Error::InvalidArgument(format!("unknown architecture preset `{other}` (expected full or tiny)")))
            }
        }
    }

    /// Checks that the layer chain closes and returns the activation shape
    /// after every layer.
    pub fn layer_shapes(&self) -> Result<Vec<ActivationShape>> {
        use ActivationShape::*;
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Architecture { index: 0, reason: "input size must be positive".into() });
        }
        let mut shape = Map { channels: 1, height: self.input_height, width: self.input_width };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let fail = |reason: String| Error::Architecture { index, reason };
            let check_rate = |rate: f64| {
                if (0.0..1.0).contains(&rate) {
                    Ok(())
                } else {
                    Err(fail(format!("dropout rate {rate} outside [0, 1)")))
                }
            };
            shape = match (*layer, shape) {
                (LayerSpec::Conv { filters, kernel: (kh, kw), stride, pad }, Map { height, width, .. }) => {
                    if filters == 0 || kh == 0 || kw == 0 || stride == 0 {
                        return Err(fail("filters, kernel and stride must be positive".into()));
                    }
                    if pad >= kh.max(kw) {
                        return Err(fail(format!("pad {pad} must be smaller than the kernel")));
                    }
                    match (conv_output_size(height, kh, stride, pad), conv_output_size(width, kw, stride, pad)) {
                        (Some(h), Some(w)) => Map { channels: filters, height: h, width: w },
                        _ => return Err(fail(format!("{kh}x{kw} kernel does not fit {height}x{width} input"))),
                    }
                }
                (LayerSpec::Lrn(p), s @ Map { .. }) => {
                    if p.n == 0 || p.alpha <= 0.0 || p.beta <= 0.0 {
                        return Err(fail(format!("invalid LRN parameters {p:?}")));
                    }
                    s
                }
                (LayerSpec::Pool(pool) | LayerSpec::PoolDropout { pool, .. }, Map { channels, height, width }) => {
                    if let LayerSpec::PoolDropout { rate, .. } = *layer {
                        check_rate(rate)?;
                    }
                    let (kh, kw) = pool.window;
                    match (pool_output_size(height, kh, pool.stride), pool_output_size(width, kw, pool.stride)) {
                        (Some(h), Some(w)) => Map { channels, height: h, width: w },
                        _ => return Err(fail(format!("{kh}x{kw} pool does not fit {height}x{width} input"))),
                    }
                }
                (LayerSpec::Flatten, Map { channels, height, width }) => Flat(channels * height * width),
                (LayerSpec::Dense { units, inputs } | LayerSpec::DenseDropout { units, inputs, .. }, Flat(d)) => {
                    if let LayerSpec::DenseDropout { rate, .. } = *layer {
                        check_rate(rate)?;
                    }
                    if units == 0 {
                        return Err(fail("dense layer needs at least one unit".into()));
                    }
                    if let Some(expected) = inputs {
                        if expected != d {
                            return Err(fail(format!("dense layer expects {expected} inputs, receives {d}")));
                        }
                    }
                    Flat(units)
                }
                (layer, s) => return Err(fail(format!("{layer:?} cannot follow activation of shape {s}"))),
            };
            shapes.push(shape);
        }
        let last_ok = matches!(
            self.layers.last(),
            Some(LayerSpec::Dense { units, .. }) if *units == self.embedding_dim
        );
        if !last_ok {
            return Err(Error::Architecture {
                index: self.layers.len().saturating_sub(1),
                reason: format!("last layer must be dense with {} units", self.embedding_dim),
            });
        }
        Ok(shapes)
    }

    /// Weight and bias shapes of every parameterized layer, named
    /// `conv<i>.*` and `fc<i>.*` in stack order.
    pub fn parameter_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let shapes = self.layer_shapes()?;
        let mut in_shape = ActivationShape::Map { channels: 1, height: self.input_height, width: self.input_width };
        let (mut convs, mut fcs) = (0, 0);
        let mut out = Vec::new();
        for (layer, &shape) in self.layers.iter().zip(&shapes) {
            match (layer, in_shape) {
                (LayerSpec::Conv { filters, kernel: (kh, kw), .. }, ActivationShape::Map { channels, .. }) => {
                    convs += 1;
                    out.push((format!("conv{convs}.weight"), vec![*filters, channels, *kh, *kw]));
                    out.push((format!("conv{convs}.bias"), vec![*filters]));
                }
                (LayerSpec::Dense { units, .. } | LayerSpec::DenseDropout { units, .. }, ActivationShape::Flat(d)) => {
                    fcs += 1;
                    out.push((format!("fc{fcs}.weight"), vec![d, *units]));
                    out.push((format!("fc{fcs}.bias"), vec![*units]));
                }
                _ => {}
            }
            in_shape = shape;
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.parameter_shapes()?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.layer_shapes()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_parameter_count() {
        // conv1 96·1·11·11+96, conv2 256·96·25+256, conv3 384·256·9+384,
        // conv4 256·384·9+256, fc1 108800·1024+1024, fc2 1024·128+128
        let want = 11_712 + 614_656 + 885_120 + 884_992 + 111_412_224 + 131_200;
        assert_eq!(ArchitectureConfig::signet().parameter_count().unwrap(), want);
        assert_eq!(want, 113_939_904);
    }

    #[test]
    fn parameter_names_and_shapes() {
        let shapes = ArchitectureConfig::signet().parameter_shapes().unwrap();
        assert_eq!(shapes[0], ("conv1.weight".to_string(), vec![96, 1, 11, 11]));
        assert_eq!(shapes[8], ("fc1.weight".to_string(), vec![108_800, 1024]));
        assert_eq!(shapes[11], ("fc2.bias".to_string(), vec![128]));
    }

    #[test]
    fn tiny_shapes_and_count() {
        let config = ArchitectureConfig::tiny();
        let shapes = config.layer_shapes().unwrap();
        let map = |channels, height, width| ActivationShape::Map { channels, height, width };
        assert_eq!(shapes[0], map(8, 32, 48));
        assert_eq!(shapes[2], map(8, 15, 23));
        assert_eq!(shapes[4], map(16, 7, 11));
        assert_eq!(shapes[5], ActivationShape::Flat(1232));
        assert_eq!(*shapes.last().unwrap(), ActivationShape::Flat(16));
        // conv 8·25+8, conv 16·8·9+16, fc 1232·64+64, fc 64·16+16
        assert_eq!(config.parameter_count().unwrap(), 208 + 1168 + 78_912 + 1040);
    }

    #[test]
    fn mismatched_dense_input_names_the_layer() {
        let mut config = ArchitectureConfig::signet();
        config.layers[10] = LayerSpec::DenseDropout { units: 1024, rate: 0.5, inputs: Some(100_000) };
        match config.layer_shapes() {
            Err(Error::Architecture { index, .. }) => assert_eq!(index, 10),
            other => panic!("expected architecture error, got {other:?}"),
        }
        config.layers[10] = LayerSpec::DenseDropout { units: 1024, rate: 0.5, inputs: Some(108_800) };
        assert!(config.layer_shapes().is_ok());
    }

    #[test]
    fn structural_errors() {
        let mut config = ArchitectureConfig::tiny();
        config.layers.remove(5); // flatten
        assert!(matches!(config.layer_shapes(), Err(Error::Architecture { index: 5, .. })));

        let mut config = ArchitectureConfig::tiny();
        config.embedding_dim = 32;
        assert!(config.layer_shapes().is_err());

        let mut config = ArchitectureConfig::tiny();
        config.input_height = 3;
        assert!(matches!(config.layer_shapes(), Err(Error::Architecture { index: 4, .. })));
        config.layers[0] = LayerSpec::conv(8, 5, 1, 0);
        assert!(matches!(config.layer_shapes(), Err(Error::Architecture { index: 0, .. })));
    }

    #[test]
    fn json_round_trip() {
        for config in [ArchitectureConfig::signet(), ArchitectureConfig::tiny()] {
            let text = config.to_json().unwrap();
            assert_eq!(ArchitectureConfig::from_json(&text).unwrap(), config);
        }
    }
}
