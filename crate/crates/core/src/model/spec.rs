use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::ConvGeometry;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Tcnn,
    TcnnInception,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Tcnn, Architecture::TcnnInception];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Tcnn => "tcnn",
            Architecture::TcnnInception => "tcnn_inception",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcnn" => Ok(Architecture::Tcnn),
            "tcnn_inception" | "tcnn-inception" => Ok(Architecture::TcnnInception),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected tcnn or tcnn_inception)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Applied by the loss / prediction step; the layer itself emits logits.
    Softmax,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerKind {
    Conv2d(ConvGeometry),
    GlobalAvgPool,
    Flatten,
    Dense { inputs: usize, outputs: usize },
    Concat,
    BatchNorm { channels: usize },
}

/// Where a layer reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Input,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    pub inputs: Vec<Source>,
}

/// Declared shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LayerSpec {
    pub fn params(&self) -> Vec<ParamSpec> {
        let p = |name, shape: Vec<usize>, trainable| ParamSpec {
            name,
            shape,
            trainable,
        };
        match self.kind {
            LayerKind::Conv2d(g) => vec![
                p("kernel", g.weight_shape().to_vec(), true),
                p("bias", vec![g.out_channels], true),
            ],
            LayerKind::Dense { inputs, outputs } => {
                vec![
                    p("kernel", vec![inputs, outputs], true),
                    p("bias", vec![outputs], true),
                ]
            }
            LayerKind::BatchNorm { channels } => vec![
                p("gamma", vec![channels], true),
                p("beta", vec![channels], true),
                p("moving_mean", vec![channels], false),
                p("moving_variance", vec![channels], false),
            ],
            LayerKind::GlobalAvgPool | LayerKind::Flatten | LayerKind::Concat => Vec::new(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self.kind {
            LayerKind::Conv2d(_) => "Conv2D",
            LayerKind::GlobalAvgPool => "AvgPool2D",
            LayerKind::Flatten => "Flatten",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::Concat => "Concatenation",
            LayerKind::BatchNorm { .. } => "BatchNorm",
        }
    }
}

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureShape {
    Map {
        height: usize,
        width: usize,
        channels: usize,
    },
    Vector(usize),
}

impl FeatureShape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            FeatureShape::Map {
                height,
                width,
                channels,
            } => vec![height, width, channels],
            FeatureShape::Vector(d) => vec![d],
        }
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for FeatureShape {
    /// Maps print as `width×height×channels`, the convention of the
    /// architecture tables.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FeatureShape::Map {
                height,
                width,
                channels,
            } => write!(f, "{width}×{height}×{channels}"),
            FeatureShape::Vector(d) => write!(f, "{d}"),
        }
    }
}

/// Immutable layer graph. Layers appear in a topological order: every input
/// reference points at an earlier layer or the network input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: Architecture,
    /// `(height, width, channels)`.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

pub const NUM_CLASSES: usize = 2;

impl NetworkSpec {
    /// The same graph with a different input resolution.
    pub fn with_input_size(mut self, height: usize, width: usize) -> Self {
        self.input_shape[0] = height;
        self.input_shape[1] = width;
        self
    }

    pub fn input_feature_shape(&self) -> FeatureShape {
        let [height, width, channels] = self.input_shape;
        FeatureShape::Map {
            height,
            width,
            channels,
        }
    }

    /// Propagates shapes symbolically through every layer, checking the graph.
    pub fn shape_trace(&self) -> Result<Vec<FeatureShape>> {
        self.check_graph()?;
        let mut shapes: Vec<FeatureShape> = Vec::with_capacity(self.layers.len());
        let input = self.input_feature_shape();
        for (i, layer) in self.layers.iter().enumerate() {
            let srcs: Vec<FeatureShape> = layer
                .inputs
                .iter()
                .map(|s| match *s {
                    Source::Input => input,
                    Source::Layer(j) => shapes[j],
                })
                .collect();
            let bad = |why: String| {
                Error::Network(format!("layer {} ({}): {why}", i + 1, layer.type_name()))
            };
            let single = || {
                if srcs.len() == 1 {
                    Ok(srcs[0])
                } else {
                    Err(bad(format!("expects one input, has {}", srcs.len())))
                }
            };
            let out = match layer.kind {
                LayerKind::Conv2d(g) => match single()? {
                    FeatureShape::Map {
                        height,
                        width,
                        channels,
                    } => {
                        if channels != g.in_channels {
                            return Err(bad(format!(
                                "input has {channels} channels, kernel expects {}",
                                g.in_channels
                            )));
                        }
                        let o = g.output(height, width).map_err(|e| bad(e.to_string()))?;
                        FeatureShape::Map {
                            height: o.height,
                            width: o.width,
                            channels: g.out_channels,
                        }
                    }
                    other => return Err(bad(format!("convolution over non-map input {other}"))),
                },
                LayerKind::GlobalAvgPool => match single()? {
                    FeatureShape::Map {
                        height,
                        width,
                        channels,
                    } if height > 0 && width > 0 => FeatureShape::Map {
                        height: 1,
                        width: 1,
                        channels,
                    },
                    other => return Err(bad(format!("pooling over {other}"))),
                },
                LayerKind::Flatten => FeatureShape::Vector(single()?.len()),
                LayerKind::Dense { inputs, outputs } => match single()? {
                    FeatureShape::Vector(d) if d == inputs => FeatureShape::Vector(outputs),
                    other => {
                        return Err(bad(format!("dense expects a {inputs}-vector, got {other}")))
                    }
                },
                LayerKind::Concat => {
                    let mut total = 0;
                    let mut hw = None;
                    for s in &srcs {
                        match *s {
                            FeatureShape::Map {
                                height,
                                width,
                                channels,
                            } => {
                                if hw.is_some_and(|v| v != (height, width)) {
                                    return Err(bad("spatial extents differ".into()));
                                }
                                hw = Some((height, width));
                                total += channels;
                            }
                            FeatureShape::Vector(_) => {
                                return Err(bad("concatenating vectors".into()))
                            }
                        }
                    }
                    let (height, width) = hw.expect("concat has inputs");
                    FeatureShape::Map {
                        height,
                        width,
                        channels: total,
                    }
                }
                LayerKind::BatchNorm { channels } => match single()? {
                    s @ FeatureShape::Map { channels: c, .. } if c == channels => s,
                    other => {
                        return Err(bad(format!(
                            "batch norm over {channels} channels got {other}"
                        )))
                    }
                },
            };
            shapes.push(out);
        }
        match shapes.last() {
            Some(FeatureShape::Vector(NUM_CLASSES)) => Ok(shapes),
            other => Err(Error::Network(format!(
                "terminal output must be a {NUM_CLASSES}-vector, got {other:?}"
            ))),
        }
    }

    fn check_graph(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Network("no layers".into()));
        }
        let mut softmax = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.inputs.is_empty() {
                return Err(Error::Network(format!("layer {} has no inputs", i + 1)));
            }
            for s in &layer.inputs {
                if let Source::Layer(j) = *s {
                    if j >= i {
                        return Err(Error::Network(format!(
                            "layer {} reads layer {} which does not precede it",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
            if layer.kind == LayerKind::Concat && layer.inputs.len() < 2 {
                return Err(Error::Network(format!(
                    "concat layer {} needs >= 2 inputs",
                    i + 1
                )));
            }
            if layer.activation == Activation::Softmax {
                softmax += 1;
                if i + 1 != self.layers.len() {
                    return Err(Error::Network(
                        "softmax is only allowed on the terminal layer".into(),
                    ));
                }
            }
        }
        if softmax != 1 {
            return Err(Error::Network(
                "exactly one terminal softmax layer is required".into(),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_trace().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub trainable: usize,
    pub non_trainable: usize,
}

/// Trainable (weights, biases, gamma, beta) and non-trainable (running
/// statistics) element counts.
pub fn count_parameters(spec: &NetworkSpec) -> ParamCount {
    let mut count = ParamCount {
        trainable: 0,
        non_trainable: 0,
    };
    for p in spec.layers.iter().flat_map(LayerSpec::params) {
        if p.trainable {
            count.trainable += p.len();
        } else {
            count.non_trainable += p.len();
        }
    }
    count
}
