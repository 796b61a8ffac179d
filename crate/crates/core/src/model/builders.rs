use crate::engine::{ConvGeometry, Padding};

use super::spec::{
    Activation, Architecture, LayerKind, LayerSpec, NetworkSpec, Source, NUM_CLASSES,
};

/// Height × width × channels of the network input (half of the 460×700 scans).
pub const INPUT_SHAPE: [usize; 3] = [230, 350, 3];

fn conv(kernel: usize, cin: usize, cout: usize, padding: Padding, from: Source) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::Conv2d(ConvGeometry::square(kernel, cin, cout, padding)),
        activation: Activation::Relu,
        inputs: vec![from],
    }
}

fn dense(inputs: usize, outputs: usize, activation: Activation, from: usize) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::Dense { inputs, outputs },
        activation,
        inputs: vec![Source::Layer(from)],
    }
}

fn plain(kind: LayerKind, inputs: Vec<Source>) -> LayerSpec {
    LayerSpec {
        kind,
        activation: Activation::None,
        inputs,
    }
}

/// Two valid 3×3 convolutions, whole-map average pooling and a 32-16-2 head.
pub fn build_tcnn() -> NetworkSpec {
    let layers = vec![
        conv(3, 3, 32, Padding::Valid, Source::Input),
        conv(3, 32, 32, Padding::Valid, Source::Layer(0)),
        plain(LayerKind::GlobalAvgPool, vec![Source::Layer(1)]),
        plain(LayerKind::Flatten, vec![Source::Layer(2)]),
        dense(32, 32, Activation::Relu, 3),
        dense(32, 16, Activation::Relu, 4),
        dense(16, NUM_CLASSES, Activation::Softmax, 5),
    ];
    NetworkSpec {
        name: Architecture::Tcnn,
        input_shape: INPUT_SHAPE,
        layers,
    }
}

/// Three blocks of parallel 1×1 / 3×3 / 5×5 same-padded convolutions (32, 64
/// and 128 filters per branch) joined by concatenation, a 1×1 projection to
/// 256 channels with batch norm, whole-map pooling and a 256-32-2 head.
pub fn build_tcnn_inception() -> NetworkSpec {
    let mut layers = Vec::with_capacity(19);
    let mut source = Source::Input;
    let mut channels = INPUT_SHAPE[2];
    for filters in [32, 64, 128] {
        let first = layers.len();
        for kernel in [1, 3, 5] {
            layers.push(conv(kernel, channels, filters, Padding::Same, source));
        }
        layers.push(plain(
            LayerKind::Concat,
            (first..first + 3).map(Source::Layer).collect(),
        ));
        source = Source::Layer(layers.len() - 1);
        channels = 3 * filters;
    }
    layers.push(conv(1, channels, 256, Padding::Same, source));
    let projection = layers.len() - 1;
    layers.push(plain(
        LayerKind::BatchNorm { channels: 256 },
        vec![Source::Layer(projection)],
    ));
    layers.push(plain(
        LayerKind::GlobalAvgPool,
        vec![Source::Layer(projection + 1)],
    ));
    layers.push(plain(
        LayerKind::Flatten,
        vec![Source::Layer(projection + 2)],
    ));
    let flat = layers.len() - 1;
    layers.push(dense(256, 256, Activation::Relu, flat));
    layers.push(dense(256, 32, Activation::Relu, flat + 1));
    layers.push(dense(32, NUM_CLASSES, Activation::Softmax, flat + 2));
    NetworkSpec {
        name: Architecture::TcnnInception,
        input_shape: INPUT_SHAPE,
        layers,
    }
}

pub fn build(arch: Architecture) -> NetworkSpec {
    match arch {
        Architecture::Tcnn => build_tcnn(),
        Architecture::TcnnInception => build_tcnn_inception(),
    }
}
