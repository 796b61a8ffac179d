//! The two texture-CNN architectures: declaration, parameters, execution and
//! checkpoint files.

mod builders;
pub mod checkpoint;
mod network;
mod params;
mod spec;

#[cfg(test)]
mod gradcheck_tests;

pub use builders::{build, build_tcnn, build_tcnn_inception, INPUT_SHAPE};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use network::{apply_running_stats, backward, forward, ForwardPass};
pub use params::{glorot_limit, init_parameters, Param, ParameterStore};
pub use spec::{
    count_parameters, Activation, Architecture, FeatureShape, LayerKind, LayerSpec, NetworkSpec,
    ParamCount, ParamSpec, Source, NUM_CLASSES,
};
