//! Pipeline wiring for the command-line tool.

mod commands;
mod config;

pub use commands::{
    cmd_evaluate, cmd_separate, cmd_synth, cmd_train, history_csv, load_sources, prepare,
    synth_sources, IcaRunInfo, MetricReport, PreparedData, Segment, SeparateOutput, SynthOutput,
    TrainOutput, SOURCE_NAMES,
};
pub use config::{
    EvalSegment, IcaSettings, ImpulseSpec, Method, NoiseSpec, RunConfig, SourceConfig,
};
