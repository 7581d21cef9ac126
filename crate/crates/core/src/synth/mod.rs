//! Procedural signature corpora for desk-scale experiments.

mod corpus;
mod render;
mod template;

pub use corpus::{gen_corpus, render_writer, CorpusSpec, CorpusSummary, WriterSamples, GENERATOR_VERSION, META_FILE};
pub use render::{ink_fraction, render_sample, MIN_SIDE};
pub use template::{gen_writer, gen_writer_with, Stroke, StrokeStyle, Unsteadiness, WriterTemplate};
