//! Training stack for graph property learners: a flexible GCN with analytic
//! gradients, the associated graph neural tangent kernel (GNTK), and greedy
//! teaching-based example selection with a curriculum schedule.
//!
//! The pieces fit together like this:
//!
//! - [`graph`] holds dense graph/dataset types, structural operators, and
//!   JSON-lines I/O.
//! - [`flexgcn`] implements the flexible GCN, whose layers aggregate features
//!   over several adjacency powers with independent weights per order, plus
//!   its explicit backward pass and checkpointing.
//! - [`gntk`] computes the tangent kernel `K(G, G') = <df/dtheta(G), df/dtheta(G')>`
//!   and its drift between checkpoints.
//! - [`teaching`] scores residuals and selects batches (`B`) or graphs within
//!   batches (`S`), driven by a widening curriculum schedule.
//! - [`trainer`] runs seeded gradient-descent training with plateau LR
//!   scheduling, selection hooks, metrics, and CSV/JSON logging.
//! - [`synth`] samples graphon random graphs and labels them with a fixed
//!   teacher network to build synthetic regression/classification datasets.
//! - [`cli`] and [`config`] expose all of it as the `grant` binary.
//!
//! See the crate examples for runnable entry points into each capability.

pub mod cli;
pub mod config;
pub mod error;
pub mod flexgcn;
pub mod gntk;
pub mod graph;
pub mod metrics;
pub mod synth;
pub mod teaching;
pub mod trainer;

pub use error::{Error, Result};
pub use flexgcn::{GcnParams, LayerSpec, Output, Pooling};
pub use graph::{Dataset, Graph, Level, Target, TaskKind};
pub use gntk::KernelMatrix;
pub use teaching::{CurriculumSchedule, SelectionPolicy, Variant};
pub use trainer::{LossKind, TrainerConfig, TrainingLog};
