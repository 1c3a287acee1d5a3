//! Training harness: optimizer, training loop, evaluation, checkpoints,
//! gradient checking, trace export and ablation runs.

pub mod ablation;
pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod trace;
pub mod trainer;

pub use ablation::{run_ablation, AblationResult};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{Adam, AdamSettings};
pub use trace::{trace_dump, TraceDocument};
pub use trainer::{check_compatible, evaluate, sample_gradients, train, EpochRecord, EvalReport, TrainOutcome, Trainer};
