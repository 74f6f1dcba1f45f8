//! Losses, discriminator and the alternating training loop.

mod checkpoint;
mod config;
mod discriminator;
pub mod losses;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{NegativeMode, Pretext, TrainConfig};
pub use discriminator::{Discriminator, DiscriminatorParams};
pub use trainer::{
    baseline_representations, extract_representations, generator_loss, train, train_baseline,
    DiscSamples, DytedModel, GeneratorStep, GeneratorTerms, History, HistoryRow,
    IterationSamples, PretextBatches, Trainer,
};
