//! Latent projection, per-level codebooks, quantization and loss values.

mod codebook;
mod io;
mod lattice;
mod loss;
mod projection;

pub use codebook::{
    nearest, quantize, quantize_batch, train_codebook, train_codebook_report, Codebook, Quantized, TrainMode,
    TrainReport,
};
pub use io::{load_codebook, load_matrix, save_codebook, save_matrix, CodebookMeta};
pub use lattice::{Lattice, LatticeCodec, LevelBook};
pub use loss::{compute_losses, cross_entropy, FeatureRecord, LossReport, CE_CLAMP, W_CE, W_CLOSURE, W_MSE};
pub use projection::{project, Projection, DEFAULT_LATENT};

use crate::canonize::{CC_DIM, EB_DIM, SP_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Eb,
    Sp,
    Cc,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Eb, Level::Sp, Level::Cc];

    pub fn raw_dim(self) -> usize {
        match self {
            Level::Eb => EB_DIM,
            Level::Sp => SP_DIM,
            Level::Cc => CC_DIM,
        }
    }

    /// Width of the one-hot type slot at the end of the raw feature.
    pub fn type_dim(self) -> usize {
        match self {
            Level::Eb | Level::Cc => 3,
            Level::Sp => 0,
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Level::Eb => 0,
            Level::Sp => 1,
            Level::Cc => 2,
        }
    }

    pub fn from_tag(t: u32) -> Option<Self> {
        Level::ALL.get(t as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Eb => "eb",
            Level::Sp => "sp",
            Level::Cc => "cc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Level::ALL.into_iter().find(|l| l.as_str().eq_ignore_ascii_case(s))
    }
}
