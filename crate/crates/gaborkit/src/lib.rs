//! Desk-scale toolkit for inline (Gabor) holography.
//!
//! The crate covers the full pipeline from physics to learned rendering:
//!
//! * [`wavefield`]: scalar-wave angular-spectrum propagation on square
//!   power-of-two grids, with band-limited transfer functions and magnitude
//!   rectification.
//! * [`synth`]: deterministic synthesis of training triplets
//!   (generating image, interferogram, magnitude hologram) and on-disk
//!   dataset layout (16-bit PGM files plus a JSON manifest).
//! * [`tensor`], [`layers`], [`unet`]: a from-scratch convolutional
//!   auto-encoder with hand-written forward and backward passes, verified
//!   against central finite differences.
//! * [`trainer`]: the training/validation loop, loss history, and
//!   checkpointing.
//! * [`cli`]: the `gaborkit` command-line front end (`gen`, `train`,
//!   `reconstruct`, `predict`, `eval`).
//!
//! All numerics are 64-bit and deterministic: fixed seeds reproduce datasets,
//! training trajectories, and output files byte for byte. The accompanying
//! guide in `book/` walks through the concepts chapter by chapter; its code
//! snippets compile and run as part of this crate's doctests.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod layers;
pub mod pgm;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod unet;
pub mod wavefield;

pub use error::{Error, Result};
pub use wavefield::{ComplexField, PropagationParams, RealImage};

// The book's code snippets double as doctests so the guide cannot drift out
// of sync with the library.
#[cfg(any())] // book chapters not written yet
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(dead_code)]
            struct $name;
        };
    }

    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Propagation, "../../../book/src/propagation.md");
    chapter!(SyntheticData, "../../../book/src/synthetic-data.md");
    chapter!(Network, "../../../book/src/network.md");
    chapter!(Training, "../../../book/src/training.md");
    chapter!(CommandLine, "../../../book/src/command-line.md");
    chapter!(Conventions, "../../../book/src/conventions.md");
}
