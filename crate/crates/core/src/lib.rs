//! Video dataset distillation against a frozen teacher, with a temporal
//! saliency filter that protects motion-bearing frames.
//!
//! The pipeline has four stages, each a module:
//!
//! - [`datasets`] generates the toy video dataset and stores splits and
//!   distilled sets;
//! - [`distiller`] trains the teacher and optimizes synthetic videos against it;
//! - [`saliency`] computes per-frame saliency, update masks and gated
//!   augmentation;
//! - [`eval`] trains students on distilled sets and runs ablations.
//!
//! [`pipeline::Pipeline`] chains them over a run directory, and [`tensor`]
//! supplies the autodiff they are built on. The guide in `book/` walks
//! through each stage; its listings run as doctests.
//!
//! ```
//! use tsgf::saliency::{build_mask, frame_differences, smooth_saliency, EpsilonRule, WindowSpec};
//! use tsgf::Video;
//!
//! let v = Video::new([4, 1, 1, 1], vec![0.0, 1.0, 3.0, 3.0]).unwrap();
//! let s = smooth_saliency(&frame_differences(&v), &WindowSpec::uniform(1));
//! let (mask, eps) = build_mask(&s, &EpsilonRule::Quantile(0.8));
//! assert_eq!(eps, 1.25);
//! assert_eq!(mask[1], 0.0); // the busiest frames do not move
//! ```

pub mod config;
pub mod datasets;
pub mod distiller;
pub mod error;
pub mod eval;
pub mod models;
pub mod optim;
pub mod pipeline;
pub mod saliency;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use video::Video;

// The guide's listings are compiled and run with the other doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    pub mod tensors {}
    #[doc = include_str!("../../../book/src/toy-data.md")]
    pub mod toy_data {}
    #[doc = include_str!("../../../book/src/saliency.md")]
    pub mod saliency {}
    #[doc = include_str!("../../../book/src/distillation.md")]
    pub mod distillation {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    pub mod augmentation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/runs.md")]
    pub mod runs {}
}
