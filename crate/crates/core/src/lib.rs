//! Z-net prostate segmentation engine.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`tensor`]: rank-4 tensors and hand-written forward/backward kernels.
//! * [`model`]: Z-blocks, decoder Z-blocks, the assembled Z-net, a U-net
//!   baseline, parameter storage and checkpoints.
//! * [`loss`], [`optim`], [`train`]: soft Dice loss, Adam, the mini-batch
//!   loop and thresholded prediction.
//! * [`preprocess`]: MetaImage volumes, CLAHE, normalization, the three
//!   uniform-size methods, augmentation and synthetic phantoms.
//! * [`metrics`]: vDSC, Hausdorff distance, RAVD and the resize simulation.
//! * [`pipeline`]: the end-to-end commands behind the `znet` binary.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

pub mod error;
pub mod kv;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Shape4, Tensor4};

// The guide's listings, compiled and run by `cargo test --doc`. One module
// per chapter so a failing listing is easy to place.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/znet.md")]
    mod znet {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
