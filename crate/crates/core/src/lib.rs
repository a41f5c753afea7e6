//! Mask calibration for panoptic pseudo labels.
//!
//! The crate covers the data model for pseudo masks and panoptic labels,
//! SLIC superpixels, hierarchical mask calibration (region, superpixel and
//! pixel stages), panoptic-quality evaluation, a synthetic scene generator
//! and a small self-training loop used for ablations.

pub mod adapt;
pub mod error;
pub mod grid;
pub mod hmc;
pub mod io;
pub mod metrics;
pub mod superpixel;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use hmc::{CalibratedMask, HmcConfig, Stage, StageOrder};
pub use metrics::{PqReport, PqStats};
pub use superpixel::{SlicConfig, SuperpixelMap};
pub use types::{
    BinaryMask, CategoryDistribution, CentroidStore, FeatureMap, PanopticLabel, PseudoMask,
    PseudoMaskSet,
};
