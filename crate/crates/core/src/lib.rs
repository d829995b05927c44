//! Weakly supervised object-detection labels for camera-trap bursts.
//!
//! Motion between the frames of a burst localizes the animal, the
//! ecologist's image-level class label decides whether the box is kept, and
//! the result is exported as COCO for any detector trainer. A synthetic
//! digit-cloud testbed and synthetic bursts with exact ground truth support
//! validation without field data.

pub mod annotator;
pub mod components;
pub mod dataset_io;
pub mod error;
pub mod evaluator;
pub mod image;
pub mod localizer;
pub mod morphology;
pub mod pipeline;
pub mod synthetic;
pub mod testbed;

pub use error::{Error, Result};
pub use image::{
    box_iou, to_grayscale, BinaryMask, BoundingBox, BurstSequence, FloatMap, Frame, ImageBuffer,
};
