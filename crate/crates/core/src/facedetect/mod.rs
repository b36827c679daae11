//! Viola-Jones face detection over OpenCV Haar cascades.

pub mod cascade;
mod detect;
pub mod integral;

pub use cascade::{parse_cascade, Cascade, CascadeStage, DecisionTree, HaarFeature, HaarRect};
pub use detect::{crop_box, crop_largest_face, detect, group_boxes, largest, raw_detections, DetectParams, FaceBox};
pub use integral::IntegralImages;
