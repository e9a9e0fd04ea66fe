//! Part mobility extraction from a single static point cloud.
//!
//! The pipeline proposes candidate motion parts and candidate motion axes,
//! scores their combinations by how well moving the part preserves its contact
//! with the rest of the shape, refines the best combinations, and finally
//! suppresses duplicates into a set of [`Mobility`] values.

pub mod attrprop;
pub mod bench;
pub mod cloud;
pub mod error;
pub mod extract;
pub mod kinematics;
pub mod matching;
pub mod partprop;
pub mod pipeline;
pub mod refine;
pub mod spatial;

pub use cloud::{bbox_diagonal, PointCloud, Vec3};
pub use error::{Error, Result};
pub use kinematics::{
    axis_point_distance, mobility_to_flow, move_field, move_vector, transform_about_axis, AxisLine,
    Mobility, MotionAmount, MotionAxis, MotionFlow, MotionType, MoveAmounts,
};
