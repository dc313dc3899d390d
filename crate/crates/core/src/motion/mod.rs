//! Geometric and numeric primitives: poses, quaternions, resampling,
//! windowing, canonical flattening and z-score statistics.

mod frame;
mod quat;
mod resample;
mod stats;
mod window;

pub use frame::{
    column, column_name, quaternion_columns, MotionFrame, MotionSequence, Pose, AXIS_NAMES,
    DEVICES, DEVICE_DIM, DEVICE_NAMES, FRAME_DIM,
};
pub use quat::{slerp_orientation, Quat, SLERP_LERP_THRESHOLD};
pub use resample::{interpolate_frame, lerp_position, resample, TARGET_FPS};
pub use stats::{zscore_apply, zscore_fit, zscore_invert, DimensionStats, STD_FLOOR};
pub use window::{
    select_columns, select_features, sequence_to_array, window, FeatureSubset, NormalizedWindow,
    ShortPolicy, WINDOW_FRAMES,
};
