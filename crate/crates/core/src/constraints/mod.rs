//! Spatiotemporal validity rules over trajectories.
//!
//! Every rule has two forms that agree on which steps are violated: a
//! boolean indicator used for scoring, and a hinge penalty that is positive
//! exactly where the indicator fires and is differentiable on a [`Tape`].
//!
//! [`Tape`]: crate::autodiff::Tape

mod expr;
mod kinematics;
mod penalty;

pub use expr::{
    behavior_hinge, physics_hinge, region_distance, violation_score, ConstraintDoc, ConstraintExpr, Indicator, Leaf, Rect,
    TurnSign, UTurnForm, SCHEMA_VERSION,
};
pub use kinematics::{cosine, kinematics, Kinematics, SECONDS_PER_HOUR};

/// Speed above which sharp turns are implausible for a car, km/h.
pub const DEFAULT_SPEED_KMH: f64 = 60.0;
/// cos(120 deg): turns sharper than this count as sharp.
pub const DEFAULT_SHARP_COS: f64 = -0.5;
/// cos(150 deg): a near reversal.
pub const DEFAULT_UTURN_COS: f64 = -0.866_025_403_784_438_6;
