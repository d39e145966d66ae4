//! Keyframes, loop closure and pose-graph optimization.

pub mod graph;
pub mod keyframe;
pub mod loop_closure;
pub mod slam;

pub use graph::{
    isotropic_information, read_graph, write_graph, Factor, FactorKind, OptimizeReport, OptimizerParams, PoseGraph,
};
pub use keyframe::{select_keyframe, Keyframe, KeyframeParams};
pub use loop_closure::{build_submap, detect_candidates, loop_factor, verify_loop, LoopParams, LoopVerification};
pub use slam::{correct_trajectory, run_slam, LoopAttempt, Slam, SlamOutput, SlamParams};
