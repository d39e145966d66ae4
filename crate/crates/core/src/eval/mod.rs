//! Trajectory metrics, reports and dense map export.

pub mod map;
pub mod report;
pub mod trajectory;

pub use map::{dense_map, export_dense_map};
pub use report::{evaluate_trajectory, format_summary, read_report_csv, write_report_csv, TrajectoryReport};
pub use trajectory::{
    align_first_k, ate_rmse, fit_first_k, match_by_stamp, revisitation_error, ALIGN_POSES, STAMP_TOLERANCE,
};
