//! Plain-text file formats: TUM trajectories, ASCII PLY clouds and scan logs.

pub mod ply;
pub mod scan_log;
pub mod tum;

pub use ply::{read_ply, write_ply};
pub use scan_log::{read_scan_log, write_scan_log, ScanLogHeader};
pub use tum::{format_tum_line, parse_tum_line, read_tum, write_tum};
