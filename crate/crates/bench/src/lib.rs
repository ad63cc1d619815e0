//! Seeded comparative studies over training settings and online schemes,
//! with CSV/JSON reports.

pub mod metrics;
pub mod report;
pub mod study;

pub use metrics::{mean_std, path_stress_error, stress_error};
pub use report::{Aggregate, CellResult, StudyReport, REPORT_COLUMNS, REPORT_COLUMNS_LEN};
pub use study::{default_scheme, run_study, StudyConfig, StudyKind, TeacherConfig};
