//! Ingestion, row-centering, and chronological train/validation/test splits.

mod ingest;
mod split;
mod timeline;

pub use ingest::{load_records, parse_records, parse_records_with, write_records, GradeRecord, Records, HEADER};
pub use split::{
    chronological_split, load_split, load_split_history, load_split_scale, save_split, Dataset, Split,
    SplitCounts, SplitWindows, TermRange, MIN_EVAL_PRIORS,
};
pub use timeline::{
    build_instances, build_timelines, row_center, Enrollment, PredictionInstance, Prior, StudentTimeline,
    TermGroup, RELATIVE_FALLBACK,
};
