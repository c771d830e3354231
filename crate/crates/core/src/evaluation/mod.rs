//! Speaker-independent splits, accuracy and confusion matrices.

mod metrics;
mod split;

pub use metrics::{accuracy, ConfusionMatrix};
pub use split::{
    build_split, subject_number, Protocol, SplitPart, SplitSpec, CUAVE_SUBJECTS, CUAVE_TRAIN_SUBJECTS,
    OULUVS2_SUBJECTS, OULUVS2_TEST_SUBJECTS, OULUVS2_TRAIN_SUBJECTS,
};
