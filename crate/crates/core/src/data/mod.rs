//! Click-log ingestion, preprocessing, example construction, splits and
//! popularity statistics.

mod batches;
mod catalog;
mod events;
mod examples;
mod format;
mod preprocess;
mod split;
pub mod synthetic;

pub use batches::BatchStream;
pub use catalog::{popular_set_size, ItemCatalog};
pub use events::{load_events, read_events, EventLog, EventRecord, EventType, FormatDescriptor};
pub use examples::{
    make_examples, make_examples_for, padded_window, session_examples, TrainingExample, SEQ_LEN,
};
pub use format::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC};
pub use preprocess::{item_counts, preprocess, DatasetStats, PreprocessRules, SessionDataset, PAD};
pub use split::{split, Fold, SplitSet};
