//! Episodic meta-dataset curation across language-transfer modes.

mod sample;
mod types;

pub use sample::{
    load_meta_dataset, save_meta_dataset, select_queries, substream_seed, PhaseCounts,
    QuerySampling, SamplingConfig, TaskSampler,
};
pub use types::{
    default_pair_roster, default_retrieval_roster, item_conforms, ArrangementKind,
    LanguageArrangement, MetaDataset, MetaTask, Phase, Roster, TaskArrangement, TaskItem, TaskSet,
    TransferMode,
};
