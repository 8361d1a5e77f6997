use alloc::string::String;
use alloc::vec::Vec;

use super::{group_bags, Bag, Corpus, Encoder, LoadReport, PreparedBag, RawRecord, TypeInventory};
use crate::config::CorpusConfig;
use crate::error::Result;

/// Train and test splits encoded against tables built from the training split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub corpus: Corpus,
    pub train_bags: Vec<Bag>,
    pub test_bags: Vec<Bag>,
    pub train: Vec<PreparedBag>,
    pub test: Vec<PreparedBag>,
    pub train_report: LoadReport,
    pub test_report: LoadReport,
}

impl Dataset {
    /// Records are `(line, record)`; `types` maps entity ids to raw mentions.
    pub fn build(
        train: impl IntoIterator<Item = (usize, RawRecord)>,
        test: impl IntoIterator<Item = (usize, RawRecord)>,
        types: impl IntoIterator<Item = (String, Vec<String>)>,
        config: &CorpusConfig,
        levels: usize,
        max_distance: usize,
    ) -> Result<Self> {
        let mut inventory = TypeInventory::new(config.types_per_entity);
        for (id, mentions) in types {
            inventory.insert(&id, &mentions);
        }
        let train: Vec<(usize, RawRecord)> = train.into_iter().collect();
        let test: Vec<(usize, RawRecord)> = test.into_iter().collect();
        let (train_records, test_records) = (train.len(), test.len());
        let (train_bags, train_rejected) = group_bags(train, levels);
        let (test_bags, test_rejected) = group_bags(test, levels);
        let corpus = Corpus::build(&train_bags, inventory, config, levels)?;
        let (test_bags, unknown) = corpus.retain_known(test_bags);
        let train_report = LoadReport {
            records: train_records,
            rejected: train_rejected,
            bags: train_bags.len(),
            untyped_entities: corpus.untyped(&train_bags),
            unknown_relation_bags: 0,
        };
        let test_report = LoadReport {
            records: test_records,
            rejected: test_rejected,
            bags: test_bags.len(),
            untyped_entities: corpus.untyped(&test_bags),
            unknown_relation_bags: unknown,
        };
        let encoder = Encoder::new(&corpus, max_distance);
        let train_prepared = encoder.bags(&train_bags)?;
        let test_prepared = encoder.bags(&test_bags)?;
        Ok(Dataset {
            corpus,
            train_bags,
            test_bags,
            train: train_prepared,
            test: test_prepared,
            train_report,
            test_report,
        })
    }
}
