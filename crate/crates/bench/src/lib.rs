//! Fixtures shared by the benchmarks: the bundled German credit data, split
//! and a trained network.

use std::path::PathBuf;
use std::sync::Arc;

use cadex::{init_network, load_dataset, load_schema, train, Dataset, Network, TrainConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub struct Fixture {
    pub train: Dataset,
    pub validation: Dataset,
    pub net: Network,
}

pub fn german_fixture(seed: u64) -> Fixture {
    let dir = data_dir();
    let schema = Arc::new(load_schema(dir.join("german.schema.toml")).expect("schema"));
    let all = load_dataset(dir.join("german.data"), schema).expect("data");
    let (train_set, validation) = all.split(0.8, seed).expect("split");
    let mut net = init_network(train_set.width(), 15, seed).expect("network");
    train(&mut net, &train_set, &validation, &TrainConfig::default()).expect("training");
    Fixture {
        train: train_set,
        validation,
        net,
    }
}
