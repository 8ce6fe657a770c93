#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use cadex::data::Schema;
use cadex::{init_network, load_dataset, load_schema, train, Dataset, Network, TrainConfig};

pub const SEED: u64 = 42;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn german_schema() -> Arc<Schema> {
    Arc::new(load_schema(data_dir().join("german.schema.toml")).unwrap())
}

pub fn german_raw() -> Dataset {
    load_dataset(data_dir().join("german.data"), german_schema()).unwrap()
}

pub struct Trained {
    pub train: Dataset,
    pub validation: Dataset,
    pub net: Network,
}

/// German credit split and trained network for `SEED`, built once per test
/// binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let (tr, va) = german_raw().split(0.8, SEED).unwrap();
        let mut net = init_network(tr.width(), 15, SEED).unwrap();
        train(&mut net, &tr, &va, &TrainConfig::default()).unwrap();
        Trained {
            train: tr,
            validation: va,
            net,
        }
    })
}

/// Validation samples the network rejects (class 1).
pub fn refused(t: &Trained) -> Vec<usize> {
    (0..t.validation.len())
        .filter(|&i| t.net.predict(&t.validation.samples[i]).unwrap() == 1)
        .collect()
}
