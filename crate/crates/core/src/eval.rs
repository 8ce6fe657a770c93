//! Aggregate evaluation: explanation counts per sample, distance
//! distributions against a nearest-training-neighbour baseline, and
//! transferability of explanations to a random forest.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Dataset, EncodedSample};
use crate::forest::{fit_forest, ForestError, RandomForest};
use crate::nnet::Network;
use crate::search::{find_alternatives, l2_distance, Explanation, SearchConfig, SearchError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no candidate of a different class exists")]
    NoOppositeClass,
    #[error("cannot build a distribution from an empty list")]
    EmptyInput,
    #[error("the network and the forest agree on no evaluated sample")]
    NoAgreement,
    #[error("no samples to evaluate")]
    EmptyPopulation,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Exact nearest candidate (Euclidean over the full encoded vector) whose
/// class differs from `class`. Ties keep the earliest candidate.
pub fn nearest_training_counterfactual(
    x: &[f64],
    class: usize,
    candidates: &[EncodedSample],
    classes: &[usize],
) -> Result<Neighbor> {
    let mut best: Option<Neighbor> = None;
    for (index, (c, &k)) in candidates.iter().zip(classes).enumerate() {
        if k == class {
            continue;
        }
        let distance = l2_distance(x, c);
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(Neighbor { index, distance });
        }
    }
    best.ok_or(EvalError::NoOppositeClass)
}

/// Which class assignment of the training set the baseline must differ from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineLabels {
    /// The network's predictions.
    #[default]
    Model,
    /// The dataset's recorded labels.
    GroundTruth,
}

/// Linear-interpolated quantile of sorted data (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const CDF_QUANTILES: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];

#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    /// `(value, fraction of values <= value)`, one point per observation.
    pub points: Vec<(f64, f64)>,
    /// `(q, value)` for each entry of [`CDF_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
}

impl Cdf {
    pub fn median(&self) -> f64 {
        self.quantiles[2].1
    }
}

pub fn empirical_cdf(values: &[f64]) -> Result<Cdf> {
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect();
    let quantiles = CDF_QUANTILES
        .iter()
        .map(|&q| (q, quantile(&sorted, q)))
        .collect();
    Ok(Cdf { points, quantiles })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCdf {
    pub cadex: Cdf,
    pub baseline: Cdf,
}

pub fn distance_cdf(cadex: &[f64], baseline: &[f64]) -> Result<DistanceCdf> {
    Ok(DistanceCdf {
        cadex: empirical_cdf(cadex)?,
        baseline: empirical_cdf(baseline)?,
    })
}

/// Explanation counts for one `n_change` setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionCounts {
    pub n_change: usize,
    pub per_sample: Vec<usize>,
    /// `bins[k]` = number of samples with exactly `k` explanations.
    pub bins: Vec<usize>,
}

impl SolutionCounts {
    pub fn from_counts(n_change: usize, per_sample: Vec<usize>, n_alternatives: usize) -> Self {
        let mut bins = vec![0; n_alternatives + 1];
        for &c in &per_sample {
            bins[c.min(n_alternatives)] += 1;
        }
        SolutionCounts {
            n_change,
            per_sample,
            bins,
        }
    }

    pub fn median(&self) -> f64 {
        let mut v: Vec<f64> = self.per_sample.iter().map(|&c| c as f64).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        quantile(&v, 0.5)
    }
}

/// Alternative explanations for every sample, searched in parallel.
pub fn explain_all(
    net: &Network,
    data: &Dataset,
    indices: &[usize],
    base: &SearchConfig,
    n_alternatives: usize,
) -> Result<Vec<Vec<Explanation>>> {
    indices
        .par_iter()
        .map(|&i| {
            find_alternatives(net, &data.encoder, &data.samples[i], base, n_alternatives)
                .map_err(EvalError::from)
        })
        .collect()
}

/// Explanation-count histograms for each `n_change` in `n_changes`.
pub fn solutions_histogram(
    net: &Network,
    data: &Dataset,
    indices: &[usize],
    base: &SearchConfig,
    n_changes: &[usize],
    n_alternatives: usize,
) -> Result<Vec<SolutionCounts>> {
    n_changes
        .iter()
        .map(|&n_change| {
            let cfg = SearchConfig {
                n_change,
                ..base.clone()
            };
            let found = explain_all(net, data, indices, &cfg, n_alternatives)?;
            let counts = found.iter().map(Vec::len).collect();
            Ok(SolutionCounts::from_counts(
                n_change,
                counts,
                n_alternatives,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRates {
    pub agreement_samples: usize,
    /// Fraction of agreement samples with at least one explanation the
    /// forest also assigns to the target class.
    pub at_least_one: f64,
    pub at_least_two: f64,
    /// Fraction of all explanations (over agreement samples) that transfer.
    pub all_explanations: f64,
}

/// Transfer rates of precomputed explanations against one forest.
/// `originals[i]` is a sample the network assigns to `1 - target` and
/// `explanations[i]` its counterfactuals. Only samples the forest also
/// assigns to `1 - target` count.
pub fn transfer_rates(
    forest: &RandomForest,
    originals: &[&[f64]],
    explanations: &[Vec<Explanation>],
    target: usize,
) -> Result<TransferRates> {
    let (mut agree, mut one, mut two, mut total, mut moved) =
        (0usize, 0usize, 0usize, 0usize, 0usize);
    for (x, exps) in originals.iter().zip(explanations) {
        if forest.predict(x)? == target {
            continue;
        }
        agree += 1;
        let mut k = 0;
        for e in exps {
            if forest.predict(&e.counterfactual)? == target {
                k += 1;
            }
        }
        total += exps.len();
        moved += k;
        one += usize::from(k >= 1);
        two += usize::from(k >= 2);
    }
    if agree == 0 {
        return Err(EvalError::NoAgreement);
    }
    if total == 0 {
        log::warn!("no explanations were found for any agreement sample");
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(TransferRates {
        agreement_samples: agree,
        at_least_one: frac(one, agree),
        at_least_two: frac(two, agree),
        all_explanations: frac(moved, total),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub per_seed: Vec<(u64, TransferRates)>,
    pub mean: TransferRates,
}

/// Fits `repeats` forests (seeds `seed, seed + 1, ...`) on `train` and
/// averages the transfer rates of the given explanations. Seeds on which
/// no sample agrees are skipped; if none remain the result is an error.
pub fn transferability(
    train: &Dataset,
    originals: &[&[f64]],
    explanations: &[Vec<Explanation>],
    target: usize,
    n_trees: usize,
    repeats: usize,
    seed: u64,
) -> Result<TransferReport> {
    let mut per_seed = Vec::with_capacity(repeats);
    for r in 0..repeats as u64 {
        let s = seed.wrapping_add(r);
        let forest = fit_forest(train, n_trees, s)?;
        match transfer_rates(&forest, originals, explanations, target) {
            Ok(rates) => per_seed.push((s, rates)),
            Err(EvalError::NoAgreement) => log::warn!("forest seed {s}: no agreement samples"),
            Err(e) => return Err(e),
        }
    }
    if per_seed.is_empty() {
        return Err(EvalError::NoAgreement);
    }
    let n = per_seed.len() as f64;
    let avg = |f: fn(&TransferRates) -> f64| per_seed.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
    let mean = TransferRates {
        agreement_samples: (per_seed
            .iter()
            .map(|(_, r)| r.agreement_samples)
            .sum::<usize>() as f64
            / n)
            .round() as usize,
        at_least_one: avg(|r| r.at_least_one),
        at_least_two: avg(|r| r.at_least_two),
        all_explanations: avg(|r| r.all_explanations),
    };
    Ok(TransferReport { per_seed, mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub base: SearchConfig,
    /// The first entry drives the distance and transferability analyses.
    pub n_changes: Vec<usize>,
    pub n_alternatives: usize,
    pub baseline_labels: BaselineLabels,
    pub n_trees: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl EvalSettings {
    pub fn new(base: SearchConfig) -> Self {
        EvalSettings {
            base,
            n_changes: vec![5, 7, 10],
            n_alternatives: 10,
            baseline_labels: BaselineLabels::Model,
            n_trees: 100,
            repeats: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Indices (into the evaluated dataset) of samples the network assigns
    /// to the non-target class.
    pub population: Vec<usize>,
    pub solutions: Vec<SolutionCounts>,
    /// Explanations found at the first `n_change` setting, per sample.
    pub explanations: Vec<Vec<Explanation>>,
    pub cadex_distances: Vec<f64>,
    pub baseline_distances: Vec<f64>,
    pub distances: DistanceCdf,
    pub transfer: TransferReport,
    pub settings: EvalSettings,
}

/// Full evaluation of `net` on the samples of `data` it assigns to the
/// non-target class. `train` supplies baseline neighbours and forest
/// training rows.
pub fn evaluate(
    net: &Network,
    train: &Dataset,
    data: &Dataset,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let target = settings.base.target;
    let population: Vec<usize> = (0..data.len())
        .filter(|&i| net.predict(&data.samples[i]).is_ok_and(|c| c != target))
        .collect();
    if population.is_empty() || settings.n_changes.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }

    let mut solutions = Vec::with_capacity(settings.n_changes.len());
    let mut primary = None;
    for &n_change in &settings.n_changes {
        let cfg = SearchConfig {
            n_change,
            ..settings.base.clone()
        };
        let found = explain_all(net, data, &population, &cfg, settings.n_alternatives)?;
        let counts = found.iter().map(Vec::len).collect();
        solutions.push(SolutionCounts::from_counts(
            n_change,
            counts,
            settings.n_alternatives,
        ));
        if primary.is_none() {
            primary = Some(found);
        }
    }
    let explanations = primary.expect("n_changes is non-empty");

    let train_classes: Vec<usize> = match settings.baseline_labels {
        BaselineLabels::Model => train
            .samples
            .iter()
            .map(|x| net.predict(x).expect("train width matches network"))
            .collect(),
        BaselineLabels::GroundTruth => train.labels.clone(),
    };
    let baseline_distances = population
        .par_iter()
        .map(|&i| {
            nearest_training_counterfactual(
                &data.samples[i],
                1 - target,
                &train.samples,
                &train_classes,
            )
            .map(|n| n.distance)
        })
        .collect::<Result<Vec<_>>>()?;
    let cadex_distances: Vec<f64> = explanations
        .iter()
        .flatten()
        .map(|e| e.l2_distance)
        .collect();
    let distances = distance_cdf(&cadex_distances, &baseline_distances)?;

    let originals: Vec<&[f64]> = population.iter().map(|&i| &data.samples[i][..]).collect();
    let transfer = transferability(
        train,
        &originals,
        &explanations,
        target,
        settings.n_trees,
        settings.repeats,
        settings.seed,
    )?;

    Ok(EvalReport {
        population,
        solutions,
        explanations,
        cadex_distances,
        baseline_distances,
        distances,
        transfer,
        settings: settings.clone(),
    })
}
