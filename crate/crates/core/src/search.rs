//! Constrained counterfactual search by masked gradient descent in input
//! space.
//!
//! Starting from a sample the model assigns to one class, the search follows
//! the gradient of the cross-entropy towards the other class. The gradient is
//! masked so that only a handful of columns (picked once from the initial
//! gradient) may move, and never in a direction forbidden by the
//! per-column constraint vector. After every step, one-hot sets whose
//! runner-up category has grown past a threshold are flipped, and the
//! stopping test is made on a projected copy with exact one-hots and
//! integral ordinals.

use thiserror::Error;

use crate::data::{DataError, EncodedSample, Encoder, Schema};
use crate::nnet::{AdamParams, AdamState, NetError, Network};

/// Columns whose counterfactual value differs from the original by more than
/// this count as changed.
pub const CHANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("sample is already classified as the target class")]
    AlreadyTarget,
    #[error("no column may move in an allowed direction")]
    NoDescentDirection,
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    InvalidSample(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub target: usize,
    pub max_epochs: usize,
    pub n_change: usize,
    pub n_skip: usize,
    pub t_flip: f64,
    /// Encoded-width constraint vector: >0 may only increase, <0 may only
    /// decrease, 0 is free.
    pub direction: Vec<f64>,
    pub adam: AdamParams,
}

impl SearchConfig {
    /// Defaults for a schema: 1000 epochs, five columns, no skip,
    /// flip threshold 0.2, Adam with step 0.05.
    pub fn for_schema(schema: &Schema, target: usize) -> Self {
        SearchConfig {
            target,
            max_epochs: 1000,
            n_change: 5,
            n_skip: 0,
            t_flip: 0.2,
            direction: schema.expand_direction(),
            adam: AdamParams::with_learning_rate(0.05),
        }
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.target > 1 {
            return bad(format!("target class {} out of range", self.target));
        }
        if self.n_change == 0 {
            return bad("n_change must be >= 1".into());
        }
        if self.n_skip + self.n_change > width {
            return bad(format!(
                "n_skip + n_change = {} exceeds input width {width}",
                self.n_skip + self.n_change
            ));
        }
        if !(self.t_flip > 0.0 && self.t_flip < 1.0) {
            return bad(format!("t_flip must lie in (0, 1), got {}", self.t_flip));
        }
        if self.direction.len() != width {
            return Err(SearchError::DimensionMismatch {
                expected: width,
                got: self.direction.len(),
            });
        }
        Ok(())
    }
}

/// One attribute that differs between original and counterfactual, rendered
/// with the schema's display labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeChange {
    pub attribute: String,
    pub original: String,
    pub counterfactual: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub counterfactual: EncodedSample,
    /// Encoded columns that moved by more than [`CHANGE_TOLERANCE`].
    pub changed_columns: Vec<usize>,
    pub epochs_used: usize,
    pub l2_distance: f64,
    pub n_skip: usize,
    pub decoded_diff: Vec<AttributeChange>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found(Explanation),
    NotFound { epochs: usize },
}

impl SearchOutcome {
    pub fn explanation(self) -> Option<Explanation> {
        match self {
            SearchOutcome::Found(e) => Some(e),
            SearchOutcome::NotFound { .. } => None,
        }
    }
}

fn check_width(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SearchError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// 1 where gradient descent would move the column in a permitted direction
/// (or the column is unconstrained), 0 where it would violate the
/// constraint. Descent subtracts the gradient, so a column that may only
/// increase is blocked whenever its gradient is positive.
pub fn directional_mask(gradient: &[f64], direction: &[f64]) -> Result<Vec<f64>> {
    check_width(direction.len(), gradient.len())?;
    Ok(gradient
        .iter()
        .zip(direction)
        .map(|(&g, &c)| {
            let blocked = (c > 0.0 && g > 0.0) || (c < 0.0 && g < 0.0);
            if blocked {
                0.0
            } else {
                1.0
            }
        })
        .collect())
}

/// Picks the columns allowed to change: after directional masking, columns
/// are ranked by |gradient| (descending, ties by column index) and ranks
/// `n_skip .. n_skip + n_change` are kept.
pub fn selection_mask(
    gradient: &[f64],
    direction: &[f64],
    n_change: usize,
    n_skip: usize,
) -> Result<Vec<f64>> {
    let allowed = directional_mask(gradient, direction)?;
    let mut ranked: Vec<usize> = (0..gradient.len())
        .filter(|&i| allowed[i] != 0.0 && gradient[i] != 0.0)
        .collect();
    ranked.sort_by(|&a, &b| {
        gradient[b]
            .abs()
            .total_cmp(&gradient[a].abs())
            .then(a.cmp(&b))
    });
    let chosen = ranked.iter().skip(n_skip).take(n_change);
    let mut mask = vec![0.0; gradient.len()];
    let mut any = false;
    for &i in chosen {
        mask[i] = 1.0;
        any = true;
    }
    if !any {
        return Err(SearchError::NoDescentDirection);
    }
    Ok(mask)
}

/// For every one-hot set whose second-highest value exceeds `t_flip`, makes
/// that runner-up the hot category. Other columns are left alone.
pub fn flip_categorical(schema: &Schema, x: &mut [f64], t_flip: f64) {
    for set in schema.one_hot_sets() {
        let block = &mut x[set];
        let mut order: Vec<usize> = (0..block.len()).collect();
        order.sort_by(|&a, &b| block[b].total_cmp(&block[a]).then(a.cmp(&b)));
        let runner_up = order[1];
        if block[runner_up] > t_flip {
            block.iter_mut().for_each(|v| *v = 0.0);
            block[runner_up] = 1.0;
        }
    }
}

/// Projects onto valid samples: each one-hot set becomes the indicator of
/// its argmax (lowest index on ties), ordinals are rounded half away from
/// zero, numeric columns pass through.
pub fn apply_constraints(schema: &Schema, x: &[f64]) -> EncodedSample {
    let mut out = x.to_vec();
    for set in schema.one_hot_sets() {
        let block = &mut out[set];
        let hot = crate::nnet::argmax(block);
        block.iter_mut().for_each(|v| *v = 0.0);
        block[hot] = 1.0;
    }
    for j in schema.ordinal_columns() {
        out[j] = out[j].round();
    }
    EncodedSample(out)
}

pub fn changed_columns(original: &[f64], counterfactual: &[f64]) -> Vec<usize> {
    original
        .iter()
        .zip(counterfactual)
        .enumerate()
        .filter(|(_, (a, b))| (*a - *b).abs() > CHANGE_TOLERANCE)
        .map(|(i, _)| i)
        .collect()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Attribute-level diff between two valid samples.
pub fn describe_changes(
    encoder: &Encoder,
    original: &[f64],
    counterfactual: &[f64],
) -> Result<Vec<AttributeChange>> {
    let schema = &encoder.schema;
    let before = encoder.decode(original)?;
    let after = encoder.decode(counterfactual)?;
    let mut diff = Vec::new();
    for (i, attr) in schema.attributes().iter().enumerate() {
        let r = schema.attribute_range(i);
        if !changed_columns(&original[r.clone()], &counterfactual[r]).is_empty() {
            diff.push(AttributeChange {
                attribute: attr.name.clone(),
                original: schema.display_value(i, &before.0[i]),
                counterfactual: schema.display_value(i, &after.0[i]),
            });
        }
    }
    Ok(diff)
}

/// Searches for a counterfactual of `x` that `net` assigns to
/// `config.target`.
///
/// The column mask is fixed from the gradient at `x`; every epoch's gradient
/// is additionally re-masked by the directional constraints, so constrained
/// columns can never move the wrong way even when their gradient changes
/// sign later on.
pub fn find_counterfactual(
    net: &Network,
    encoder: &Encoder,
    x: &[f64],
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    let schema = &encoder.schema;
    let width = schema.width();
    check_width(net.input_width(), width)?;
    check_width(width, x.len())?;
    config.validate(width)?;
    schema.check_valid(x)?;
    if net.predict(x)? == config.target {
        return Err(SearchError::AlreadyTarget);
    }

    let grad0 = net.grad_input(x, config.target)?;
    let mask = selection_mask(&grad0, &config.direction, config.n_change, config.n_skip)?;

    let mut current = x.to_vec();
    let mut adam = AdamState::new(width, config.adam);
    for epoch in 1..=config.max_epochs {
        let mut grad = net.grad_input(&current, config.target)?;
        let allowed = directional_mask(&grad, &config.direction)?;
        for ((g, m), a) in grad.iter_mut().zip(&mask).zip(&allowed) {
            *g *= m * a;
        }
        adam.step(&mut current, &grad)?;
        flip_categorical(schema, &mut current, config.t_flip);
        let adjusted = apply_constraints(schema, &current);
        if net.predict(&adjusted)? == config.target {
            let decoded_diff = describe_changes(encoder, x, &adjusted)?;
            return Ok(SearchOutcome::Found(Explanation {
                changed_columns: changed_columns(x, &adjusted),
                l2_distance: l2_distance(x, &adjusted),
                epochs_used: epoch,
                n_skip: config.n_skip,
                decoded_diff,
                counterfactual: adjusted,
            }));
        }
    }
    Ok(SearchOutcome::NotFound {
        epochs: config.max_epochs,
    })
}

/// Runs the search once per `n_skip` in `0..n_alternatives` and keeps the
/// successes in order. Skips that find nothing, or leave no column to move,
/// are dropped; only problems with the sample itself (already on target,
/// invalid encoding, bad base config) are errors.
pub fn find_alternatives(
    net: &Network,
    encoder: &Encoder,
    x: &[f64],
    base: &SearchConfig,
    n_alternatives: usize,
) -> Result<Vec<Explanation>> {
    let width = encoder.width();
    let mut found = Vec::new();
    for n_skip in 0..n_alternatives {
        if n_skip + base.n_change > width {
            break;
        }
        let config = SearchConfig {
            n_skip,
            ..base.clone()
        };
        match find_counterfactual(net, encoder, x, &config) {
            Ok(SearchOutcome::Found(e)) => found.push(e),
            Ok(SearchOutcome::NotFound { .. }) | Err(SearchError::NoDescentDirection) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(found)
}
