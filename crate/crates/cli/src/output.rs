use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use cadex::eval::{Cdf, EvalReport};
use cadex::{Explanation, TrainReport};

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a truncated file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner()?)
}

pub fn train_report_csv(report: &TrainReport, train_accuracy: f64) -> anyhow::Result<Vec<u8>> {
    csv_bytes(
        &[
            "epochs",
            "best_epoch",
            "train_loss",
            "val_loss",
            "train_accuracy",
            "val_accuracy",
        ],
        [vec![
            report.epochs.to_string(),
            report.best_epoch.to_string(),
            report.train_loss.to_string(),
            report.val_loss.to_string(),
            train_accuracy.to_string(),
            report.val_accuracy.to_string(),
        ]],
    )
}

pub fn diff_string(e: &Explanation) -> String {
    e.decoded_diff
        .iter()
        .map(|c| format!("{}:{}→{}", c.attribute, c.original, c.counterfactual))
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per explanation: sample id, n_skip, epochs, distance, diffs.
pub fn explanations_csv<'a>(
    rows: impl IntoIterator<Item = (usize, &'a Explanation)>,
) -> anyhow::Result<Vec<u8>> {
    csv_bytes(
        &["sample_id", "n_skip", "epochs", "l2_distance", "changes"],
        rows.into_iter().map(|(id, e)| {
            vec![
                id.to_string(),
                e.n_skip.to_string(),
                e.epochs_used.to_string(),
                e.l2_distance.to_string(),
                diff_string(e),
            ]
        }),
    )
}

/// Side-by-side table: one row per attribute changed by any explanation,
/// unchanged cells shown as "-".
pub fn diff_table(original: &[(String, String)], explanations: &[&Explanation]) -> String {
    let mut header = vec!["Attribute".to_string(), "Original".to_string()];
    header.extend((1..=explanations.len()).map(|i| format!("Explanation {i}")));
    let mut rows = vec![header];
    for (name, orig) in original {
        let cells: Vec<String> = explanations
            .iter()
            .map(|e| {
                e.decoded_diff
                    .iter()
                    .find(|c| &c.attribute == name)
                    .map_or_else(|| "-".to_string(), |c| c.counterfactual.clone())
            })
            .collect();
        if cells.iter().all(|c| c == "-") {
            continue;
        }
        let mut row = vec![name.clone(), orig.clone()];
        row.extend(cells);
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
        }
    }
    out
}

pub fn histogram_csv(report: &EvalReport) -> anyhow::Result<Vec<u8>> {
    let rows = report.solutions.iter().flat_map(|s| {
        s.bins
            .iter()
            .enumerate()
            .map(move |(k, n)| vec![s.n_change.to_string(), k.to_string(), n.to_string()])
    });
    csv_bytes(&["n_change", "explanations_found", "samples"], rows)
}

pub fn cdf_csv(report: &EvalReport) -> anyhow::Result<Vec<u8>> {
    let series = |name: &'static str, cdf: &'_ Cdf| {
        cdf.points
            .iter()
            .map(move |(d, f)| vec![name.to_string(), d.to_string(), f.to_string()])
            .collect::<Vec<_>>()
    };
    let mut rows = series("cadex", &report.distances.cadex);
    rows.extend(series("training_set", &report.distances.baseline));
    csv_bytes(&["series", "distance", "cumulative_fraction"], rows)
}

pub fn quantiles_csv(report: &EvalReport) -> anyhow::Result<Vec<u8>> {
    let rows = report
        .distances
        .cadex
        .quantiles
        .iter()
        .zip(&report.distances.baseline.quantiles)
        .map(|((q, c), (_, b))| vec![q.to_string(), c.to_string(), b.to_string()]);
    csv_bytes(&["quantile", "cadex", "training_set"], rows)
}

pub fn transfer_csv(report: &EvalReport) -> anyhow::Result<Vec<u8>> {
    let row = |label: String, r: &cadex::eval::TransferRates| {
        vec![
            label,
            r.agreement_samples.to_string(),
            r.at_least_one.to_string(),
            r.at_least_two.to_string(),
            r.all_explanations.to_string(),
        ]
    };
    let mut rows: Vec<Vec<String>> = report
        .transfer
        .per_seed
        .iter()
        .map(|(s, r)| row(s.to_string(), r))
        .collect();
    rows.push(row("mean".into(), &report.transfer.mean));
    csv_bytes(
        &[
            "forest_seed",
            "agreement_samples",
            "at_least_one",
            "at_least_two",
            "all_explanations",
        ],
        rows,
    )
}

pub fn eval_summary(report: &EvalReport, split: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# Distances are Euclidean in the encoded space: standardized numerics, raw ordinals, 0/1 one-hot columns."
    );
    let _ = writeln!(s, "evaluated split: {split}");
    let _ = writeln!(
        s,
        "samples assigned to the non-target class: {}",
        report.population.len()
    );
    for c in &report.solutions {
        let _ = writeln!(
            s,
            "n_change {}: median explanations per sample {} (of {}), histogram {:?}",
            c.n_change,
            c.median(),
            report.settings.n_alternatives,
            c.bins
        );
    }
    let _ = writeln!(
        s,
        "median distance: cadex {:.4}, nearest training counterfactual {:.4}",
        report.distances.cadex.median(),
        report.distances.baseline.median()
    );
    let m = &report.transfer.mean;
    let _ = writeln!(
        s,
        "transferability over {} forests ({} trees): >=1 {:.4}, >=2 {:.4}, all explanations {:.4}",
        report.transfer.per_seed.len(),
        report.settings.n_trees,
        m.at_least_one,
        m.at_least_two,
        m.all_explanations
    );
    s
}
