use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::runner::{load_transcripts, read_results, ResultRow, RESULTS_FILE};
use super::ExperimentError;
use crate::conversation::SessionTranscript;
use crate::corpus::Catalog;
use crate::ItemId;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const POPULARITY_FILE: &str = "popularity.csv";
pub const PLOT_DIR: &str = "plotdata";

/// Mean of one metric over a cell; `n` counts the rows that had a value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MetricMean {
    pub mean: Option<f64>,
    pub n: usize,
}

impl MetricMean {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let present: Vec<f64> = values.flatten().collect();
        let n = present.len();
        Self {
            mean: (n > 0).then(|| present.iter().sum::<f64>() / n as f64),
            n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell: String,
    pub model: String,
    pub prompt_style: String,
    pub config: String,
    pub temperature: Option<f64>,
    pub prompt_popular: String,
    pub sessions: usize,
    pub failed: usize,
    pub precision: MetricMean,
    pub ndcg: MetricMean,
    pub map: MetricMean,
    pub ils: MetricMean,
    pub coverage: MetricMean,
    pub novelty: MetricMean,
    pub unmatched_ratio: MetricMean,
}

/// Per-cell means, cells in sorted order. Failed rows and absent metric
/// values are left out of the means.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut by_cell: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_cell.entry(&r.cell).or_default().push(r);
    }
    by_cell
        .into_iter()
        .map(|(cell, rs)| {
            let ok: Vec<&&ResultRow> = rs.iter().filter(|r| r.is_ok()).collect();
            if ok.is_empty() {
                tracing::warn!(cell, "no successful sessions; cell means are absent");
            }
            let m = |f: fn(&ResultRow) -> Option<f64>| MetricMean::of(ok.iter().map(|r| f(r)));
            let first = rs[0];
            CellSummary {
                cell: cell.to_string(),
                model: first.model.clone(),
                prompt_style: first.prompt_style.clone(),
                config: first.config.clone(),
                temperature: first.temperature,
                prompt_popular: first.prompt_popular.clone(),
                sessions: rs.len(),
                failed: rs.len() - ok.len(),
                precision: m(|r| r.precision),
                ndcg: m(|r| r.ndcg),
                map: m(|r| r.map),
                ils: m(|r| r.ils),
                coverage: m(|r| r.coverage),
                novelty: m(|r| r.novelty),
                unmatched_ratio: m(|r| r.unmatched_ratio),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    cell: &'a str,
    model: &'a str,
    prompt_style: &'a str,
    config: &'a str,
    temperature: Option<f64>,
    prompt_popular: &'a str,
    sessions: usize,
    failed: usize,
    precision: Option<f64>,
    precision_n: usize,
    ndcg: Option<f64>,
    ndcg_n: usize,
    map: Option<f64>,
    map_n: usize,
    ils: Option<f64>,
    ils_n: usize,
    coverage: Option<f64>,
    coverage_n: usize,
    novelty: Option<f64>,
    novelty_n: usize,
    unmatched_ratio: Option<f64>,
    unmatched_ratio_n: usize,
}

pub fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExperimentError::csv(path, e))?;
    for c in cells {
        w.serialize(SummaryLine {
            cell: &c.cell,
            model: &c.model,
            prompt_style: &c.prompt_style,
            config: &c.config,
            temperature: c.temperature,
            prompt_popular: &c.prompt_popular,
            sessions: c.sessions,
            failed: c.failed,
            precision: c.precision.mean,
            precision_n: c.precision.n,
            ndcg: c.ndcg.mean,
            ndcg_n: c.ndcg.n,
            map: c.map.mean,
            map_n: c.map.n,
            ils: c.ils.mean,
            ils_n: c.ils.n,
            coverage: c.coverage.mean,
            coverage_n: c.coverage.n,
            novelty: c.novelty.mean,
            novelty_n: c.novelty.n,
            unmatched_ratio: c.unmatched_ratio.mean,
            unmatched_ratio_n: c.unmatched_ratio.n,
        })
        .map_err(|e| ExperimentError::csv(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// How often one item was recommended within a cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemFrequency {
    pub cell: String,
    pub rank: usize,
    pub item_id: ItemId,
    pub title: String,
    /// Recommendation slots holding the item.
    pub occurrences: usize,
    /// Sessions recommending the item at least once.
    pub sessions: usize,
    /// `sessions` over the cell's session count.
    pub frequency: f64,
}

/// Per-cell item frequency tables, each sorted by descending frequency
/// (ties: more occurrences first, then ascending id).
pub fn popularity_report(
    transcripts: &HashMap<String, Vec<SessionTranscript>>,
    catalog: Option<&Catalog>,
) -> Vec<ItemFrequency> {
    let mut cells: Vec<&String> = transcripts.keys().collect();
    cells.sort();
    let mut out = Vec::new();
    for cell in cells {
        let sessions = &transcripts[cell];
        let mut occ: HashMap<ItemId, (usize, usize)> = HashMap::new();
        for t in sessions {
            let recs = t.all_recommendations();
            let distinct: HashSet<&ItemId> = recs.iter().collect();
            for id in &recs {
                occ.entry(id.clone()).or_default().0 += 1;
            }
            for id in distinct {
                occ.entry(id.clone()).or_default().1 += 1;
            }
        }
        let mut items: Vec<(ItemId, usize, usize)> = occ.into_iter().map(|(id, (o, s))| (id, o, s)).collect();
        items.sort_by(|a, b| b.2.cmp(&a.2).then(b.1.cmp(&a.1)).then_with(|| a.0.cmp(&b.0)));
        let n = sessions.len().max(1) as f64;
        for (rank, (id, o, s)) in items.into_iter().enumerate() {
            out.push(ItemFrequency {
                cell: cell.clone(),
                rank: rank + 1,
                title: catalog.and_then(|c| c.title_of(&id)).unwrap_or_default().to_string(),
                item_id: id,
                occurrences: o,
                sessions: s,
                frequency: s as f64 / n,
            });
        }
    }
    out
}

/// Highest item frequency of each cell.
pub fn max_frequency(table: &[ItemFrequency]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for f in table {
        let e = out.entry(f.cell.clone()).or_insert(0.0f64);
        *e = e.max(f.frequency);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TurnSeries {
    pub cell: String,
    pub turn: usize,
    pub sessions: usize,
    pub precision: Option<f64>,
    pub coverage_feedback: Option<f64>,
    pub coverage_evaluation: Option<f64>,
}

/// Mean per-turn precision and cumulative coverage of each cell.
pub fn turn_series(transcripts: &HashMap<String, Vec<SessionTranscript>>) -> Vec<TurnSeries> {
    let mut cells: Vec<&String> = transcripts.keys().collect();
    cells.sort();
    let mut out = Vec::new();
    for cell in cells {
        let mut by_turn: BTreeMap<usize, Vec<&crate::conversation::RecommendationTurn>> = BTreeMap::new();
        for t in &transcripts[cell] {
            for turn in &t.turns {
                by_turn.entry(turn.turn_index).or_default().push(turn);
            }
        }
        for (turn, ts) in by_turn {
            out.push(TurnSeries {
                cell: cell.clone(),
                turn,
                sessions: ts.len(),
                precision: MetricMean::of(ts.iter().map(|t| t.precision)).mean,
                coverage_feedback: MetricMean::of(ts.iter().map(|t| t.coverage_feedback)).mean,
                coverage_evaluation: MetricMean::of(ts.iter().map(|t| t.coverage_evaluation)).mean,
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExperimentError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| ExperimentError::csv(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// Files written by [`write_report`].
pub struct ReportFiles {
    pub summary: Vec<CellSummary>,
    pub popularity: Vec<ItemFrequency>,
    pub turns: Vec<TurnSeries>,
}

/// Reads `results.csv` and the transcripts of a run directory and writes
/// `summary.csv`, `popularity.csv` and the `plotdata/` series.
pub fn write_report(run_dir: &Path, catalog: Option<&Catalog>) -> Result<ReportFiles, ExperimentError> {
    let rows = read_results(&run_dir.join(RESULTS_FILE))?;
    let summary = aggregate(&rows);
    write_summary(&run_dir.join(SUMMARY_FILE), &summary)?;
    let transcripts = load_transcripts(run_dir, &rows)?;
    let popularity = popularity_report(&transcripts, catalog);
    write_csv(&run_dir.join(POPULARITY_FILE), &popularity)?;
    let plot = run_dir.join(PLOT_DIR);
    fs::create_dir_all(&plot).map_err(|e| ExperimentError::io(&plot, e))?;

    #[derive(Serialize)]
    struct RankPoint<'a> {
        cell: &'a str,
        rank: usize,
        frequency: f64,
    }
    let ranks: Vec<RankPoint> = popularity
        .iter()
        .map(|f| RankPoint {
            cell: &f.cell,
            rank: f.rank,
            frequency: f.frequency,
        })
        .collect();
    write_csv(&plot.join("frequency_rank.csv"), &ranks)?;
    let turns = turn_series(&transcripts);
    write_csv(&plot.join("turn_metrics.csv"), &turns)?;

    #[derive(Serialize)]
    struct CellPoint<'a> {
        cell: &'a str,
        model: &'a str,
        config: &'a str,
        precision: Option<f64>,
        ndcg: Option<f64>,
        map: Option<f64>,
        novelty: Option<f64>,
        coverage: Option<f64>,
        max_frequency: Option<f64>,
    }
    let maxes = max_frequency(&popularity);
    let cells: Vec<CellPoint> = summary
        .iter()
        .map(|c| CellPoint {
            cell: &c.cell,
            model: &c.model,
            config: &c.config,
            precision: c.precision.mean,
            ndcg: c.ndcg.mean,
            map: c.map.mean,
            novelty: c.novelty.mean,
            coverage: c.coverage.mean,
            max_frequency: maxes.get(&c.cell).copied(),
        })
        .collect();
    write_csv(&plot.join("cell_metrics.csv"), &cells)?;
    Ok(ReportFiles {
        summary,
        popularity,
        turns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::UserId;

    fn row(cell: &str, precision: Option<f64>, ok: bool) -> ResultRow {
        ResultRow {
            user_id: UserId::from("u"),
            replicate: 0,
            cell: cell.into(),
            model: "llm".into(),
            prompt_style: "zero".into(),
            k: Some(10),
            p: Some(5),
            config: "k10p5".into(),
            temperature: Some(0.0),
            prompt_popular: "yes".into(),
            status: if ok { "ok" } else { "failed" }.into(),
            precision,
            ndcg: precision,
            map: None,
            ils: None,
            coverage: None,
            novelty: None,
            unmatched_ratio: Some(0.0),
            matched: None,
            judged: None,
            unmatched: None,
            error: String::new(),
        }
    }

    #[test]
    fn single_row_means_equal_the_row() {
        let s = aggregate(&[row("a", Some(0.3), true)]);
        assert_eq!(s[0].precision, MetricMean { mean: Some(0.3), n: 1 });
        assert_eq!(s[0].map, MetricMean { mean: None, n: 0 });
    }

    #[test]
    fn two_rows_average() {
        let s = aggregate(&[row("a", Some(0.4), true), row("a", Some(0.6), true)]);
        assert!((s[0].precision.mean.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absent_metric_is_excluded_and_counted() {
        let rows = [row("a", Some(0.2), true), row("a", None, true), row("a", Some(0.8), true)];
        let s = aggregate(&rows);
        assert_eq!(s[0].precision.n, 2);
        assert!((s[0].precision.mean.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s[0].sessions, 3);
    }

    #[test]
    fn failed_rows_do_not_count() {
        let s = aggregate(&[row("a", Some(0.2), true), row("a", Some(0.9), false), row("b", None, false)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].failed, 1);
        assert_eq!(s[0].precision.mean, Some(0.2));
        assert_eq!(s[1].precision, MetricMean { mean: None, n: 0 });
    }
}
