//! Metrics, system evaluation with per-split reporting, and the two-stage
//! baseline comparator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{ReferringSegmenter, TextGenerator};
use crate::dataset::{EntityType, NestSample};
use crate::error::{Error, Result};
use crate::pipeline::{RoseResult, SampleFailure, UserRequest};
use crate::primitives::{BinaryMask, PairStats};
use crate::text;
use crate::tpe;

pub use crate::dataset::load_dataset;

/// Prompt for the search-capable answerer of the two-stage baseline.
pub const TWO_STAGE_ANSWER_TEMPLATE: &str = "Search the web and answer the question with the name of a single entity.
Question: {question}";

fn stats(pairs: &[(BinaryMask, BinaryMask)]) -> Result<Vec<PairStats>> {
    pairs.iter().map(|(pred, gt)| pred.pair_stats(gt)).collect()
}

/// Mean of per-pair IoU.
pub fn giou_from_stats(stats: &[PairStats]) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::contract("gIoU of an empty set"));
    }
    Ok(stats.iter().map(PairStats::iou).sum::<f64>() / stats.len() as f64)
}

/// Cumulative intersection over cumulative union.
pub fn ciou_from_stats(stats: &[PairStats]) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::contract("cIoU of an empty set"));
    }
    let intersection: u64 = stats.iter().map(|s| s.intersection).sum();
    let union: u64 = stats.iter().map(|s| s.union).sum();
    if union == 0 {
        return Err(Error::contract("cIoU is undefined when every mask is empty"));
    }
    Ok(intersection as f64 / union as f64)
}

/// gIoU: the mean per-sample IoU of `(prediction, ground truth)` pairs.
pub fn compute_giou(pairs: &[(BinaryMask, BinaryMask)]) -> Result<f64> {
    giou_from_stats(&stats(pairs)?)
}

/// cIoU: total intersection over total union, weighting samples by size.
pub fn compute_ciou(pairs: &[(BinaryMask, BinaryMask)]) -> Result<f64> {
    ciou_from_stats(&stats(pairs)?)
}

/// Whether a predicted answer names the ground truth: one normalized token
/// set must contain the other. A missing prediction is wrong.
pub fn answer_correct(pred: Option<&str>, gt: &str) -> bool {
    pred.is_some_and(|p| text::token_match(p, gt, 1.0))
}

pub fn compute_answer_accuracy(pred_answers: &[Option<String>], gt_answers: &[String]) -> Result<f64> {
    if pred_answers.len() != gt_answers.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} ground-truth answers",
            pred_answers.len(),
            gt_answers.len()
        )));
    }
    if gt_answers.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let correct = pred_answers
        .iter()
        .zip(gt_answers)
        .filter(|(p, g)| answer_correct(p.as_deref(), g))
        .count();
    Ok(correct as f64 / gt_answers.len() as f64)
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub entity_type: EntityType,
    pub iou: f64,
    pub intersection: u64,
    pub union: u64,
    pub answer: Option<String>,
    pub answer_correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n_samples: usize,
    pub giou: f64,
    pub ciou: f64,
    pub accuracy: f64,
}

impl SplitMetrics {
    fn of<'a>(rows: impl Iterator<Item = &'a SampleRow>) -> Result<Option<Self>> {
        let rows: Vec<&SampleRow> = rows.collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let stats: Vec<PairStats> = rows
            .iter()
            .map(|r| PairStats {
                intersection: r.intersection,
                union: r.union,
            })
            .collect();
        Ok(Some(Self {
            n_samples: rows.len(),
            giou: giou_from_stats(&stats)?,
            ciou: ciou_from_stats(&stats)?,
            accuracy: rows.iter().filter(|r| r.answer_correct).count() as f64 / rows.len() as f64,
        }))
    }
}

/// Metrics per entity split and overall, plus every per-sample row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Whether the method retrieves from the web (answer accuracy applies).
    pub rag: bool,
    pub novel: Option<SplitMetrics>,
    pub emerging: Option<SplitMetrics>,
    pub overall: SplitMetrics,
    pub rows: Vec<SampleRow>,
}

impl EvalReport {
    pub fn from_rows(method: impl Into<String>, rag: bool, rows: Vec<SampleRow>) -> Result<Self> {
        let overall = SplitMetrics::of(rows.iter())?.ok_or_else(|| Error::contract("cannot report on an empty dataset"))?;
        Ok(Self {
            method: method.into(),
            rag,
            novel: SplitMetrics::of(rows.iter().filter(|r| r.entity_type == EntityType::Novel))?,
            emerging: SplitMetrics::of(rows.iter().filter(|r| r.entity_type == EntityType::Emerging))?,
            overall,
            rows,
        })
    }

    /// Per-sample rows, one JSON record per line.
    pub fn rows_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    }

    /// Write `<stem>.jsonl`, `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (dir.join(format!("{stem}.jsonl")), self.rows_jsonl()),
            (dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n"),
            (dir.join(format!("{stem}.txt")), render_table(std::slice::from_ref(self))),
        ];
        for (path, content) in &files {
            std::fs::write(path, content).map_err(|e| Error::io(path, e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", v * 100.0))
}

/// Render reports as a table: method, retrieval flag, answer accuracy, then
/// gIoU and cIoU for the novel, emerging and overall splits (×100).
pub fn render_table(reports: &[EvalReport]) -> String {
    let header = [
        "Method", "RAG", "Acc.", "Novel gIoU", "Novel cIoU", "Emerg. gIoU", "Emerg. cIoU", "All gIoU", "All cIoU",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                if r.rag { "yes" } else { "no" }.to_string(),
                if r.rag { pct(Some(r.overall.accuracy)) } else { "-".into() },
                pct(r.novel.as_ref().map(|m| m.giou)),
                pct(r.novel.as_ref().map(|m| m.ciou)),
                pct(r.emerging.as_ref().map(|m| m.giou)),
                pct(r.emerging.as_ref().map(|m| m.ciou)),
                pct(Some(r.overall.giou)),
                pct(Some(r.overall.ciou)),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn score(sample: &NestSample, outcome: std::result::Result<(BinaryMask, Option<String>), String>) -> SampleRow {
    let (stats, answer, error) = match outcome {
        Ok((mask, answer)) => match mask.pair_stats(&sample.mask) {
            Ok(stats) => (stats, answer, None),
            Err(e) => (PairStats::default(), answer, Some(e.to_string())),
        },
        Err(e) => (PairStats::default(), None, Some(e)),
    };
    let stats = if error.is_some() {
        PairStats {
            intersection: 0,
            union: sample.mask.count(),
        }
    } else {
        stats
    };
    SampleRow {
        id: sample.id.clone(),
        entity_type: sample.entity_type,
        iou: stats.iou(),
        intersection: stats.intersection,
        union: stats.union,
        answer_correct: error.is_none() && answer_correct(answer.as_deref(), &sample.answer),
        answer,
        error,
    }
}

fn run_parallel<F>(dataset: &[NestSample], workers: usize, f: F) -> Result<Vec<SampleRow>>
where
    F: Fn(&NestSample) -> SampleRow + Sync,
{
    use rayon::prelude::*;
    if dataset.is_empty() {
        return Err(Error::contract("cannot evaluate an empty dataset"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| dataset.par_iter().map(&f).collect()))
}

/// Run `system` on every sample and aggregate per split. A failing sample
/// scores IoU 0 with a wrong answer and keeps its error message.
pub fn evaluate_system<F>(
    dataset: &[NestSample],
    system: F,
    method: &str,
    rag: bool,
    workers: usize,
) -> Result<EvalReport>
where
    F: Fn(&UserRequest) -> std::result::Result<RoseResult, SampleFailure> + Sync,
{
    let rows = run_parallel(dataset, workers, |sample| {
        let outcome = UserRequest::new(sample.image.clone(), sample.question.clone())
            .map_err(|e| e.to_string())
            .and_then(|request| system(&request).map_err(|e| e.to_string()))
            .map(|r| (r.mask, r.answer));
        score(sample, outcome)
    })?;
    EvalReport::from_rows(method, rag, rows)
}

/// The two-stage comparator: a search-capable model answers the question, then
/// the segmenter receives `Please segment {answer} in this image.`.
pub fn run_two_stage_baseline(
    dataset: &[NestSample],
    answerer: &dyn TextGenerator,
    segmenter: &dyn ReferringSegmenter,
    workers: usize,
) -> Result<EvalReport> {
    let rows = run_parallel(dataset, workers, |sample| {
        let prompt = TWO_STAGE_ANSWER_TEMPLATE.replace("{question}", &sample.question);
        let outcome = answerer
            .generate(&prompt, 256)
            .map_err(|e| e.to_string())
            .map(|reply| reply.lines().next().unwrap_or("").trim().to_string())
            .and_then(|answer| {
                segmenter
                    .segment(&sample.image, &tpe::baseline_prompt(&answer))
                    .map(|mask| (mask, (!answer.is_empty()).then_some(answer)))
                    .map_err(|e| e.to_string())
            });
        score(sample, outcome)
    })?;
    EvalReport::from_rows("two_stage", true, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::BoundingBox;

    fn rect(h: usize, w: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_box(h, w, &BoundingBox::new(x0, y0, x1, y1).unwrap()).unwrap()
    }

    #[test]
    fn metric_examples() {
        let a = rect(4, 4, 0, 0, 2, 4);
        assert_eq!(compute_giou(&[(a.clone(), a.clone())]).unwrap(), 1.0);
        let disjoint = rect(4, 4, 2, 0, 4, 4);
        assert_eq!(compute_giou(&[(a.clone(), a.clone()), (a.clone(), disjoint.clone())]).unwrap(), 0.5);
        assert!(compute_giou(&[]).is_err());
        let single = [(a.clone(), rect(4, 4, 0, 0, 4, 2))];
        assert_eq!(compute_ciou(&single).unwrap(), compute_giou(&single).unwrap());
        assert!(compute_ciou(&[(BinaryMask::empty(2, 2), BinaryMask::empty(2, 2))]).is_err());
    }

    #[test]
    fn size_weighting_diverges() {
        // |∩| = 100, |∪| = 100 and |∩| = 0, |∪| = 10
        let big = rect(10, 10, 0, 0, 10, 10);
        let small_pred = rect(10, 10, 0, 0, 5, 1);
        let small_gt = rect(10, 10, 5, 0, 10, 1);
        let pairs = [(big.clone(), big), (small_pred, small_gt)];
        assert_eq!(compute_giou(&pairs).unwrap(), 0.5);
        assert!((compute_ciou(&pairs).unwrap() - 100.0 / 110.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_rules() {
        let gt = vec!["Messi".to_string(), "Xiaomi SU7".to_string()];
        let exact = vec![Some("Messi".to_string()), Some("xiaomi su-7".to_string())];
        assert_eq!(compute_answer_accuracy(&exact, &gt).unwrap(), 1.0);
        assert_eq!(compute_answer_accuracy(&[Some("Lionel Messi".into())], &gt[..1]).unwrap(), 1.0);
        assert_eq!(compute_answer_accuracy(&[None, None], &gt).unwrap(), 0.0);
        assert!(compute_answer_accuracy(&[None], &gt).is_err());
    }

    fn row(id: &str, t: EntityType, i: u64, u: u64, correct: bool) -> SampleRow {
        SampleRow {
            id: id.into(),
            entity_type: t,
            iou: i as f64 / u as f64,
            intersection: i,
            union: u,
            answer: None,
            answer_correct: correct,
            error: None,
        }
    }

    #[test]
    fn splits_reconcile_and_render() {
        let rows = vec![
            row("a", EntityType::Novel, 10, 10, true),
            row("b", EntityType::Emerging, 0, 10, false),
            row("c", EntityType::Novel, 5, 10, true),
        ];
        let r = EvalReport::from_rows("full", true, rows).unwrap();
        let (n, e) = (r.novel.as_ref().unwrap(), r.emerging.as_ref().unwrap());
        assert_eq!(n.n_samples + e.n_samples, r.overall.n_samples);
        assert!((r.overall.giou - 0.5).abs() < 1e-12);
        assert!((n.ciou - 0.75).abs() < 1e-12);
        let table = render_table(&[r]);
        let cells: Vec<&str> = table.lines().nth(2).unwrap().split_whitespace().collect();
        assert_eq!(cells[..5], ["full", "yes", "66.7", "75.0", "75.0"]);
        let only_novel = EvalReport::from_rows("x", false, vec![row("a", EntityType::Novel, 1, 1, false)]).unwrap();
        assert!(only_novel.emerging.is_none());
        assert!(render_table(&[only_novel]).contains(" - "));
    }
}
