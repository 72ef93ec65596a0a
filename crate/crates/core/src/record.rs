//! Run records: one JSON document plus CSV sidecars and SVG plots per run.
//!
//! Layout of a run directory:
//!
//! ```text
//! run.json         configuration, split listing, timings, metrics
//! epochs.csv       epoch,train_loss,train_acc,val_loss,val_acc,seconds
//! predictions.csv  path,true,pred,score
//! metrics.csv      model,class,precision,recall,f1,accuracy_pct,train_seconds,test_seconds
//! roc.csv          model,threshold,fpr,tpr (+ an auc row)
//! plots/           curves.svg, confusion.svg, roc.svg
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, FamilyId};
use crate::data::{ClassOrder, Label, ManifestEntry, PreprocessConfig, SplitMode, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::{self, ClassReport, ConfusionMatrix, RocCurve};
use crate::plot;
use crate::trainer::{EpochLog, Prediction, PredictionSet, TrainConfig};

pub const RUN_JSON: &str = "run.json";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const ROC_CSV: &str = "roc.csv";
pub const PLOTS_DIR: &str = "plots";

const METRICS_HEADER: [&str; 8] =
    ["model", "class", "precision", "recall", "f1", "accuracy_pct", "train_seconds", "test_seconds"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub mode: SplitMode,
    /// SHA-256 of the ordered partition listing.
    pub hash: String,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitRecord {
    pub fn new(plan: &SplitPlan, entries: &[ManifestEntry]) -> Self {
        let paths = |idx: &[usize]| idx.iter().map(|&i| entries[i].image_path.clone()).collect();
        Self {
            seed: plan.seed,
            mode: plan.mode,
            hash: plan.fingerprint(entries),
            train: paths(&plan.train),
            validation: paths(&plan.validation),
            test: paths(&plan.test),
        }
    }
}

/// Everything derived from a prediction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub confusion: ConfusionMatrix,
    pub accuracy_pct: f64,
    /// Class order: normal, covid19.
    pub classes: Vec<ClassReport>,
    /// Absent when the evaluated set holds a single class.
    pub auc: Option<f64>,
}

impl MetricsSummary {
    pub fn compute(predictions: &PredictionSet) -> Result<Self> {
        let confusion = metrics::confusion(predictions);
        Ok(Self {
            confusion,
            accuracy_pct: metrics::accuracy(&confusion)?,
            classes: metrics::per_class_report(&confusion),
            auc: metrics::roc(predictions).ok().map(|c| c.auc),
        })
    }

    pub fn class(&self, label: Label) -> &ClassReport {
        self.classes.iter().find(|c| c.label == label).expect("both classes reported")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub tool_version: String,
    pub family: FamilyId,
    pub model_name: String,
    pub manifest: String,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub class_order: ClassOrder,
    pub split: SplitRecord,
    pub parameter_count: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub metrics: MetricsSummary,
    #[serde(skip)]
    pub epochs: Vec<EpochLog>,
    #[serde(skip)]
    pub predictions: PredictionSet,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| Error::Record(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Record(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Record(format!("{}: {detail}", path.display()));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let h = r.headers().map_err(|e| bad(e.to_string()))?;
    if h.iter().ne(header.iter().copied()) {
        return Err(bad(format!("unexpected header {:?}", h.iter().collect::<Vec<_>>())));
    }
    r.records().map(|rec| rec.map_err(|e| bad(e.to_string()))).collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
        Error::Record(format!("{}: bad field {i} in row {:?}", path.display(), rec.iter().collect::<Vec<_>>()))
    })
}

pub fn epochs_csv(logs: &[EpochLog]) -> Result<String> {
    let rows: Vec<Vec<String>> = logs
        .iter()
        .map(|l| {
            vec![
                l.epoch.to_string(),
                l.train_loss.to_string(),
                l.train_accuracy.to_string(),
                l.val_loss.to_string(),
                l.val_accuracy.to_string(),
                l.seconds.to_string(),
            ]
        })
        .collect();
    csv_text(&["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"], &rows)
}

pub fn predictions_csv(predictions: &PredictionSet, order: &ClassOrder) -> Result<String> {
    let mut rows = Vec::with_capacity(predictions.len());
    for p in &predictions.rows {
        rows.push(vec![
            p.path.clone(),
            order.label(p.true_index)?.to_string(),
            order.label(p.predicted_index)?.to_string(),
            p.score.to_string(),
        ]);
    }
    csv_text(&["path", "true", "pred", "score"], &rows)
}

/// Two rows per model (covid19, then normal) with full-precision values.
pub fn metrics_rows(model: &str, m: &MetricsSummary, train_seconds: f64, test_seconds: f64) -> Vec<Vec<String>> {
    [Label::Covid19, Label::Normal]
        .iter()
        .map(|&l| {
            let c = m.class(l);
            vec![
                model.to_string(),
                l.to_string(),
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
                m.accuracy_pct.to_string(),
                train_seconds.to_string(),
                test_seconds.to_string(),
            ]
        })
        .collect()
}

pub fn metrics_csv(rows: &[Vec<String>]) -> Result<String> {
    csv_text(&METRICS_HEADER, rows)
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        "inf".into()
    } else {
        t.to_string()
    }
}

pub fn roc_rows(model: &str, curve: &RocCurve) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![model.to_string(), fmt_threshold(p.threshold), p.fpr.to_string(), p.tpr.to_string()])
        .collect();
    rows.push(vec![model.to_string(), "auc".into(), String::new(), curve.auc.to_string()]);
    rows
}

pub fn roc_csv(rows: &[Vec<String>]) -> Result<String> {
    csv_text(&["model", "threshold", "fpr", "tpr"], rows)
}

impl RunRecord {
    /// Writes the JSON document, sidecars and every derived report.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Record(e.to_string()))?;
        write_file(&dir.join(RUN_JSON), json + "\n")?;
        write_file(&dir.join(EPOCHS_CSV), epochs_csv(&self.epochs)?)?;
        write_file(&dir.join(PREDICTIONS_CSV), predictions_csv(&self.predictions, &self.class_order)?)?;
        self.write_reports(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let json_path = dir.join(RUN_JSON);
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let mut rec: RunRecord = serde_json::from_str(&text)
            .map_err(|e| Error::Record(format!("{}: {e}", json_path.display())))?;

        let p = dir.join(EPOCHS_CSV);
        rec.epochs = read_csv(&p, &["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"])?
            .iter()
            .map(|r| {
                Ok(EpochLog {
                    epoch: field(&p, r, 0)?,
                    train_loss: field(&p, r, 1)?,
                    train_accuracy: field(&p, r, 2)?,
                    val_loss: field(&p, r, 3)?,
                    val_accuracy: field(&p, r, 4)?,
                    seconds: field(&p, r, 5)?,
                })
            })
            .collect::<Result<_>>()?;

        let p = dir.join(PREDICTIONS_CSV);
        let order = rec.class_order;
        let rows = read_csv(&p, &["path", "true", "pred", "score"])?
            .iter()
            .map(|r| {
                let label = |i| field::<Label>(&p, r, i).map(|l| order.index(l));
                Ok(Prediction {
                    path: r[0].to_string(),
                    true_index: label(1)?,
                    predicted_index: label(2)?,
                    score: field(&p, r, 3)?,
                })
            })
            .collect::<Result<_>>()?;
        rec.predictions = PredictionSet { rows };
        Ok(rec)
    }

    /// Regenerates metrics.csv, roc.csv and the plots from the in-memory record.
    pub fn write_reports(&self, dir: &Path) -> Result<()> {
        let metrics = metrics_csv(&metrics_rows(&self.model_name, &self.metrics, self.train_seconds, self.test_seconds))?;
        let roc = metrics::roc(&self.predictions).ok();
        let roc_text = roc_csv(&roc.as_ref().map(|c| roc_rows(&self.model_name, c)).unwrap_or_default())?;
        let curves = plot::training_curves(&self.model_name, &self.epochs);
        let confusion = plot::confusion_matrix(&self.model_name, &self.metrics.confusion);
        let roc_svg = roc.as_ref().map(|c| plot::roc_curves(&format!("{} ROC", self.model_name), &[(&self.model_name, c)]));

        let plots = dir.join(PLOTS_DIR);
        fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        write_file(&dir.join(METRICS_CSV), metrics)?;
        write_file(&dir.join(ROC_CSV), roc_text)?;
        write_file(&plots.join("curves.svg"), curves)?;
        write_file(&plots.join("confusion.svg"), confusion)?;
        if let Some(svg) = roc_svg {
            write_file(&plots.join("roc.svg"), svg)?;
        }
        Ok(())
    }
}

/// Loads a run and rewrites its derived reports. Nothing is written if loading fails.
pub fn regenerate(dir: &Path) -> Result<RunRecord> {
    let rec = RunRecord::load(dir)?;
    rec.write_reports(dir)?;
    Ok(rec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub values_checked: usize,
    pub max_abs_diff: f64,
}

pub const VERIFY_TOLERANCE: f64 = 1e-12;

/// Recomputes every metric from predictions.csv and compares it with the
/// values stored in run.json and metrics.csv.
pub fn verify(dir: &Path) -> Result<Verification> {
    let rec = RunRecord::load(dir)?;
    let fresh = MetricsSummary::compute(&rec.predictions)?;
    if fresh.confusion != rec.metrics.confusion {
        return Err(Error::Record(format!(
            "{}: confusion matrix {:?} does not match predictions {:?}",
            dir.display(),
            rec.metrics.confusion,
            fresh.confusion
        )));
    }
    let mut pairs = vec![(fresh.accuracy_pct, rec.metrics.accuracy_pct)];
    for l in [Label::Normal, Label::Covid19] {
        let (a, b) = (fresh.class(l), rec.metrics.class(l));
        pairs.extend([(a.precision, b.precision), (a.recall, b.recall), (a.f1, b.f1)]);
    }
    match (fresh.auc, rec.metrics.auc) {
        (Some(a), Some(b)) => pairs.push((a, b)),
        (None, None) => {}
        _ => return Err(Error::Record(format!("{}: AUC presence differs from predictions", dir.display()))),
    }

    let p = dir.join(METRICS_CSV);
    for r in read_csv(&p, &METRICS_HEADER)? {
        let label: Label = field(&p, &r, 1)?;
        let c = fresh.class(label);
        for (i, want) in [(2, c.precision), (3, c.recall), (4, c.f1), (5, fresh.accuracy_pct)] {
            pairs.push((want, field(&p, &r, i)?));
        }
    }

    let mut max = 0.0f64;
    for &(a, b) in &pairs {
        let d = (a - b).abs();
        if d.is_nan() || d > VERIFY_TOLERANCE {
            return Err(Error::Record(format!(
                "{}: stored metric {b} differs from recomputed {a}",
                dir.display()
            )));
        }
        max = max.max(d);
    }
    Ok(Verification { values_checked: pairs.len(), max_abs_diff: max })
}

/// Subdirectories of `root` holding a run.json, or `root` itself if it is a run.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(RUN_JSON).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut runs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(RUN_JSON).is_file() {
            runs.push(path);
        }
    }
    runs.sort();
    if runs.is_empty() {
        return Err(Error::Record(format!("no run.json under {}", root.display())));
    }
    Ok(runs)
}
