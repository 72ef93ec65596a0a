//! End-to-end runs: split, build, fit, predict, score and persist.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::arch::{build_family, ArchConfig, FamilyId};
use crate::data::{split_dataset, ClassOrder, DatasetSplit, ManifestEntry, PreprocessConfig, SplitMode};
use crate::error::{Error, Result};
use crate::metrics::{self, fmt2};
use crate::plot;
use crate::record::{self, MetricsSummary, RunRecord, SplitRecord};
use crate::trainer::{fit_with, predict, EpochLog, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub manifest: PathBuf,
    pub mode: SplitMode,
    /// Seeds the split; the architecture and trainer seeds live in their configs.
    pub split_seed: u64,
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

impl RunOptions {
    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig { target_size: self.arch.input_size }
    }

    /// Loads the manifest and draws the split every model of a run shares.
    pub fn load_split(&self) -> Result<(Vec<ManifestEntry>, DatasetSplit)> {
        let entries = crate::data::load_manifest(&self.manifest)?;
        let dir = self.manifest.parent().unwrap_or(Path::new("."));
        let split = split_dataset(&entries, dir, self.split_seed, self.mode, &self.preprocess())?;
        Ok((entries, split))
    }
}

fn run_id(seed: u64) -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("{secs}-s{seed}")
}

/// Trains one family on an already drawn split and writes its run directory.
pub fn train_family(
    family: FamilyId,
    opts: &RunOptions,
    entries: &[ManifestEntry],
    split: &DatasetSplit,
    out_dir: &Path,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<RunRecord> {
    let mut model = build_family::<f32>(family, &opts.arch)?;
    let fitted = fit_with(&mut model, split, &opts.train, on_epoch)?;
    let (predictions, test_seconds) = predict(&model, &split.test)?;
    let metrics = MetricsSummary::compute(&predictions)?;
    let mut arch = opts.arch.clone();
    arch.variant = arch.variant.or(match family {
        FamilyId::Vgg => Some(19),
        FamilyId::DenseNet => Some(201),
        _ => None,
    });
    let rec = RunRecord {
        run_id: run_id(opts.split_seed),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        family,
        model_name: family.display_name().to_string(),
        manifest: opts.manifest.display().to_string(),
        arch,
        train: opts.train.clone(),
        preprocess: opts.preprocess(),
        class_order: ClassOrder::default(),
        split: SplitRecord::new(&split.plan, entries),
        parameter_count: model.parameter_count(),
        train_seconds: fitted.train_seconds,
        test_seconds,
        metrics,
        epochs: fitted.logs,
        predictions,
    };
    rec.save(out_dir)?;
    Ok(rec)
}

#[derive(Clone, Debug)]
pub struct FamilyOutcome {
    pub family: FamilyId,
    pub result: std::result::Result<RunRecord, String>,
}

pub const BENCHMARK_CSV: &str = "benchmark.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const SUMMARY_JSON: &str = "benchmark.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub split_hash: String,
    pub families: Vec<FamilyStatus>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyStatus {
    pub family: FamilyId,
    pub run_dir: String,
    pub status: String,
    pub accuracy_pct: Option<f64>,
}

/// Trains every family in `families` on one shared split using at most
/// `workers` concurrent fits. A failing family is recorded, not fatal.
pub fn run_benchmark(
    families: &[FamilyId],
    opts: &RunOptions,
    out_dir: &Path,
    workers: usize,
    progress: &(dyn Fn(FamilyId, &EpochLog) + Sync),
) -> Result<(BenchmarkSummary, Vec<FamilyOutcome>)> {
    let (entries, split) = opts.load_split()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let run = |&family: &FamilyId| FamilyOutcome {
        family,
        result: train_family(family, opts, &entries, &split, &out_dir.join(family.cli_name()), |log| {
            progress(family, log)
        })
        .map_err(|e| e.to_string()),
    };
    let outcomes: Vec<FamilyOutcome> = if workers <= 1 {
        families.iter().map(run).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<FamilyOutcome>>> = families.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..workers.min(families.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(f) = families.get(i) else { break };
                    *slots[i].lock().expect("slot lock") = Some(run(f));
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every slot filled")).collect()
    };
    let summary = write_benchmark(out_dir, &split.plan.fingerprint(&entries), &outcomes)?;
    Ok((summary, outcomes))
}

/// Writes the combined tables, the overlaid ROC plot and the summary JSON.
pub fn write_benchmark(out_dir: &Path, split_hash: &str, outcomes: &[FamilyOutcome]) -> Result<BenchmarkSummary> {
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let mut class_rows = Vec::new();
    let mut acc_rows = Vec::new();
    let mut rocs = Vec::new();
    let mut statuses = Vec::new();
    for o in outcomes {
        let name = o.family.display_name();
        let status = match &o.result {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("failed: {e}"),
        };
        match &o.result {
            Ok(rec) => {
                for mut row in record::metrics_rows(name, &rec.metrics, rec.train_seconds, rec.test_seconds) {
                    row.push(status.clone());
                    class_rows.push(row);
                }
                acc_rows.push(vec![
                    name.to_string(),
                    rec.metrics.accuracy_pct.to_string(),
                    rec.train_seconds.to_string(),
                    rec.test_seconds.to_string(),
                    status.clone(),
                ]);
                if let Ok(c) = metrics::roc(&rec.predictions) {
                    rocs.push((name, c));
                }
            }
            Err(_) => {
                for class in ["covid19", "normal"] {
                    let mut row = vec![name.to_string(), class.to_string()];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(status.clone());
                    class_rows.push(row);
                }
                let mut row = vec![name.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 3));
                row.push(status.clone());
                acc_rows.push(row);
            }
        }
        statuses.push(FamilyStatus {
            family: o.family,
            run_dir: o.family.cli_name().to_string(),
            status,
            accuracy_pct: o.result.as_ref().ok().map(|r| r.metrics.accuracy_pct),
        });
    }
    let mut header: Vec<&str> =
        vec!["model", "class", "precision", "recall", "f1", "accuracy_pct", "train_seconds", "test_seconds"];
    header.push("status");
    write(BENCHMARK_CSV, table(&header, &class_rows)?)?;
    write(ACCURACY_CSV, table(&["model", "accuracy_pct", "train_seconds", "test_seconds", "status"], &acc_rows)?)?;
    let plots = out_dir.join(record::PLOTS_DIR);
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let refs: Vec<(&str, &metrics::RocCurve)> = rocs.iter().map(|(n, c)| (*n, c)).collect();
    let svg = plot::roc_curves("ROC curves", &refs);
    fs::write(plots.join("roc_all.svg"), svg).map_err(|e| Error::io(&plots, e))?;
    let summary = BenchmarkSummary { split_hash: split_hash.to_string(), families: statuses };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Record(e.to_string()))?;
    write(SUMMARY_JSON, json + "\n")?;
    Ok(summary)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let err = |e: csv::Error| Error::Record(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Record(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

/// Per-class precision, recall, F1 and accuracy table with two-decimal rounding.
pub fn render_table(records: &[&RunRecord]) -> String {
    let mut out = format!(
        "{:<18} {:<8} {:>9} {:>6} {:>6} {:>8} {:>9} {:>8}\n",
        "model", "class", "precision", "recall", "f1", "acc_%", "train_s", "test_s"
    );
    for r in records {
        for l in [crate::data::Label::Covid19, crate::data::Label::Normal] {
            let c = r.metrics.class(l);
            out.push_str(&format!(
                "{:<18} {:<8} {:>9} {:>6} {:>6} {:>8} {:>9.2} {:>8.3}\n",
                r.model_name,
                l.as_str(),
                fmt2(c.precision),
                fmt2(c.recall),
                fmt2(c.f1),
                fmt2(r.metrics.accuracy_pct),
                r.train_seconds,
                r.test_seconds
            ));
        }
    }
    out
}

/// Rebuilds the combined benchmark reports from the per-family run directories.
pub fn regenerate_benchmark(out_dir: &Path) -> Result<BenchmarkSummary> {
    let p = out_dir.join(SUMMARY_JSON);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let summary: BenchmarkSummary =
        serde_json::from_str(&text).map_err(|e| Error::Record(format!("{}: {e}", p.display())))?;
    let mut outcomes = Vec::with_capacity(summary.families.len());
    for f in &summary.families {
        let result = match f.status.strip_prefix("failed: ") {
            Some(msg) => Err(msg.to_string()),
            None => Ok(RunRecord::load(&out_dir.join(&f.run_dir))?),
        };
        outcomes.push(FamilyOutcome { family: f.family, result });
    }
    write_benchmark(out_dir, &summary.split_hash, &outcomes)
}
