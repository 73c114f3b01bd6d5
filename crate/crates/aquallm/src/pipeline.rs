//! Stage driver: checkpoints, run ledger, resume and workdir locking.
//!
//! Stages communicate only through checkpoint files in the workdir. The run
//! ledger (`run.json`) records, per stage, a hash of the settings that affect
//! it and the content hashes of its inputs and outputs; `--resume` skips a
//! stage when all of these still match. Once a stage reruns, every later
//! stage reruns as well.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use aquallm_core::filtering::filter_pairs_with;
use aquallm_core::generation::generate_all_with;
use aquallm_core::paraphrase::expand_with;
use aquallm_core::{
    assemble, build_corpus, compute_stats, extract_candidates, AnnotatedCaption, AnswerCandidate,
    AqaTriplet, Corpus, CorpusManifest, CorpusWarning, Executor, ExpandedPair, ModelGateway,
    QaPairDraft,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::conllu::parse_conllu;
use crate::export::{export_csv, from_jsonl, to_jsonl};
use crate::gateway::build_gateway;
use crate::manifest::parse_manifest;

pub const CORPUS: &str = "01_corpus.json";
pub const CANDIDATES: &str = "02_candidates.jsonl";
pub const DRAFTS: &str = "03_drafts.jsonl";
pub const FILTERED: &str = "04_filtered.jsonl";
pub const FILTER_REPORT: &str = "04_filter_report.json";
pub const PARAPHRASED: &str = "05_paraphrased.jsonl";
pub const DATASET: &str = "06_dataset.jsonl";
pub const STATS: &str = "07_stats.json";
pub const DATASET_CSV: &str = "dataset.csv";
pub const LEDGER: &str = "run.json";
pub const LOCK: &str = ".aquallm.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Extract,
    Generate,
    Filter,
    Paraphrase,
    Assemble,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Generate,
        Stage::Filter,
        Stage::Paraphrase,
        Stage::Assemble,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Paraphrase => "paraphrase",
            Stage::Assemble => "assemble",
            Stage::Stats => "stats",
        }
    }

    /// Workdir checkpoints the stage reads.
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[],
            Stage::Extract => &[CORPUS],
            Stage::Generate => &[CORPUS, CANDIDATES],
            Stage::Filter => &[CORPUS, DRAFTS],
            Stage::Paraphrase => &[CORPUS, FILTERED],
            Stage::Assemble => &[CORPUS, PARAPHRASED],
            Stage::Stats => &[CORPUS, DATASET],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[CORPUS],
            Stage::Extract => &[CANDIDATES],
            Stage::Generate => &[DRAFTS],
            Stage::Filter => &[FILTERED, FILTER_REPORT],
            Stage::Paraphrase => &[PARAPHRASED],
            Stage::Assemble => &[DATASET],
            Stage::Stats => &[STATS, DATASET_CSV],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("missing checkpoint {0}; run the earlier stages first")]
    MissingCheckpoint(&'static str),
    #[error("{0} is required for the ingest stage")]
    MissingInput(&'static str),
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error(transparent)]
    Annotation(#[from] aquallm_core::AnnotationError),
    #[error(transparent)]
    Filter(#[from] aquallm_core::filtering::FilterError),
    #[error(transparent)]
    Assembly(#[from] aquallm_core::dataset::AssemblyError),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
    #[error("workdir {} is locked by another run (remove {} if no run is active)", dir.display(), dir.join(LOCK).display())]
    Locked { dir: PathBuf },
    #[error("workdir {}: {source}", dir.display())]
    Workdir {
        dir: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("run ledger {}: {message}", path.display())]
    Ledger { path: PathBuf, message: String },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Order-preserving parallel map on a dedicated rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    pub fn new(workers: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool builds");
        RayonExecutor { pool }
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// Held for the duration of a run; removes the lock file on drop.
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Workdir {
            dir: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(LOCK);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(WorkdirLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(PipelineError::Locked {
                dir: dir.to_path_buf(),
            }),
            Err(source) => Err(PipelineError::Workdir {
                dir: dir.to_path_buf(),
                source,
            }),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub settings: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Serialize, Deserialize)]
struct CorpusCheckpoint {
    manifest: CorpusManifest,
    captions: Vec<AnnotatedCaption>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the settings that can change a stage's output. Worker count,
/// workdir and transport tuning never do.
pub fn settings_hash(stage: Stage, cfg: &PipelineConfig) -> String {
    let model = serde_json::json!({
        "endpoint": cfg.gateway.endpoint,
        "boolean_qa": cfg.gateway.boolean_qa,
    });
    let relevant = match stage {
        Stage::Ingest | Stage::Extract | Stage::Assemble | Stage::Stats => serde_json::Value::Null,
        Stage::Generate => serde_json::json!({ "model": model, "injection": cfg.injection }),
        Stage::Filter => serde_json::json!({ "model": model, "filter": cfg.filter }),
        Stage::Paraphrase => serde_json::json!({
            "model": model,
            "filter": cfg.filter,
            "paraphrase": cfg.paraphrase,
        }),
    };
    sha256_hex(format!("{}\n{relevant}", stage.name()).as_bytes())
}

/// Names of ingest inputs in the ledger.
const MANIFEST_INPUT: &str = "manifest";
const CONLLU_INPUT: &str = "conllu";

pub struct Pipeline {
    cfg: PipelineConfig,
    workdir: PathBuf,
    manifest: Option<PathBuf>,
    conllu: Option<PathBuf>,
    gateway: Box<dyn ModelGateway + Send + Sync>,
    executor: RayonExecutor,
}

impl Pipeline {
    pub fn new(
        cfg: PipelineConfig,
        workdir: PathBuf,
        manifest: Option<PathBuf>,
        conllu: Option<PathBuf>,
    ) -> Self {
        let gateway = build_gateway(&cfg.gateway);
        Self::with_gateway(cfg, workdir, manifest, conllu, gateway)
    }

    pub fn with_gateway(
        cfg: PipelineConfig,
        workdir: PathBuf,
        manifest: Option<PathBuf>,
        conllu: Option<PathBuf>,
        gateway: Box<dyn ModelGateway + Send + Sync>,
    ) -> Self {
        let executor = RayonExecutor::new(cfg.workers);
        Pipeline {
            cfg,
            workdir,
            manifest,
            conllu,
            gateway,
            executor,
        }
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    /// Runs every stage in order. Returns the stages that actually ran.
    pub fn run(&self, resume: bool) -> Result<Vec<Stage>, PipelineError> {
        let _lock = WorkdirLock::acquire(&self.workdir)?;
        let mut ledger = if resume {
            self.load_ledger()?
        } else {
            Ledger::default()
        };
        let mut ran = Vec::new();
        for stage in Stage::ALL {
            if resume && ran.is_empty() && self.is_fresh(stage, &ledger) {
                log::info!("{stage}: up to date, skipped");
                continue;
            }
            self.execute(stage, &mut ledger)?;
            ran.push(stage);
        }
        Ok(ran)
    }

    /// Runs a single stage against existing checkpoints.
    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        let _lock = WorkdirLock::acquire(&self.workdir)?;
        let mut ledger = self.load_ledger()?;
        self.execute(stage, &mut ledger)
    }

    fn ledger_path(&self) -> PathBuf {
        self.workdir.join(LEDGER)
    }

    fn load_ledger(&self) -> Result<Ledger, PipelineError> {
        let path = self.ledger_path();
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| PipelineError::Ledger {
                path,
                message: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Ledger::default()),
            Err(e) => Err(PipelineError::Ledger {
                path,
                message: e.to_string(),
            }),
        }
    }

    fn save_ledger(&self, ledger: &Ledger) -> Result<(), PipelineError> {
        let path = self.ledger_path();
        let text = serde_json::to_string_pretty(ledger).expect("ledger serializes") + "\n";
        write_atomic(&path, text.as_bytes()).map_err(|e| PipelineError::Ledger {
            path,
            message: e.to_string(),
        })
    }

    /// Input files of a stage with their contents.
    fn read_inputs(&self, stage: Stage) -> Result<Vec<(String, Vec<u8>)>, StageError> {
        let mut out = Vec::new();
        if stage == Stage::Ingest {
            let manifest = self
                .manifest
                .as_ref()
                .ok_or(StageError::MissingInput("--manifest"))?;
            let conllu = self
                .conllu
                .as_ref()
                .ok_or(StageError::MissingInput("--conllu"))?;
            out.push((MANIFEST_INPUT.to_string(), read_bytes(manifest)?));
            out.push((CONLLU_INPUT.to_string(), read_bytes(conllu)?));
        }
        for &name in stage.inputs() {
            let path = self.workdir.join(name);
            if !path.exists() {
                return Err(StageError::MissingCheckpoint(name));
            }
            out.push((name.to_string(), read_bytes(&path)?));
        }
        Ok(out)
    }

    fn is_fresh(&self, stage: Stage, ledger: &Ledger) -> bool {
        let Some(record) = ledger.stages.get(stage.name()) else {
            return false;
        };
        if record.settings != settings_hash(stage, &self.cfg) {
            return false;
        }
        let Ok(inputs) = self.read_inputs(stage) else {
            return false;
        };
        let input_hashes: BTreeMap<String, String> = inputs
            .iter()
            .map(|(name, bytes)| (name.clone(), sha256_hex(bytes)))
            .collect();
        if input_hashes != record.inputs {
            return false;
        }
        stage.outputs().iter().all(|name| {
            let recorded = record.outputs.get(*name);
            let current = fs::read(self.workdir.join(name))
                .ok()
                .map(|b| sha256_hex(&b));
            recorded.is_some() && recorded == current.as_ref()
        })
    }

    fn execute(&self, stage: Stage, ledger: &mut Ledger) -> Result<(), PipelineError> {
        log::info!("{stage}: running");
        let fail = |source| PipelineError::Stage { stage, source };
        let result = self
            .read_inputs(stage)
            .and_then(|inputs| Ok((self.compute(stage, &inputs)?, inputs)))
            .and_then(|(files, inputs)| {
                let mut outputs = BTreeMap::new();
                for (name, bytes) in files {
                    let path = self.workdir.join(name);
                    write_atomic(&path, &bytes)
                        .map_err(|source| StageError::Write { path, source })?;
                    outputs.insert(name.to_string(), sha256_hex(&bytes));
                }
                Ok(StageRecord {
                    settings: settings_hash(stage, &self.cfg),
                    inputs: inputs
                        .iter()
                        .map(|(name, bytes)| (name.clone(), sha256_hex(bytes)))
                        .collect(),
                    outputs,
                })
            });
        match result {
            Ok(record) => {
                ledger.stages.insert(stage.name().to_string(), record);
                self.save_ledger(ledger)
            }
            Err(source) => {
                for name in stage.outputs() {
                    let _ = fs::remove_file(self.workdir.join(name));
                }
                ledger.stages.remove(stage.name());
                let _ = self.save_ledger(ledger);
                Err(fail(source))
            }
        }
    }

    fn compute(
        &self,
        stage: Stage,
        inputs: &[(String, Vec<u8>)],
    ) -> Result<Vec<(&'static str, Vec<u8>)>, StageError> {
        let input = |name: &str| -> Result<&str, StageError> {
            let bytes = &inputs
                .iter()
                .find(|(n, _)| n == name)
                .expect("stage input was read")
                .1;
            std::str::from_utf8(bytes).map_err(|e| StageError::Format {
                file: name.to_string(),
                message: e.to_string(),
            })
        };
        if stage == Stage::Ingest {
            return Ok(vec![(
                CORPUS,
                self.ingest(input(MANIFEST_INPUT)?, input(CONLLU_INPUT)?)?,
            )]);
        }
        let corpus = load_corpus(input(CORPUS)?)?;
        let ex = &self.executor;
        let gw: &(dyn ModelGateway + Send + Sync) = self.gateway.as_ref();
        let files = match stage {
            Stage::Ingest => unreachable!(),
            Stage::Extract => {
                let captions = corpus.captions();
                let per_caption = ex.map(captions.len(), |i| extract_candidates(&captions[i]));
                let candidates: Vec<AnswerCandidate> = per_caption.into_iter().flatten().collect();
                log::info!(
                    "extract: {} candidates from {} captions",
                    candidates.len(),
                    captions.len()
                );
                vec![(CANDIDATES, to_jsonl(&candidates).into_bytes())]
            }
            Stage::Generate => {
                let candidates: Vec<AnswerCandidate> = parse_jsonl(CANDIDATES, input(CANDIDATES)?)?;
                let (drafts, report) =
                    generate_all_with(ex, gw, &corpus, &candidates, &self.cfg.injection);
                log::info!("generate: {} drafts; {report:?}", drafts.len());
                let skipped = report.icac_skipped
                    + report.yes_skipped
                    + report.no_gateway_errors
                    + report.zero_gateway_errors;
                if skipped > 0 {
                    log::warn!("generate: {skipped} records skipped after gateway errors");
                }
                vec![(DRAFTS, to_jsonl(&drafts).into_bytes())]
            }
            Stage::Filter => {
                let drafts: Vec<QaPairDraft> = parse_jsonl(DRAFTS, input(DRAFTS)?)?;
                let (accepted, report) =
                    filter_pairs_with(ex, gw, &drafts, &corpus, &self.cfg.filter)?;
                log::info!(
                    "filter: {} of {} drafts accepted",
                    accepted.len(),
                    drafts.len()
                );
                vec![
                    (FILTERED, to_jsonl(&accepted).into_bytes()),
                    (FILTER_REPORT, pretty(&report)),
                ]
            }
            Stage::Paraphrase => {
                let accepted: Vec<QaPairDraft> = parse_jsonl(FILTERED, input(FILTERED)?)?;
                let expanded = expand_with(
                    ex,
                    gw,
                    &accepted,
                    &corpus,
                    &self.cfg.paraphrase,
                    &self.cfg.filter,
                )?;
                log::info!(
                    "paraphrase: {} pairs from {} originals",
                    expanded.len(),
                    accepted.len()
                );
                vec![(PARAPHRASED, to_jsonl(&expanded).into_bytes())]
            }
            Stage::Assemble => {
                let pairs: Vec<ExpandedPair> = parse_jsonl(PARAPHRASED, input(PARAPHRASED)?)?;
                let triplets = assemble(&pairs, &corpus)?;
                log::info!("assemble: {} triplets", triplets.len());
                vec![(DATASET, to_jsonl(&triplets).into_bytes())]
            }
            Stage::Stats => {
                let triplets: Vec<AqaTriplet> = parse_jsonl(DATASET, input(DATASET)?)?;
                let stats = compute_stats(&triplets, &corpus);
                let mut csv = Vec::new();
                export_csv(&triplets, &mut csv).map_err(|e| StageError::Format {
                    file: DATASET_CSV.to_string(),
                    message: e.to_string(),
                })?;
                vec![(STATS, pretty(&stats)), (DATASET_CSV, csv)]
            }
        };
        Ok(files)
    }

    fn ingest(&self, manifest_text: &str, conllu_text: &str) -> Result<Vec<u8>, StageError> {
        let manifest_path = self.manifest.as_deref().unwrap_or(Path::new("manifest"));
        let source_name = manifest_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("corpus");
        let manifest =
            parse_manifest(manifest_text, source_name).map_err(|e| StageError::Format {
                file: manifest_path.display().to_string(),
                message: e.to_string(),
            })?;
        let captions = parse_conllu(conllu_text).map_err(|e| StageError::Format {
            file: self
                .conllu
                .as_deref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            message: e.to_string(),
        })?;
        let (corpus, warnings) = build_corpus(manifest, captions)?;
        for w in &warnings {
            let CorpusWarning::UnreferencedCaption { caption_id } = w;
            log::warn!("ingest: caption {caption_id} is not referenced by the manifest, dropped");
        }
        log::info!(
            "ingest: {} audios, {} captions",
            corpus.num_audios(),
            corpus.num_captions()
        );
        let checkpoint = CorpusCheckpoint {
            manifest: corpus.manifest().clone(),
            captions: corpus.captions().to_vec(),
        };
        Ok(pretty(&checkpoint))
    }
}

/// Rebuilds the corpus from its checkpoint.
pub fn load_corpus(text: &str) -> Result<Corpus, StageError> {
    let checkpoint: CorpusCheckpoint =
        serde_json::from_str(text).map_err(|e| StageError::Format {
            file: CORPUS.to_string(),
            message: e.to_string(),
        })?;
    Ok(build_corpus(checkpoint.manifest, checkpoint.captions)?.0)
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(
    file: &'static str,
    text: &str,
) -> Result<Vec<T>, StageError> {
    from_jsonl(text).map_err(|e| StageError::Format {
        file: file.to_string(),
        message: e.to_string(),
    })
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, StageError> {
    fs::read(path).map_err(|source| StageError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
