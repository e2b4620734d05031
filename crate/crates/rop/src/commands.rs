//! The subcommands as library functions; `main` only parses arguments and
//! maps errors to exit codes.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rop_core::kbc::{train_kbc_epoch, Aggregation, KbcModel, KbcTrainConfig, Split};
use rop_core::kg::{enhance_path, KbcDataset};
use rop_core::numerics::ADAGRAD_EPS;
use rop_core::pqa::{
    hits_at_10, length_report, mean_quantile, queries_from_paths, train_pqa, CandidatePool, PqaQuery, RankResult,
};
use rop_core::synth::{generate_synthetic_kbc, generate_synthetic_kg, SynthConfig, SynthKbcConfig};
use rop_core::train::TrainConfig;
use rop_core::verify::run_suite;
use rop_core::{rng_from_seed, EntityId, Error, PathInstance, RelationId, RopModel, Vocab};
use serde::Serialize;

use crate::checkpoint::{Checkpoint, Model};
use crate::config::{Resolved, Task};
use crate::error::{read_to_string, write, AppError, AppResult};
use crate::eval::{kbc_map, rank_queries, thread_pool};
use crate::format::{load_kbc_dir, parse_paths, parse_triples, write_kbc_dir, write_paths, write_triples, VocabMode};
use crate::report::{
    length_rows, write_report, EnhanceSummary, GradCheckSummary, IngestStats, KbcReport, LengthOnly, PqaReport,
    ResultLine,
};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const BEST_MARKER: &str = "best";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const METRICS: &str = "metrics";
pub const RESULTS: &str = "results.jsonl";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:04}.json")
}

/// Path of the checkpoint named by `<out>/checkpoints/best`.
pub fn best_checkpoint(out: &Path) -> AppResult<PathBuf> {
    let dir = out.join(CHECKPOINT_DIR);
    let name = read_to_string(&dir.join(BEST_MARKER))?;
    Ok(dir.join(name.trim()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Pqa(PqaReport),
    Kbc(KbcReport),
}

// ---------------------------------------------------------------- ingest

pub fn cmd_ingest(triples: &Path, out: &Path) -> AppResult<IngestStats> {
    let text = read_to_string(triples)?;
    let mut vocab = Vocab::new();
    let store = parse_triples(&text, &mut vocab).map_err(|e| e.in_file(triples))?;
    let stats = IngestStats {
        n_triples: store.len(),
        n_entities: vocab.n_entities(),
        n_relations: vocab.n_relations(),
    };
    write_report(out, "stats", &stats, std::slice::from_ref(&stats))?;
    Ok(stats)
}

// --------------------------------------------------------------- enhance

/// Fills intermediates of every base path by a seeded walk through the
/// store (closed under inverses). Paths with no realisation are counted and
/// listed, never fatal.
pub fn cmd_enhance(triples: &Path, paths: &Path, seed: u64, out: &Path) -> AppResult<EnhanceSummary> {
    let mut vocab = Vocab::new();
    let store = parse_triples(&read_to_string(triples)?, &mut vocab).map_err(|e| e.in_file(triples))?;
    let store = store.add_inverses(&mut vocab)?;
    let base = parse_paths(&read_to_string(paths)?, false, &mut vocab, VocabMode::Frozen).map_err(|e| e.in_file(paths))?;
    let mut rng = rng_from_seed(seed);
    let (mut enhanced, mut missing) = (Vec::new(), Vec::new());
    for p in &base {
        match enhance_path(&store, p, &mut rng) {
            Ok(e) => enhanced.push(e),
            Err(Error::NotFound) => missing.push(p.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    write(&out.join("enhanced.tsv"), write_paths(&enhanced, &vocab))?;
    write(&out.join("not_found.tsv"), write_paths(&missing, &vocab))?;
    let summary = EnhanceSummary {
        seed,
        n_paths: base.len(),
        n_enhanced: enhanced.len(),
        n_not_found: missing.len(),
    };
    write_report(out, "summary", &summary, std::slice::from_ref(&summary))?;
    Ok(summary)
}

// ----------------------------------------------------------------- synth

fn query_lines(queries: &[PqaQuery], vocab: &Vocab) -> AppResult<String> {
    let mut paths = Vec::new();
    for q in queries {
        for &g in &q.gold_tails {
            paths.push(PathInstance::base(q.head, q.relations.clone(), g)?);
        }
    }
    Ok(write_paths(&paths, vocab))
}

/// Writes a synthetic bundle and a ready-to-train `<task>.conf`; returns
/// the config path.
pub fn cmd_synth(task: Task, seed: u64, out: &Path) -> AppResult<PathBuf> {
    match task {
        Task::Pqa => {
            let kg = generate_synthetic_kg(&SynthConfig::standard(seed))?;
            write(&out.join("triples.tsv"), write_triples(&kg.store, &kg.vocab))?;
            write(&out.join("train.tsv"), write_paths(&kg.train, &kg.vocab))?;
            write(&out.join("test.tsv"), query_lines(&kg.held_out, &kg.vocab)?)?;
            let rev: String = kg.reversible.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
            write(&out.join("reversible.tsv"), rev)?;
            let conf = out.join("pqa.conf");
            write(
                &conf,
                format!(
                    "# synthetic grid world, seed {seed}\n\
                     task = pqa\narch = arc1\ndim = 32\nlr = 0.1\nnegatives = 10\nbatch = 50\nepochs = 100\n\
                     seed = {seed}\ntrain = train.tsv\ntrain_format = enhanced\ntest = test.tsv\ncandidates = full\n"
                ),
            )?;
            Ok(conf)
        }
        Task::Kbc => {
            let kbc = generate_synthetic_kbc(&SynthKbcConfig::standard(seed))?;
            write(&out.join("triples.tsv"), write_triples(&kbc.store, &kbc.vocab))?;
            write_kbc_dir(&out.join("data"), &kbc.dataset, &kbc.vocab)?;
            let conf = out.join("kbc.conf");
            write(
                &conf,
                format!(
                    "# synthetic composite-relation task, seed {seed}\n\
                     task = kbc\narch = arc3\ncomp = egru\ndim = 32\nlr = 0.1\nbatch = 20\nepochs = 30\n\
                     seed = {seed}\ndata = data\nkbc_format = enhanced\n"
                ),
            )?;
            Ok(conf)
        }
    }
}

// -------------------------------------------------------------- datasets

/// PQA inputs. With a `fixed` vocabulary (evaluation) no token is added.
pub struct PqaData {
    pub vocab: Vocab,
    pub train: Vec<PathInstance>,
    pub dev: Vec<PqaQuery>,
    pub test: Vec<PqaQuery>,
    pub pool: CandidatePool,
}

fn read_paths(path: &Path, enhanced: bool, vocab: &mut Vocab, mode: VocabMode) -> AppResult<Vec<PathInstance>> {
    parse_paths(&read_to_string(path)?, enhanced, vocab, mode).map_err(|e| e.in_file(path))
}

pub fn load_pqa(cfg: &Resolved, fixed: Option<Vocab>) -> AppResult<PqaData> {
    let frozen = fixed.is_some();
    let mut vocab = fixed.unwrap_or_default();
    let train = match &cfg.train {
        Some(p) => {
            let mode = if frozen { VocabMode::Frozen } else { VocabMode::Extend };
            read_paths(p, cfg.train_enhanced, &mut vocab, mode)?
        }
        None if frozen => Vec::new(),
        None => return Err(AppError::Usage("pqa training needs `train`".into())),
    };
    let mut held_out = |p: &Option<PathBuf>| -> AppResult<Vec<PqaQuery>> {
        match p {
            Some(p) => Ok(queries_from_paths(&read_paths(p, false, &mut vocab, VocabMode::Frozen)?)),
            None => Ok(Vec::new()),
        }
    };
    let dev = held_out(&cfg.dev)?;
    let test = held_out(&cfg.test)?;
    let pool = if cfg.full_candidates {
        CandidatePool::full_vocab(vocab.n_entities())
    } else {
        CandidatePool::from_paths(&train, vocab.n_entities())
    };
    Ok(PqaData {
        vocab,
        train,
        dev,
        test,
        pool,
    })
}

pub fn load_kbc(cfg: &Resolved, vocab: &mut Vocab, frozen: bool) -> AppResult<KbcDataset> {
    let dir = cfg
        .data
        .as_ref()
        .ok_or_else(|| AppError::Usage("kbc needs `data` (a dataset directory)".into()))?;
    Ok(load_kbc_dir(dir, cfg.kbc_enhanced, vocab, frozen)?.preprocess(cfg.max_len, cfg.max_paths))
}

// ------------------------------------------------------------ evaluation

fn result_lines(results: &[RankResult], queries: &[PqaQuery], vocab: &Vocab) -> Vec<ResultLine> {
    results
        .iter()
        .map(|r| {
            let q = &queries[r.query];
            ResultLine {
                query: r.query,
                head: vocab.entity_name(q.head).to_string(),
                relations: q.relations.iter().map(|&x| vocab.relation_name(x).to_string()).collect(),
                gold: vocab.entity_name(r.gold).to_string(),
                rank: r.rank,
                candidates: r.candidates,
                quantile: r.quantile,
                unk: r.unk,
            }
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> AppResult<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    write(path, s)
}

/// Ranks `queries`, writes `metrics.{json,csv}` and `results.jsonl`.
pub fn report_pqa(
    model: &RopModel,
    data: &PqaData,
    queries: &[PqaQuery],
    threads: usize,
    out: &Path,
) -> AppResult<PqaReport> {
    let pool = thread_pool(threads)?;
    let results = rank_queries(&pool, model, &data.pool, queries)?;
    if results.is_empty() {
        return Err(AppError::Data("no evaluation queries".into()));
    }
    let lengths = length_report(&results, queries, &data.vocab)?;
    let report = PqaReport::new(
        hits_at_10(&results)?,
        mean_quantile(&results)?,
        queries.len(),
        results.len(),
        &lengths,
    );
    write_report(out, METRICS, &report, &report.by_length)?;
    write_jsonl(&out.join(RESULTS), &result_lines(&results, queries, &data.vocab))?;
    Ok(report)
}

pub fn report_kbc(
    model: &KbcModel,
    dataset: &KbcDataset,
    split: Split,
    vocab: &Vocab,
    threads: usize,
    out: &Path,
) -> AppResult<KbcReport> {
    let pool = thread_pool(threads)?;
    let agg = model.config.aggregation;
    let map = kbc_map(&pool, model, dataset, split, agg, vocab)?;
    if map.per_relation.iter().all(|r| r.n_pos + r.n_neg == 0) {
        return Err(AppError::Data("no evaluation pairs".into()));
    }
    let report = KbcReport::new(&map, agg.name());
    write_report(out, METRICS, &report, &report.per_relation)?;
    Ok(report)
}

// ----------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogLine {
    pub epoch: usize,
    pub loss: f64,
    pub wallclock_s: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_score: Option<f64>,
}

struct RunDir {
    out: PathBuf,
    start: Instant,
    seed: u64,
}

impl RunDir {
    fn create(cfg: &Resolved) -> AppResult<Self> {
        write(&cfg.out.join(CONFIG_FILE), cfg.to_text())?;
        write(&cfg.out.join(TRAIN_LOG), "")?;
        Ok(RunDir {
            out: cfg.out.clone(),
            start: Instant::now(),
            seed: cfg.seed,
        })
    }

    fn save(&self, ckpt: &Checkpoint) -> AppResult<()> {
        ckpt.save(&self.out.join(CHECKPOINT_DIR).join(checkpoint_name(ckpt.epoch)))
    }

    fn log(&self, epoch: usize, loss: f64, dev_score: Option<f64>) -> AppResult<()> {
        let line = LogLine {
            epoch,
            loss,
            wallclock_s: self.start.elapsed().as_secs_f64(),
            seed: self.seed,
            dev_score,
        };
        let path = self.out.join(TRAIN_LOG);
        let mut f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| AppError::io(&path, e))?;
        writeln!(f, "{}", serde_json::to_string(&line)?).map_err(|e| AppError::io(&path, e))
    }

    fn mark_best(&self, epoch: usize) -> AppResult<()> {
        write(
            &self.out.join(CHECKPOINT_DIR).join(BEST_MARKER),
            format!("{}\n", checkpoint_name(epoch)),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    /// Best dev epoch, or the last epoch without dev data.
    pub best_epoch: usize,
    pub report: Option<Report>,
}

/// Trains per the config: `epoch-0000` is the initialisation, one
/// checkpoint per epoch after it, `best` names the selected one, and the
/// selected model is evaluated on `test` when given.
pub fn cmd_train(cfg: &Resolved, threads: usize) -> AppResult<TrainOutcome> {
    match cfg.model.task {
        Task::Pqa => train_pqa_run(cfg, threads),
        Task::Kbc => train_kbc_run(cfg, threads),
    }
}

fn train_pqa_run(cfg: &Resolved, threads: usize) -> AppResult<TrainOutcome> {
    let rop_cfg = cfg.model.rop_config()?;
    let data = load_pqa(cfg, None)?;
    if cfg.model.arch == "arc3" && !cfg.train_enhanced {
        eprintln!("warning: arc3 on a base corpus: intermediate positions carry no loss");
    }
    let run = RunDir::create(cfg)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = RopModel::new(rop_cfg, data.vocab.n_entities(), data.vocab.n_relations(), &mut rng)?;
    run.save(&Checkpoint::of_pqa(&cfg.model, &model, &data.vocab, 0))?;
    let train_cfg = TrainConfig {
        lr: cfg.lr,
        eps: ADAGRAD_EPS,
        batch_size: cfg.batch,
    };
    let pool = thread_pool(threads)?;
    let mut failure: Option<AppError> = None;
    let summary = train_pqa(
        &mut model,
        &data.train,
        &train_cfg,
        cfg.epochs,
        &mut rng,
        |m| {
            if data.dev.is_empty() {
                return Ok(None);
            }
            let results = rank_queries(&pool, m, &data.pool, &data.dev)
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(Some(hits_at_10(&results)?))
        },
        |rec, m| {
            let r = run
                .save(&Checkpoint::of_pqa(&cfg.model, m, &data.vocab, rec.epoch))
                .and_then(|_| run.log(rec.epoch, rec.stats.loss, rec.dev_score));
            match r {
                Ok(()) => true,
                Err(e) => {
                    failure = Some(e);
                    false
                }
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let epochs_run = summary.history.len();
    let best_epoch = summary.best_epoch.unwrap_or(epochs_run);
    run.mark_best(best_epoch)?;
    let report = if data.test.is_empty() {
        None
    } else {
        Some(Report::Pqa(report_pqa(&model, &data, &data.test, threads, &cfg.out)?))
    };
    Ok(TrainOutcome {
        epochs_run,
        best_epoch,
        report,
    })
}

fn has_split(d: &KbcDataset, split: Split) -> bool {
    d.splits.iter().any(|s| {
        !match split {
            Split::Train => &s.train,
            Split::Dev => &s.dev,
            Split::Test => &s.test,
        }
        .is_empty()
    })
}

fn train_kbc_run(cfg: &Resolved, threads: usize) -> AppResult<TrainOutcome> {
    let kbc_cfg = cfg.model.kbc_config()?;
    let mut vocab = Vocab::new();
    let dataset = load_kbc(cfg, &mut vocab, false)?;
    let run = RunDir::create(cfg)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = KbcModel::new(
        kbc_cfg,
        vocab.n_entities(),
        vocab.n_relations(),
        dataset.queries.len(),
        &mut rng,
    )?;
    let ckpt = |m: &KbcModel, epoch| Checkpoint::of_kbc(&cfg.model, m, &vocab, &dataset.queries, epoch);
    run.save(&ckpt(&model, 0))?;
    let train_cfg = KbcTrainConfig {
        lr: cfg.lr,
        eps: ADAGRAD_EPS,
        batch_size: cfg.batch,
    };
    let pool = thread_pool(threads)?;
    let use_dev = has_split(&dataset, Split::Dev);
    let mut best: Option<(usize, f64, KbcModel)> = None;
    for epoch in 1..=cfg.epochs {
        let stats = train_kbc_epoch(&mut model, &dataset, &train_cfg, &mut rng)?;
        let dev_score = if use_dev {
            Some(kbc_map(&pool, &model, &dataset, Split::Dev, model.config.aggregation, &vocab)?.map)
        } else {
            None
        };
        run.save(&ckpt(&model, epoch))?;
        run.log(epoch, stats.total, dev_score)?;
        if let Some(s) = dev_score {
            if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
                best = Some((epoch, s, model.clone()));
            }
        }
    }
    let best_epoch = match best {
        Some((e, _, m)) => {
            model = m;
            e
        }
        None => cfg.epochs,
    };
    run.mark_best(best_epoch)?;
    let report = if has_split(&dataset, Split::Test) {
        Some(Report::Kbc(report_kbc(&model, &dataset, Split::Test, &vocab, threads, &cfg.out)?))
    } else {
        None
    };
    Ok(TrainOutcome {
        epochs_run: cfg.epochs,
        best_epoch,
        report,
    })
}

// ------------------------------------------------------------------ eval

/// Evaluates a checkpoint on the config's data. The config must describe
/// the checkpoint's architecture; the checkpoint's vocabulary is used
/// as-is, so unseen tokens become unknown ids.
pub fn cmd_eval(cfg: &Resolved, checkpoint: &Path, split: Split, threads: usize, out: &Path) -> AppResult<Report> {
    let ckpt = Checkpoint::load(checkpoint)?;
    ckpt.check_spec(&cfg.model)?;
    let mut vocab = ckpt.vocab()?;
    let model = ckpt.model()?;
    write(&out.join(CONFIG_FILE), cfg.to_text())?;
    match model {
        Model::Pqa(m) => {
            let data = load_pqa(cfg, Some(vocab))?;
            let queries = match split {
                Split::Dev => &data.dev,
                Split::Test => &data.test,
                Split::Train => return Err(AppError::Usage("pqa evaluates dev or test queries".into())),
            };
            Ok(Report::Pqa(report_pqa(&m, &data, queries, threads, out)?))
        }
        Model::Kbc(mut m) => {
            let dataset = load_kbc(cfg, &mut vocab, true)?;
            if dataset.queries != ckpt.queries {
                return Err(AppError::Usage(format!(
                    "dataset query relations {:?} differ from the checkpoint's {:?}",
                    dataset.queries, ckpt.queries
                )));
            }
            m.config.aggregation = Aggregation::parse(&cfg.model.aggregation)
                .ok_or_else(|| AppError::Usage(format!("unknown aggregation {:?}", cfg.model.aggregation)))?;
            Ok(Report::Kbc(report_kbc(&m, &dataset, split, &vocab, threads, out)?))
        }
    }
}

// ------------------------------------------------------------- gradcheck

pub fn cmd_gradcheck(dim: usize, seeds: u64, corrupt: bool, out: Option<&Path>) -> AppResult<GradCheckSummary> {
    let cases = run_suite(dim, seeds, corrupt)?;
    let summary = GradCheckSummary::new(&cases, dim, seeds);
    if let Some(out) = out {
        write_report(out, "gradcheck", &summary, &summary.param_rows())?;
    }
    Ok(summary)
}

// --------------------------------------------------------------- analyze

/// Length buckets and the inverse-share correlation from a `results.jsonl`.
pub fn cmd_analyze(results: &Path, out: &Path) -> AppResult<LengthOnly> {
    let text = read_to_string(results)?;
    let mut lines = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let r: ResultLine = serde_json::from_str(l).map_err(|e| AppError::Parse {
            path: results.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        lines.push(r);
    }
    let mut vocab = Vocab::new();
    let n_queries = lines.iter().map(|r| r.query + 1).max().unwrap_or(0);
    let mut queries = vec![PqaQuery::new(EntityId::UNK, Vec::new(), Vec::new()); n_queries];
    for r in &lines {
        let rels = r
            .relations
            .iter()
            .map(|t| vocab.intern_relation(t))
            .collect::<Result<Vec<RelationId>, _>>()?;
        queries[r.query] = PqaQuery::new(EntityId::UNK, rels, Vec::new());
    }
    let rs: Vec<RankResult> = lines.iter().map(ResultLine::to_result).collect();
    let lengths = length_report(&rs, &queries, &vocab)?;
    let report = LengthOnly {
        by_length: length_rows(&lengths),
        spearman_inverse_vs_h10: lengths.spearman_inverse_vs_h10,
    };
    write_report(out, "length_report", &report, &report.by_length)?;
    Ok(report)
}
