//! Line formats.
//!
//! * triples: `head<TAB>relation<TAB>tail`
//! * base paths: `e_h<TAB>r_1,r_2,…,r_t<TAB>e_t`
//! * enhanced paths: `e_h<TAB>r_1,e_1,r_2,…,r_t<TAB>e_t`
//! * KBC pairs, one JSON object per line:
//!   `{"head":…,"tail":…,"label":0|1,"paths":[["r_1","e_1",…,"r_t"],…]}`
//!
//! Blank lines are skipped. Errors carry 1-based line numbers.

use std::path::Path;

use rop_core::kg::{EntityId, KbcDataset, KbcExample, KbcSplit, PathInstance, RelationId, TripleStore, Vocab};
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, AppError, AppResult};

/// What to do with tokens missing from the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabMode {
    /// Intern them (training data).
    Extend,
    /// Map them to the reserved unknown id (dev/test data).
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl LineError {
    pub fn in_file(self, path: &Path) -> AppError {
        AppError::Parse {
            path: path.display().to_string(),
            line: self.line,
            message: self.message,
        }
    }
}

type LineResult<T> = Result<T, LineError>;

fn err<T>(line: usize, message: impl Into<String>) -> LineResult<T> {
    Err(LineError {
        line,
        message: message.into(),
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn fields<const N: usize>(line: usize, text: &str) -> LineResult<[&str; N]> {
    let parts: Vec<&str> = text.split('\t').collect();
    match <[&str; N]>::try_from(parts.as_slice()) {
        Ok(a) => Ok(a),
        Err(_) => err(line, format!("expected {N} tab-separated fields, found {}", parts.len())),
    }
}

fn entity(vocab: &mut Vocab, mode: VocabMode, token: &str, line: usize) -> LineResult<EntityId> {
    match mode {
        VocabMode::Extend => vocab.intern_entity(token).or_else(|e| err(line, e.to_string())),
        VocabMode::Frozen => Ok(vocab.entity_or_unk(token)),
    }
}

fn relation(vocab: &mut Vocab, mode: VocabMode, token: &str, line: usize) -> LineResult<RelationId> {
    match mode {
        VocabMode::Extend => vocab.intern_relation(token).or_else(|e| err(line, e.to_string())),
        VocabMode::Frozen => Ok(vocab.relation_or_unk(token)),
    }
}

/// Parses triples, extending `vocab` in first-seen order. Duplicates are
/// dropped.
pub fn parse_triples(text: &str, vocab: &mut Vocab) -> LineResult<TripleStore> {
    let mut store = TripleStore::new();
    for (n, l) in lines(text) {
        let [h, r, t] = fields::<3>(n, l)?;
        let h = entity(vocab, VocabMode::Extend, h, n)?;
        let r = relation(vocab, VocabMode::Extend, r, n)?;
        let t = entity(vocab, VocabMode::Extend, t, n)?;
        store.insert(h, r, t);
    }
    Ok(store)
}

/// One line per triple in id order, which is the first-seen order of a
/// freshly parsed file.
pub fn write_triples(store: &TripleStore, vocab: &Vocab) -> String {
    let mut out = String::new();
    for (h, r, t) in store.iter() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            vocab.entity_name(h),
            vocab.relation_name(r),
            vocab.entity_name(t)
        ));
    }
    out
}

fn path_from_tokens(
    head: EntityId,
    middle: &[&str],
    tail: EntityId,
    enhanced: bool,
    vocab: &mut Vocab,
    mode: VocabMode,
    n: usize,
) -> LineResult<PathInstance> {
    if middle.iter().any(|t| t.is_empty()) {
        return err(n, "empty token in relation sequence");
    }
    let built = if enhanced {
        if middle.len().is_multiple_of(2) {
            return err(
                n,
                format!("enhanced path needs 2t-1 alternating tokens, found {}", middle.len()),
            );
        }
        let mut rels = Vec::with_capacity(middle.len() / 2 + 1);
        let mut mids = Vec::with_capacity(middle.len() / 2);
        for (i, tok) in middle.iter().enumerate() {
            if i % 2 == 0 {
                rels.push(relation(vocab, mode, tok, n)?);
            } else {
                mids.push(entity(vocab, mode, tok, n)?);
            }
        }
        PathInstance::new(head, rels, Some(mids), tail)
    } else {
        let rels = middle
            .iter()
            .map(|tok| relation(vocab, mode, tok, n))
            .collect::<LineResult<Vec<_>>>()?;
        PathInstance::base(head, rels, tail)
    };
    built.or_else(|e| err(n, e.to_string()))
}

pub fn parse_paths(text: &str, enhanced: bool, vocab: &mut Vocab, mode: VocabMode) -> LineResult<Vec<PathInstance>> {
    let mut out = Vec::new();
    for (n, l) in lines(text) {
        let [h, middle, t] = fields::<3>(n, l)?;
        let head = entity(vocab, mode, h, n)?;
        let tail = entity(vocab, mode, t, n)?;
        let toks: Vec<&str> = middle.split(',').collect();
        out.push(path_from_tokens(head, &toks, tail, enhanced, vocab, mode, n)?);
    }
    Ok(out)
}

fn middle_tokens(p: &PathInstance, vocab: &Vocab) -> Vec<String> {
    let mut toks = Vec::with_capacity(2 * p.len());
    for (i, &r) in p.relations.iter().enumerate() {
        if i > 0 {
            if let Some(m) = &p.intermediates {
                toks.push(vocab.entity_name(m[i - 1]).to_string());
            }
        }
        toks.push(vocab.relation_name(r).to_string());
    }
    toks
}

/// Enhanced paths are written with their intermediates, base paths
/// without.
pub fn write_paths(paths: &[PathInstance], vocab: &Vocab) -> String {
    let mut out = String::new();
    for p in paths {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            vocab.entity_name(p.head),
            middle_tokens(p, vocab).join(","),
            vocab.entity_name(p.tail)
        ));
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbcLine {
    head: String,
    tail: String,
    label: u8,
    paths: Vec<Vec<String>>,
}

pub fn parse_kbc_jsonl(text: &str, enhanced: bool, vocab: &mut Vocab, mode: VocabMode) -> LineResult<Vec<KbcExample>> {
    let mut out = Vec::new();
    for (n, l) in lines(text) {
        let rec: KbcLine = serde_json::from_str(l).or_else(|e| err(n, format!("json: {e}")))?;
        let label = match rec.label {
            0 => false,
            1 => true,
            x => return err(n, format!("label must be 0 or 1, found {x}")),
        };
        let head = entity(vocab, mode, &rec.head, n)?;
        let tail = entity(vocab, mode, &rec.tail, n)?;
        let paths = rec
            .paths
            .iter()
            .map(|toks| {
                let toks: Vec<&str> = toks.iter().map(String::as_str).collect();
                if toks.is_empty() {
                    return err(n, "empty path");
                }
                path_from_tokens(head, &toks, tail, enhanced, vocab, mode, n)
            })
            .collect::<LineResult<Vec<_>>>()?;
        out.push(KbcExample {
            head,
            tail,
            label,
            paths,
        });
    }
    Ok(out)
}

pub fn write_kbc_jsonl(examples: &[KbcExample], vocab: &Vocab) -> String {
    let mut out = String::new();
    for ex in examples {
        let rec = KbcLine {
            head: vocab.entity_name(ex.head).to_string(),
            tail: vocab.entity_name(ex.tail).to_string(),
            label: ex.label as u8,
            paths: ex.paths.iter().map(|p| middle_tokens(p, vocab)).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain strings serialize"));
        out.push('\n');
    }
    out
}

pub const KBC_SPLITS: [&str; 3] = ["train", "dev", "test"];

/// Reads `<dir>/<relation>/{train,dev,test}.jsonl` (missing files are
/// empty splits). Relations are sorted by directory name; every train file
/// is read before any dev/test file so that held-out tokens absent from
/// training become unknown ids. With `frozen` the vocabulary (e.g. a
/// checkpoint's) is not extended at all.
pub fn load_kbc_dir(dir: &Path, enhanced: bool, vocab: &mut Vocab, frozen: bool) -> AppResult<KbcDataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| AppError::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(AppError::Data(format!("{}: no query-relation directories", dir.display())));
    }
    let mut splits = vec![KbcSplit::default(); names.len()];
    for (split_idx, split) in KBC_SPLITS.iter().enumerate() {
        let mode = if split_idx == 0 && !frozen { VocabMode::Extend } else { VocabMode::Frozen };
        for (name, s) in names.iter().zip(&mut splits) {
            let file = dir.join(name).join(format!("{split}.jsonl"));
            if !file.exists() {
                continue;
            }
            let text = read_to_string(&file)?;
            let examples = parse_kbc_jsonl(&text, enhanced, vocab, mode).map_err(|e| e.in_file(&file))?;
            match split_idx {
                0 => s.train = examples,
                1 => s.dev = examples,
                _ => s.test = examples,
            }
        }
    }
    Ok(KbcDataset { queries: names, splits })
}

pub fn write_kbc_dir(dir: &Path, dataset: &KbcDataset, vocab: &Vocab) -> AppResult<()> {
    for (name, s) in dataset.queries.iter().zip(&dataset.splits) {
        for (split, part) in KBC_SPLITS.iter().zip([&s.train, &s.dev, &s.test]) {
            if part.is_empty() {
                continue;
            }
            let file = dir.join(name).join(format!("{split}.jsonl"));
            crate::error::write(&file, write_kbc_jsonl(part, vocab))?;
        }
    }
    Ok(())
}
