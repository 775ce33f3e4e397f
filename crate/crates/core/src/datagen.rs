//! Synthetic desk-scale tasks, vocabularies and the TSV corpus format.
//!
//! Corpus files hold one pair per line: source tokens separated by spaces,
//! a TAB, then target tokens separated by spaces. The end-of-sequence marker
//! is implicit in files and appended when a pair is encoded to ids.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::seq2seq::{EOS, SOS, UNK};

pub const SOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// BIO tags emitted by the tagger task. With the end-of-sequence marker this
/// gives ten output symbols per position.
pub const TAGS: [&str; 9] = [
    "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC",
];

/// Token strings to dense ids. Ids 0, 1 and 2 are reserved for `<s>`,
/// `</s>` and `<unk>`; the rest follow order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [SOS_TOKEN, EOS_TOKEN, UNK_TOKEN] {
            v.add(t);
        }
        v
    }

    /// Id of `token`, inserting it if unseen.
    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Id of `token`, or [`UNK`] when unseen.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Token strings for `ids`, stopping at the first end-of-sequence marker.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    pub fn encode_pair(&self, pair: &TextPair) -> Result<SequencePair> {
        let mut target = self.encode(&pair.target);
        target.push(EOS);
        SequencePair::new(self.encode(&pair.source), target)
    }

    pub fn decode_pair(&self, pair: &SequencePair) -> TextPair {
        TextPair {
            source: self.decode(&pair.source),
            target: self.decode(&pair.target),
        }
    }

    /// One token per line; the line number (from 0) is the id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (n, line) in text.lines().enumerate() {
            if v.index.contains_key(line) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("duplicate token `{line}`"),
                });
            }
            v.add(line);
        }
        let reserved = [SOS_TOKEN, EOS_TOKEN, UNK_TOKEN];
        if v.tokens.len() < 3 || v.tokens[..3] != reserved {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "vocabulary must start with <s>, </s>, <unk>".into(),
            });
        }
        Ok(v)
    }
}

/// Deterministic vocabulary over every token of every pair, sources before
/// targets within a pair.
pub fn build_vocab(corpora: &[&[TextPair]]) -> Vocabulary {
    let mut v = Vocabulary::new();
    for pair in corpora.iter().flat_map(|c| c.iter()) {
        for t in pair.source.iter().chain(&pair.target) {
            v.add(t);
        }
    }
    v
}

/// A source/target pair as token strings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// A source/target pair as ids. The target ends with [`EOS`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SequencePair {
    source: Vec<usize>,
    target: Vec<usize>,
}

impl SequencePair {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::invalid("empty source sequence"));
        }
        if target.last() != Some(&EOS) {
            return Err(Error::invalid("target must end with EOS"));
        }
        if target[..target.len() - 1].contains(&EOS) || target.contains(&SOS) {
            return Err(Error::invalid("target contains a reserved marker before its end"));
        }
        Ok(SequencePair { source, target })
    }

    pub fn source(&self) -> &[usize] {
        &self.source
    }

    /// Target ids including the final EOS.
    pub fn target(&self) -> &[usize] {
        &self.target
    }

    /// Target ids without the final EOS.
    pub fn target_tokens(&self) -> &[usize] {
        &self.target[..self.target.len() - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    /// `target_i = f(target_{i−1}, source_i)`; an early mistake corrupts
    /// every later position.
    Chain,
    /// BIO tags determined by each token and its left neighbour.
    Tagger,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::Chain => "chain",
            TaskKind::Tagger => "tagger",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "chain" => Ok(TaskKind::Chain),
            "tagger" => Ok(TaskKind::Tagger),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Source vocabulary size including the three reserved ids.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
}

impl TaskSpec {
    /// Vocabulary 20, lengths 4–8, 500/100/100 splits.
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        TaskSpec {
            kind,
            vocab_size: 20,
            min_len: 4,
            max_len: 8,
            train: 500,
            dev: 100,
            test: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::invalid("task vocabulary needs at least one non-reserved token"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self.train == 0 || self.dev == 0 || self.test == 0 {
            return Err(Error::invalid("every split needs at least one pair"));
        }
        Ok(())
    }

    fn content_tokens(&self) -> usize {
        self.vocab_size - 3
    }
}

/// The transition `f(prev, src)` of the chain task.
///
/// With `n` content tokens indexed from 0, `f(p, s) = perm[(p + s) mod n]`;
/// the first position uses `p = 0`. For a fixed source token `f` is a
/// bijection in `p`, so a different previous token always changes the next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainRule {
    perm: Vec<usize>,
}

impl ChainRule {
    pub fn new<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        ChainRule { perm }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Next target id given the previous target id (`None` at position 0) and
    /// the aligned source id.
    pub fn apply(&self, prev: Option<usize>, src: usize) -> usize {
        let n = self.perm.len();
        let p = prev.map_or(0, |id| id - 3);
        self.perm[(p + src - 3) % n] + 3
    }

    /// Full target (without EOS) for a source.
    pub fn derive(&self, source: &[usize]) -> Vec<usize> {
        let mut prev = None;
        source
            .iter()
            .map(|&s| {
                let t = self.apply(prev, s);
                prev = Some(t);
                t
            })
            .collect()
    }
}

/// Token classes for the tagger: 0 = outside, 1..=4 = PER, LOC, ORG, MISC.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagRule {
    classes: Vec<usize>,
}

impl TagRule {
    pub fn new<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let classes = (0..n)
            .map(|_| if rng.gen_bool(0.4) { 0 } else { rng.gen_range(1..=4) })
            .collect();
        TagRule { classes }
    }

    pub fn class(&self, token: usize) -> usize {
        self.classes[token - 3]
    }

    /// Index into [`TAGS`] for position `i`.
    pub fn tag(&self, source: &[usize], i: usize) -> usize {
        let c = self.class(source[i]);
        if c == 0 {
            0
        } else if i > 0 && self.class(source[i - 1]) == c {
            2 * c
        } else {
            2 * c - 1
        }
    }
}

/// Generated splits plus the vocabulary that names their ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpora {
    pub vocab: Vocabulary,
    pub train: Vec<SequencePair>,
    pub dev: Vec<SequencePair>,
    pub test: Vec<SequencePair>,
}

impl Corpora {
    pub fn splits(&self) -> [(&'static str, &[SequencePair]); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }
}

/// Generates train/dev/test corpora; a pure function of `spec`.
///
/// Sources are distinct across all three splits.
pub fn generate(spec: &TaskSpec) -> Result<Corpora> {
    spec.validate()?;
    let n = spec.content_tokens();
    let mut rng = rng::stream(spec.seed, Stream::Data);

    let mut vocab = Vocabulary::new();
    for i in 0..n {
        vocab.add(&format!("w{}", i + 3));
    }
    let tag_base = vocab.len();
    if spec.kind == TaskKind::Tagger {
        for t in TAGS {
            vocab.add(t);
        }
    }

    let rules = TaskRules::draw(spec.kind, n, tag_base, &mut rng);

    let total = spec.train + spec.dev + spec.test;
    let lengths = spec.min_len..=spec.max_len;
    let capacity: f64 = lengths.clone().map(|l| (n as f64).powi(l as i32)).sum();
    if capacity < total as f64 {
        return Err(Error::invalid(format!(
            "only {capacity} distinct sources exist for {total} requested pairs"
        )));
    }

    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(total);
    while pairs.len() < total {
        let len = rng.gen_range(lengths.clone());
        let source: Vec<usize> = (0..len).map(|_| rng.gen_range(3..3 + n)).collect();
        if !seen.insert(source.clone()) {
            continue;
        }
        let target = rules.target(&source);
        pairs.push(SequencePair::new(source, target)?);
    }
    let test = pairs.split_off(spec.train + spec.dev);
    let dev = pairs.split_off(spec.train);
    Ok(Corpora {
        vocab,
        train: pairs,
        dev,
        test,
    })
}

/// Seeded rules mapping a source to its target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskRules {
    pub kind: TaskKind,
    pub chain: ChainRule,
    pub tagger: TagRule,
    /// Id of the first tag in [`TAGS`].
    pub tag_base: usize,
}

impl TaskRules {
    fn draw<R: Rng + ?Sized>(kind: TaskKind, n: usize, tag_base: usize, rng: &mut R) -> Self {
        let chain = ChainRule::new(n, rng);
        let tagger = TagRule::new(n, rng);
        TaskRules {
            kind,
            chain,
            tagger,
            tag_base,
        }
    }

    /// The rules [`generate`] uses for `spec`.
    pub fn for_spec(spec: &TaskSpec) -> Self {
        let n = spec.content_tokens();
        TaskRules::draw(spec.kind, n, n + 3, &mut rng::stream(spec.seed, Stream::Data))
    }

    /// Target ids, ending with EOS.
    pub fn target(&self, source: &[usize]) -> Vec<usize> {
        let mut target = match self.kind {
            TaskKind::Copy => source.to_vec(),
            TaskKind::Reverse => source.iter().rev().copied().collect(),
            TaskKind::Chain => self.chain.derive(source),
            TaskKind::Tagger => (0..source.len())
                .map(|i| self.tag_base + self.tagger.tag(source, i))
                .collect(),
        };
        target.push(EOS);
        target
    }
}

pub fn write_corpus(path: &Path, pairs: &[TextPair]) -> Result<()> {
    let mut out = Vec::new();
    for p in pairs {
        writeln!(out, "{}\t{}", p.source.join(" "), p.target.join(" ")).expect("in-memory write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<TextPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

pub fn parse_corpus(text: &str, origin: &Path) -> Result<Vec<TextPair>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fail = |message: &str| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message: message.to_string(),
        };
        let (src, tgt) = line.split_once('\t').ok_or_else(|| fail("missing TAB separator"))?;
        if tgt.contains('\t') {
            return Err(fail("more than one TAB separator"));
        }
        let source: Vec<String> = src.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
        let target: Vec<String> = tgt.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
        if source.is_empty() || target.is_empty() {
            return Err(fail("empty source or target"));
        }
        pairs.push(TextPair { source, target });
    }
    Ok(pairs)
}

/// Writes `{train,dev,test}.tsv` and `vocab.txt` under `dir`.
pub fn write_task_dir(dir: &Path, corpora: &Corpora) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, split) in corpora.splits() {
        let text: Vec<TextPair> = split.iter().map(|p| corpora.vocab.decode_pair(p)).collect();
        write_corpus(&dir.join(format!("{name}.tsv")), &text)?;
    }
    corpora.vocab.write(&dir.join("vocab.txt"))
}

/// Reads a directory written by [`write_task_dir`]. Without `vocab.txt` the
/// vocabulary is built from the three splits.
pub fn read_task_dir(dir: &Path) -> Result<Corpora> {
    let train = read_corpus(&dir.join("train.tsv"))?;
    let dev = read_corpus(&dir.join("dev.tsv"))?;
    let test = read_corpus(&dir.join("test.tsv"))?;
    let vocab_path = dir.join("vocab.txt");
    let vocab = if vocab_path.exists() {
        Vocabulary::read(&vocab_path)?
    } else {
        build_vocab(&[&train, &dev, &test])
    };
    let encode = |pairs: &[TextPair]| pairs.iter().map(|p| vocab.encode_pair(p)).collect::<Result<Vec<_>>>();
    Ok(Corpora {
        train: encode(&train)?,
        dev: encode(&dev)?,
        test: encode(&test)?,
        vocab,
    })
}

#[cfg(test)]
mod tests;
