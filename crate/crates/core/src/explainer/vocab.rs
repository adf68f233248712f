use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::{CorpusSplit, Label};
use crate::text::tokenize;
use crate::{Error, Result};

pub const DEFAULT_MIN_COUNT: usize = 15;

pub const PAD: &str = "<pad>";
pub const START: &str = "<start>";
pub const END: &str = "<end>";
pub const UNK: &str = "#UNK#";

const HEADER_PREFIX: &str = "#vocab";

/// Vocabulary token for conditioning on `label`, e.g. `<entailment>`.
pub fn label_token(label: Label) -> String {
    format!("<{}>", label.as_str())
}

/// Decoder vocabulary. Ids are dense from zero; the seven specials come
/// first in a fixed order, followed by the kept corpus tokens sorted
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const START_ID: usize = 1;
    pub const END_ID: usize = 2;
    pub const UNK_ID: usize = 3;
    pub const N_SPECIALS: usize = 7;

    pub fn specials() -> Vec<String> {
        let mut s = vec![PAD.to_string(), START.to_string(), END.to_string(), UNK.to_string()];
        s.extend(Label::ALL.iter().map(|&l| label_token(l)));
        s
    }

    fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        if tokens[..Self::N_SPECIALS.min(tokens.len())] != Self::specials()[..] {
            return Err(Error::Format("vocabulary does not start with the special tokens".into()));
        }
        Ok(Vocab { tokens, index, min_count })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn label_id(label: Label) -> usize {
        4 + label.index()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Maps ids back to tokens, stopping at the first end token.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != Self::END_ID)
            .map(|&i| self.token(i).unwrap_or(UNK).to_string())
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{HEADER_PREFIX} specials={} min_count={}",
            Self::specials().join(","),
            self.min_count
        )?;
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::Format(format!("{}: empty vocabulary file", path.display())))?;
        let min_count = parse_header(&header)
            .ok_or_else(|| Error::Format(format!("{}: bad vocabulary header {header:?}", path.display())))?;
        let tokens = lines
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))?;
        Vocab::from_tokens(tokens, min_count)
    }

    /// Rebuilds a vocabulary from its token list (checkpoint round trips).
    pub fn from_token_list(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        Vocab::from_tokens(tokens, min_count)
    }
}

fn parse_header(line: &str) -> Option<usize> {
    let mut parts = line.split_whitespace();
    if parts.next()? != HEADER_PREFIX {
        return None;
    }
    let mut min_count = None;
    let mut specials_ok = false;
    for p in parts {
        if let Some(v) = p.strip_prefix("specials=") {
            specials_ok = v.split(',').map(str::to_string).collect::<Vec<_>>() == Vocab::specials();
        } else if let Some(v) = p.strip_prefix("min_count=") {
            min_count = v.parse().ok();
        }
    }
    if specials_ok {
        min_count
    } else {
        None
    }
}

/// Keeps tokens occurring at least `min_count` times; specials are always
/// present. Pass training-split explanations only.
pub fn build_vocab<S: AsRef<str>>(explanations: &[Vec<S>], min_count: usize) -> Vocab {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for seq in explanations {
        for t in seq {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    let specials = Vocab::specials();
    let mut tokens = specials.clone();
    tokens.extend(
        counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !specials.iter().any(|s| s == t))
            .map(|(t, _)| t.to_string()),
    );
    Vocab::from_tokens(tokens, min_count).expect("specials are fixed and corpus tokens unique")
}

/// Tokenized reference explanations of every instance in `split`.
pub fn explanation_corpus(split: &CorpusSplit) -> Vec<Vec<String>> {
    split
        .instances()
        .iter()
        .flat_map(|i| i.explanations.iter().map(|e| tokenize(e)))
        .collect()
}
