//! Tokenization, vocabulary and bag-of-words targets.
//!
//! Object names are never vocabulary words: inside a token sequence an
//! object mention becomes a placeholder for its type.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::model::{ObjectRef, TypeName};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawToken {
    Word(String),
    Object(ObjectRef),
}

/// Splits on every non-alphanumeric character. Pieces that exactly match an
/// object name (case-sensitive) become object mentions; everything else is
/// lowercased.
pub fn tokenize(sentence: &str, objects: &BTreeMap<&str, &ObjectRef>) -> Vec<RawToken> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|piece| match objects.get(piece) {
            Some(o) => RawToken::Object((*o).clone()),
            None => RawToken::Word(piece.to_lowercase()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub words: Vec<String>,
    pub types: Vec<TypeName>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// A tokenized sentence ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Input ids: words are `0..|V|`, type placeholders follow, then UNK.
    pub ids: Vec<usize>,
    /// Normalized word counts over `0..|V|`; all zeros for a sentence with
    /// no vocabulary words.
    pub bow: Vec<f64>,
    pub unknown: usize,
}

impl Vocabulary {
    pub fn new(words: impl IntoIterator<Item = String>, types: impl IntoIterator<Item = TypeName>) -> Self {
        let words: Vec<String> = words.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let types: Vec<TypeName> = types.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut v = Vocabulary {
            words,
            types,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Rebuilds the lookup table; needed after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    /// Vocabulary over every sentence of the corpus (object names excluded).
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut words = BTreeSet::new();
        let mut types = BTreeSet::new();
        for r in &corpus.records {
            let table = r.object_table();
            types.extend(r.objects.iter().map(|o| o.ty.clone()));
            for s in r.texts.iter().flatten().chain(&r.goal_text) {
                for t in tokenize(s, &table) {
                    if let RawToken::Word(w) = t {
                        words.insert(w);
                    }
                }
            }
        }
        Vocabulary::new(words, types)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of distinct input ids (words, type placeholders, UNK).
    pub fn input_size(&self) -> usize {
        self.words.len() + self.types.len() + 1
    }

    pub fn unk_id(&self) -> usize {
        self.words.len() + self.types.len()
    }

    pub fn word_id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn type_id(&self, t: &TypeName) -> Option<usize> {
        self.types.iter().position(|x| x == t)
    }

    pub fn encode(&self, tokens: &[RawToken]) -> Encoded {
        let mut ids = Vec::with_capacity(tokens.len());
        let mut bow = vec![0.0; self.words.len()];
        let mut unknown = 0;
        for t in tokens {
            match t {
                RawToken::Word(w) => match self.word_id(w) {
                    Some(i) => {
                        ids.push(i);
                        bow[i] += 1.0;
                    }
                    None => {
                        ids.push(self.unk_id());
                        unknown += 1;
                    }
                },
                RawToken::Object(o) => match self.type_id(&o.ty) {
                    Some(k) => ids.push(self.words.len() + k),
                    None => {
                        ids.push(self.unk_id());
                        unknown += 1;
                    }
                },
            }
        }
        let total: f64 = bow.iter().sum();
        if total > 0.0 {
            bow.iter_mut().for_each(|x| *x /= total);
        }
        Encoded { ids, bow, unknown }
    }

    pub fn encode_sentence(&self, sentence: &str, objects: &BTreeMap<&str, &ObjectRef>) -> Encoded {
        self.encode(&tokenize(sentence, objects))
    }
}

/// Object mentions in order of first occurrence.
pub fn mentioned_objects(tokens: &[RawToken]) -> Vec<ObjectRef> {
    let mut out: Vec<ObjectRef> = Vec::new();
    for t in tokens {
        if let RawToken::Object(o) = t {
            if !out.contains(o) {
                out.push(o.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_mention_becomes_placeholder() {
        let b1 = ObjectRef::new("Block1", "Block");
        let table: BTreeMap<&str, &ObjectRef> = [("Block1", &b1)].into_iter().collect();
        let toks = tokenize("Block1 is on table.", &table);
        assert_eq!(
            toks,
            vec![
                RawToken::Object(b1.clone()),
                RawToken::Word("is".into()),
                RawToken::Word("on".into()),
                RawToken::Word("table".into()),
            ]
        );
        let v = Vocabulary::new(["is", "on", "table", "clear"].map(String::from), [TypeName::new("Block")]);
        let e = v.encode(&toks);
        assert_eq!(e.ids[0], v.len());
        let mass: f64 = ["is", "on", "table"].iter().map(|w| e.bow[v.word_id(w).unwrap()]).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(e.bow[v.word_id("clear").unwrap()], 0.0);
    }

    #[test]
    fn empty_sentence() {
        let v = Vocabulary::new(["a".to_string()], []);
        let e = v.encode_sentence("", &BTreeMap::new());
        assert!(e.ids.is_empty());
        assert!(e.bow.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unknown_words_counted() {
        let v = Vocabulary::new(["a".to_string()], []);
        let e = v.encode_sentence("a zebra", &BTreeMap::new());
        assert_eq!(e.unknown, 1);
        assert_eq!(e.ids, vec![0, v.unk_id()]);
    }

    #[test]
    fn object_names_are_case_sensitive() {
        let b1 = ObjectRef::new("Block1", "Block");
        let table: BTreeMap<&str, &ObjectRef> = [("Block1", &b1)].into_iter().collect();
        let toks = tokenize("block1 Block1", &table);
        assert_eq!(toks[0], RawToken::Word("block1".into()));
        assert_eq!(mentioned_objects(&toks), vec![b1]);
    }
}
