//! Triplet files, vocabularies, dataset splits and the filter index.
//!
//! Input files are UTF-8, one `head<TAB>relation<TAB>tail` fact per line.
//! Labels are kept verbatim; ids are dense and assigned in order of first
//! appearance, train split first.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `(head, relation, tail)` fact over dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triplet {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triplet {
            head,
            relation,
            tail,
        }
    }
}

/// Bijection between raw labels and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get_or_insert(&mut self, label: &str) -> usize {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_owned());
        self.ids.insert(label.to_owned(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Parses a tab-separated triplet file, extending both vocabularies with any
/// new labels. Line order is preserved. On error the vocabularies are left
/// untouched.
pub fn load_tsv(path: impl AsRef<Path>, entities: &mut Vocab, relations: &mut Vocab) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text, path, entities, relations)
}

fn parse_tsv(text: &str, path: &Path, entities: &mut Vocab, relations: &mut Vocab) -> Result<Vec<Triplet>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        rows.push((fields[0], fields[1], fields[2]));
    }
    Ok(rows
        .into_iter()
        .map(|(h, r, t)| {
            let head = entities.get_or_insert(h);
            let relation = relations.get_or_insert(r);
            let tail = entities.get_or_insert(t);
            Triplet::new(head, relation, tail)
        })
        .collect())
}

/// Train/valid/test splits with their shared vocabularies.
#[derive(Debug, Clone, Default)]
pub struct TripletCorpus {
    pub train: Vec<Triplet>,
    pub valid: Vec<Triplet>,
    pub test: Vec<Triplet>,
    pub entities: Vocab,
    pub relations: Vocab,
}

impl TripletCorpus {
    /// Loads the three splits in train, valid, test order so that ids follow
    /// first appearance across that sequence.
    pub fn load(train: impl AsRef<Path>, valid: impl AsRef<Path>, test: impl AsRef<Path>) -> Result<Self> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let train = load_tsv(train, &mut entities, &mut relations)?;
        let valid = load_tsv(valid, &mut entities, &mut relations)?;
        let test = load_tsv(test, &mut entities, &mut relations)?;
        let corpus = TripletCorpus {
            train,
            valid,
            test,
            entities,
            relations,
        };
        corpus.warn_on_overlap();
        Ok(corpus)
    }

    /// Builds a corpus from id-level splits, sizing the vocabularies with
    /// synthetic labels `e{i}` / `r{i}`.
    pub fn from_ids(train: Vec<Triplet>, valid: Vec<Triplet>, test: Vec<Triplet>, num_entities: usize, num_relations: usize) -> Result<Self> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        for i in 0..num_entities {
            entities.get_or_insert(&format!("e{i}"));
        }
        for i in 0..num_relations {
            relations.get_or_insert(&format!("r{i}"));
        }
        let corpus = TripletCorpus {
            train,
            valid,
            test,
            entities,
            relations,
        };
        for t in corpus.all_triplets() {
            corpus.check_in_vocab(t)?;
        }
        Ok(corpus)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn all_triplets(&self) -> impl Iterator<Item = &Triplet> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn check_in_vocab(&self, t: &Triplet) -> Result<()> {
        let (ne, nr) = (self.num_entities(), self.num_relations());
        if t.head >= ne || t.tail >= ne || t.relation >= nr {
            return Err(Error::InvalidArgument(format!(
                "triplet ({}, {}, {}) outside vocabulary of {ne} entities / {nr} relations",
                t.head, t.relation, t.tail
            )));
        }
        Ok(())
    }

    /// Maps a triplet back to its raw labels.
    pub fn labels_of(&self, t: &Triplet) -> Option<(&str, &str, &str)> {
        Some((
            self.entities.label(t.head)?,
            self.relations.label(t.relation)?,
            self.entities.label(t.tail)?,
        ))
    }

    /// Number of triplets shared between distinct splits.
    pub fn overlap_count(&self) -> usize {
        let train: HashSet<_> = self.train.iter().collect();
        let valid: HashSet<_> = self.valid.iter().collect();
        let test: HashSet<_> = self.test.iter().collect();
        train.intersection(&valid).count() + train.intersection(&test).count() + valid.intersection(&test).count()
    }

    fn warn_on_overlap(&self) {
        let n = self.overlap_count();
        if n > 0 {
            log::warn!("{n} triplets occur in more than one split");
        }
    }
}

/// All true triplets across every split, keyed for head and tail filtering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterIndex {
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn build(corpus: &TripletCorpus) -> Self {
        Self::from_triplets(corpus.all_triplets())
    }

    pub fn from_triplets<'a>(triplets: impl IntoIterator<Item = &'a Triplet>) -> Self {
        let mut index = FilterIndex::default();
        for t in triplets {
            index.tails.entry((t.head, t.relation)).or_default().push(t.tail);
            index.heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        for set in index.tails.values_mut().chain(index.heads.values_mut()) {
            set.sort_unstable();
            set.dedup();
        }
        index
    }

    /// Sorted true tails for `(head, relation)`.
    pub fn tails_of(&self, head: usize, relation: usize) -> &[usize] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Sorted true heads for `(relation, tail)`.
    pub fn heads_of(&self, relation: usize, tail: usize) -> &[usize] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.tails_of(t.head, t.relation).binary_search(&t.tail).is_ok()
    }

    /// Total size of all tail sets, i.e. the number of distinct true triplets.
    pub fn num_facts(&self) -> usize {
        self.tails.values().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn parse(text: &str, e: &mut Vocab, r: &mut Vocab) -> Result<Vec<Triplet>> {
        parse_tsv(text, Path::new("mem.tsv"), e, r)
    }

    #[test]
    fn empty_file_leaves_vocab_unchanged() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.flush().unwrap();
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        e.get_or_insert("x");
        let out = load_tsv(f.path(), &mut e, &mut r).unwrap();
        assert!(out.is_empty());
        assert_eq!(e.len(), 1);
        assert!(r.is_empty());
    }

    #[test]
    fn ids_follow_first_appearance() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        let out = parse("a\tlikes\tb\n\n  \nb\tlikes\tc\nc\thates\ta\n", &mut e, &mut r).unwrap();
        assert_eq!(out, vec![Triplet::new(0, 0, 1), Triplet::new(1, 0, 2), Triplet::new(2, 1, 0)]);
        assert_eq!(e.labels(), &["a", "b", "c"]);
    }

    #[test]
    fn labels_are_not_normalized() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        parse("A\tr\ta\n a\tr\tA\n", &mut e, &mut r).unwrap();
        assert_eq!(e.len(), 3);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        let err = parse("a\tr\tb\na\tr\n", &mut e, &mut r).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(e.is_empty(), "vocab must not change on error");
        assert!(parse("a\tr\tb\tc\n", &mut e, &mut r).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let (mut e, mut r) = (Vocab::new(), Vocab::new());
        let err = load_tsv("/nonexistent/train.txt", &mut e, &mut r).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn singleton_filter() {
        let idx = FilterIndex::from_triplets(&[Triplet::new(0, 0, 1)]);
        assert_eq!(idx.tails_of(0, 0), &[1]);
        assert_eq!(idx.heads_of(0, 1), &[0]);
        assert!(idx.tails_of(1, 0).is_empty());
    }

    #[test]
    fn filter_union_and_dedup() {
        let ts = [Triplet::new(0, 0, 2), Triplet::new(0, 0, 1), Triplet::new(0, 0, 2)];
        let idx = FilterIndex::from_triplets(&ts);
        assert_eq!(idx.tails_of(0, 0), &[1, 2]);
        assert_eq!(idx.num_facts(), 2);
    }

    #[test]
    fn corpus_overlap_detected_not_fatal() {
        let t = Triplet::new(0, 0, 1);
        let c = TripletCorpus::from_ids(vec![t, t], vec![t], vec![], 2, 1).unwrap();
        assert_eq!(c.train.len(), 2);
        assert_eq!(c.overlap_count(), 1);
        assert!(TripletCorpus::from_ids(vec![Triplet::new(0, 0, 5)], vec![], vec![], 2, 1).is_err());
    }

    fn arb_triplets() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..12, 0u8..4, 0u8..12), 0..60)
    }

    proptest! {
        #[test]
        fn labels_round_trip(rows in arb_triplets()) {
            let text: String = rows.iter().map(|(h, r, t)| format!("n{h}\tp{r}\tn{t}\n")).collect();
            let (mut e, mut r) = (Vocab::new(), Vocab::new());
            let out = parse(&text, &mut e, &mut r).unwrap();
            prop_assert_eq!(out.len(), rows.len());
            for (t, (h, rel, tl)) in out.iter().zip(&rows) {
                prop_assert_eq!(e.label(t.head).unwrap(), format!("n{h}"));
                prop_assert_eq!(r.label(t.relation).unwrap(), format!("p{rel}"));
                prop_assert_eq!(e.label(t.tail).unwrap(), format!("n{tl}"));
            }
        }

        #[test]
        fn filter_is_order_independent(rows in arb_triplets(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let ts: Vec<Triplet> = rows.iter().map(|&(h, r, t)| Triplet::new(h as usize, r as usize, t as usize)).collect();
            let mut shuffled = ts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = FilterIndex::from_triplets(&ts);
            prop_assert_eq!(&a, &FilterIndex::from_triplets(&shuffled));
            prop_assert_eq!(&a, &FilterIndex::from_triplets(ts.iter().chain(&ts)));
            for t in &ts {
                prop_assert!(a.tails_of(t.head, t.relation).contains(&t.tail));
                prop_assert!(a.heads_of(t.relation, t.tail).contains(&t.head));
            }
            let distinct: HashSet<_> = ts.iter().collect();
            prop_assert_eq!(a.num_facts(), distinct.len());
        }
    }
}
