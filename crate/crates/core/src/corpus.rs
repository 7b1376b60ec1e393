//! Tagged item corpus, its inverted tag index, and tag embeddings.
//!
//! A [`Corpus`] is the pool every strategy draws from and doubles as the
//! in-memory search database. It is immutable once built.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("item `{id}` has feature dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate item id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("item `{id}` has a non-finite feature")]
    NonFinite { id: String },
    #[error("corpus needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("embedding line {line}: expected {expected} components, found {found}")]
    EmbeddingDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid synthetic corpus parameters: {0}")]
    InvalidParams(String),
}

/// One pool element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl Item {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaLine {
    meta: Meta,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    d: usize,
}

/// Validated item store plus inverted tag index.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    items: Vec<Item>,
    dim: usize,
    by_id: HashMap<String, usize>,
    tag_index: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    /// Validate items and build the index. Item order is preserved.
    pub fn new(items: Vec<Item>, declared_dim: Option<usize>) -> Result<Self, CorpusError> {
        if items.len() < 2 {
            return Err(CorpusError::TooFewItems(items.len()));
        }
        let dim = declared_dim.unwrap_or(items[0].features.len());
        let mut by_id = HashMap::with_capacity(items.len());
        let mut tag_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (pos, item) in items.iter().enumerate() {
            if item.id.is_empty() {
                return Err(CorpusError::Parse {
                    line: pos + 1,
                    msg: "empty item id".into(),
                });
            }
            if item.features.len() != dim {
                return Err(CorpusError::DimensionMismatch {
                    id: item.id.clone(),
                    expected: dim,
                    found: item.features.len(),
                });
            }
            if item.features.iter().any(|v| !v.is_finite()) {
                return Err(CorpusError::NonFinite {
                    id: item.id.clone(),
                });
            }
            if by_id.insert(item.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: item.id.clone(),
                    line: pos + 1,
                });
            }
            for tag in &item.tags {
                tag_index.entry(tag.clone()).or_default().push(pos);
            }
        }
        if dim == 0 {
            return Err(CorpusError::InvalidParams("feature dimension must be positive".into()));
        }
        Ok(Self {
            items,
            dim,
            by_id,
            tag_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    /// Sorted list of distinct tags.
    pub fn tag_vocab(&self) -> Vec<String> {
        self.tag_index.keys().cloned().collect()
    }

    /// Items carrying `tag`, in corpus order. Empty for unknown tags.
    pub fn postings(&self, tag: &str) -> &[usize] {
        self.tag_index.get(tag).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn posting_ids(&self, tag: &str) -> Vec<&str> {
        self.postings(tag)
            .iter()
            .map(|&i| self.items[i].id.as_str())
            .collect()
    }

    pub fn item_at(&self, pos: usize) -> &Item {
        &self.items[pos]
    }

    pub fn tag_frequency(&self, tag: &str) -> f64 {
        self.postings(tag).len() as f64 / self.items.len() as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<(), CorpusError> {
        let meta = MetaLine {
            meta: Meta { d: self.dim },
        };
        writeln!(out, "{}", serde_json::to_string(&meta).expect("meta serializes"))?;
        for item in &self.items {
            writeln!(out, "{}", serde_json::to_string(item).expect("item serializes"))?;
        }
        Ok(())
    }
}

/// Read a JSON Lines corpus. An optional leading `{"meta":{"d":..}}` line pins the dimension.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut declared = None;
    let mut items = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
        if value.get("meta").is_some() {
            if !items.is_empty() || declared.is_some() {
                return Err(CorpusError::Parse {
                    line: line_no,
                    msg: "meta header must be the first record".into(),
                });
            }
            let meta: MetaLine = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            declared = Some(meta.meta.d);
            continue;
        }
        let item: Item = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if item.id.is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                msg: "empty item id".into(),
            });
        }
        let expected = declared.unwrap_or_else(|| items.first().map_or(item.features.len(), |i: &Item| i.features.len()));
        if item.features.len() != expected {
            return Err(CorpusError::DimensionMismatch {
                id: item.id,
                expected,
                found: item.features.len(),
            });
        }
        if seen.insert(item.id.clone(), line_no).is_some() {
            return Err(CorpusError::DuplicateId {
                id: item.id,
                line: line_no,
            });
        }
        items.push(item);
    }
    Corpus::new(items, declared)
}

/// How to embed tags missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultPolicy {
    #[default]
    ZeroVector,
    SeededHashGaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagEmbeddings {
    k: usize,
    table: BTreeMap<String, Vec<f64>>,
    default_policy: DefaultPolicy,
}

impl TagEmbeddings {
    pub fn new(
        k: usize,
        table: BTreeMap<String, Vec<f64>>,
        default_policy: DefaultPolicy,
    ) -> Result<Self, CorpusError> {
        if k == 0 {
            return Err(CorpusError::InvalidParams("embedding dimension must be positive".into()));
        }
        for (n, v) in table.values().enumerate() {
            if v.len() != k {
                return Err(CorpusError::EmbeddingDimension {
                    line: n + 1,
                    expected: k,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CorpusError::Parse {
                    line: n + 1,
                    msg: "non-finite embedding component".into(),
                });
            }
        }
        Ok(Self {
            k,
            table,
            default_policy,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn default_policy(&self) -> DefaultPolicy {
        self.default_policy
    }

    pub fn with_policy(mut self, policy: DefaultPolicy) -> Self {
        self.default_policy = policy;
        self
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.table.contains_key(tag)
    }

    /// Embedding of `tag`, falling back to the default policy.
    pub fn lookup(&self, tag: &str) -> Cow<'_, [f64]> {
        if let Some(v) = self.table.get(tag) {
            return Cow::Borrowed(v);
        }
        match self.default_policy {
            DefaultPolicy::ZeroVector => Cow::Owned(vec![0.0; self.k]),
            DefaultPolicy::SeededHashGaussian => {
                let mut rng = rng::rng_for(rng::fnv1a(tag), Stream::Synth, self.k as u64);
                Cow::Owned(unit_gaussian(&mut rng, self.k))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        for (tag, v) in &self.table {
            write!(out, "{tag}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Read a GloVe-style text file: `tag v1 ... vk` per line.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    default_policy: DefaultPolicy,
) -> Result<TagEmbeddings, CorpusError> {
    let file = File::open(path)?;
    read_embeddings(BufReader::new(file), default_policy)
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
    default_policy: DefaultPolicy,
) -> Result<TagEmbeddings, CorpusError> {
    let mut k = None;
    let mut table = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let vector = parts
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CorpusError::Parse {
                        line: line_no,
                        msg: format!("non-numeric token `{tok}`"),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let expected = *k.get_or_insert(vector.len());
        if vector.len() != expected || expected == 0 {
            return Err(CorpusError::EmbeddingDimension {
                line: line_no,
                expected,
                found: vector.len(),
            });
        }
        table.insert(tag.to_string(), vector);
    }
    let k = k.ok_or_else(|| CorpusError::Parse {
        line: 0,
        msg: "embedding file is empty".into(),
    })?;
    TagEmbeddings::new(k, table, default_policy)
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Parameters of [`synth_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_items: usize,
    pub n_tags: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub cluster_spread: f64,
}

/// Number of nearest tags an item's secondary tags are drawn from.
const COTAG_NEIGHBORS: usize = 4;

/// Deterministic synthetic corpus with tag clusters in feature space.
///
/// Each tag gets a Gaussian center. An item takes a primary tag (weighted by a
/// per-tag popularity) plus up to two secondary tags drawn from the primary's
/// nearest neighbors, so co-occurring tags sit close in feature space. Item
/// features are the mean of their tags' centers plus `cluster_spread` noise.
/// Tag embeddings are a fixed random projection of the centers, perturbed and
/// unit-normalized, which keeps embedding geometry aligned with feature geometry.
pub fn synth_corpus(p: &SynthParams) -> Result<(Corpus, TagEmbeddings), CorpusError> {
    if p.n_items < 2 || p.n_tags < 1 || p.d < 2 || p.k < 1 {
        return Err(CorpusError::InvalidParams(format!(
            "need n_items >= 2, n_tags >= 1, d >= 2, k >= 1 (got {}, {}, {}, {})",
            p.n_items, p.n_tags, p.d, p.k
        )));
    }
    if !(p.cluster_spread.is_finite() && p.cluster_spread >= 0.0) {
        return Err(CorpusError::InvalidParams("cluster_spread must be finite and >= 0".into()));
    }
    let mut rng = rng::rng_for(p.seed, Stream::Synth, 0);
    let width = p.n_tags.to_string().len().max(3);
    let tags: Vec<String> = (0..p.n_tags).map(|t| format!("tag{t:0width$}")).collect();
    let centers: Vec<Vec<f64>> = (0..p.n_tags).map(|_| gaussian_vec(&mut rng, p.d)).collect();
    let popularity: Vec<f64> = (0..p.n_tags)
        .map(|_| (0.5 * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let total: f64 = popularity.iter().sum();

    let neighbors: Vec<Vec<usize>> = (0..p.n_tags)
        .map(|t| {
            let mut others: Vec<(f64, usize)> = (0..p.n_tags)
                .filter(|&u| u != t)
                .map(|u| (sq_dist(&centers[t], &centers[u]), u))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(COTAG_NEIGHBORS).map(|(_, u)| u).collect()
        })
        .collect();

    let mut items = Vec::with_capacity(p.n_items);
    let id_width = p.n_items.to_string().len();
    for n in 0..p.n_items {
        // round-robin primaries first so every tag is used
        let primary = if n < p.n_tags {
            n
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = p.n_tags - 1;
            for (t, w) in popularity.iter().enumerate() {
                if u < *w {
                    pick = t;
                    break;
                }
                u -= w;
            }
            pick
        };
        let extra = rng.random_range(0..3usize).min(neighbors[primary].len());
        let mut chosen = vec![primary];
        let mut pool = neighbors[primary].clone();
        for _ in 0..extra {
            let j = rng.random_range(0..pool.len());
            chosen.push(pool.swap_remove(j));
        }
        let mut features = vec![0.0; p.d];
        for &t in &chosen {
            for (f, c) in features.iter_mut().zip(&centers[t]) {
                *f += c / chosen.len() as f64;
            }
        }
        for f in features.iter_mut() {
            *f += p.cluster_spread * rng.sample::<f64, _>(StandardNormal);
        }
        items.push(Item {
            id: format!("item{n:0id_width$}"),
            features,
            tags: chosen.iter().map(|&t| tags[t].clone()).collect(),
            url: None,
        });
    }

    let projection: Vec<Vec<f64>> = (0..p.k)
        .map(|_| gaussian_vec(&mut rng, p.d).into_iter().map(|x| x / (p.d as f64).sqrt()).collect())
        .collect();
    let mut table = BTreeMap::new();
    for (t, center) in centers.iter().enumerate() {
        let mut z: Vec<f64> = projection
            .iter()
            .map(|row| row.iter().zip(center).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        for x in z.iter_mut() {
            *x += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        z.iter_mut().for_each(|x| *x /= norm);
        table.insert(tags[t].clone(), z);
    }

    let corpus = Corpus::new(items, Some(p.d))?;
    let embeddings = TagEmbeddings::new(p.k, table, DefaultPolicy::ZeroVector)?;
    Ok((corpus, embeddings))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn item(id: &str, f: &[f64], tags: &[&str]) -> Item {
        Item {
            id: id.into(),
            features: f.to_vec(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            url: None,
        }
    }

    #[test]
    fn index_is_inverse_of_tag_sets() {
        let text = r#"{"id":"i1","features":[0,1],"tags":["a"]}
{"id":"i2","features":[1,0],"tags":["a","b"]}
{"id":"i3","features":[1,1],"tags":[]}
"#;
        let c = read_corpus(Cursor::new(text)).unwrap();
        assert_eq!(c.posting_ids("a"), vec!["i1", "i2"]);
        assert_eq!(c.posting_ids("b"), vec!["i2"]);
        assert_eq!(c.tag_vocab(), vec!["a", "b"]);
        assert!(c.posting_ids("zzz").is_empty());
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(
            read_corpus(Cursor::new("")),
            Err(CorpusError::TooFewItems(0))
        ));
    }

    #[test]
    fn dimension_mismatch_names_item() {
        let text = "{\"id\":\"a\",\"features\":[1,2,3,4]}\n{\"id\":\"b\",\"features\":[1,2,3,4,5]}\n";
        match read_corpus(Cursor::new(text)) {
            Err(CorpusError::DimensionMismatch { id, expected, found }) => {
                assert_eq!((id.as_str(), expected, found), ("b", 4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn meta_header_enforces_dimension() {
        let text = "{\"meta\":{\"d\":3}}\n{\"id\":\"a\",\"features\":[1,2]}\n{\"id\":\"b\",\"features\":[1,2]}\n";
        assert!(matches!(
            read_corpus(Cursor::new(text)),
            Err(CorpusError::DimensionMismatch { expected: 3, .. })
        ));
    }

    #[test]
    fn duplicate_and_parse_errors() {
        let dup = "{\"id\":\"a\",\"features\":[1]}\n{\"id\":\"a\",\"features\":[2]}\n";
        assert!(matches!(
            read_corpus(Cursor::new(dup)),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
        let bad = "{\"id\":\"a\",\"features\":[1]}\nnot json\n";
        assert!(matches!(
            read_corpus(Cursor::new(bad)),
            Err(CorpusError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let items = vec![item("a", &[f64::NAN, 0.0], &[]), item("b", &[0.0, 0.0], &[])];
        assert!(matches!(Corpus::new(items, None), Err(CorpusError::NonFinite { .. })));
    }

    #[test]
    fn embeddings_load_and_defaults() {
        let e = read_embeddings(Cursor::new("cat 1 0\ndog 0 1\n"), DefaultPolicy::ZeroVector).unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(e.len(), 2);
        assert_eq!(&*e.lookup("bird"), &[0.0, 0.0]);
        assert_eq!(&*e.lookup("cat"), &[1.0, 0.0]);

        let h = e.clone().with_policy(DefaultPolicy::SeededHashGaussian);
        let a = h.lookup("bird").into_owned();
        let b = h.lookup("bird").into_owned();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_ne!(a, h.lookup("fish").into_owned());
    }

    #[test]
    fn embeddings_errors() {
        assert!(matches!(
            read_embeddings(Cursor::new("cat 1 0\ndog 0 1 2\n"), DefaultPolicy::ZeroVector),
            Err(CorpusError::EmbeddingDimension { line: 2, .. })
        ));
        assert!(matches!(
            read_embeddings(Cursor::new("cat 1 x\n"), DefaultPolicy::ZeroVector),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn synth_is_deterministic_and_covers_tags() {
        let p = SynthParams {
            n_items: 1000,
            n_tags: 20,
            d: 16,
            k: 8,
            seed: 7,
            cluster_spread: 0.1,
        };
        let (c1, e1) = synth_corpus(&p).unwrap();
        let (c2, e2) = synth_corpus(&p).unwrap();
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        c1.write_jsonl(&mut b1).unwrap();
        c2.write_jsonl(&mut b2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(e1, e2);

        // scan the generated items directly rather than trusting the index
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for it in c1.items() {
            assert!((1..=3).contains(&it.tags.len()));
            for t in &it.tags {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        assert_eq!(counts.len(), 20);
        for t in c1.tag_vocab() {
            assert!(counts[t.as_str()] >= 1);
            assert_eq!(counts[t.as_str()], c1.postings(&t).len());
            assert!(e1.contains(&t));
        }
    }

    #[test]
    fn synth_rejects_bad_sizes() {
        let p = SynthParams {
            n_items: 1,
            n_tags: 20,
            d: 16,
            k: 8,
            seed: 7,
            cluster_spread: 0.1,
        };
        assert!(matches!(synth_corpus(&p), Err(CorpusError::InvalidParams(_))));
    }
}
