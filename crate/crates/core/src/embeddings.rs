//! Static word embeddings: text-format ingestion, mean pooling over word
//! lists, and cosine association strengths.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::AssociationVector;
use crate::lexicon::{GroupSet, TargetConcept, WordList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    /// `word2vec-text` when the first line is exactly two integers, else
    /// `glove-text`.
    #[default]
    Auto,
    Word2VecText,
    GloveText,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EmbeddingFormat::Auto),
            "word2vec-text" => Ok(EmbeddingFormat::Word2VecText),
            "glove-text" => Ok(EmbeddingFormat::GloveText),
            other => Err(Error::parse_msg(format!("unknown embedding format {other:?}"))),
        }
    }
}

/// Immutable word → vector table with a single dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds `word` (lowercased). Returns `false`, leaving the table
    /// unchanged, when the word is already present.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector for {word:?}")));
        }
        let word = word.to_lowercase();
        if self.index.contains_key(&word) {
            return Ok(false);
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend(vector);
        Ok(true)
    }

    pub fn from_pairs<I, S>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut table = EmbeddingTable::new(dim);
        for (word, vector) in pairs {
            table.insert(word.as_ref(), vector)?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(w, v)| (w.as_str(), v))
    }

    /// Copy with every vector passed through `f`.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<EmbeddingTable>
    where
        F: FnMut(&str, &[f64]) -> Result<Vec<f64>>,
    {
        let mut out = EmbeddingTable::new(self.dim);
        for (word, vector) in self.iter() {
            out.insert(word, f(word, vector)?)?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        Self::read(reader, format)
    }

    pub fn read<R: BufRead>(reader: R, format: EmbeddingFormat) -> Result<Self> {
        let mut lines = reader.lines().enumerate().peekable();
        let mut header: Option<(usize, usize)> = None;

        if let Some((_, Ok(first))) = lines.peek() {
            let parsed = parse_header(first);
            match (format, parsed) {
                (EmbeddingFormat::Auto, Some(h)) | (EmbeddingFormat::Word2VecText, Some(h)) => {
                    header = Some(h);
                    lines.next();
                }
                (EmbeddingFormat::Word2VecText, None) => {
                    return Err(Error::parse(1, "expected a \"<vocab size> <dim>\" header"));
                }
                _ => {}
            }
        }

        let mut table: Option<EmbeddingTable> = header.map(|(_, dim)| EmbeddingTable::new(dim));
        let mut duplicates = 0usize;
        for (n, line) in lines {
            let line = line?;
            let lineno = n + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let vector = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(lineno, format!("cannot parse component {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vector.is_empty() {
                return Err(Error::parse(lineno, format!("word {word:?} has no components")));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(lineno, format!("non-finite component for {word:?}")));
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
            if vector.len() != table.dim {
                return Err(Error::DimensionMismatch {
                    expected: table.dim,
                    found: vector.len(),
                });
            }
            if !table.insert(word, vector)? {
                duplicates += 1;
                warn!("line {lineno}: duplicate word {word:?} ignored; first occurrence kept");
            }
        }
        let table = table.ok_or_else(|| Error::parse_msg("embedding file contains no vectors"))?;
        if let Some((vocab, _)) = header {
            if vocab != table.len() + duplicates {
                warn!(
                    "header announces {vocab} words, file contains {}",
                    table.len() + duplicates
                );
            }
        }
        Ok(table)
    }

    /// Writes the table in glove-text format.
    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for (word, vector) in self.iter() {
            write!(writer, "{word}")?;
            for v in vector {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(fs::File::create(path)?);
        self.write(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let vocab = fields.next()?.parse().ok()?;
    let dim = fields.next()?.parse().ok()?;
    fields.next().is_none().then_some((vocab, dim))
}

/// Mean of the in-vocabulary vectors of a word list, with the words that
/// were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub vector: Vec<f64>,
    pub used: usize,
    pub oov: Vec<String>,
}

pub fn mean_of_words<'a, I>(words: I, table: &EmbeddingTable, list_name: &str) -> Result<MeanVector>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut sum = vec![0.0; table.dim()];
    let mut used = 0usize;
    let mut oov = Vec::new();
    for word in words {
        match table.get(word) {
            Some(v) => {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                used += 1;
            }
            None => oov.push(word.to_string()),
        }
    }
    if used == 0 {
        return Err(Error::AllOov(list_name.to_string()));
    }
    let n = used as f64;
    Ok(MeanVector {
        vector: sum.into_iter().map(|s| s / n).collect(),
        used,
        oov,
    })
}

pub fn mean_vector(list: &WordList, table: &EmbeddingTable) -> Result<MeanVector> {
    let name = list.words().first().cloned().unwrap_or_default();
    mean_of_words(list.iter(), table, &name)
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroNorm("cosine of a zero vector".into()));
    }
    Ok((dot(u, v) / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine between the mean target vector and the mean group vector.
pub fn raw_cosine_soa(target: &TargetConcept, group: &WordList, table: &EmbeddingTable) -> Result<f64> {
    let t = mean_of_words(target.words.iter(), table, &target.name)?;
    let g = mean_vector(group, table)?;
    cosine(&t.vector, &g.vector)
}

/// How a cosine in `[-1, 1]` is mapped to a non-negative association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CosineTransform {
    /// `(1 + cos) / 2`
    #[default]
    Affine,
    /// `max(cos, 0)`
    Clamp,
}

impl CosineTransform {
    pub const ALL: [CosineTransform; 2] = [CosineTransform::Affine, CosineTransform::Clamp];

    pub fn id(self) -> &'static str {
        match self {
            CosineTransform::Affine => "affine",
            CosineTransform::Clamp => "clamp",
        }
    }

    pub fn apply(self, cos: f64) -> f64 {
        match self {
            CosineTransform::Affine => (1.0 + cos) / 2.0,
            CosineTransform::Clamp => cos.max(0.0),
        }
    }
}

impl fmt::Display for CosineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CosineTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(CosineTransform::Affine),
            "clamp" => Ok(CosineTransform::Clamp),
            other => Err(Error::parse_msg(format!("unknown cosine transform {other:?}"))),
        }
    }
}

/// `(1 + cos) / 2` of the mean target and mean group vectors, in `[0, 1]`.
pub fn soa_we(target: &TargetConcept, group: &WordList, table: &EmbeddingTable) -> Result<f64> {
    Ok(CosineTransform::Affine.apply(raw_cosine_soa(target, group, table)?))
}

/// Association vector of a target against every group, plus the
/// out-of-vocabulary words skipped along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingAssociation {
    pub soa: AssociationVector,
    pub cosines: Vec<f64>,
    pub oov: Vec<String>,
}

pub fn soa_we_vector(
    target: &TargetConcept,
    groups: &GroupSet,
    table: &EmbeddingTable,
    transform: CosineTransform,
) -> Result<EmbeddingAssociation> {
    let t = mean_of_words(target.words.iter(), table, &target.name)?;
    let mut oov = t.oov.clone();
    let mut cosines = Vec::with_capacity(groups.k());
    for group in groups.groups() {
        let g = mean_of_words(group.words.iter(), table, &group.name)?;
        oov.extend(g.oov);
        cosines.push(cosine(&t.vector, &g.vector)?);
    }
    let soa = AssociationVector::new(cosines.iter().map(|&c| transform.apply(c)).collect())?;
    Ok(EmbeddingAssociation { soa, cosines, oov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::{bias_value, Distribution, Divergence, Normalizer};
    use crate::lexicon::Group;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(pairs: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_pairs(pairs[0].1.len(), pairs.iter().map(|(w, v)| (*w, v.to_vec()))).unwrap()
    }

    fn list(words: &[&str]) -> WordList {
        WordList::new(words).unwrap()
    }

    #[test]
    fn word2vec_header_detected() {
        let t = EmbeddingTable::read("2 3\na 1 0 0\nb 0 1 0\n".as_bytes(), EmbeddingFormat::Auto).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("b"), Some(&[0.0, 1.0, 0.0][..]));
    }

    #[test]
    fn glove_dimension_mismatch() {
        let err = EmbeddingTable::read("a 1.0 2.0\nb 1.0\n".as_bytes(), EmbeddingFormat::Auto).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
        let err = EmbeddingTable::read("2 3\na 1 0\n".as_bytes(), EmbeddingFormat::Auto).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = EmbeddingTable::read("a 1 2\nb 1 x\n".as_bytes(), EmbeddingFormat::Auto).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(2), .. }));
        let err = EmbeddingTable::read("a 1 nan\n".as_bytes(), EmbeddingFormat::Auto).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(1), .. }));
        assert!(EmbeddingTable::read("a 1\n".as_bytes(), EmbeddingFormat::Word2VecText).is_err());
    }

    #[test]
    fn duplicates_keep_first_and_words_are_lowercased() {
        let t = EmbeddingTable::read("Apple 1 2\napple 3 4\n".as_bytes(), EmbeddingFormat::GloveText).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("apple"), Some(&[1.0, 2.0][..]));
    }

    #[test]
    fn glove_round_trip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(String, Vec<f64>)> = (0..50)
            .map(|i| (format!("w{i}"), (0..7).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect();
        let t = EmbeddingTable::from_pairs(7, pairs).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::read(buf.as_slice(), EmbeddingFormat::Auto).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn mean_vector_examples() {
        let t = table(&[("w", &[1.0, 2.0]), ("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(mean_vector(&list(&["w"]), &t).unwrap().vector, vec![1.0, 2.0]);
        assert_eq!(mean_vector(&list(&["a", "b"]), &t).unwrap().vector, vec![0.5, 0.5]);
        let m = mean_vector(&list(&["x", "a", "y", "b", "z"]), &t).unwrap();
        assert_eq!(m.vector, vec![0.5, 0.5]);
        assert_eq!(m.oov, vec!["x", "y", "z"]);
        assert!(matches!(mean_vector(&list(&["q"]), &t), Err(Error::AllOov(_))));
    }

    #[test]
    fn mean_of_repeated_list_is_unchanged() {
        let t = table(&[("a", &[0.3, -1.7]), ("b", &[2.2, 0.1]), ("c", &[-0.9, 0.4])]);
        let once = mean_of_words(["a", "b", "c"], &t, "l").unwrap().vector;
        let words: Vec<&str> = std::iter::repeat_n(["a", "b", "c"], 7).flatten().collect();
        let many = mean_of_words(words, &t, "l").unwrap().vector;
        for (x, y) in once.iter().zip(&many) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn soa_we_examples() {
        let t = table(&[
            ("t", &[1.0, 0.0]),
            ("f", &[1.0, 0.0]),
            ("m", &[0.0, 1.0]),
            ("o", &[-1.0, 0.0]),
        ]);
        let target = TargetConcept::single("t").unwrap();
        assert_eq!(soa_we(&target, &list(&["f"]), &t).unwrap(), 1.0);
        assert_eq!(soa_we(&target, &list(&["m"]), &t).unwrap(), 0.5);
        assert_eq!(raw_cosine_soa(&target, &list(&["o"]), &t).unwrap(), -1.0);

        let groups = GroupSet::new(vec![
            Group {
                name: "g1".into(),
                words: list(&["f"]),
            },
            Group {
                name: "g2".into(),
                words: list(&["m"]),
            },
        ])
        .unwrap();
        let assoc = soa_we_vector(&target, &groups, &t, CosineTransform::Affine).unwrap();
        assert_eq!(assoc.soa.values(), &[1.0, 0.5]);
        let b = bias_value(
            &assoc.soa,
            &Distribution::uniform(2).unwrap(),
            Normalizer::Sum,
            Divergence::L1,
        )
        .unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_mean_is_zero_norm() {
        let t = table(&[("t", &[1.0, 0.0]), ("a", &[1.0, 1.0]), ("b", &[-1.0, -1.0])]);
        let target = TargetConcept::single("t").unwrap();
        assert!(matches!(
            raw_cosine_soa(&target, &list(&["a", "b"]), &t),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn raw_cosine_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let d = rng.random_range(2..12);
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = EmbeddingTable::from_pairs(d, [("t", u.clone()), ("g", v.clone())]).unwrap();
            let got = raw_cosine_soa(&TargetConcept::single("t").unwrap(), &list(&["g"]), &t).unwrap();
            // compensated accumulation in a different association order
            let kahan = |xs: Vec<f64>| {
                let (mut s, mut c) = (0.0f64, 0.0f64);
                for x in xs.into_iter().rev() {
                    let y = x - c;
                    let t = s + y;
                    c = (t - s) - y;
                    s = t;
                }
                s
            };
            let uv = kahan(u.iter().zip(&v).map(|(a, b)| a * b).collect());
            let uu = kahan(u.iter().map(|a| a * a).collect());
            let vv = kahan(v.iter().map(|a| a * a).collect());
            let oracle = uv / (uu.sqrt() * vv.sqrt());
            assert!((got - oracle).abs() < 1e-12);
            assert_eq!(
                soa_we(&TargetConcept::single("t").unwrap(), &list(&["g"]), &t).unwrap(),
                (1.0 + got) / 2.0
            );

            // argument-wise scale invariance
            let c = rng.random_range(0.1..10.0);
            let scaled =
                EmbeddingTable::from_pairs(d, [("t", u.iter().map(|x| x * c).collect()), ("g", v.clone())]).unwrap();
            let got_scaled = raw_cosine_soa(&TargetConcept::single("t").unwrap(), &list(&["g"]), &scaled).unwrap();
            assert!((got - got_scaled).abs() < 1e-12);
        }
    }
}
