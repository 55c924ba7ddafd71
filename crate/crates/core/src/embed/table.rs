//! Embedding tables: `dim=<d>` on the first line, then one
//! `canonical-token-string TAB base64(little-endian f64 vector)` per line.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Embedder, FactVector, ReferenceEmbedder};
use crate::error::EmbedError;
use crate::fact::{tokenize_fact, DataFact};

/// Serialize the vectors of `facts` (duplicates written once).
pub fn export_embedding_table(
    facts: &[DataFact],
    embedder: &dyn Embedder,
) -> Result<String, EmbedError> {
    let mut out = format!("dim={}\n", embedder.dimension());
    let mut seen = std::collections::HashSet::new();
    for fact in facts {
        let key = tokenize_fact(fact)?;
        if key.contains(['\t', '\n', '\r']) {
            return Err(EmbedError::Format {
                line: 0,
                message: format!("token string `{key}` contains a tab or newline"),
            });
        }
        if !seen.insert(key.clone()) {
            continue;
        }
        let v = embedder.embed(fact)?;
        let bytes: Vec<u8> = v.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
        out.push_str(&key);
        out.push('\t');
        out.push_str(&STANDARD.encode(bytes));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, FactVector>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, canonical: &str) -> Option<&FactVector> {
        self.vectors.get(canonical)
    }
}

pub fn import_embedding_table(text: &str) -> Result<EmbeddingTable, EmbedError> {
    let format = |line: usize, message: String| EmbedError::Format { line, message };
    let mut lines = text.lines().enumerate();
    let dim = match lines.next() {
        Some((_, header)) => header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|d| *d > 0)
            .ok_or_else(|| format(1, format!("expected `dim=<d>`, got `{header}`")))?,
        None => return Err(format(1, "empty table".into())),
    };
    let mut vectors = BTreeMap::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (key, data) = line
            .split_once('\t')
            .ok_or_else(|| format(n, "missing tab separator".into()))?;
        let bytes = STANDARD
            .decode(data.trim())
            .map_err(|e| format(n, format!("bad base64: {e}")))?;
        if bytes.len() != dim * 8 {
            return Err(format(
                n,
                format!("vector has {} bytes, expected {}", bytes.len(), dim * 8),
            ));
        }
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format(n, "non-finite component".into()));
        }
        if vectors.insert(key.to_string(), FactVector::new(v)).is_some() {
            return Err(format(n, format!("duplicate entry `{key}`")));
        }
    }
    Ok(EmbeddingTable { dim, vectors })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissPolicy {
    #[default]
    Fallback,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorSource {
    Table,
    Fallback,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lookup {
    pub vector: FactVector,
    pub source: VectorSource,
}

/// Answers from a table by exact token-string match.
#[derive(Clone, Debug)]
pub struct LookupEmbedder {
    table: EmbeddingTable,
    fallback: ReferenceEmbedder,
    miss: MissPolicy,
}

impl LookupEmbedder {
    pub fn new(
        table: EmbeddingTable,
        fallback: ReferenceEmbedder,
        miss: MissPolicy,
    ) -> Result<Self, EmbedError> {
        if table.dim() != fallback.dimension() {
            return Err(EmbedError::Dimension {
                expected: fallback.dimension(),
                got: table.dim(),
            });
        }
        Ok(LookupEmbedder {
            table,
            fallback,
            miss,
        })
    }

    pub fn lookup(&self, fact: &DataFact) -> Result<Lookup, EmbedError> {
        let key = tokenize_fact(fact)?;
        if let Some(v) = self.table.get(&key) {
            return Ok(Lookup {
                vector: v.clone(),
                source: VectorSource::Table,
            });
        }
        match self.miss {
            MissPolicy::Error => Err(EmbedError::Miss(key)),
            MissPolicy::Fallback => Ok(Lookup {
                vector: self.fallback.embed(fact)?,
                source: VectorSource::Fallback,
            }),
        }
    }
}

impl Embedder for LookupEmbedder {
    fn dimension(&self) -> usize {
        self.table.dim()
    }

    fn embed(&self, fact: &DataFact) -> Result<FactVector, EmbedError> {
        self.lookup(fact).map(|l| l.vector)
    }
}
