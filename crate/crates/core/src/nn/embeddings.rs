//! Pretrained word vectors in word2vec text format: a `count dim` header
//! line followed by `word v1 ... vd` lines.

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use super::graph::Tensor;
use super::vocab::{Vocab, DROP};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl Pretrained {
    pub fn read<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(EmbeddingError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header?;
        let mut parts = header.split_whitespace();
        let bad_header = || EmbeddingError::Format {
            line: 1,
            message: format!("header '{}' is not 'count dim'", header),
        };
        let _count: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
        let dim: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad_header)?;
        let mut vectors = HashMap::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|s| !s.is_empty());
            let word = fields.next().unwrap().to_string();
            let v: Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
            let v = v.map_err(|e| EmbeddingError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            if v.len() != dim {
                return Err(EmbeddingError::Format {
                    line: i + 1,
                    message: format!("expected {} values, found {}", dim, v.len()),
                });
            }
            vectors.entry(word).or_insert(v);
        }
        Ok(Pretrained { dim, vectors })
    }

    /// Table restricted to `words`. Words without a vector get a zero row;
    /// the second value counts them.
    pub fn table_for<'a, I: IntoIterator<Item = &'a str>>(&self, words: I) -> (Vocab, Tensor, usize) {
        let mut vocab = Vocab::with_reserved(&[DROP]);
        let mut missing = 0;
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; self.dim]; vocab.len()];
        let mut seen = std::collections::HashSet::new();
        for w in words {
            if !seen.insert(w.to_string()) {
                continue;
            }
            match self.vectors.get(w) {
                Some(v) => {
                    vocab.add(w);
                    rows.push(v.clone());
                }
                None => missing += 1,
            }
        }
        let t = Tensor::from_shape_fn((rows.len(), self.dim), |(i, j)| rows[i][j]);
        (vocab, t, missing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_text_format() {
        let p = Pretrained::read("2 3\nthe 0.1 0.2 0.3\ncat 1 2 3\n".as_bytes()).unwrap();
        assert_eq!(p.dim, 3);
        assert_eq!(p.vectors["cat"], vec![1.0, 2.0, 3.0]);
        let (v, t, missing) = p.table_for(["cat", "dog", "cat"]);
        assert_eq!(missing, 1);
        assert_eq!(t.nrows(), v.len());
        assert_eq!(t.row(v.get("cat").unwrap()).to_vec(), vec![1.0, 2.0, 3.0]);
        assert!(Pretrained::read("2 3\nthe 0.1\n".as_bytes()).is_err());
    }
}
