//! Plain-text word-vector files (word2vec text / GloVe).
//!
//! Grammar: an optional header line `count dim`, then one `term v1 ... vd` row
//! per line. A first line consisting of exactly two integer tokens is a header.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Vector, WordEmbedder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vector>,
    id: String,
}

impl StaticVectors {
    pub fn new(dim: usize, vectors: HashMap<String, Vector>) -> Self {
        Self {
            dim,
            vectors,
            id: "static-file".into(),
        }
    }

    pub fn with_id(mut self, id: String) -> Self {
        self.id = id;
        self
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<&Vector> {
        self.vectors.get(term)
    }

    /// Exact term, then lowercase, then the underscore-joined phrase, then the
    /// mean of the component words when every one of them is present.
    pub fn lookup(&self, term: &str) -> Option<Vector> {
        let term = term.trim();
        if let Some(v) = self.get(term) {
            return Some(v.clone());
        }
        let lower = term.to_lowercase();
        if let Some(v) = self.get(&lower) {
            return Some(v.clone());
        }
        let words: Vec<&str> = term.split_whitespace().collect();
        if words.len() < 2 {
            return None;
        }
        for joined in [words.join("_"), lower.split_whitespace().collect::<Vec<_>>().join("_")] {
            if let Some(v) = self.get(&joined) {
                return Some(v.clone());
            }
        }
        let parts: Option<Vec<&Vector>> = words
            .iter()
            .map(|w| self.get(w).or_else(|| self.get(&w.to_lowercase())))
            .collect();
        let parts = parts?;
        let mut mean = vec![0.0; self.dim];
        for p in &parts {
            for (m, c) in mean.iter_mut().zip(p.as_slice()) {
                *m += c;
            }
        }
        let n = parts.len() as f64;
        Vector::new(mean.into_iter().map(|m| m / n).collect()).ok()
    }
}

impl WordEmbedder for StaticVectors {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn word_vector(&self, term: &str) -> Result<Option<Vector>> {
        Ok(self.lookup(term))
    }
}

fn parse_component(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric component `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite component `{tok}`"),
        });
    }
    Ok(v)
}

/// Parse a word-vector stream. `dim_hint`, when given, must agree with the
/// header and every row.
pub fn parse_word_vectors<R: BufRead>(source: R, dim_hint: Option<usize>) -> Result<StaticVectors> {
    let mut dim = dim_hint;
    let mut vectors = HashMap::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let mut toks = line.split_whitespace();
        let Some(term) = toks.next() else {
            continue;
        };
        let rest: Vec<&str> = toks.collect();

        if lineno == 1 && rest.len() == 1 {
            if let (Ok(_count), Ok(d)) = (term.parse::<u64>(), rest[0].parse::<usize>()) {
                if d == 0 {
                    return Err(Error::Parse {
                        line: 1,
                        message: "header declares dimension 0".into(),
                    });
                }
                if let Some(expected) = dim {
                    if expected != d {
                        return Err(Error::DimMismatch {
                            expected,
                            found: d,
                            line: Some(1),
                        });
                    }
                }
                dim = Some(d);
                continue;
            }
        }

        if rest.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("term `{term}` has no components"),
            });
        }
        let expected = *dim.get_or_insert(rest.len());
        if rest.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: rest.len(),
                line: Some(lineno),
            });
        }
        let comps = rest
            .iter()
            .map(|t| parse_component(t, lineno))
            .collect::<Result<Vec<f64>>>()?;
        if vectors.contains_key(term) {
            return Err(Error::DuplicateTerm {
                term: term.to_string(),
                line: lineno,
            });
        }
        vectors.insert(term.to_string(), Vector::new(comps)?);
    }
    Ok(StaticVectors::new(dim.unwrap_or(0), vectors))
}

pub fn read_word_vectors(path: impl AsRef<Path>, dim_hint: Option<usize>) -> Result<StaticVectors> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(BufReader::new(file), dim_hint)
}

/// Serialize with a header, terms sorted, components in shortest
/// round-trip form.
pub fn serialize_word_vectors(vectors: &StaticVectors) -> String {
    let mut terms: Vec<&String> = vectors.vectors.keys().collect();
    terms.sort();
    let mut out = format!("{} {}\n", terms.len(), vectors.dim);
    for t in terms {
        out.push_str(t);
        for c in vectors.vectors[t].as_slice() {
            write!(out, " {c:?}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<StaticVectors> {
        parse_word_vectors(s.as_bytes(), None)
    }

    #[test]
    fn two_rows_no_header() {
        let v = parse("king 0.5 -1.25\nqueen 1e-3 2\n").unwrap();
        assert_eq!(v.dim, 2);
        assert_eq!(v.len(), 2);
        assert_eq!(v.get("king").unwrap().as_slice(), &[0.5, -1.25]);
        assert_eq!(v.get("queen").unwrap().as_slice(), &[0.001, 2.0]);
    }

    #[test]
    fn header_dimension_mismatch() {
        let row: Vec<String> = (0..299).map(|i| format!("{}", i as f64 * 0.01)).collect();
        let text = format!("5 300\nword {}\n", row.join(" "));
        match parse(&text) {
            Err(Error::DimMismatch {
                expected: 300,
                found: 299,
                line: Some(2),
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn headerless_equals_headed() {
        let body = "a 1 2 3\nb 4 5 6\n";
        let plain = parse(body).unwrap();
        let headed = parse(&format!("2 3\n{body}")).unwrap();
        assert_eq!(plain, headed);
    }

    #[test]
    fn parse_errors_carry_line() {
        assert!(matches!(
            parse("a 1 2\nb 1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("a 1 2\na 3 4\n"),
            Err(Error::DuplicateTerm { line: 2, .. })
        ));
        assert!(matches!(
            parse("a 1 2\nb 1 2 3\n"),
            Err(Error::DimMismatch { line: Some(2), .. })
        ));
    }

    #[test]
    fn two_integer_data_line_is_header_only_on_first_line() {
        // a one-dimensional row whose term is numeric is ambiguous on line 1
        let v = parse("3 1\n7 2\n").unwrap();
        assert_eq!(v.dim, 1);
        assert_eq!(v.get("7").unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn lookup_fallbacks() {
        let v = parse("black 1 0\nwoman 0 1\nwhite_man 3 3\n").unwrap();
        assert_eq!(v.lookup("Black").unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(v.lookup("white man").unwrap().as_slice(), &[3.0, 3.0]);
        assert_eq!(v.lookup("Black woman").unwrap().as_slice(), &[0.5, 0.5]);
        assert!(v.lookup("nurse").is_none());
    }
}
