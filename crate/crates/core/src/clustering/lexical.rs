use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Word vectors in the plain-text format: a `count dim` header line, then
/// one `word v1 ... vdim` line per entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexicalVectors {
    pub dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl LexicalVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape(format!("vector of length {} in a {}-dim table", v.len(), self.dim)));
        }
        self.vectors.insert(word.into(), v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Exact entry, or the average over whitespace-separated words that are present.
    pub fn phrase(&self, text: &str) -> Option<Vec<f32>> {
        if let Some(v) = self.get(text) {
            return Some(v.to_vec());
        }
        let parts: Vec<&[f32]> = text.split_whitespace().filter_map(|w| self.get(w)).collect();
        if parts.is_empty() {
            return None;
        }
        let mut out = vec![0.0f32; self.dim];
        for p in &parts {
            for (o, x) in out.iter_mut().zip(*p) {
                *o += x;
            }
        }
        let n = parts.len() as f32;
        out.iter_mut().for_each(|x| *x /= n);
        Some(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::Data(format!("{}: empty vector file", path.display())))?;
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(count)), Some(Ok(dim))) = (it.next(), it.next()) else {
            return Err(Error::Data(format!("{}: bad header {header:?}", path.display())));
        };
        let mut table = Self::new(dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            // the word may itself contain spaces, so peel numbers from the right
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() <= dim {
                return Err(Error::Data(format!("{}:{}: expected {} values", path.display(), i + 2, dim)));
            }
            let split = fields.len() - dim;
            let v = fields[split..]
                .iter()
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 2)))?;
            table.vectors.insert(fields[..split].join(" "), v);
        }
        if table.len() != count {
            log::warn!("{}: header declares {count} vectors, found {}", path.display(), table.len());
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.vectors.len(), self.dim).map_err(io)?;
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        for word in words {
            write!(w, "{word}").map_err(io)?;
            for x in &self.vectors[word] {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_format_round_trip_and_phrases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        let mut t = LexicalVectors::new(2);
        t.insert("hotel", vec![1.0, 0.0]).unwrap();
        t.insert("room", vec![0.0, 1.0]).unwrap();
        t.insert("new york", vec![0.5, 0.25]).unwrap();
        t.write(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("3 2\n"));
        let back = LexicalVectors::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.phrase("hotel room").unwrap(), vec![0.5, 0.5]);
        assert_eq!(back.phrase("new york").unwrap(), vec![0.5, 0.25]);
        assert!(back.phrase("castle").is_none());
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut t = LexicalVectors::new(3);
        assert!(t.insert("x", vec![1.0]).is_err());
    }
}
