//! TSV readers and writers.
//!
//! Dense matrices: a `<rows>\t<cols>` header followed by `rows` lines of `cols`
//! tab-separated decimals. Values are written in shortest round-trip form, so a
//! write/read cycle is lossless.
//!
//! Sparse corpora: a `<M>\t<N>\t<NNZ>` header followed by `NNZ` lines of
//! `<doc>\t<word>\t<count>` with 1-based indices.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Corpus, TopicModel};

pub const B_FILE: &str = "B.tsv";
pub const A_FILE: &str = "A.tsv";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(path: &Path, line: Option<&str>, arity: usize) -> Result<Vec<usize>> {
    let line = line.ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let fields: Vec<usize> = line
        .split('\t')
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, 1, format!("bad header: {e}")))?;
    if fields.len() != arity {
        return Err(parse_err(
            path,
            1,
            format!("header has {} fields, expected {arity}", fields.len()),
        ));
    }
    Ok(fields)
}

pub fn parse_dense(path: &Path, text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let dims = parse_header(path, lines.next(), 2)?;
    let (rows, cols) = (dims[0], dims[1]);
    let mut m = DMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (r, line) in lines.enumerate() {
        let lineno = r + 2;
        if line.trim().is_empty() {
            continue;
        }
        if seen == rows {
            return Err(parse_err(path, lineno, format!("more than {rows} rows")));
        }
        let mut n = 0;
        for (c, field) in line.split('\t').enumerate() {
            if c >= cols {
                return Err(parse_err(path, lineno, format!("more than {cols} columns")));
            }
            m[(seen, c)] = field
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, lineno, format!("column {}: {e}", c + 1)))?;
            n += 1;
        }
        if n != cols {
            return Err(parse_err(path, lineno, format!("{n} columns, expected {cols}")));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(path, seen + 1, format!("{seen} rows, expected {rows}")));
    }
    Ok(m)
}

pub fn format_dense(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 20 + 16);
    let _ = writeln!(out, "{}\t{}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{}", m[(r, c)]);
        }
        out.push('\n');
    }
    out
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dense(path, &text)
}

pub fn write_dense(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, format_dense(m).as_bytes())
}

pub fn parse_corpus(path: &Path, text: &str) -> Result<Corpus> {
    let mut lines = text.lines();
    let dims = parse_header(path, lines.next(), 3)?;
    let (n_docs, n_words, nnz) = (dims[0], dims[1], dims[2]);
    let mut triplets = Vec::with_capacity(nnz);
    for (r, line) in lines.enumerate() {
        let lineno = r + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(path, lineno, "expected <doc>\t<word>\t<count>"));
        }
        let idx = |s: &str, what: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(0) => Err(parse_err(path, lineno, format!("{what} index must be >= 1"))),
                Ok(v) => Ok(v - 1),
                Err(e) => Err(parse_err(path, lineno, format!("{what}: {e}"))),
            }
        };
        let m = idx(fields[0], "doc")?;
        let i = idx(fields[1], "word")?;
        let c = fields[2]
            .parse::<u64>()
            .map_err(|e| parse_err(path, lineno, format!("count: {e}")))?;
        triplets.push((m, i, c));
    }
    if triplets.len() != nnz {
        return Err(parse_err(
            path,
            1,
            format!("header declares {nnz} entries, found {}", triplets.len()),
        ));
    }
    Corpus::from_triplets(n_docs, n_words, triplets)
}

pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::with_capacity(corpus.nnz() * 16 + 32);
    let _ = writeln!(
        out,
        "{}\t{}\t{}",
        corpus.n_docs(),
        corpus.n_words(),
        corpus.nnz()
    );
    for (m, doc) in corpus.docs().iter().enumerate() {
        for &(i, c) in doc {
            let _ = writeln!(out, "{}\t{}\t{}", m + 1, i + 1, c);
        }
    }
    out
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(path, &text)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_atomic(path, format_corpus(corpus).as_bytes())
}

/// Loads `B.tsv` and `A.tsv` from a model directory.
pub fn load_model(dir: impl AsRef<Path>) -> Result<TopicModel> {
    let dir = dir.as_ref();
    let b = read_dense(dir.join(B_FILE))?;
    let a = read_dense(dir.join(A_FILE))?;
    TopicModel::new(b, a)
}

pub fn save_model(dir: impl AsRef<Path>, model: &TopicModel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dense(dir.join(B_FILE), model.b())?;
    write_dense(dir.join(A_FILE), model.a())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn dense_round_trip_is_exact() {
        let m = dmatrix![0.1, 1.0 / 3.0, 2.0f64.sqrt(); 1e-300, -0.0, 123456789.123456789];
        let back = parse_dense(Path::new("m"), &format_dense(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn dense_rejects_ragged_rows() {
        let err = parse_dense(Path::new("m"), "2\t2\n1\t0\n1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_dense(Path::new("m"), "2\t2\n1\t0\n").is_err());
        assert!(parse_dense(Path::new("m"), "1\t1\nx\n").is_err());
    }

    #[test]
    fn corpus_format() {
        let text = "2\t4\t3\n1\t2\t5\n2\t1\t1\n2\t4\t2\n";
        let c = parse_corpus(Path::new("c"), text).unwrap();
        assert_eq!(c.doc(0), &[(1, 5)]);
        assert_eq!(c.doc(1), &[(0, 1), (3, 2)]);
        assert_eq!(format_corpus(&c), text);
    }

    #[test]
    fn corpus_rejects_zero_index_and_count_mismatch() {
        assert!(parse_corpus(Path::new("c"), "1\t2\t1\n0\t1\t1\n").is_err());
        assert!(parse_corpus(Path::new("c"), "1\t2\t2\n1\t1\t1\n").is_err());
    }

    #[test]
    fn load_identity_model() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(B_FILE), "2\t2\n1\t0\n0\t1\n").unwrap();
        fs::write(dir.path().join(A_FILE), "2\t2\n0.5\t0\n0\t0.5\n").unwrap();
        let m = load_model(dir.path()).unwrap();
        assert_eq!((m.n_words(), m.n_topics()), (2, 2));

        fs::write(dir.path().join(B_FILE), "2\t2\n0.9\t0\n0\t1\n").unwrap();
        let err = load_model(dir.path()).unwrap_err();
        assert!(err.to_string().contains("column 0"), "{err}");
    }
}
