//! CSV and manifest files.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! every `f64` reads back bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::{ChainSummary, SimilarityMatrix, VisitationGrid};
use crate::error::{Error, Result};
use crate::policy::ParamVector;
use crate::sampler::ChainRecord;

pub const CHAIN_FILE: &str = "chain.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SIMILARITY_FILE: &str = "similarity.csv";
pub const VISITATION_FILE: &str = "visitation.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

const CHAIN_COLUMNS: [&str; 6] = ["k", "accepted", "log_u_current", "log_u_proposal", "mean_return", "intrinsic_loss"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(path.to_path_buf())),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// A run directory resolves to its `chain.csv`; anything else is taken as
/// the file itself.
fn chain_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHAIN_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn chain_csv(chain: &[ChainRecord]) -> String {
    let dim = chain.first().map_or(0, |r| r.theta.len());
    let mut out = CHAIN_COLUMNS.join(",");
    for j in 0..dim {
        write!(out, ",theta_{j}").unwrap();
    }
    out.push('\n');
    for r in chain {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            r.accepted as u8,
            fmt_f64(r.log_utility_current),
            fmt_f64(r.log_utility_proposal),
            fmt_f64(r.mean_return),
            fmt_f64(r.intrinsic_loss)
        )
        .unwrap();
        for v in r.theta.as_slice() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Writes `chain.csv` into a directory, or to the given file path when it
/// ends in `.csv`.
pub fn persist_chain(chain: &[ChainRecord], path: &Path) -> Result<PathBuf> {
    let target = if path.extension().is_some_and(|e| e == "csv") {
        path.to_path_buf()
    } else {
        path.join(CHAIN_FILE)
    };
    write_file(&target, &chain_csv(chain))?;
    Ok(target)
}

pub fn load_chain(path: &Path) -> Result<Vec<ChainRecord>> {
    let path = chain_path(path);
    let text = read_file(&path)?;
    parse_chain(&text, &path)
}

pub fn parse_chain(text: &str, path: &Path) -> Result<Vec<ChainRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < CHAIN_COLUMNS.len() || columns[..CHAIN_COLUMNS.len()] != CHAIN_COLUMNS {
        return Err(err(1, format!("unexpected header '{header}'")));
    }
    let dim = columns.len() - CHAIN_COLUMNS.len();
    for (j, name) in columns[CHAIN_COLUMNS.len()..].iter().enumerate() {
        if *name != format!("theta_{j}") {
            return Err(err(1, format!("expected column theta_{j}, found '{name}'")));
        }
    }
    let mut chain = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(err(line_no, format!("expected {} fields, found {}", columns.len(), fields.len())));
        }
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| err(line_no, format!("column {}: '{}' ({e})", columns[i], fields[i])))
        };
        let k = fields[0]
            .parse::<usize>()
            .map_err(|e| err(line_no, format!("column k: '{}' ({e})", fields[0])))?;
        let accepted = match fields[1] {
            "1" => true,
            "0" => false,
            other => return Err(err(line_no, format!("column accepted: '{other}' is not 0 or 1"))),
        };
        let theta = (0..dim).map(|j| float(CHAIN_COLUMNS.len() + j)).collect::<Result<Vec<_>>>()?;
        chain.push(ChainRecord {
            k,
            accepted,
            log_utility_current: float(2)?,
            log_utility_proposal: float(3)?,
            mean_return: float(4)?,
            intrinsic_loss: float(5)?,
            theta: ParamVector::new(theta).map_err(|e| err(line_no, e.to_string()))?,
        });
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub acceptance_rate: f64,
    pub best_mean_return: f64,
    pub retained_unique: usize,
    pub iterations: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl SummaryRow {
    pub fn new(summary: &ChainSummary, retained_unique: usize, iterations: usize, episodes: usize, seed: u64) -> Self {
        Self {
            acceptance_rate: summary.acceptance_rate,
            best_mean_return: summary.best_mean_return(),
            retained_unique,
            iterations,
            episodes,
            seed,
        }
    }
}

pub fn summary_csv(row: &SummaryRow) -> String {
    format!(
        "acceptance_rate,best_mean_return,retained_unique,K,N,seed\n{},{},{},{},{},{}\n",
        fmt_f64(row.acceptance_rate),
        fmt_f64(row.best_mean_return),
        row.retained_unique,
        row.iterations,
        row.episodes,
        row.seed
    )
}

pub fn similarity_csv(matrix: &SimilarityMatrix) -> String {
    let n = matrix.size();
    let mut out = String::new();
    for j in 0..n {
        write!(out, ",{j}").unwrap();
    }
    out.push('\n');
    for (i, row) in matrix.rows().iter().enumerate() {
        out.push_str(&i.to_string());
        for v in row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// The corner cell names the environment; columns and rows are labeled by
/// grid coordinate.
pub fn visitation_csv(grid: &VisitationGrid) -> String {
    let mut out = grid.env.to_string();
    for c in 0..grid.cols {
        write!(out, ",c{c}").unwrap();
    }
    out.push('\n');
    for r in 0..grid.rows {
        write!(out, "r{r}").unwrap();
        for c in 0..grid.cols {
            out.push(',');
            out.push_str(&fmt_f64(grid.at(r, c)));
        }
        out.push('\n');
    }
    out
}

/// Flat `key=value` text, one entry per line, in the given order.
pub fn key_value_text(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Parses `key=value` lines, skipping blanks and `#` comments. Returns the
/// pairs with their line numbers.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected key=value, found '{line}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String, usize)>> {
    parse_key_values(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Vec<ChainRecord> {
        (1..=n)
            .map(|k| ChainRecord {
                k,
                theta: ParamVector::new(vec![0.1 * k as f64, -1.0 / 3.0, 1e-300, 12345.678901234567]).unwrap(),
                accepted: k % 3 == 0,
                log_utility_current: -(k as f64).sqrt(),
                log_utility_proposal: std::f64::consts::PI * k as f64,
                mean_return: -50.0 + k as f64 / 7.0,
                intrinsic_loss: 0.0625,
            })
            .collect()
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, f64::MIN_POSITIVE, f64::MAX, 5e-324, -0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let original = chain(100);
        persist_chain(&original, dir.path()).unwrap();
        assert_eq!(load_chain(dir.path()).unwrap(), original);
        assert_eq!(load_chain(&dir.path().join(CHAIN_FILE)).unwrap(), original);
    }

    #[test]
    fn missing_chain_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_chain(dir.path()), Err(Error::NotFound(_))));
    }

    #[test]
    fn corrupt_row_names_its_line() {
        let text = chain_csv(&chain(5));
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replacen("e-1", "x-1", 1);
        let broken = lines.join("\n");
        match parse_chain(&broken, Path::new("c.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let truncated = &text[..text.len() - 40];
        match parse_chain(truncated, Path::new("c.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_is_checked() {
        assert!(matches!(parse_chain("k,theta_0\n", Path::new("c")), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_chain("", Path::new("c")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn similarity_layout() {
        let m = SimilarityMatrix::from_thetas(&[
            ParamVector::new(vec![1.0, 0.0]).unwrap(),
            ParamVector::new(vec![0.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let text = similarity_csv(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ",0,1");
        assert!(lines[1].starts_with("0,1.0000000000000000e0,"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn visitation_layout() {
        let grid = VisitationGrid {
            env: "gridworld",
            rows: 2,
            cols: 3,
            frequencies: vec![0.5, 0.25, 0.25, 0.0, 0.0, 0.0],
        };
        let text = visitation_csv(&grid);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "gridworld,c0,c1,c2");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("r1,"));
    }

    #[test]
    fn key_values() {
        let text = "# comment\nenv = cliff\n\nseed=3\n";
        let kv = parse_key_values(text, Path::new("x")).unwrap();
        assert_eq!(kv, vec![("env".into(), "cliff".into(), 2), ("seed".into(), "3".into(), 4)]);
        assert!(matches!(parse_key_values("a=1\nnonsense\n", Path::new("x")), Err(Error::Parse { line: 2, .. })));
    }
}
