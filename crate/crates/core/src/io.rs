//! HMM model files and matrix CSV output.
//!
//! Model files are TOML with the keys
//!
//! ```text
//! m  = 2                    # alphabet size, symbols are 0..m-1
//! N  = 4                    # number of hidden states
//! A  = [[...], ...]         # N x N transition matrix, row-major
//! B  = [[...], ...]         # N x m read-out matrix, row-major
//! # or, instead of A and B:
//! M  = [[[...], ...], ...]  # m matrices M(y), each N x N, row-major
//! pi = [...]                # optional stationary row vector
//! ```
//!
//! `A`/`B` rows (and the rows of `sum_y M(y)`) that miss one by at most
//! `1e-6` are renormalized, so decimal approximations of fractions such as
//! `1/3` are accepted. `pi`, when present, must already be stationary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{model_from_ab, renormalize_rows, AbSpec, HmmModel};
use crate::lex::LexKind;

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi: Option<Vec<f64>>,
}

fn to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::Parse(format!("{name} has {} rows, expected {nrows}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Parse(format!("{name} row {i} has {} entries, expected {ncols}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| v.is_nan() || **v < 0.0 || v.is_infinite()) {
            return Err(Error::Parse(format!("{name} row {i} contains {v}")));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn from_matrix(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    mat.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parses a model from the TOML text described in the module docs.
pub fn parse_model(text: &str) -> Result<HmmModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
    if file.m == 0 || file.n == 0 {
        return Err(Error::Parse("m and N must be positive".into()));
    }
    let pi = match &file.pi {
        Some(pi) => {
            let row = to_matrix(std::slice::from_ref(pi), 1, file.n, "pi")?;
            Some(RowDVector::from_iterator(file.n, row.iter().copied()))
        }
        None => None,
    };
    let model = match (&file.a, &file.b, &file.blocks) {
        (Some(a), Some(b), None) => {
            let a = to_matrix(a, file.n, file.n, "A")?;
            let b = to_matrix(b, file.n, file.m, "B")?;
            let spec = AbSpec::new_lenient(a, b)?;
            let model = model_from_ab(&spec)?;
            match pi {
                Some(pi) => HmmModel::new(model.blocks().to_vec(), Some(pi))?,
                None => model,
            }
        }
        (None, None, Some(blocks)) => {
            if blocks.len() != file.m {
                return Err(Error::Parse(format!("M lists {} matrices, expected m = {}", blocks.len(), file.m)));
            }
            let mut mats = blocks
                .iter()
                .enumerate()
                .map(|(y, rows)| to_matrix(rows, file.n, file.n, &format!("M[{y}]")))
                .collect::<Result<Vec<_>>>()?;
            // renormalize through A = sum_y M(y), scaling every block's row alike
            let mut a = mats.iter().skip(1).fold(mats[0].clone(), |acc, b| acc + b);
            let sums: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
            renormalize_rows(&mut a, "sum_y M(y)")?;
            for mat in &mut mats {
                for (i, s) in sums.iter().enumerate() {
                    mat.row_mut(i).unscale_mut(*s);
                }
            }
            HmmModel::new(mats, pi)?
        }
        _ => return Err(Error::Parse("give either both A and B, or M".into())),
    };
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<HmmModel> {
    parse_model(&fs::read_to_string(path)?)
}

/// Serializes a model as `M` blocks plus `pi`.
pub fn format_model(model: &HmmModel) -> String {
    let file = ModelFile {
        m: model.m(),
        n: model.n_states(),
        a: None,
        b: None,
        blocks: Some(model.blocks().iter().map(from_matrix).collect()),
        pi: Some(model.pi().iter().copied().collect()),
    };
    let body = toml::to_string(&file).expect("model file is always serializable");
    format!("# symbols are 0-based; M[y][i][j] = P(Y' = y, X' = j | X = i)\n{body}")
}

pub fn write_model(path: &Path, model: &HmmModel) -> Result<()> {
    fs::write(path, format_model(model))?;
    Ok(())
}

/// Formats a matrix as CSV with full round-trip precision, one row per line,
/// preceded by a `#` comment line.
pub fn matrix_csv(mat: &DMatrix<f64>, header: &str) -> String {
    let mut out = String::new();
    writeln!(out, "# {header}").unwrap();
    for row in mat.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

/// Header line for Hankel-related dumps recording the index conventions.
pub fn hankel_header(what: &str, m: usize, n: usize, rows: Option<LexKind>, cols: Option<LexKind>) -> String {
    let label = |k: Option<LexKind>| match k {
        Some(LexKind::Flo) => "flo",
        Some(LexKind::Llo) => "llo",
        None => "state",
    };
    format!("{what} m={m} n={n} rows={} cols={} symbols=0..{}", label(rows), label(cols), m - 1)
}

/// Parses CSV written by [`matrix_csv`] (lines starting with `#` are skipped).
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{c:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged CSV matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;

    #[test]
    fn bundled_files_parse() {
        let m1 = examples::example1();
        assert_eq!((m1.m(), m1.n_states()), (2, 4));
        let m2 = examples::example2();
        assert!((m2.transition()[(2, 0)] - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(m2.transition()[(2, 2)], 0.0);
    }

    #[test]
    fn round_trip_via_blocks() {
        let model = examples::example2();
        let back = parse_model(&format_model(&model)).unwrap();
        assert!((back.concat() - model.concat()).amax() <= 1e-16);
        assert!((back.pi() - model.pi()).amax() <= 1e-16);
    }

    #[test]
    fn rejects_bad_inputs() {
        let neg = "m = 1\nN = 1\nM = [[[-1.0]]]\n";
        assert!(matches!(parse_model(neg), Err(Error::Parse(_))));
        let nan = "m = 1\nN = 1\nM = [[[nan]]]\n";
        assert!(matches!(parse_model(nan), Err(Error::Parse(_))));
        let both = "m = 1\nN = 1\nM = [[[1.0]]]\nA = [[1.0]]\nB = [[1.0]]\n";
        assert!(matches!(parse_model(both), Err(Error::Parse(_))));
        let unknown = "m = 1\nN = 1\nM = [[[1.0]]]\nQ = 3\n";
        assert!(matches!(parse_model(unknown), Err(Error::Parse(_))));
        let off = "m = 1\nN = 2\nA = [[0.5, 0.6], [0.5, 0.5]]\nB = [[1.0], [1.0]]\n";
        assert!(matches!(parse_model(off), Err(Error::Validation { row: 0, .. })));
        let ragged = "m = 1\nN = 2\nA = [[0.5, 0.5], [1.0]]\nB = [[1.0], [1.0]]\n";
        assert!(matches!(parse_model(ragged), Err(Error::Parse(_))));
    }

    #[test]
    fn six_digit_thirds_renormalized() {
        let text = "m = 1\nN = 3\nA = [[0.3333333, 0.3333333, 0.3333333], [1, 0, 0], [0, 1, 0]]\nB = [[1.0], [1.0], [1.0]]\n";
        let model = parse_model(text).unwrap();
        assert!((model.transition().row(0).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_pi_checked() {
        let text = "m = 1\nN = 2\nM = [[[0.5, 0.5], [0.5, 0.5]]]\npi = [0.9, 0.1]\n";
        assert!(parse_model(text).is_err());
        let text = "m = 1\nN = 2\nM = [[[0.5, 0.5], [0.5, 0.5]]]\npi = [0.5, 0.5]\n";
        assert!(parse_model(text).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let mat = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, 2.5e-9, 0.0]);
        let text = matrix_csv(&mat, &hankel_header("H", 2, 1, Some(LexKind::Flo), Some(LexKind::Llo)));
        assert!(text.starts_with("# H m=2 n=1 rows=flo cols=llo"));
        assert_eq!(parse_matrix_csv(&text).unwrap(), mat);
    }
}
