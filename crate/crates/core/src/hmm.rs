//! HMM parametrization by the substochastic matrices `M(y)`.
//!
//! `M(y)[i][j] = P(Y_{t+1} = y, X_{t+1} = j | X_t = i)`. Their sum `A` is the
//! transition matrix of the hidden chain and `pi` its stationary row vector, so
//! the probability of a string `w = y_1 ... y_n` is `pi M(y_1) ... M(y_n) e`.
//! Output symbols are indexed `0..m`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

/// Row-sum tolerance for stochastic inputs.
pub const STOCHASTIC_TOL: f64 = 1e-10;
/// Residual tolerance for `pi A = pi`.
pub const STATIONARY_TOL: f64 = 1e-8;
/// Rows whose sum deviates from 1 by at most this much are renormalized by the
/// lenient constructors instead of rejected (e.g. `1/3` written in decimal).
pub const RENORMALIZE_TOL: f64 = 1e-6;

/// Singular values of `A^T - I` below this are counted as null directions.
const NULLITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    m: usize,
    n_states: usize,
    blocks: Vec<DMatrix<f64>>,
    pi: RowDVector<f64>,
}

/// Transition matrix `A` (`N x N`) and read-out matrix `B` (`N x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct AbSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

fn check_entries(mat: &DMatrix<f64>, name: &str) -> Result<()> {
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            let v = mat[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation { what: format!("{name}[{i}][{j}] = {v} is not a nonnegative number"), row: i });
            }
        }
    }
    Ok(())
}

fn check_row_stochastic(mat: &DMatrix<f64>, name: &str) -> Result<()> {
    check_entries(mat, name)?;
    for (i, row) in mat.row_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Validation { what: format!("{name} row sums to {s}"), row: i });
        }
    }
    Ok(())
}

/// Rescales rows whose sum is within [`RENORMALIZE_TOL`] of one; rejects the rest.
pub fn renormalize_rows(mat: &mut DMatrix<f64>, name: &str) -> Result<()> {
    check_entries(mat, name)?;
    for i in 0..mat.nrows() {
        let s = mat.row(i).sum();
        if (s - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::Validation { what: format!("{name} row sums to {s}"), row: i });
        }
        if s != 1.0 {
            mat.row_mut(i).unscale_mut(s);
        }
    }
    Ok(())
}

impl AbSpec {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Shape(format!("A is {}x{}, expected square", a.nrows(), a.ncols())));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Shape(format!("B has {} rows, A has {}", b.nrows(), a.nrows())));
        }
        if b.ncols() == 0 {
            return Err(Error::Shape("B has no columns".into()));
        }
        check_row_stochastic(&a, "A")?;
        check_row_stochastic(&b, "B")?;
        Ok(Self { a, b })
    }

    /// Like [`AbSpec::new`], but first renormalizes rows that are off by at
    /// most [`RENORMALIZE_TOL`].
    pub fn new_lenient(mut a: DMatrix<f64>, mut b: DMatrix<f64>) -> Result<Self> {
        renormalize_rows(&mut a, "A")?;
        renormalize_rows(&mut b, "B")?;
        Self::new(a, b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Builds the model with `M(y) = A diag(B[:, y])` and its stationary vector.
pub fn model_from_ab(spec: &AbSpec) -> Result<HmmModel> {
    let n = spec.a.nrows();
    let m = spec.b.ncols();
    let blocks: Vec<DMatrix<f64>> = (0..m)
        .map(|y| DMatrix::from_fn(n, n, |i, j| spec.a[(i, j)] * spec.b[(j, y)]))
        .collect();
    HmmModel::new(blocks, None)
}

/// Unique stationary row vector of a row-stochastic matrix.
///
/// Solves `(A^T - I) x = 0` with the last equation replaced by `sum(x) = 1`.
/// The null space of `A^T - I` must be one-dimensional.
pub fn stationary_vector(a: &DMatrix<f64>) -> Result<RowDVector<f64>> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::Shape(format!("transition matrix is {}x{}", a.nrows(), a.ncols())));
    }
    check_row_stochastic(a, "A")?;
    let n = a.nrows();
    let mut sys = a.transpose() - DMatrix::<f64>::identity(n, n);

    let sv = sys.clone().singular_values();
    let nullity = sv.iter().filter(|&&s| s <= NULLITY_TOL).count();
    if nullity > 1 {
        return Err(Error::Reducible { nullity });
    }

    sys.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let x = sys
        .lu()
        .solve(&rhs)
        .ok_or(Error::Reducible { nullity: nullity.max(2) })?;

    let mut pi = x.transpose();
    // roundoff can leave -1e-17 on states with tiny mass
    pi.apply(|v| *v = v.max(0.0));
    let s = pi.sum();
    pi.unscale_mut(s);

    let residual = (&pi * a - &pi).amax();
    if residual > STATIONARY_TOL {
        return Err(Error::Internal(format!("stationary residual {residual:e}")));
    }
    Ok(pi)
}

impl HmmModel {
    /// Validates the blocks and either checks the supplied `pi` or computes it.
    pub fn new(blocks: Vec<DMatrix<f64>>, pi: Option<RowDVector<f64>>) -> Result<Self> {
        let m = blocks.len();
        if m == 0 {
            return Err(Error::Invalid("alphabet must contain at least one symbol".into()));
        }
        let n_states = blocks[0].nrows();
        if n_states == 0 {
            return Err(Error::Invalid("state space must be nonempty".into()));
        }
        for (y, block) in blocks.iter().enumerate() {
            if block.shape() != (n_states, n_states) {
                return Err(Error::Shape(format!(
                    "M({y}) is {}x{}, expected {n_states}x{n_states}",
                    block.nrows(),
                    block.ncols()
                )));
            }
            check_entries(block, &format!("M({y})"))?;
        }
        let a = blocks.iter().skip(1).fold(blocks[0].clone(), |acc, b| acc + b);
        check_row_stochastic(&a, "sum_y M(y)")?;

        let pi = match pi {
            Some(pi) => {
                if pi.len() != n_states {
                    return Err(Error::Shape(format!("pi has length {}, expected {n_states}", pi.len())));
                }
                if pi.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Invalid("pi has a negative or non-finite entry".into()));
                }
                if (pi.sum() - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Invalid(format!("pi sums to {}", pi.sum())));
                }
                let residual = (&pi * &a - &pi).amax();
                if residual > STATIONARY_TOL {
                    return Err(Error::Invalid(format!("pi is not stationary (residual {residual:e})")));
                }
                pi
            }
            None => stationary_vector(&a)?,
        };
        Ok(Self { m, n_states, blocks, pi })
    }

    /// Splits an `N x mN` concatenation `[M(0), ..., M(m-1)]` into blocks.
    pub fn from_concat(concat: &DMatrix<f64>, m: usize) -> Result<Self> {
        let n = concat.nrows();
        if m == 0 || concat.ncols() != m * n {
            return Err(Error::Shape(format!("concatenation is {}x{}, expected {n}x{}", n, concat.ncols(), m * n)));
        }
        let blocks = (0..m).map(|y| concat.columns(y * n, n).into_owned()).collect();
        Self::new(blocks, None)
    }

    /// Alphabet size.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of hidden states.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn block(&self, y: usize) -> &DMatrix<f64> {
        &self.blocks[y]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn pi(&self) -> &RowDVector<f64> {
        &self.pi
    }

    /// `A = sum_y M(y)`.
    pub fn transition(&self) -> DMatrix<f64> {
        self.blocks.iter().skip(1).fold(self.blocks[0].clone(), |acc, b| acc + b)
    }

    /// `[M(0), ..., M(m-1)]`, shape `N x mN`.
    pub fn concat(&self) -> DMatrix<f64> {
        let n = self.n_states;
        let mut out = DMatrix::zeros(n, self.m * n);
        for (y, b) in self.blocks.iter().enumerate() {
            out.columns_mut(y * n, n).copy_from(b);
        }
        out
    }

    fn check_symbols(&self, w: &[usize]) -> Result<()> {
        match w.iter().find(|&&y| y >= self.m) {
            Some(y) => Err(Error::Domain(format!("symbol {y} outside alphabet of size {}", self.m))),
            None => Ok(()),
        }
    }

    /// Forward vector `pi(u) = pi M(u)`.
    pub fn forward(&self, u: &[usize]) -> Result<RowDVector<f64>> {
        self.check_symbols(u)?;
        Ok(u.iter().fold(self.pi.clone(), |row, &y| row * &self.blocks[y]))
    }

    /// Backward vector `gamma(v) = M(v) e`.
    pub fn backward(&self, v: &[usize]) -> Result<DVector<f64>> {
        self.check_symbols(v)?;
        let e = DVector::from_element(self.n_states, 1.0);
        Ok(v.iter().rev().fold(e, |col, &y| &self.blocks[y] * col))
    }

    /// `p(w) = pi M(w_1) ... M(w_n) e`; the empty string has probability one.
    pub fn string_probability(&self, w: &[usize]) -> Result<f64> {
        if w.is_empty() {
            return Ok(1.0);
        }
        Ok(self.forward(w)?.sum())
    }
}

/// Free-function form of [`HmmModel::string_probability`].
pub fn string_probability(model: &HmmModel, w: &[usize]) -> Result<f64> {
    model.string_probability(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;

    fn all_strings(m: usize, n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|w| (0..m).map(move |y| {
                    let mut w = w.clone();
                    w.push(y);
                    w
                }))
                .collect();
        }
        out
    }

    #[test]
    fn uniform_a_identity_b() {
        let a = DMatrix::from_element(2, 2, 0.5);
        let b = DMatrix::identity(2, 2);
        let model = model_from_ab(&AbSpec::new(a, b).unwrap()).unwrap();
        assert_eq!(model.block(0), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.5, 0.0]));
        assert_eq!(model.block(1), &DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.0, 0.5]));
    }

    #[test]
    fn example1_block_entry() {
        let model = examples::example1();
        // (1,3) in one-based indexing: A1[0][2] * B[2][0] = 0.1 * 0.9
        assert!((model.block(0)[(0, 2)] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn recovers_transition_matrix() {
        for spec in [examples::example1_ab(), examples::example2_ab()] {
            let model = model_from_ab(&spec).unwrap();
            let diff = (model.transition() - spec.a()).amax();
            assert!(diff <= 1e-14, "{diff}");
            for row in model.transition().row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stationary_simple_chains() {
        let pi = stationary_vector(&DMatrix::from_element(2, 2, 0.5)).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let flip = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pi = stationary_vector(&flip).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_example1_residual() {
        let a = examples::example1_ab().a().clone();
        let pi = stationary_vector(&a).unwrap();
        assert!((&pi * &a - &pi).amax() <= 1e-12);
        assert!((pi.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn reducible_chain_reports_nullity() {
        let a = DMatrix::<f64>::identity(3, 3);
        match stationary_vector(&a) {
            Err(Error::Reducible { nullity }) => assert_eq!(nullity, 3),
            other => panic!("expected reducibility error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_rows_are_named() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.5]);
        let b = DMatrix::identity(2, 2);
        match AbSpec::new(a, b) {
            Err(Error::Validation { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lenient_renormalizes_small_deviation_only() {
        let third = 0.333333;
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, third, 2.0 * third + 1e-7]);
        let b = DMatrix::identity(2, 2);
        let spec = AbSpec::new_lenient(a, b.clone()).unwrap();
        assert!((spec.a().row(1).sum() - 1.0).abs() < 1e-15);

        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.3, 0.6]);
        assert!(AbSpec::new_lenient(bad, b).is_err());
    }

    #[test]
    fn string_probability_basics() {
        let model = examples::example1();
        assert_eq!(model.string_probability(&[]).unwrap(), 1.0);
        let total: f64 = all_strings(2, 3).iter().map(|w| model.string_probability(w).unwrap()).sum();
        assert!((total - 1.0).abs() <= 1e-12);

        let b = examples::example1_ab().b().clone();
        let expect: f64 = (0..4).map(|i| model.pi()[i] * b[(i, 0)]).sum();
        assert!((model.string_probability(&[0]).unwrap() - expect).abs() <= 1e-15);

        assert!(matches!(model.string_probability(&[0, 2]), Err(Error::Domain(_))));
    }

    #[test]
    fn concatenation_splits_into_forward_backward() {
        let model = examples::example1();
        let words: Vec<Vec<usize>> = (0..=3).flat_map(|n| all_strings(2, n)).collect();
        for u in &words {
            for v in &words {
                let uv: Vec<usize> = u.iter().chain(v.iter()).copied().collect();
                let lhs = model.string_probability(&uv).unwrap();
                let rhs = (model.forward(u).unwrap() * model.backward(v).unwrap())[(0, 0)];
                assert!((lhs - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn marginal_consistency() {
        let model = examples::example2();
        for n in 0..=3 {
            for w in all_strings(2, n) {
                let p = model.string_probability(&w).unwrap();
                let mut left = 0.0;
                let mut right = 0.0;
                for y in 0..2 {
                    let mut yw = vec![y];
                    yw.extend_from_slice(&w);
                    let mut wy = w.clone();
                    wy.push(y);
                    left += model.string_probability(&yw).unwrap();
                    right += model.string_probability(&wy).unwrap();
                }
                assert!((left - p).abs() <= 1e-12 && (right - p).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_stationary_pi() {
        let model = examples::example1();
        let pi = RowDVector::from_row_slice(&[1.0, 0.0, 0.0, 0.0]);
        assert!(HmmModel::new(model.blocks().to_vec(), Some(pi)).is_err());
        assert!(HmmModel::new(model.blocks().to_vec(), Some(model.pi().clone())).is_ok());
    }
}
