//! Linear time-invariant recursively-defined (RD) assume/guarantee contracts.
//!
//! A contract constrains an input signal `d` (dimension `n_d`) and an output
//! signal `y` (dimension `n_y`) through two families of inequality blocks:
//!
//! * **assumption blocks** restrict `d(k)` in terms of `d(k-m:k)` and
//!   `y(k-m:k-1)` — the assumption at time `k` may react to *past* outputs
//!   but never to `y(k)` itself;
//! * **guarantee blocks** restrict `(d(k), y(k))` in terms of the full
//!   windows `d(k-m:k)`, `y(k-m:k)`.
//!
//! Each block is a matrix inequality `Cd * d_window + Cy * y_window <= rhs`
//! over sliding windows flattened oldest-first. Blocks of different depths
//! coexist in one contract; a shallower block reads the suffix of a wider
//! window. The pointwise maximum of all row residuals gives the
//! piecewise-linear functions `alpha` (assumptions) and `gamma` (guarantees):
//! membership in the contract is exactly `alpha <= 0` / `gamma <= 0` at every
//! applicable time.
//!
//! All types are immutable after construction and evaluation is pure, so
//! values can be shared freely across threads.

use crate::mat::{dot, Mat};
use std::sync::Arc;
use thiserror::Error;

/// Absolute tolerance used by the prefix membership checks. Matches the
/// simplex feasibility tolerance so LP witnesses re-validate.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// Whether a block constrains the assumptions or the guarantees of a
/// contract. The two kinds read differently sized output windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Assumption,
    Guarantee,
}

impl BlockKind {
    /// Number of output steps a block of this kind reads at depth `m`:
    /// `m` for assumptions (`y(k-m:k-1)`), `m+1` for guarantees
    /// (`y(k-m:k)`).
    pub fn y_window_len(self, depth: usize) -> usize {
        match self {
            BlockKind::Assumption => depth,
            BlockKind::Guarantee => depth + 1,
        }
    }
}

/// A finite window of a vector-valued signal, oldest step first.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalWindow {
    dim: usize,
    values: Vec<Vec<f64>>,
}

impl SignalWindow {
    pub fn new(dim: usize, values: Vec<Vec<f64>>) -> Result<Self, ContractError> {
        for (step, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(ContractError::WindowDim {
                    step,
                    got: v.len(),
                    expected: dim,
                });
            }
        }
        Ok(SignalWindow { dim, values })
    }

    pub fn from_steps(dim: usize, steps: &[Vec<f64>]) -> Result<Self, ContractError> {
        Self::new(dim, steps.to_vec())
    }

    /// An empty window (used when a block reads no output history).
    pub fn empty(dim: usize) -> Self {
        SignalWindow {
            dim,
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Dot product of `coeffs` against the last `steps` entries, flattened
    /// oldest-first. `coeffs` must have exactly `steps * dim` entries.
    fn suffix_dot(&self, steps: usize, coeffs: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), steps * self.dim);
        let start = self.values.len() - steps;
        let mut acc = 0.0;
        for (slot, step) in self.values[start..].iter().enumerate() {
            acc += dot(&coeffs[slot * self.dim..(slot + 1) * self.dim], step);
        }
        acc
    }
}

/// One windowed inequality block `Cd * d(k-m:k) + Cy * y_window <= rhs`.
///
/// `coeff_d` has `(m+1) * n_d` columns; `coeff_y` has `w * n_y` columns with
/// `w` given by [`BlockKind::y_window_len`]. Whether the block is an
/// assumption or a guarantee is determined by which list of the contract it
/// lives in.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityBlock {
    depth: usize,
    coeff_d: Mat,
    coeff_y: Mat,
    rhs: Vec<f64>,
}

impl InequalityBlock {
    pub fn new(
        depth: usize,
        coeff_d: Mat,
        coeff_y: Mat,
        rhs: Vec<f64>,
    ) -> Result<Self, ContractError> {
        if coeff_d.rows() != rhs.len() || coeff_y.rows() != rhs.len() {
            return Err(ContractError::BlockRows {
                d_rows: coeff_d.rows(),
                y_rows: coeff_y.rows(),
                rhs_rows: rhs.len(),
            });
        }
        Ok(InequalityBlock {
            depth,
            coeff_d,
            coeff_y,
            rhs,
        })
    }

    /// A block with no rows (vacuous).
    pub fn empty(depth: usize, kind: BlockKind, n_d: usize, n_y: usize) -> Self {
        InequalityBlock {
            depth,
            coeff_d: Mat::zeros(0, (depth + 1) * n_d),
            coeff_y: Mat::zeros(0, kind.y_window_len(depth) * n_y),
            rhs: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn coeff_d(&self) -> &Mat {
        &self.coeff_d
    }

    pub fn coeff_y(&self) -> &Mat {
        &self.coeff_y
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// The columns of `coeff_d` that multiply `d(k)` (the newest slot).
    pub fn current_d_coeffs(&self) -> Mat {
        let n_d = self.coeff_d.cols() / (self.depth + 1);
        self.coeff_d.columns(self.depth * n_d, self.coeff_d.cols())
    }

    fn validate(&self, kind: BlockKind, n_d: usize, n_y: usize) -> Result<(), String> {
        let want_d = (self.depth + 1) * n_d;
        if self.coeff_d.cols() != want_d {
            return Err(format!(
                "coeff_d has {} columns, expected {} = (depth {} + 1) * n_d {}",
                self.coeff_d.cols(),
                want_d,
                self.depth,
                n_d
            ));
        }
        let want_y = kind.y_window_len(self.depth) * n_y;
        if self.coeff_y.cols() != want_y {
            return Err(format!(
                "coeff_y has {} columns, expected {} for a depth-{} {:?} block with n_y {}",
                self.coeff_y.cols(),
                want_y,
                self.depth,
                kind,
                n_y
            ));
        }
        Ok(())
    }

    /// Row residuals on windows matching this block exactly (d window of
    /// `depth + 1` steps, y window per the kind).
    pub fn residuals(
        &self,
        kind: BlockKind,
        d_window: &SignalWindow,
        y_window: &SignalWindow,
    ) -> Result<Vec<f64>, ContractError> {
        let d_steps = self.depth + 1;
        let y_steps = kind.y_window_len(self.depth);
        if d_window.len() < d_steps {
            return Err(ContractError::WindowLen {
                which: "d",
                got: d_window.len(),
                expected: d_steps,
            });
        }
        if y_window.len() < y_steps {
            return Err(ContractError::WindowLen {
                which: "y",
                got: y_window.len(),
                expected: y_steps,
            });
        }
        Ok((0..self.rows())
            .map(|r| self.row_residual(kind, r, d_window, y_window))
            .collect())
    }

    /// Residual of a single row; windows may be wider than the block, in
    /// which case the suffix is read.
    pub fn row_residual(
        &self,
        kind: BlockKind,
        row: usize,
        d_window: &SignalWindow,
        y_window: &SignalWindow,
    ) -> f64 {
        let d_steps = self.depth + 1;
        let y_steps = kind.y_window_len(self.depth);
        let mut acc = d_window.suffix_dot(d_steps, self.coeff_d.row(row));
        if y_steps > 0 {
            acc += y_window.suffix_dot(y_steps, self.coeff_y.row(row));
        }
        acc - self.rhs[row]
    }
}

/// Incrementally builds an [`InequalityBlock`] row by row, addressing
/// coefficients by lag relative to the current time (`lag 0` = `k`,
/// `lag 1` = `k-1`, ...).
pub struct BlockBuilder {
    kind: BlockKind,
    depth: usize,
    n_d: usize,
    n_y: usize,
    coeff_d: Vec<f64>,
    coeff_y: Vec<f64>,
    rhs: Vec<f64>,
}

impl BlockBuilder {
    pub fn assumption(depth: usize, n_d: usize, n_y: usize) -> Self {
        Self::new(BlockKind::Assumption, depth, n_d, n_y)
    }

    pub fn guarantee(depth: usize, n_d: usize, n_y: usize) -> Self {
        Self::new(BlockKind::Guarantee, depth, n_d, n_y)
    }

    fn new(kind: BlockKind, depth: usize, n_d: usize, n_y: usize) -> Self {
        BlockBuilder {
            kind,
            depth,
            n_d,
            n_y,
            coeff_d: Vec::new(),
            coeff_y: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Starts a new row with the given right-hand side.
    pub fn row(mut self, rhs: f64) -> Self {
        self.coeff_d
            .resize(self.coeff_d.len() + (self.depth + 1) * self.n_d, 0.0);
        self.coeff_y.resize(
            self.coeff_y.len() + self.kind.y_window_len(self.depth) * self.n_y,
            0.0,
        );
        self.rhs.push(rhs);
        self
    }

    /// Adds `coeff * d_coord(k - lag)` to the current row.
    pub fn d(mut self, lag: usize, coord: usize, coeff: f64) -> Self {
        assert!(
            lag <= self.depth,
            "d lag {lag} exceeds block depth {}",
            self.depth
        );
        assert!(coord < self.n_d, "d coordinate {coord} out of range");
        assert!(
            !self.rhs.is_empty(),
            "call row() before adding coefficients"
        );
        let row_base = self.coeff_d.len() - (self.depth + 1) * self.n_d;
        self.coeff_d[row_base + (self.depth - lag) * self.n_d + coord] += coeff;
        self
    }

    /// Adds `coeff * y_coord(k - lag)` to the current row. Assumption
    /// blocks only see lags `1..=depth`.
    pub fn y(mut self, lag: usize, coord: usize, coeff: f64) -> Self {
        let w = self.kind.y_window_len(self.depth);
        let min_lag = match self.kind {
            BlockKind::Assumption => 1,
            BlockKind::Guarantee => 0,
        };
        assert!(
            lag >= min_lag && lag <= self.depth,
            "y lag {lag} invalid for a depth-{} {:?} block",
            self.depth,
            self.kind
        );
        assert!(coord < self.n_y, "y coordinate {coord} out of range");
        assert!(
            !self.rhs.is_empty(),
            "call row() before adding coefficients"
        );
        let row_base = self.coeff_y.len() - w * self.n_y;
        // Newest slot sits last: slot index = (w - 1) - (lag - min_lag).
        let slot = w - 1 - (lag - min_lag);
        self.coeff_y[row_base + slot * self.n_y + coord] += coeff;
        self
    }

    pub fn build(self) -> InequalityBlock {
        let rows = self.rhs.len();
        let d_cols = (self.depth + 1) * self.n_d;
        let y_cols = self.kind.y_window_len(self.depth) * self.n_y;
        InequalityBlock {
            depth: self.depth,
            coeff_d: Mat::from_flat(rows, d_cols, self.coeff_d),
            coeff_y: Mat::from_flat(rows, y_cols, self.coeff_y),
            rhs: self.rhs,
        }
    }
}

/// An LTI RD contract: dimensions plus assumption and guarantee blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiRdContract {
    n_d: usize,
    n_y: usize,
    assumptions: Vec<InequalityBlock>,
    guarantees: Vec<InequalityBlock>,
    label: String,
}

impl LtiRdContract {
    pub fn new(
        n_d: usize,
        n_y: usize,
        assumptions: Vec<InequalityBlock>,
        mut guarantees: Vec<InequalityBlock>,
        label: impl Into<String>,
    ) -> Result<Self, ContractError> {
        if n_d == 0 {
            return Err(ContractError::NonPositiveDim { what: "n_d" });
        }
        if n_y == 0 {
            return Err(ContractError::NonPositiveDim { what: "n_y" });
        }
        for (index, b) in assumptions.iter().enumerate() {
            b.validate(BlockKind::Assumption, n_d, n_y)
                .map_err(|msg| ContractError::BadBlock {
                    kind: BlockKind::Assumption,
                    index,
                    msg,
                })?;
        }
        if guarantees.is_empty() {
            guarantees.push(InequalityBlock::empty(0, BlockKind::Guarantee, n_d, n_y));
        }
        for (index, b) in guarantees.iter().enumerate() {
            b.validate(BlockKind::Guarantee, n_d, n_y)
                .map_err(|msg| ContractError::BadBlock {
                    kind: BlockKind::Guarantee,
                    index,
                    msg,
                })?;
        }
        Ok(LtiRdContract {
            n_d,
            n_y,
            assumptions,
            guarantees,
            label: label.into(),
        })
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn assumptions(&self) -> &[InequalityBlock] {
        &self.assumptions
    }

    pub fn guarantees(&self) -> &[InequalityBlock] {
        &self.guarantees
    }

    /// Assumption depth `m_A`: the widest assumption window in the contract
    /// (0 when there are no assumption blocks).
    pub fn assumption_depth(&self) -> usize {
        self.assumptions.iter().map(|b| b.depth).max().unwrap_or(0)
    }

    /// Guarantee depth `m_G`.
    pub fn guarantee_depth(&self) -> usize {
        self.guarantees.iter().map(|b| b.depth).max().unwrap_or(0)
    }

    pub fn assumption_rows(&self) -> usize {
        self.assumptions.iter().map(|b| b.rows()).sum()
    }

    pub fn guarantee_rows(&self) -> usize {
        self.guarantees.iter().map(|b| b.rows()).sum()
    }

    fn check_windows(
        &self,
        d_window: &SignalWindow,
        y_window: &SignalWindow,
        d_steps: usize,
        y_steps: usize,
    ) -> Result<(), ContractError> {
        if d_window.dim() != self.n_d {
            return Err(ContractError::WindowDim {
                step: 0,
                got: d_window.dim(),
                expected: self.n_d,
            });
        }
        if y_steps > 0 && y_window.dim() != self.n_y {
            return Err(ContractError::WindowDim {
                step: 0,
                got: y_window.dim(),
                expected: self.n_y,
            });
        }
        if d_window.len() != d_steps {
            return Err(ContractError::WindowLen {
                which: "d",
                got: d_window.len(),
                expected: d_steps,
            });
        }
        if y_window.len() != y_steps {
            return Err(ContractError::WindowLen {
                which: "y",
                got: y_window.len(),
                expected: y_steps,
            });
        }
        Ok(())
    }

    /// The piecewise-linear assumption function: the maximum residual over
    /// all assumption rows, with shallower blocks reading window suffixes.
    ///
    /// `d_window` must cover `k - m_A ..= k` and `y_window` must cover
    /// `k - m_A ..= k-1` where `m_A = self.assumption_depth()`. A contract
    /// with zero assumption rows is vacuous and returns the
    /// [`f64::NEG_INFINITY`] sentinel explicitly (never a value folded from
    /// an empty maximum).
    pub fn eval_alpha(
        &self,
        d_window: &SignalWindow,
        y_window: &SignalWindow,
    ) -> Result<f64, ContractError> {
        let m = self.assumption_depth();
        self.check_windows(
            d_window,
            y_window,
            m + 1,
            BlockKind::Assumption.y_window_len(m),
        )?;
        if self.assumption_rows() == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        let mut best = f64::NEG_INFINITY;
        for block in &self.assumptions {
            for r in 0..block.rows() {
                best = best.max(block.row_residual(BlockKind::Assumption, r, d_window, y_window));
            }
        }
        Ok(best)
    }

    /// The piecewise-linear guarantee function over `d(k-m_G:k)`,
    /// `y(k-m_G:k)`; analogous to [`Self::eval_alpha`].
    pub fn eval_gamma(
        &self,
        d_window: &SignalWindow,
        y_window: &SignalWindow,
    ) -> Result<f64, ContractError> {
        let m = self.guarantee_depth();
        self.check_windows(
            d_window,
            y_window,
            m + 1,
            BlockKind::Guarantee.y_window_len(m),
        )?;
        if self.guarantee_rows() == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        let mut best = f64::NEG_INFINITY;
        for block in &self.guarantees {
            for r in 0..block.rows() {
                best = best.max(block.row_residual(BlockKind::Guarantee, r, d_window, y_window));
            }
        }
        Ok(best)
    }

    /// True iff `alpha <= tol` at every time `m_A ..= n` of the given
    /// prefixes (vacuously true for prefixes shorter than the window).
    pub fn check_assumption_prefix_with(
        &self,
        d: &[Vec<f64>],
        y: &[Vec<f64>],
        tol: f64,
    ) -> Result<bool, ContractError> {
        if d.len() != y.len() {
            return Err(ContractError::PrefixLen {
                d_len: d.len(),
                y_len: y.len(),
            });
        }
        let m = self.assumption_depth();
        for k in m..d.len() {
            let d_win = SignalWindow::from_steps(self.n_d, &d[k - m..=k])?;
            let y_win = SignalWindow::from_steps(self.n_y, &y[k - m..k])?;
            if self.eval_alpha(&d_win, &y_win)? > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn check_assumption_prefix(
        &self,
        d: &[Vec<f64>],
        y: &[Vec<f64>],
    ) -> Result<bool, ContractError> {
        self.check_assumption_prefix_with(d, y, DEFAULT_MEMBERSHIP_TOL)
    }

    /// True iff `gamma <= tol` at every time `m_G ..= n`.
    pub fn check_guarantee_prefix_with(
        &self,
        d: &[Vec<f64>],
        y: &[Vec<f64>],
        tol: f64,
    ) -> Result<bool, ContractError> {
        if d.len() != y.len() {
            return Err(ContractError::PrefixLen {
                d_len: d.len(),
                y_len: y.len(),
            });
        }
        let m = self.guarantee_depth();
        for k in m..d.len() {
            let d_win = SignalWindow::from_steps(self.n_d, &d[k - m..=k])?;
            let y_win = SignalWindow::from_steps(self.n_y, &y[k - m..=k])?;
            if self.eval_gamma(&d_win, &y_win)? > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn check_guarantee_prefix(
        &self,
        d: &[Vec<f64>],
        y: &[Vec<f64>],
    ) -> Result<bool, ContractError> {
        self.check_guarantee_prefix_with(d, y, DEFAULT_MEMBERSHIP_TOL)
    }

    /// Strict recursive definedness with respect to a set of input
    /// coordinates: true iff no guarantee row carries a nonzero coefficient
    /// on `d_c(k)` for any listed coordinate `c` (exact zero test).
    pub fn is_srd(&self, input_coords: &[usize]) -> Result<bool, ContractError> {
        for &c in input_coords {
            if c >= self.n_d {
                return Err(ContractError::CoordOutOfRange {
                    coord: c,
                    n_d: self.n_d,
                });
            }
        }
        for block in &self.guarantees {
            let current = block.current_d_coeffs();
            for r in 0..current.rows() {
                for &c in input_coords {
                    if current.get(r, c) != 0.0 {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Stacked current-time `d` coefficients of all guarantee blocks
    /// (`guarantee_rows() x n_d`). The SRD test and edge-causality
    /// derivation are zero tests on (products of) this matrix.
    pub fn guarantee_current_d(&self) -> Mat {
        let blocks: Vec<Mat> = self
            .guarantees
            .iter()
            .map(|b| b.current_d_coeffs())
            .collect();
        let refs: Vec<&Mat> = blocks.iter().collect();
        if refs.is_empty() {
            Mat::zeros(0, self.n_d)
        } else {
            Mat::vstack(&refs)
        }
    }
}

/// Shared handle used across the network and verification layers.
pub type ContractRef = Arc<LtiRdContract>;

#[derive(Debug, Clone, Error)]
pub enum ContractError {
    #[error("{what} must be a positive integer")]
    NonPositiveDim { what: &'static str },
    #[error("coefficient row counts differ: coeff_d {d_rows}, coeff_y {y_rows}, rhs {rhs_rows}")]
    BlockRows {
        d_rows: usize,
        y_rows: usize,
        rhs_rows: usize,
    },
    #[error("{kind:?} block {index}: {msg}")]
    BadBlock {
        kind: BlockKind,
        index: usize,
        msg: String,
    },
    #[error("window step {step} has {got} coordinates, expected {expected}")]
    WindowDim {
        step: usize,
        got: usize,
        expected: usize,
    },
    #[error("{which} window has {got} steps, expected {expected}")]
    WindowLen {
        which: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("signal prefixes differ in length: d has {d_len} steps, y has {y_len}")]
    PrefixLen { d_len: usize, y_len: usize },
    #[error("input coordinate {coord} out of range (n_d = {n_d})")]
    CoordOutOfRange { coord: usize, n_d: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(dim: usize, steps: &[&[f64]]) -> SignalWindow {
        SignalWindow::from_steps(dim, &steps.iter().map(|s| s.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    /// `d(k) <= 1` as a single depth-0 assumption block.
    fn upper_bound_contract() -> LtiRdContract {
        let a = BlockBuilder::assumption(0, 1, 1)
            .row(1.0)
            .d(0, 0, 1.0)
            .build();
        LtiRdContract::new(1, 1, vec![a], vec![], "ub").unwrap()
    }

    #[test]
    fn alpha_affine_evaluation() {
        let c = upper_bound_contract();
        let v = c
            .eval_alpha(&win(1, &[&[0.4]]), &SignalWindow::empty(1))
            .unwrap();
        assert!((v - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_map() {
        let a = BlockBuilder::assumption(0, 1, 1).row(0.0).build();
        let c = LtiRdContract::new(1, 1, vec![a], vec![], "zero").unwrap();
        let v = c
            .eval_alpha(&win(1, &[&[7.0]]), &SignalWindow::empty(1))
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn alpha_multi_block_max() {
        // Rows d(k) - 2 and -d(k) - 3 split over two blocks; at d(k) = 5 the
        // row residuals are 3 and -8.
        let b1 = BlockBuilder::assumption(0, 1, 1)
            .row(2.0)
            .d(0, 0, 1.0)
            .build();
        let b2 = BlockBuilder::assumption(0, 1, 1)
            .row(3.0)
            .d(0, 0, -1.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![b1, b2], vec![], "two").unwrap();
        let v = c
            .eval_alpha(&win(1, &[&[5.0]]), &SignalWindow::empty(1))
            .unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_vacuous_sentinel() {
        let c = LtiRdContract::new(1, 1, vec![], vec![], "free").unwrap();
        let v = c
            .eval_alpha(&win(1, &[&[0.0]]), &SignalWindow::empty(1))
            .unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn alpha_window_mismatch_is_error() {
        let c = upper_bound_contract();
        assert!(c
            .eval_alpha(&win(1, &[&[0.0], &[1.0]]), &SignalWindow::empty(1))
            .is_err());
        assert!(c
            .eval_alpha(&win(2, &[&[0.0, 0.0]]), &SignalWindow::empty(1))
            .is_err());
    }

    #[test]
    fn gamma_feedthrough_row() {
        // y(k) - 2 d(k) <= 0 at d = 1, y = 1.5.
        let g = BlockBuilder::guarantee(0, 1, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(0, 0, -2.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![], vec![g], "g").unwrap();
        let v = c
            .eval_gamma(&win(1, &[&[1.0]]), &win(1, &[&[1.5]]))
            .unwrap();
        assert!((v - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn gamma_equality_pair_at_the_point() {
        let g = BlockBuilder::guarantee(0, 1, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(0, 0, -1.0)
            .row(0.0)
            .d(0, 0, 1.0)
            .y(0, 0, -1.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![], vec![g], "eq").unwrap();
        let v = c
            .eval_gamma(&win(1, &[&[7.0]]), &win(1, &[&[7.0]]))
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn gamma_lagged_rows() {
        // Rows y(k) - d(k-1) and -y(k); y(k) = 3, d(k-1) = 1 -> max(2, -3).
        let g = BlockBuilder::guarantee(1, 1, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(1, 0, -1.0)
            .row(0.0)
            .y(0, 0, -1.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![], vec![g], "lag").unwrap();
        let v = c
            .eval_gamma(&win(1, &[&[1.0], &[9.0]]), &win(1, &[&[4.0], &[3.0]]))
            .unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    /// `0 <= d(k) <= vmax` speed-band contract.
    fn band_contract(vmax: f64) -> LtiRdContract {
        let a = BlockBuilder::assumption(0, 1, 1)
            .row(vmax)
            .d(0, 0, 1.0)
            .row(0.0)
            .d(0, 0, -1.0)
            .build();
        LtiRdContract::new(1, 1, vec![a], vec![], "band").unwrap()
    }

    #[test]
    fn assumption_prefix_interior_and_violation() {
        let c = band_contract(10.0);
        let d: Vec<Vec<f64>> = (0..10).map(|_| vec![5.0]).collect();
        let y: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0]).collect();
        assert!(c.check_assumption_prefix(&d, &y).unwrap());

        let mut bad = d.clone();
        bad[4][0] = 20.0;
        assert!(!c.check_assumption_prefix(&bad, &y).unwrap());
    }

    #[test]
    fn prefix_length_mismatch_is_error() {
        let c = band_contract(1.0);
        assert!(c.check_assumption_prefix(&[vec![0.0]], &[]).is_err());
    }

    #[test]
    fn guarantee_prefix_identity_pass() {
        // y(k) = d(k) as a paired-inequality guarantee.
        let g = BlockBuilder::guarantee(0, 1, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(0, 0, -1.0)
            .row(0.0)
            .d(0, 0, 1.0)
            .y(0, 0, -1.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![], vec![g], "id").unwrap();
        let d: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64]).collect();
        assert!(c.check_guarantee_prefix(&d, &d.clone()).unwrap());
        let mut y = d.clone();
        y[3][0] += 0.5;
        assert!(!c.check_guarantee_prefix(&d, &y).unwrap());
    }

    #[test]
    fn membership_monotone_under_prefix_shortening() {
        let c = band_contract(3.0);
        let d: Vec<Vec<f64>> = (0..8).map(|k| vec![(k % 4) as f64]).collect();
        let y: Vec<Vec<f64>> = (0..8).map(|_| vec![0.0]).collect();
        assert!(c.check_assumption_prefix(&d, &y).unwrap());
        for n in 0..8 {
            assert!(c.check_assumption_prefix(&d[..n], &y[..n]).unwrap());
        }
    }

    #[test]
    fn srd_detects_feedthrough() {
        // y(k) = y(k-1) + d_0(k-1): no current-time d term.
        let delay = BlockBuilder::guarantee(1, 1, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .y(1, 0, -1.0)
            .d(1, 0, -1.0)
            .row(0.0)
            .y(0, 0, -1.0)
            .y(1, 0, 1.0)
            .d(1, 0, 1.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![], vec![delay], "delay").unwrap();
        assert!(c.is_srd(&[0]).unwrap());

        let feed = BlockBuilder::guarantee(0, 1, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(0, 0, -1.0)
            .build();
        let c = LtiRdContract::new(1, 1, vec![], vec![feed], "feed").unwrap();
        assert!(!c.is_srd(&[0]).unwrap());
        assert!(c.is_srd(&[2]).is_err());
    }

    #[test]
    fn srd_union_is_conjunction() {
        // Guarantee reads d_0(k) but not d_1(k).
        let g = BlockBuilder::guarantee(0, 2, 1)
            .row(0.0)
            .y(0, 0, 1.0)
            .d(0, 0, -1.0)
            .build();
        let c = LtiRdContract::new(2, 1, vec![], vec![g], "mix").unwrap();
        let s1 = [0usize];
        let s2 = [1usize];
        let both = [0usize, 1];
        assert_eq!(
            c.is_srd(&both).unwrap(),
            c.is_srd(&s1).unwrap() && c.is_srd(&s2).unwrap()
        );
    }

    #[test]
    fn block_split_equivalence() {
        // One two-row block evaluates like the same rows in two blocks.
        let joint = BlockBuilder::assumption(1, 1, 1)
            .row(1.0)
            .d(0, 0, 2.0)
            .y(1, 0, -1.0)
            .row(-0.5)
            .d(1, 0, 1.0)
            .build();
        let r1 = BlockBuilder::assumption(1, 1, 1)
            .row(1.0)
            .d(0, 0, 2.0)
            .y(1, 0, -1.0)
            .build();
        let r2 = BlockBuilder::assumption(1, 1, 1)
            .row(-0.5)
            .d(1, 0, 1.0)
            .build();
        let c_joint = LtiRdContract::new(1, 1, vec![joint], vec![], "joint").unwrap();
        let c_split = LtiRdContract::new(1, 1, vec![r1, r2], vec![], "split").unwrap();
        for (dv, yv) in [(0.3, -1.2), (-2.0, 0.7), (5.0, 5.0)] {
            let d = win(1, &[&[dv], &[2.0 * dv]]);
            let y = win(1, &[&[yv]]);
            assert_eq!(
                c_joint.eval_alpha(&d, &y).unwrap(),
                c_split.eval_alpha(&d, &y).unwrap()
            );
        }
    }

    #[test]
    fn depth_embedding_preserves_values() {
        // Embed the depth-0 row d(k) - 1 into a depth-1 block with zero
        // coefficients on the older slot.
        let shallow = BlockBuilder::assumption(0, 1, 1)
            .row(1.0)
            .d(0, 0, 1.0)
            .build();
        let embedded = BlockBuilder::assumption(1, 1, 1)
            .row(1.0)
            .d(0, 0, 1.0)
            .build();
        let c0 = LtiRdContract::new(1, 1, vec![shallow], vec![], "m0").unwrap();
        let c1 = LtiRdContract::new(1, 1, vec![embedded], vec![], "m1").unwrap();
        for v in [-1.0, 0.0, 0.4, 3.5] {
            let shallow_val = c0
                .eval_alpha(&win(1, &[&[v]]), &SignalWindow::empty(1))
                .unwrap();
            let embedded_val = c1
                .eval_alpha(&win(1, &[&[9.9], &[v]]), &win(1, &[&[-3.0]]))
                .unwrap();
            assert_eq!(shallow_val, embedded_val);
        }
    }

    #[test]
    fn values_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<LtiRdContract>();
        assert_send_sync::<InequalityBlock>();
        assert_send_sync::<SignalWindow>();
    }

    #[test]
    fn positive_homogeneity() {
        let scale = 3.75;
        let block = |c: f64| {
            InequalityBlock::new(
                1,
                Mat::from_rows(&[vec![c * 1.0, c * -2.0, c * 0.5, c * 4.0]]).unwrap(),
                Mat::from_rows(&[vec![c * -1.5]]).unwrap(),
                vec![c * 2.0],
            )
            .unwrap()
        };
        let base = LtiRdContract::new(2, 1, vec![block(1.0)], vec![], "base").unwrap();
        let scaled = LtiRdContract::new(2, 1, vec![block(scale)], vec![], "scaled").unwrap();
        let d = win(2, &[&[0.3, -0.8], &[1.1, 0.2]]);
        let y = win(1, &[&[0.9]]);
        let v = base.eval_alpha(&d, &y).unwrap();
        let vs = scaled.eval_alpha(&d, &y).unwrap();
        assert!((vs - scale * v).abs() < 1e-12);
    }
}
