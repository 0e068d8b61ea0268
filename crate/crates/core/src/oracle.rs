//! Counted access to matrix entries.
//!
//! Algorithms see their input only through a [`QueryTape`]. Every answered
//! query increments the cardinality counter, repeats included. A
//! non-adaptive tape is given its complete query list up front and only
//! answers that list, in order.

use std::fmt;

use crate::error::{Error, Result};
use crate::mixed_norm::MixedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Adaptive,
    NonAdaptive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Adaptive => "adaptive",
            Mode::NonAdaptive => "nonadaptive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Bounded(usize),
    Unbounded,
}

impl Budget {
    pub fn allows(self, issued: usize) -> bool {
        match self {
            Budget::Bounded(b) => issued < b,
            Budget::Unbounded => true,
        }
    }
}

#[derive(Debug)]
pub struct QueryTape<'a> {
    target: &'a MixedMatrix,
    mode: Mode,
    budget: Budget,
    issued: usize,
    declared: Vec<(usize, usize)>,
}

impl<'a> QueryTape<'a> {
    pub fn open_adaptive(target: &'a MixedMatrix, budget: Budget) -> Self {
        QueryTape {
            target,
            mode: Mode::Adaptive,
            budget,
            issued: 0,
            declared: Vec::new(),
        }
    }

    /// Opens a tape that answers exactly `queries`, in order. Indices are
    /// zero-based.
    pub fn open_nonadaptive(target: &'a MixedMatrix, queries: Vec<(usize, usize)>) -> Result<Self> {
        let spec = target.spec();
        if let Some(&(row, col)) = queries
            .iter()
            .find(|&&(i, j)| i >= spec.n1() || j >= spec.n2())
        {
            return Err(Error::IndexOutOfRange {
                row,
                col,
                rows: spec.n1(),
                cols: spec.n2(),
            });
        }
        Ok(QueryTape {
            target,
            mode: Mode::NonAdaptive,
            budget: Budget::Bounded(queries.len()),
            issued: 0,
            declared: queries,
        })
    }

    pub fn query(&mut self, i: usize, j: usize) -> Result<f64> {
        let spec = self.target.spec();
        if i >= spec.n1() || j >= spec.n2() {
            return Err(Error::IndexOutOfRange {
                row: i,
                col: j,
                rows: spec.n1(),
                cols: spec.n2(),
            });
        }
        if !self.budget.allows(self.issued) {
            let Budget::Bounded(budget) = self.budget else {
                unreachable!()
            };
            return Err(Error::BudgetExceeded { budget });
        }
        if self.mode == Mode::NonAdaptive {
            let (ei, ej) = self.declared[self.issued];
            if (ei, ej) != (i, j) {
                return Err(Error::DisciplineViolation {
                    position: self.issued,
                    expected_row: ei,
                    expected_col: ej,
                    row: i,
                    col: j,
                });
            }
        }
        self.issued += 1;
        Ok(self.target.get(i, j))
    }

    /// Number of answered queries.
    pub fn card(&self) -> usize {
        self.issued
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// Queries still available under the budget, if bounded.
    pub fn remaining(&self) -> Option<usize> {
        match self.budget {
            Budget::Bounded(b) => Some(b - self.issued),
            Budget::Unbounded => None,
        }
    }

    pub fn declared(&self) -> &[(usize, usize)] {
        &self.declared
    }

    /// The matrix's problem parameters. Shape and exponents are public
    /// knowledge, not information about the entries.
    pub fn spec(&self) -> &crate::mixed_norm::ProblemSpec {
        self.target.spec()
    }
}
