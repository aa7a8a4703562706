//! Problem containers: a minimisation LP with row senses and variable
//! bounds, and its mixed-integer extension.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::MilpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        })
    }
}

/// One constraint row `sum(coef * x) <sense> rhs`, stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// `min c'x + offset` subject to the rows and `lo <= x <= hi`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub obj_offset: f64,
    pub rows: Vec<Row>,
    pub bounds: Vec<(f64, f64)>,
    /// Optional variable names, used by the text format. Empty means `x<j>`.
    pub names: Vec<String>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.c.push(cost);
        self.bounds.push((lo, hi));
        if !self.names.is_empty() {
            let j = self.c.len() - 1;
            self.names.push(format!("x{j}"));
        }
        self.c.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lo: f64, hi: f64) -> usize {
        if self.names.len() < self.c.len() {
            let start = self.names.len();
            self.names.extend((start..self.c.len()).map(|j| format!("x{j}")));
        }
        self.c.push(cost);
        self.bounds.push((lo, hi));
        self.names.push(name.into());
        self.c.len() - 1
    }

    /// Adds a row; duplicate column entries are summed.
    pub fn add_row(&mut self, coefs: impl IntoIterator<Item = (usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        let mut coefs: Vec<(usize, f64)> = coefs.into_iter().collect();
        coefs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (j, v) in coefs {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(Row { coefs: merged, sense, rhs });
        self.rows.len() - 1
    }

    pub fn var_name(&self, j: usize) -> String {
        self.names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
    }

    /// Objective value of `x`, including the constant offset.
    pub fn objective_of(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let n = self.c.len();
        if self.bounds.len() != n {
            return Err(MilpError::Dimension(format!(
                "{} costs but {} bound pairs",
                n,
                self.bounds.len()
            )));
        }
        if !self.names.is_empty() && self.names.len() != n {
            return Err(MilpError::Dimension(format!("{} names for {} variables", self.names.len(), n)));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(MilpError::Dimension(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
            if !self.c[j].is_finite() {
                return Err(MilpError::Dimension(format!("variable {j} has non-finite cost")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(MilpError::Dimension(format!("row {i} has non-finite rhs")));
            }
            for &(j, v) in &row.coefs {
                if j >= n {
                    return Err(MilpError::Dimension(format!("row {i} references variable {j} of {n}")));
                }
                if !v.is_finite() {
                    return Err(MilpError::Dimension(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpProblem {
    pub base: LpProblem,
    pub int_vars: BTreeSet<usize>,
}

impl MilpProblem {
    pub fn new(base: LpProblem) -> Self {
        Self { base, int_vars: BTreeSet::new() }
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.base.add_var(cost, 0.0, 1.0);
        self.int_vars.insert(j);
        j
    }

    pub fn add_named_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        let j = self.base.add_named_var(name, cost, 0.0, 1.0);
        self.int_vars.insert(j);
        j
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        self.base.validate()?;
        if let Some(&j) = self.int_vars.iter().next_back() {
            if j >= self.base.num_vars() {
                return Err(MilpError::Dimension(format!("integer variable {j} out of range")));
            }
        }
        Ok(())
    }
}
