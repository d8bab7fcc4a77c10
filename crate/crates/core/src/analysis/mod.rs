//! Factorial experiments and response-surface sensitivity analysis.

mod sweep;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::engine::EngineError;

pub use sweep::{
    grid_points, read_responses, regress, run_sweep, write_design_csv, write_regression_csv, write_responses_csv,
    write_summary_csv, Cell, DesignPoint, ResponseRow, SweepSpec, RESPONSES,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("design: {0}")]
    Design(String),
    #[error("expected {expected} responses, got {got}")]
    ResponseCount { expected: usize, got: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A factor varied between two levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Factor {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl Factor {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Self {
        Factor { name: name.into(), low, high }
    }

    /// Concrete value of a coded level in [-1, 1].
    pub fn value(&self, coded: f64) -> f64 {
        self.low + (coded + 1.0) * 0.5 * (self.high - self.low)
    }
}

/// Full two-level factorial over `factors`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialDesign {
    pub factors: Vec<Factor>,
    /// Coded levels, one row per run; the first factor varies slowest.
    pub coded: Vec<Vec<f64>>,
}

impl FactorialDesign {
    pub fn runs(&self) -> usize {
        self.coded.len()
    }

    /// Concrete factor values of run `r`.
    pub fn values(&self, r: usize) -> Vec<f64> {
        self.factors.iter().zip(&self.coded[r]).map(|(f, &c)| f.value(c)).collect()
    }
}

pub fn build_design(factors: &[Factor]) -> Result<FactorialDesign, AnalysisError> {
    let k = factors.len();
    if k == 0 || k > 16 {
        return Err(AnalysisError::Design(format!("need 1 to 16 factors, got {k}")));
    }
    for (i, f) in factors.iter().enumerate() {
        if factors[..i].iter().any(|g| g.name == f.name) {
            return Err(AnalysisError::Design(format!("factor `{}` listed twice", f.name)));
        }
        if !(f.low.is_finite() && f.high.is_finite()) || f.low == f.high {
            return Err(AnalysisError::Design(format!("factor `{}` needs two distinct finite levels", f.name)));
        }
    }
    let coded = (0..1usize << k)
        .map(|r| (0..k).map(|i| if r >> (k - 1 - i) & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect();
    Ok(FactorialDesign { factors: factors.to_vec(), coded })
}

/// A term of the second-order model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Intercept,
    Main(usize),
    /// Interaction of factors `i` and `j`, with `j < i`.
    Pair(usize, usize),
}

impl Term {
    /// Model terms for `k` factors: intercept, mains, then pairs by (i, j).
    pub fn all(k: usize) -> Vec<Term> {
        let mut t = vec![Term::Intercept];
        t.extend((0..k).map(Term::Main));
        for i in 0..k {
            for j in 0..i {
                t.push(Term::Pair(i, j));
            }
        }
        t
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Main(i) => x[i],
            Term::Pair(i, j) => x[i] * x[j],
        }
    }

    pub fn label(&self, factors: &[Factor]) -> String {
        match *self {
            Term::Intercept => "intercept".into(),
            Term::Main(i) => factors[i].name.clone(),
            Term::Pair(i, j) => format!("{}:{}", factors[i].name, factors[j].name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    /// Sum of squared deviations of the responses from their mean.
    pub sst: f64,
    /// 2^k times the sum of squared non-intercept coefficients.
    pub sst_coefficients: f64,
    pub sse: f64,
    /// `None` when the responses have no variance.
    pub r2: Option<f64>,
    /// Percentage of SST attributed to each term; the intercept gets 0.
    /// `None` when the responses have no variance.
    pub contributions: Option<Vec<f64>>,
}

impl RegressionResult {
    pub fn degenerate(&self) -> bool {
        self.r2.is_none()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.terms.iter().zip(&self.coefficients).map(|(t, a)| a * t.eval(x)).sum()
    }
}

/// Least-squares fit of the second-order model to one response per run.
///
/// The ±1 columns of a full factorial are orthogonal, so each coefficient is
/// the column's inner product with the responses over 2^k.
pub fn fit_regression(design: &FactorialDesign, y: &[f64]) -> Result<RegressionResult, AnalysisError> {
    let n = design.runs();
    if y.len() != n {
        return Err(AnalysisError::ResponseCount { expected: n, got: y.len() });
    }
    let terms = Term::all(design.factors.len());
    let coefficients: Vec<f64> = terms
        .iter()
        .map(|t| design.coded.iter().zip(y).map(|(x, yi)| t.eval(x) * yi).sum::<f64>() / n as f64)
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let mut result = RegressionResult {
        sst_coefficients: n as f64 * coefficients[1..].iter().map(|a| a * a).sum::<f64>(),
        terms,
        coefficients,
        sst,
        sse: 0.0,
        r2: None,
        contributions: None,
    };
    result.sse = design.coded.iter().zip(y).map(|(x, yi)| (yi - result.predict(x)).powi(2)).sum();
    let scale: f64 = y.iter().map(|v| v * v).sum();
    if sst > 1e-24 * scale && sst > 0.0 {
        result.r2 = Some(((sst - result.sse) / sst).clamp(0.0, 1.0));
        result.contributions = Some(
            result
                .terms
                .iter()
                .zip(&result.coefficients)
                .map(|(t, a)| if *t == Term::Intercept { 0.0 } else { 100.0 * n as f64 * a * a / sst })
                .collect(),
        );
    }
    Ok(result)
}

/// Mean with a two-sided 95% Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// `None` below two samples.
    pub half_width: Option<f64>,
}

impl Interval {
    pub fn lower(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean - h)
    }

    pub fn upper(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean + h)
    }
}

pub fn summarize_replications(values: &[f64]) -> Interval {
    let n = values.len();
    let mean = match values.first() {
        None => f64::NAN,
        // Summing identical values can drift by an ulp; keep them exact.
        Some(&v) if values.iter().all(|x| *x == v) => v,
        Some(_) => values.iter().sum::<f64>() / n as f64,
    };
    if n < 2 {
        return Interval { n, mean, sd: 0.0, half_width: None };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
    Interval { n, mean, sd, half_width: Some(t * sd / (n as f64).sqrt()) }
}

#[cfg(test)]
mod tests;
