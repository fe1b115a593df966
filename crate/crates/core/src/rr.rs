//! Randomized response over sensitive values and the budget solver.
//!
//! A released sensitive value keeps the true value with probability
//! `p = e^g / (e^g + k - 1)` for budget `g >= 0` over `k` categories, and
//! otherwise is uniform over the remaining `k - 1`. The solver picks the
//! budget that makes the response-weighted sensitive-frontier gradients
//! vanish, when any budget can.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::EncodingMode;

/// Budget cap for solver results; the keep-probability is within `2e-9`
/// of its supremum there, so larger budgets are indistinguishable.
pub const GAMMA_MAX: f64 = 20.0;

const KEEP_PROB_CEIL: f64 = 1.0 - 1e-12;

/// Ordered set of sensitive categories and how they enter the network input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveDomain {
    values: Vec<String>,
    mode: EncodingMode,
}

impl SensitiveDomain {
    pub fn new(values: Vec<String>, mode: EncodingMode) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("sensitive domain needs at least 2 values".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if values[..i].contains(v) {
                return Err(Error::Config(format!("duplicate sensitive value `{v}`")));
            }
        }
        if mode == EncodingMode::SignedBinary && values.len() != 2 {
            return Err(Error::Config(format!(
                "signed-binary encoding needs exactly 2 values, got {}",
                values.len()
            )));
        }
        Ok(Self { values, mode })
    }

    pub fn one_hot(values: Vec<String>) -> Result<Self> {
        Self::new(values, EncodingMode::OneHot)
    }

    pub fn signed_binary(values: Vec<String>) -> Result<Self> {
        Self::new(values, EncodingMode::SignedBinary)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self) -> EncodingMode {
        self.mode
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn name(&self, index: usize) -> Result<&str> {
        self.values.get(index).map(String::as_str).ok_or(Error::SensitiveValue(index))
    }

    pub fn index_of(&self, value: &str) -> Result<usize> {
        self.values
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| Error::Data(format!("sensitive value `{value}` not in domain")))
    }

    /// Input columns taken by the encoding.
    pub fn encoding_width(&self) -> usize {
        match self.mode {
            EncodingMode::OneHot => self.values.len(),
            EncodingMode::SignedBinary => 1,
        }
    }

    /// Encodes category `index`: a one-hot basis vector, or +1/-1 for the
    /// first/second category in signed-binary mode.
    pub fn encode(&self, index: usize) -> Result<Vec<f64>> {
        if index >= self.values.len() {
            return Err(Error::SensitiveValue(index));
        }
        Ok(match self.mode {
            EncodingMode::OneHot => {
                let mut enc = vec![0.0; self.values.len()];
                enc[index] = 1.0;
                enc
            }
            EncodingMode::SignedBinary => vec![if index == 0 { 1.0 } else { -1.0 }],
        })
    }
}

/// Randomized-response mechanism: a budget over a sensitive domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RRConfig {
    pub gamma: f64,
    pub domain: SensitiveDomain,
}

impl RRConfig {
    /// `gamma` must be non-negative; `+inf` means "always release the truth".
    pub fn new(gamma: f64, domain: SensitiveDomain) -> Result<Self> {
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::Config(format!("budget must be >= 0, got {gamma}")));
        }
        Ok(Self { gamma, domain })
    }

    /// Probability of releasing the true value: `e^g / (e^g + k - 1)`.
    pub fn keep_probability(&self) -> f64 {
        keep_probability(self.gamma, self.domain.len())
    }

    /// Probability of releasing `released_index` given `true_index`.
    pub fn response_prob(&self, true_index: usize, released_index: usize) -> Result<f64> {
        let k = self.domain.len();
        if true_index >= k {
            return Err(Error::SensitiveValue(true_index));
        }
        if released_index >= k {
            return Err(Error::SensitiveValue(released_index));
        }
        let p = self.keep_probability();
        Ok(if released_index == true_index { p } else { (1.0 - p) / (k - 1) as f64 })
    }

    /// Draws a released value for `true_index`, advancing `rng`.
    pub fn sample(&self, true_index: usize, rng: &mut impl Rng) -> Result<usize> {
        let k = self.domain.len();
        if true_index >= k {
            return Err(Error::SensitiveValue(true_index));
        }
        let p = self.keep_probability();
        let q: f64 = rng.gen();
        if q <= p {
            return Ok(true_index);
        }
        let r = rng.gen_range(0..k - 1);
        Ok(if r >= true_index { r + 1 } else { r })
    }
}

/// Keep-probability for budget `gamma` over `k` categories, clamped to
/// `[1/k, 1 - 1e-12]` (`+inf` maps to exactly 1).
pub fn keep_probability(gamma: f64, k: usize) -> f64 {
    debug_assert!(k >= 2);
    if gamma.is_infinite() {
        return 1.0;
    }
    let e = gamma.exp();
    let p = e / (e + (k - 1) as f64);
    p.clamp(1.0 / k as f64, KEEP_PROB_CEIL)
}

/// One zero-sum equation: the gradient of one parameter at every sensitive
/// value, together with the sample's true value the equation is taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRow {
    /// Gradient per sensitive index, length = domain size.
    pub grads: Vec<f64>,
    /// Index of the true sensitive value.
    pub true_index: usize,
}

/// Per-parameter gradients at every sensitive value for the parameters at
/// or before the sensitive frontier.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientTable {
    pub domain_size: usize,
    pub rows: Vec<GradientRow>,
}

impl GradientTable {
    pub fn new(domain_size: usize) -> Self {
        Self { domain_size, rows: Vec::new() }
    }

    pub fn push(&mut self, grads: Vec<f64>, true_index: usize) -> Result<()> {
        if grads.len() != self.domain_size {
            return Err(Error::Shape(format!(
                "gradient row has {} entries, domain has {}",
                grads.len(),
                self.domain_size
            )));
        }
        if true_index >= self.domain_size {
            return Err(Error::SensitiveValue(true_index));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Data("non-finite gradient in table".into()));
        }
        self.rows.push(GradientRow { grads, true_index });
        Ok(())
    }

    /// Response-weighted gradient of each row at budget `gamma`.
    pub fn expected_per_row(&self, gamma: f64) -> Vec<f64> {
        let p = keep_probability(gamma, self.domain_size);
        self.rows.iter().map(|row| row_lhs(row, p, self.domain_size)).collect()
    }
}

/// First-hidden-layer neurons whose value depends on the sensitive input,
/// with the gradient table for every parameter feeding them.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveFrontier {
    /// (layer, neuron) coordinates, layer counted with the input as 0.
    pub coordinates: Vec<(usize, usize)>,
    pub table: GradientTable,
}

/// Outcome of the budget search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub gamma: f64,
    /// Largest absolute equation value at `gamma`.
    pub residual: f64,
    /// Sum of squared equation values at `gamma` (the search objective).
    pub sum_squares: f64,
    /// Equation values at `gamma`, in table row order.
    pub per_equation: Vec<f64>,
    pub feasible: bool,
}

/// `g(s_true) * p + sum_{s != s_true} g(s) * (1 - p) / (k - 1)`.
fn row_lhs(row: &GradientRow, p: f64, k: usize) -> f64 {
    let total: f64 = row.grads.iter().sum();
    let own = row.grads[row.true_index];
    own * p + (total - own) * (1.0 - p) / (k - 1) as f64
}

#[cfg(test)]
fn objective(table: &GradientTable, p: f64) -> f64 {
    table.rows.iter().map(|r| row_lhs(r, p, table.domain_size).powi(2)).sum()
}

/// Finds the budget minimizing the summed squared zero-sum equations.
///
/// Each equation is linear in the keep-probability, so the objective is a
/// convex quadratic in `p`; its vertex projected onto the reachable
/// probability range is the exact constrained minimizer. An ordinal search
/// cannot settle this: near the vertex the float objective differences sit
/// below rounding noise whenever the constant part dominates. Feasibility
/// compares the worst equation against `tolerance`.
pub fn solve_gamma(table: &GradientTable, tolerance: f64) -> Result<GammaSolution> {
    if table.rows.is_empty() {
        return Err(Error::EmptyGradientTable);
    }
    if table.domain_size < 2 {
        return Err(Error::Config("domain size must be >= 2".into()));
    }
    let k = table.domain_size;
    let km1 = (k - 1) as f64;

    // Each equation is c + m*p; the objective is sum (c + m*p)^2.
    let (mut a2, mut a1) = (0.0, 0.0);
    for row in &table.rows {
        let total: f64 = row.grads.iter().sum();
        let own = row.grads[row.true_index];
        let c = (total - own) / km1;
        let m = own - c;
        a2 += m * m;
        a1 += 2.0 * c * m;
    }

    let gamma = if a2 == 0.0 {
        // Flat objective: every budget scores the same, take the smallest.
        0.0
    } else {
        let p_star = (-a1 / (2.0 * a2)).clamp(1.0 / k as f64, KEEP_PROB_CEIL);
        (km1 * p_star / (1.0 - p_star)).ln().clamp(0.0, GAMMA_MAX)
    };

    let per_equation = table.expected_per_row(gamma);
    let residual = per_equation.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sum_squares = per_equation.iter().map(|v| v * v).sum();
    Ok(GammaSolution { gamma, residual, sum_squares, per_equation, feasible: residual <= tolerance })
}

/// Response-weighted gradients of the frontier table at budget `gamma`.
pub fn expected_gradient(frontier: &SensitiveFrontier, gamma: f64) -> Result<Vec<f64>> {
    if frontier.table.rows.is_empty() {
        return Err(Error::EmptyGradientTable);
    }
    Ok(frontier.table.expected_per_row(gamma))
}
