//! Discrete-time closed-loop simulation of `x(k+1) = A x(k) + B u(k)` under
//! the state-feedback law `u(k) = F x(k) + v(k)`, plus pole utilities used to
//! compare tuned gains.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Single-input plant `x(k+1) = A x(k) + B u(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<f64>,
    /// Carried for reporting only.
    #[serde(default)]
    pub sampling_period: f64,
}

impl PlantModel {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, sampling_period: f64) -> Result<Self, SimError> {
        let plant = Self { a, b, sampling_period };
        plant.validate()?;
        Ok(plant)
    }

    /// Checks the shape invariants; deserialized models should be validated
    /// before use.
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.a.len();
        if n == 0 {
            return Err(SimError::Dimension("plant order must be at least 1".into()));
        }
        if let Some(row) = self.a.iter().find(|row| row.len() != n) {
            return Err(SimError::Dimension(format!(
                "A must be square: found a row of length {} in a {n}-row matrix",
                row.len()
            )));
        }
        if self.b.len() != n {
            return Err(SimError::Dimension(format!(
                "B has {} rows but A is {n}x{n}",
                self.b.len()
            )));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        DMatrix::from_fn(n, n, |i, j| self.a[i][j])
    }

    pub fn b_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }

    fn check_gain(&self, gain: &GainVector) -> Result<(), SimError> {
        self.validate()?;
        if gain.len() != self.order() {
            return Err(SimError::Dimension(format!(
                "gain has {} entries but the plant order is {}",
                gain.len(),
                self.order()
            )));
        }
        Ok(())
    }
}

/// Row vector `F` of a state-feedback law `u = F x + v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainVector {
    #[serde(rename = "F")]
    entries: Vec<f64>,
}

impl GainVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self { entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self { entries: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().zip(x).map(|(f, x)| f * x).sum()
    }

    /// Euclidean distance to another gain of the same length.
    pub fn distance(&self, other: &GainVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for GainVector {
    fn from(entries: Vec<f64>) -> Self {
        Self::new(entries)
    }
}

/// Time-indexed record of a closed-loop experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalLog {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SignalLog {
    pub fn steps(&self) -> usize {
        self.u.len()
    }

    /// State dimension, or 0 for an empty log.
    pub fn order(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.x.len() != self.u.len() || self.u.len() != self.v.len() {
            return Err(SimError::Dimension(format!(
                "log sequences differ in length: x={}, u={}, v={}",
                self.x.len(),
                self.u.len(),
                self.v.len()
            )));
        }
        let n = self.order();
        if self.x.iter().any(|row| row.len() != n) {
            return Err(SimError::Dimension("state rows differ in length".into()));
        }
        Ok(())
    }

    /// Samples of state component `j` over the whole log.
    pub fn state_component(&self, j: usize) -> Vec<f64> {
        self.x.iter().map(|row| row[j]).collect()
    }
}

/// Runs the closed loop from `x(0) = 0` for `v.len()` steps.
pub fn simulate_closed_loop(
    plant: &PlantModel,
    gain: &GainVector,
    v: &[f64],
) -> Result<SignalLog, SimError> {
    plant.check_gain(gain)?;
    if v.is_empty() {
        return Err(SimError::InvalidArgument("excitation sequence is empty".into()));
    }
    let n = plant.order();
    let mut x = vec![0.0; n];
    let mut log = SignalLog {
        x: Vec::with_capacity(v.len()),
        u: Vec::with_capacity(v.len()),
        v: v.to_vec(),
    };
    for &vk in v {
        let uk = gain.dot(&x) + vk;
        let next: Vec<f64> = (0..n)
            .map(|i| plant.a[i].iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() + plant.b[i] * uk)
            .collect();
        log.x.push(std::mem::replace(&mut x, next));
        log.u.push(uk);
    }
    Ok(log)
}

/// Unit pulse of width five starting at step 1.
pub fn excitation_pulse(total_steps: usize) -> Result<Vec<f64>, SimError> {
    if total_steps < 6 {
        return Err(SimError::InvalidArgument(format!(
            "pulse needs at least 6 steps, got {total_steps}"
        )));
    }
    Ok((0..total_steps)
        .map(|k| if (1..=5).contains(&k) { 1.0 } else { 0.0 })
        .collect())
}

/// `A + B F`.
pub fn closed_loop_matrix(plant: &PlantModel, gain: &GainVector) -> Result<DMatrix<f64>, SimError> {
    plant.check_gain(gain)?;
    let f = DMatrix::from_row_slice(1, gain.len(), gain.as_slice());
    Ok(plant.a_matrix() + plant.b_vector() * f)
}

/// Eigenvalues of `A + B F`, sorted by real then imaginary part.
pub fn closed_loop_poles(
    plant: &PlantModel,
    gain: &GainVector,
) -> Result<Vec<Complex<f64>>, SimError> {
    let m = closed_loop_matrix(plant, gain)?;
    let mut poles: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    poles.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(poles)
}

/// Smallest l2-norm of pole differences over all one-to-one pairings.
///
/// Pairings are enumerated exhaustively, which is fine for the plant orders
/// this toolkit targets (the cofactor expansion caps n well below 10).
pub fn pole_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> Result<f64, SimError> {
    if a.len() != b.len() {
        return Err(SimError::InvalidArgument(format!(
            "pole sets differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|pa| b.iter().map(|pb| (pa - pb).norm_sqr()).collect())
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        best = best.min(total);
    });
    Ok(if n == 0 { 0.0 } else { best.sqrt() })
}

fn permute(items: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start + 1 >= items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}
