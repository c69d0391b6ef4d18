//! Fictitious-reference regression data and the plaintext least-squares gain.
//!
//! From one closed-loop experiment under `F_ini` the client stacks, for each
//! state component `j` and each step `k` of the data window,
//!
//! * `Γ` rows `x_j(k) - (H_dj u)(k)`,
//! * `W` rows `(H_dj x)(k)ᵀ`,
//!
//! so that `x - H_d ṽ(F) = Γ + W Fᵀ` and the tuned gain minimizes its norm.
//! Filters start from rest at step 0 of the log; the window is cut afterwards.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant_sim::{GainVector, SignalLog};

/// Largest condition number of `WᵀW` accepted by [`frit_gain`].
pub const DEFAULT_CONDITION_BOUND: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum FritError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data window [{start}, {end}) exceeds log of {steps} steps")]
    Range { start: usize, end: usize, steps: usize },
    #[error("Gram matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
}

/// Rational transfer function in descending powers of `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, FritError> {
        let tf = Self { num, den };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<(), FritError> {
        match self.den.first() {
            None => return Err(FritError::InvalidArgument("empty denominator".into())),
            Some(&lead) if lead == 0.0 => {
                return Err(FritError::InvalidArgument(
                    "denominator leading coefficient is zero".into(),
                ))
            }
            _ => {}
        }
        if self.num.is_empty() {
            return Err(FritError::InvalidArgument("empty numerator".into()));
        }
        if self.num.len() > self.den.len() {
            return Err(FritError::InvalidArgument(format!(
                "improper transfer function: numerator degree {} exceeds denominator degree {}",
                self.num.len() - 1,
                self.den.len() - 1
            )));
        }
        Ok(())
    }
}

/// Per-state reference model `H_d = [H_d1 … H_dn]ᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesiredClosedLoop {
    pub components: Vec<TransferFunction>,
}

impl DesiredClosedLoop {
    pub fn new(components: Vec<TransferFunction>) -> Result<Self, FritError> {
        for tf in &components {
            tf.validate()?;
        }
        Ok(Self { components })
    }

    pub fn order(&self) -> usize {
        self.components.len()
    }
}

/// Zero-state response of `tf` to `s`.
pub fn filter_signal(tf: &TransferFunction, s: &[f64]) -> Result<Vec<f64>, FritError> {
    tf.validate()?;
    if s.is_empty() {
        return Err(FritError::InvalidArgument("input sequence is empty".into()));
    }
    let order = tf.den.len() - 1;
    // Left-pad the numerator so both polynomials index the same delays.
    let mut num = vec![0.0; tf.den.len() - tf.num.len()];
    num.extend_from_slice(&tf.num);
    let lead = tf.den[0];

    let mut y = Vec::with_capacity(s.len());
    for k in 0..s.len() {
        let mut acc = 0.0;
        for d in 0..=order.min(k) {
            acc += num[d] * s[k - d];
            if d > 0 {
                acc -= tf.den[d] * y[k - d];
            }
        }
        y.push(acc / lead);
    }
    Ok(y)
}

fn check_window(
    log: &SignalLog,
    hd: &DesiredClosedLoop,
    window_start: usize,
    len: usize,
) -> Result<(), FritError> {
    log.validate().map_err(|e| FritError::InvalidArgument(e.to_string()))?;
    if hd.order() != log.order() {
        return Err(FritError::InvalidArgument(format!(
            "reference model has {} components but the state has {}",
            hd.order(),
            log.order()
        )));
    }
    let end = window_start + len;
    if len == 0 || end > log.steps() {
        return Err(FritError::Range { start: window_start, end, steps: log.steps() });
    }
    Ok(())
}

/// Stacked residual vector `Γ` of length `n·N`.
pub fn build_gamma(
    log: &SignalLog,
    hd: &DesiredClosedLoop,
    window_start: usize,
    len: usize,
) -> Result<Vec<f64>, FritError> {
    check_window(log, hd, window_start, len)?;
    let mut gamma = Vec::with_capacity(hd.order() * len);
    for (j, tf) in hd.components.iter().enumerate() {
        let filtered_u = filter_signal(tf, &log.u)?;
        let xj = log.state_component(j);
        gamma.extend((window_start..window_start + len).map(|k| xj[k] - filtered_u[k]));
    }
    Ok(gamma)
}

/// Stacked regressor `W` of shape `(n·N) × n`.
pub fn build_w(
    log: &SignalLog,
    hd: &DesiredClosedLoop,
    window_start: usize,
    len: usize,
) -> Result<DMatrix<f64>, FritError> {
    check_window(log, hd, window_start, len)?;
    let n = hd.order();
    let mut w = DMatrix::zeros(n * len, n);
    for (j, tf) in hd.components.iter().enumerate() {
        for col in 0..n {
            let filtered = filter_signal(tf, &log.state_component(col))?;
            for t in 0..len {
                w[(j * len + t, col)] = filtered[window_start + t];
            }
        }
    }
    Ok(w)
}

/// Regression pair together with the Gram matrix and its determinant
/// reciprocal, which the encrypted pipelines ship to the server.
#[derive(Clone, Debug, PartialEq)]
pub struct FritData {
    pub gamma: DVector<f64>,
    pub w: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub det_psi_inv: f64,
    pub n: usize,
    pub samples: usize,
}

impl FritData {
    pub fn from_parts(gamma: Vec<f64>, w: DMatrix<f64>) -> Result<Self, FritError> {
        let n = w.ncols();
        if n == 0 || !w.nrows().is_multiple_of(n) || gamma.len() != w.nrows() {
            return Err(FritError::InvalidArgument(format!(
                "inconsistent shapes: Γ has {} entries, W is {}x{}",
                gamma.len(),
                w.nrows(),
                w.ncols()
            )));
        }
        let psi = w.transpose() * &w;
        let det = psi.clone().lu().determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(FritError::Singular { condition: f64::INFINITY });
        }
        Ok(Self {
            samples: w.nrows() / n,
            gamma: DVector::from_vec(gamma),
            w,
            psi,
            det_psi_inv: 1.0 / det,
            n,
        })
    }

    /// Builds `(Γ, W)` over `[window_start, window_start + len)`.
    pub fn from_log(
        log: &SignalLog,
        hd: &DesiredClosedLoop,
        window_start: usize,
        len: usize,
    ) -> Result<Self, FritError> {
        let gamma = build_gamma(log, hd, window_start, len)?;
        let w = build_w(log, hd, window_start, len)?;
        Self::from_parts(gamma, w)
    }

    /// Condition number of `Ψ` from its singular values.
    pub fn condition(&self) -> f64 {
        let sv = self.psi.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// `F* = -Γᵀ W (WᵀW)⁻¹`, solved through a QR factorization of `W`.
pub fn frit_gain(data: &FritData) -> Result<GainVector, FritError> {
    frit_gain_with_bound(data, DEFAULT_CONDITION_BOUND)
}

pub fn frit_gain_with_bound(data: &FritData, condition_bound: f64) -> Result<GainVector, FritError> {
    let condition = data.condition();
    if !(condition <= condition_bound) {
        return Err(FritError::Singular { condition });
    }
    let qr = data.w.clone().qr();
    let rhs = qr.q().transpose() * &data.gamma;
    let solution = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or(FritError::Singular { condition })?;
    Ok(GainVector::new(solution.iter().map(|v| -v).collect()))
}

/// Pseudo exogenous signal `ṽ(k) = u(k) - F x(k)`.
pub fn fictitious_reference(log: &SignalLog, gain: &GainVector) -> Vec<f64> {
    log.u
        .iter()
        .zip(&log.x)
        .map(|(u, x)| u - gain.dot(x))
        .collect()
}

/// `J(F) = ‖x - H_d ṽ(F)‖₂` over the data window.
pub fn objective(
    log: &SignalLog,
    hd: &DesiredClosedLoop,
    gain: &GainVector,
    window_start: usize,
    len: usize,
) -> Result<f64, FritError> {
    check_window(log, hd, window_start, len)?;
    if gain.len() != log.order() {
        return Err(FritError::InvalidArgument("gain length differs from state order".into()));
    }
    let v_tilde = fictitious_reference(log, gain);
    let mut sum = 0.0;
    for (j, tf) in hd.components.iter().enumerate() {
        let reference = filter_signal(tf, &v_tilde)?;
        for k in window_start..window_start + len {
            sum += (log.x[k][j] - reference[k]).powi(2);
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(num: &[f64], den: &[f64]) -> TransferFunction {
        TransferFunction::new(num.to_vec(), den.to_vec()).unwrap()
    }

    #[test]
    fn identity_and_delay() {
        let s = [0.3, -1.0, 2.5, 4.0];
        assert_eq!(filter_signal(&tf(&[1.0], &[1.0]), &s).unwrap(), s.to_vec());
        assert_eq!(
            filter_signal(&tf(&[1.0], &[1.0, 0.0]), &[1.0, 0.0, 0.0]).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn second_order_filter_matches_hand_recursion() {
        // y(k) = 0.5 y(k-1) + s(k-2), s = δ(k-1)
        // k: 0 1 2 3    4     5
        // y: 0 0 0 1  0.5  0.25
        let mut s = vec![0.0; 6];
        s[1] = 1.0;
        let y = filter_signal(&tf(&[1.0], &[1.0, -0.5, 0.0]), &s).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.0, 1.0, 0.5, 0.25]);
    }

    #[test]
    fn improper_and_degenerate_filters_rejected() {
        assert!(TransferFunction::new(vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(TransferFunction::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(filter_signal(&tf(&[1.0], &[1.0]), &[]).is_err());
    }

    fn scalar_log() -> SignalLog {
        // A = 0.5, B = 1, F = 0, v = [0, 1, 0, 0, 0]
        let v = vec![0.0, 1.0, 0.0, 0.0, 0.0];
        let plant = crate::plant_sim::PlantModel::new(vec![vec![0.5]], vec![1.0], 1.0).unwrap();
        crate::plant_sim::simulate_closed_loop(&plant, &GainVector::zeros(1), &v).unwrap()
    }

    #[test]
    fn scalar_gamma_and_w_by_hand() {
        // x = [0, 0, 1, 0.5, 0.25], u = v, H_d = 1/z
        // H_d u = [0, 0, 1, 0, 0]  => Γ = [0, 0, 0, 0.5, 0.25]
        // H_d x = [0, 0, 0, 1, 0.5]
        let log = scalar_log();
        let hd = DesiredClosedLoop::new(vec![tf(&[1.0], &[1.0, 0.0])]).unwrap();
        assert_eq!(build_gamma(&log, &hd, 0, 5).unwrap(), vec![0.0, 0.0, 0.0, 0.5, 0.25]);
        let w = build_w(&log, &hd, 0, 5).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.5]);
        // Γ + W f = 0 at f = -0.5 (exactly the plant's own pole offset)
        let data = FritData::from_log(&log, &hd, 0, 5).unwrap();
        let gain = frit_gain(&data).unwrap();
        assert!((gain.as_slice()[0] + 0.5).abs() < 1e-15);
        // J evaluated directly: residual of Γ + W f
        let f = 0.1;
        let direct: f64 = (0..5)
            .map(|k| (data.gamma[k] + data.w[(k, 0)] * f).powi(2))
            .sum::<f64>()
            .sqrt();
        let j = objective(&log, &hd, &GainVector::new(vec![f]), 0, 5).unwrap();
        assert!((j - direct).abs() < 1e-15);
    }

    #[test]
    fn window_out_of_range() {
        let log = scalar_log();
        let hd = DesiredClosedLoop::new(vec![tf(&[1.0], &[1.0, 0.0])]).unwrap();
        assert!(matches!(build_gamma(&log, &hd, 2, 4), Err(FritError::Range { .. })));
        assert!(matches!(build_w(&log, &hd, 0, 0), Err(FritError::Range { .. })));
    }

    #[test]
    fn zero_residual_gives_zero_gain() {
        let w = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let data = FritData::from_parts(vec![0.0; 4], w).unwrap();
        assert_eq!(frit_gain(&data).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn singular_gram_is_rejected() {
        let zeros = DMatrix::zeros(4, 2);
        assert!(matches!(
            FritData::from_parts(vec![1.0, 0.0, 0.0, 0.0], zeros),
            Err(FritError::Singular { .. })
        ));
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-3]);
        let data = FritData::from_parts(vec![1.0, 1.0], w).unwrap();
        assert!((data.condition() - 1e6).abs() < 1e-3);
        match frit_gain_with_bound(&data, 1e4) {
            Err(FritError::Singular { condition }) => assert!(condition > 1e4),
            other => panic!("expected singular error, got {other:?}"),
        }
        assert!(frit_gain(&data).is_ok());
    }

    #[test]
    fn reference_inverts_the_control_law() {
        let log = scalar_log();
        assert_eq!(fictitious_reference(&log, &GainVector::zeros(1)), log.u);
    }
}
