//! Linear measurement operators for the sparse solvers.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub trait LinearOperator {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn adjoint(&self, r: &[Complex64]) -> Vec<Complex64>;

    /// Norm of column `l`.
    fn column_norm(&self, l: usize) -> f64 {
        let mut e = vec![Complex64::new(0.0, 0.0); self.n_cols()];
        e[l] = Complex64::new(1.0, 0.0);
        self.apply(&e).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Power-iteration estimate of the largest eigenvalue of `AᴴA`.
    fn lipschitz(&self) -> f64 {
        let n = self.n_cols();
        if n == 0 || self.n_rows() == 0 {
            return 0.0;
        }
        let mut x: Vec<Complex64> = (0..n)
            .map(|l| Complex64::new(1.0 + 0.37 * ((l * 7919) % 13) as f64, 0.11 * (l % 5) as f64))
            .collect();
        let mut estimate = 0.0;
        for _ in 0..200 {
            let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            let ax = self.apply(&x);
            let next = ax.iter().map(|v| v.norm_sqr()).sum::<f64>();
            x = self.adjoint(&ax);
            let done = (next - estimate).abs() <= 1e-12 * next;
            estimate = next;
            if done {
                break;
            }
        }
        estimate
    }
}

/// Plain dense complex matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: Array2<Complex64>,
}

impl DenseOperator {
    pub fn new(matrix: Array2<Complex64>) -> Self {
        Self { matrix }
    }
}

impl LinearOperator for DenseOperator {
    fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.matrix
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn adjoint(&self, r: &[Complex64]) -> Vec<Complex64> {
        self.matrix
            .columns()
            .into_iter()
            .map(|col| col.iter().zip(r).map(|(a, b)| a.conj() * b).sum())
            .collect()
    }
}

/// `scale · diag(symbols) · E` where `E[n, l] = exp(-j2π (s_n - 1)(l - 1) / N)`
/// for the owned sub-carriers `s_n`. Applied through length-N FFTs.
#[derive(Clone)]
pub struct SteeringOperator {
    n_fft: usize,
    n_taps: usize,
    /// 0-based sub-carrier indices.
    bins: Vec<usize>,
    scale: f64,
    symbols: Option<Vec<Complex64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SteeringOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SteeringOperator")
            .field("n_fft", &self.n_fft)
            .field("n_taps", &self.n_taps)
            .field("n_rows", &self.bins.len())
            .field("scale", &self.scale)
            .field("has_symbols", &self.symbols.is_some())
            .finish()
    }
}

impl SteeringOperator {
    /// `subcarriers` are 1-based.
    pub fn new(n_fft: usize, subcarriers: &[usize], n_taps: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            n_taps,
            bins: subcarriers.iter().map(|s| s - 1).collect(),
            scale: 1.0,
            symbols: None,
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_symbols(mut self, symbols: Vec<Complex64>) -> Self {
        assert_eq!(symbols.len(), self.bins.len());
        self.symbols = Some(symbols);
        self
    }

    /// Dense copy, for checks.
    pub fn to_dense(&self) -> Array2<Complex64> {
        let n = self.n_fft as f64;
        Array2::from_shape_fn((self.bins.len(), self.n_taps), |(row, l)| {
            let phase = -std::f64::consts::TAU * (self.bins[row] * l % self.n_fft) as f64 / n;
            let s = self.symbols.as_ref().map_or(Complex64::new(1.0, 0.0), |s| s[row]);
            s * self.scale * Complex64::from_polar(1.0, phase)
        })
    }
}

impl LinearOperator for SteeringOperator {
    fn n_rows(&self) -> usize {
        self.bins.len()
    }

    fn n_cols(&self) -> usize {
        self.n_taps
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        buf[..self.n_taps].copy_from_slice(&x[..self.n_taps]);
        self.forward.process(&mut buf);
        self.bins
            .iter()
            .enumerate()
            .map(|(row, &b)| {
                let v = buf[b] * self.scale;
                match &self.symbols {
                    Some(s) => v * s[row],
                    None => v,
                }
            })
            .collect()
    }

    fn adjoint(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for (row, &b) in self.bins.iter().enumerate() {
            let v = r[row] * self.scale;
            buf[b] = match &self.symbols {
                Some(s) => v * s[row].conj(),
                None => v,
            };
        }
        self.inverse.process(&mut buf);
        buf.truncate(self.n_taps);
        buf
    }

    fn column_norm(&self, _l: usize) -> f64 {
        let energy: f64 = match &self.symbols {
            Some(s) => s.iter().map(|v| v.norm_sqr()).sum(),
            None => self.bins.len() as f64,
        };
        self.scale * energy.sqrt()
    }
}
