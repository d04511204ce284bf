//! Linear Kalman filter and the per-channel smoother used in preprocessing.
//!
//! The mean recursions are the usual
//! `x⁻ = F·x + B·u` and `x⁺ = x⁻ + K·(z - H·x⁻)`; the covariance is
//! propagated as `P⁻ = F·P·Fᵀ + Q`, `K = P⁻·Hᵀ·(H·P⁻·Hᵀ + R)⁻¹` and
//! `P⁺ = (I - K·H)·P⁻`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default process noise of the smoother.
pub const DEFAULT_Q: f64 = 0.01;
/// Default measurement noise of the smoother.
pub const DEFAULT_R: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    /// State transition, `n×n`.
    pub transition: DMatrix<f64>,
    /// Control input, `n×m`.
    pub control: DMatrix<f64>,
    /// Measurement, `p×n`.
    pub observation: DMatrix<f64>,
    /// Process noise covariance, `n×n`.
    pub process_noise: DMatrix<f64>,
    /// Measurement noise covariance, `p×p`.
    pub measurement_noise: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub step: u64,
}

fn dims(m: &DMatrix<f64>) -> String {
    format!("{}×{}", m.nrows(), m.ncols())
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    m.is_square()
        && (0..n).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                a == b || (a - b).abs() <= tol
            })
        })
}

impl KalmanModel {
    pub fn new(
        transition: DMatrix<f64>,
        control: DMatrix<f64>,
        observation: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
    ) -> Result<Self> {
        let n = transition.nrows();
        let p = observation.nrows();
        let ok = transition.is_square()
            && control.nrows() == n
            && observation.ncols() == n
            && process_noise.shape() == (n, n)
            && measurement_noise.shape() == (p, p);
        if !ok {
            return Err(Error::Dimension(format!(
                "incompatible Kalman model: F {}, B {}, H {}, Q {}, R {}",
                dims(&transition),
                dims(&control),
                dims(&observation),
                dims(&process_noise),
                dims(&measurement_noise)
            )));
        }
        if !is_symmetric(&process_noise, 1e-12) || !is_symmetric(&measurement_noise, 1e-12) {
            return Err(Error::Validation("Q and R must be symmetric".into()));
        }
        Ok(Self {
            transition,
            control,
            observation,
            process_noise,
            measurement_noise,
        })
    }

    /// Random walk observed directly: `F = H = 1`, `B = 0`.
    pub fn scalar_random_walk(q: f64, r: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    /// A priori estimate for the next step. The step index is unchanged.
    pub fn predict(&self, s: &KalmanState, u: &DVector<f64>) -> Result<KalmanState> {
        let n = self.state_dim();
        if s.x.len() != n || s.p.shape() != (n, n) || u.len() != self.control.ncols() {
            return Err(Error::Dimension(format!(
                "predict: state {} / covariance {} / control {} against F {} and B {}",
                s.x.len(),
                dims(&s.p),
                u.len(),
                dims(&self.transition),
                dims(&self.control)
            )));
        }
        let x = &self.transition * &s.x + &self.control * u;
        let p = &self.transition * &s.p * self.transition.transpose() + &self.process_noise;
        Ok(KalmanState {
            x,
            p: symmetrize(p),
            step: s.step,
        })
    }

    /// Folds measurement `z` into a predicted state and advances the step index.
    pub fn update(&self, s: &KalmanState, z: &DVector<f64>) -> Result<KalmanState> {
        let n = self.state_dim();
        if s.x.len() != n || s.p.shape() != (n, n) || z.len() != self.observation.nrows() {
            return Err(Error::Dimension(format!(
                "update: state {} / covariance {} / measurement {} against H {}",
                s.x.len(),
                dims(&s.p),
                z.len(),
                dims(&self.observation)
            )));
        }
        let h = &self.observation;
        let pht = &s.p * h.transpose();
        let innovation_cov = h * &pht + &self.measurement_noise;
        let gain = if innovation_cov.iter().any(|v| v.is_infinite()) {
            DMatrix::zeros(n, h.nrows())
        } else {
            let inv = innovation_cov.clone().try_inverse().ok_or_else(|| {
                Error::Numeric(format!(
                    "singular innovation covariance at step {}",
                    s.step
                ))
            })?;
            let mut k = pht * inv;
            // An underflowing gain means the measurement carries no weight.
            k.iter_mut().for_each(|v| {
                if v.abs() < f64::MIN_POSITIVE {
                    *v = 0.0;
                }
            });
            k
        };
        let residual = z - h * &s.x;
        let x = &s.x + &gain * residual;
        let p = (DMatrix::identity(n, n) - &gain * h) * &s.p;
        if x.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite estimate at step {}", s.step)));
        }
        Ok(KalmanState {
            x,
            p: symmetrize(p),
            step: s.step + 1,
        })
    }
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}

/// Smooths every column of a row-major `T×D` series independently.
///
/// Each channel runs the scalar random walk with `Q = q`, `R = r`, starting
/// from its first observation with `P₀ = r`. Row `t` of the result is the
/// posterior estimate after consuming observation `t`, so row 0 is the
/// input's first row.
pub fn smooth_series(series: &[f64], channels: usize, q: f64, r: f64) -> Result<Vec<f64>> {
    if series.is_empty() || channels == 0 {
        return Err(Error::Usage("cannot smooth an empty series".into()));
    }
    if !series.len().is_multiple_of(channels) {
        return Err(Error::Dimension(format!(
            "series of length {} is not a multiple of {channels} channels",
            series.len()
        )));
    }
    if !(q >= 0.0 && q.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Err(Error::Usage(format!("need q >= 0 and r > 0, got q={q}, r={r}")));
    }
    let steps = series.len() / channels;
    let model = KalmanModel::scalar_random_walk(q, r)?;
    let no_control = DVector::zeros(1);
    let mut out = vec![0.0; series.len()];
    for d in 0..channels {
        let mut state = KalmanState {
            x: DVector::from_element(1, series[d]),
            p: DMatrix::from_element(1, 1, r),
            step: 0,
        };
        out[d] = series[d];
        for t in 1..steps {
            let prior = model.predict(&state, &no_control)?;
            state = model.update(&prior, &DVector::from_element(1, series[t * channels + d]))?;
            out[t * channels + d] = state.x[0];
        }
    }
    Ok(out)
}
