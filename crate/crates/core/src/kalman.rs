//! Constant-velocity Kalman baseline run autoregressively.
//!
//! State is `(lat, lon, v_lat, v_lon)` in degrees and degrees per second.
//! Fitting runs predict/update over the context; forecasting keeps predicting
//! without updates, each predicted state feeding the next step.

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

type Vec4 = [f64; 4];
type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub dt_s: f64,
    /// Process noise is `q_scale * I`.
    pub q_scale: f64,
    /// Initial covariance is `p0_scale * I`.
    pub p0_scale: f64,
    /// Observation noise is `r_obs * I` on the two position components.
    pub r_obs: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { dt_s: 60.0, q_scale: 1e-3, p0_scale: 1.0, r_obs: 1e-5 }
    }
}

impl KalmanConfig {
    fn check(&self) -> Result<()> {
        if !(self.dt_s > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt_s)));
        }
        if !(self.q_scale >= 0.0 && self.p0_scale >= 0.0 && self.r_obs > 0.0) {
            return Err(Error::Config("noise scales must be non-negative and r_obs positive".into()));
        }
        Ok(())
    }

    fn transition(&self) -> Mat4 {
        let dt = self.dt_s;
        [[1.0, 0.0, dt, 0.0], [0.0, 1.0, 0.0, dt], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub x: Vec4,
    pub p: Mat4,
}

impl KalmanState {
    pub fn position(&self) -> GeoPoint {
        GeoPoint::wrapped(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.x[2], self.x[3])
    }

    pub fn covariance_trace(&self) -> f64 {
        (0..4).map(|i| self.p[i][i]).sum()
    }

    /// `x <- F x`, `P <- F P F^T + Q`.
    pub fn predict(&mut self, cfg: &KalmanConfig) {
        let f = cfg.transition();
        self.x = mat_vec(&f, &self.x);
        let mut p = mat_mul(&mat_mul(&f, &self.p), &transpose(&f));
        for (i, row) in p.iter_mut().enumerate() {
            row[i] += cfg.q_scale;
        }
        self.p = p;
    }

    /// Position-only measurement update in Joseph form.
    pub fn update(&mut self, z: GeoPoint, cfg: &KalmanConfig) {
        let y = [z.lat - self.x[0], z.lon - self.x[1]];
        let s = [[self.p[0][0] + cfg.r_obs, self.p[0][1]], [self.p[1][0], self.p[1][1] + cfg.r_obs]];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let s_inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];

        let mut k = [[0.0; 2]; 4];
        for (i, row) in k.iter_mut().enumerate() {
            for (j, kij) in row.iter_mut().enumerate() {
                *kij = self.p[i][0] * s_inv[0][j] + self.p[i][1] * s_inv[1][j];
            }
        }
        for i in 0..4 {
            self.x[i] += k[i][0] * y[0] + k[i][1] * y[1];
        }

        let mut i_kh = identity();
        for (i, row) in i_kh.iter_mut().enumerate() {
            row[0] -= k[i][0];
            row[1] -= k[i][1];
        }
        let mut p = mat_mul(&mat_mul(&i_kh, &self.p), &transpose(&i_kh));
        for (i, row) in p.iter_mut().enumerate() {
            for (j, pij) in row.iter_mut().enumerate() {
                *pij += cfg.r_obs * (k[i][0] * k[j][0] + k[i][1] * k[j][1]);
            }
        }
        self.p = p;
    }
}

/// Runs the filter over the context, starting at the first point with the
/// velocity of the first finite difference.
pub fn kf_fit(context: &[GeoPoint], cfg: &KalmanConfig) -> Result<KalmanState> {
    cfg.check()?;
    if context.len() < 2 {
        return Err(Error::InsufficientContext { needed: 2, got: context.len() });
    }
    let (first, second) = (context[0], context[1]);
    let mut state = KalmanState {
        x: [first.lat, first.lon, (second.lat - first.lat) / cfg.dt_s, (second.lon - first.lon) / cfg.dt_s],
        p: scaled_identity(cfg.p0_scale),
    };
    for &z in &context[1..] {
        state.predict(cfg);
        state.update(z, cfg);
    }
    Ok(state)
}

/// `tau` predict-only steps, one position per step.
pub fn kf_forecast(state: &KalmanState, tau: usize, cfg: &KalmanConfig) -> Result<Vec<GeoPoint>> {
    cfg.check()?;
    if tau < 1 {
        return Err(Error::Config("forecast horizon must be at least one step".into()));
    }
    let mut s = *state;
    Ok((0..tau)
        .map(|_| {
            s.predict(cfg);
            s.position()
        })
        .collect())
}

fn identity() -> Mat4 {
    scaled_identity(1.0)
}

fn scaled_identity(k: f64) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = k;
    }
    m
}

fn mat_vec(m: &Mat4, v: &Vec4) -> Vec4 {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(a: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[j][i] = a[i][j];
        }
    }
    out
}
