//! Domain-limited flows of vector fields.
//!
//! Flows are never assumed complete: every integration reports whether it
//! reached the requested time, left the escape box, or blew up, and the
//! downstream constructions consume that status instead of panicking.
//!
//! Flow Jacobians by finite differences integrate all perturbed copies as one
//! stacked system in rescaled time `s in [0, 1]` (`x' = t Z(x)`), so every copy
//! sees the same adaptive step sequence and the difference quotients are free
//! of step-selection noise. The same trick lets a batch of flows with
//! different end times share one integration.

use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::contact::ContactSystem;
use crate::error::{Error, Result};
use crate::exterior::VectorField;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with (at most) the given step.
    Rk4 { step: f64 },
    /// Dormand-Prince 5(4) with error control.
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub method: Method,
    /// States leaving this box stop the flow with [`FlowStatus::Escaped`].
    pub escape_box: Option<Chart>,
    /// Norm growth beyond this factor of `max(|x0|, 1)` counts as blow-up.
    pub blowup_factor: f64,
    pub max_steps: usize,
    /// Step of the central differences used for flow Jacobians.
    pub fd_step: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk45 { rtol: 1e-10, atol: 1e-10 },
            escape_box: None,
            blowup_factor: 1e8,
            max_steps: 1_000_000,
            fd_step: 1e-5,
        }
    }
}

impl FlowOptions {
    pub fn rk4(step: f64) -> Self {
        Self { method: Method::Rk4 { step }, ..Self::default() }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self { method: Method::Rk45 { rtol, atol }, ..Self::default() }
    }

    /// Escape box = `chart` inflated by 10%.
    pub fn within(mut self, chart: &Chart) -> Self {
        self.escape_box = Some(chart.inflated(0.1));
        self
    }

    /// Escape box = `chart` exactly.
    pub fn with_escape_box(mut self, chart: Chart) -> Self {
        self.escape_box = Some(chart);
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
            Method::Rk45 { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if !ok || self.fd_step <= 0.0 {
            return Err(Error::InvalidParameter("flow step and tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowStatus {
    Complete,
    Escaped,
    Blowup,
}

impl FlowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowStatus::Complete => "complete",
            FlowStatus::Escaped => "escaped",
            FlowStatus::Blowup => "blowup",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    /// `(t, x)` for the initial point and every accepted step.
    pub samples: Vec<(f64, Vec<f64>)>,
    pub requested_t: f64,
    pub reached_t: f64,
    pub status: FlowStatus,
}

impl FlowOutcome {
    pub fn final_point(&self) -> &[f64] {
        &self.samples.last().expect("outcome holds the initial point").1
    }

    pub fn is_complete(&self) -> bool {
        self.status == FlowStatus::Complete
    }

    /// Final point, or a domain error when the flow stopped early.
    pub fn into_result(self) -> Result<Vec<f64>> {
        match self.status {
            FlowStatus::Complete => Ok(self.samples.into_iter().last().expect("non-empty").1),
            status => Err(Error::Domain { status, reached: self.reached_t, requested: self.requested_t }),
        }
    }

    /// CSV with header `t,x0,x1,...` (plus `status` when requested), one row per
    /// accepted step. The status column reads `ok` except on the last row,
    /// which carries the terminal status.
    pub fn write_csv<W: Write>(&self, w: &mut W, with_status: bool) -> io::Result<()> {
        let dim = self.samples.first().map_or(0, |s| s.1.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        if with_status {
            header.push("status".into());
        }
        writeln!(w, "{}", header.join(","))?;
        let last = self.samples.len().saturating_sub(1);
        for (row, (t, x)) in self.samples.iter().enumerate() {
            let mut fields = vec![t.to_string()];
            fields.extend(x.iter().map(f64::to_string));
            if with_status {
                fields.push(if row == last { self.status.as_str() } else { "ok" }.to_string());
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Integrators

type Rhs<'a> = dyn Fn(&[f64], &mut [f64]) + 'a;

struct Raw {
    samples: Vec<(f64, Vec<f64>)>,
    reached: f64,
    status: FlowStatus,
}

struct Guard<'a> {
    inside: &'a dyn Fn(&[f64]) -> bool,
    limit: f64,
}

impl Guard<'_> {
    fn check(&self, x: &[f64]) -> Option<FlowStatus> {
        if x.iter().any(|v| !v.is_finite()) || linalg::norm2(x) > self.limit {
            Some(FlowStatus::Blowup)
        } else if !(self.inside)(x) {
            Some(FlowStatus::Escaped)
        } else {
            None
        }
    }
}

fn axpy(out: &mut [f64], x: &[f64], h: f64, terms: &[(&[f64], f64)]) {
    for i in 0..out.len() {
        out[i] = x[i] + h * terms.iter().map(|(k, c)| c * k[i]).sum::<f64>();
    }
}

fn rk4_step(rhs: &Rhs, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    rhs(x, &mut k1);
    axpy(&mut tmp, x, 0.5 * h, &[(&k1, 1.0)]);
    rhs(&tmp, &mut k2);
    axpy(&mut tmp, x, 0.5 * h, &[(&k2, 1.0)]);
    rhs(&tmp, &mut k3);
    axpy(&mut tmp, x, h, &[(&k3, 1.0)]);
    rhs(&tmp, &mut k4);
    let mut out = vec![0.0; n];
    axpy(&mut out, x, h / 6.0, &[(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)]);
    out
}

/// Integrates `x' = rhs(x)` from 0 to `t_end >= 0`.
fn drive(rhs: &Rhs, x0: &[f64], t_end: f64, opts: &FlowOptions, guard: &Guard, record: bool) -> Raw {
    let mut samples = vec![(0.0, x0.to_vec())];
    if let Some(status) = guard.check(x0) {
        return Raw { samples, reached: 0.0, status };
    }
    if t_end == 0.0 {
        return Raw { samples, reached: 0.0, status: FlowStatus::Complete };
    }
    let push = |samples: &mut Vec<(f64, Vec<f64>)>, t: f64, x: &[f64]| {
        if record {
            samples.push((t, x.to_vec()));
        } else {
            samples[0] = (t, x.to_vec());
        }
    };
    match opts.method {
        Method::Rk4 { step } => {
            let steps = (t_end / step).ceil().max(1.0) as usize;
            let h = t_end / steps as f64;
            let mut x = x0.to_vec();
            for i in 1..=steps {
                let next = rk4_step(rhs, &x, h);
                let t = if i == steps { t_end } else { i as f64 * h };
                if let Some(status) = guard.check(&next) {
                    return Raw { samples, reached: (i - 1) as f64 * h, status };
                }
                x = next;
                push(&mut samples, t, &x);
            }
            Raw { samples, reached: t_end, status: FlowStatus::Complete }
        }
        Method::Rk45 { rtol, atol } => dopri(rhs, x0, t_end, rtol, atol, opts.max_steps, guard, samples, push),
    }
}

#[allow(clippy::too_many_arguments)]
fn dopri(
    rhs: &Rhs,
    x0: &[f64],
    t_end: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    guard: &Guard,
    mut samples: Vec<(f64, Vec<f64>)>,
    mut push: impl FnMut(&mut Vec<(f64, Vec<f64>)>, f64, &[f64]),
) -> Raw {
    const A2: [f64; 1] = [1.0 / 5.0];
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
    const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
    const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut next = vec![0.0; n];
    rhs(&x, &mut k[0]);

    let scale_norm = |v: &[f64], x: &[f64]| {
        (v.iter().zip(x).map(|(a, b)| (a / (atol + rtol * b.abs())).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = scale_norm(&x, &x);
    let d1 = scale_norm(&k[0], &x);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(t_end).max(1e-12 * t_end);

    let mut t = 0.0;
    let mut steps = 0;
    while t < t_end {
        if steps >= max_steps || h < 1e-14 * t_end.max(1.0) {
            return Raw { samples, reached: t, status: FlowStatus::Blowup };
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let stage = |tmp: &mut Vec<f64>, k: &[Vec<f64>], row: &[f64]| {
            for i in 0..n {
                tmp[i] = x[i] + h * row.iter().enumerate().map(|(j, a)| a * k[j][i]).sum::<f64>();
            }
        };
        stage(&mut tmp, &k, &A2);
        rhs(&tmp, &mut k[1]);
        stage(&mut tmp, &k, &A3);
        rhs(&tmp, &mut k[2]);
        stage(&mut tmp, &k, &A4);
        rhs(&tmp, &mut k[3]);
        stage(&mut tmp, &k, &A5);
        rhs(&tmp, &mut k[4]);
        stage(&mut tmp, &k, &A6);
        rhs(&tmp, &mut k[5]);
        stage(&mut next, &k, &B);
        rhs(&next, &mut k[6]);

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = atol + rtol * x[i].abs().max(next[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            if let Some(status) = guard.check(&next) {
                return Raw { samples, reached: t, status };
            }
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut x, &mut next);
            let k7 = k[6].clone();
            k[0] = k7;
            push(&mut samples, t, &x);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Raw { samples, reached: t_end, status: FlowStatus::Complete }
}

fn guard_limit(x0: &[f64], opts: &FlowOptions) -> f64 {
    opts.blowup_factor * linalg::norm2(x0).max(1.0)
}

/// Approximates the flow `Phi^Z(t, x0)`, stopping early on escape or blow-up.
/// Negative `t` integrates the negated field.
pub fn integrate(field: &dyn VectorField, x0: &[f64], t: f64, opts: &FlowOptions) -> FlowOutcome {
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    let rhs = |x: &[f64], out: &mut [f64]| {
        for (o, v) in out.iter_mut().zip(field.eval(x)) {
            *o = sign * v;
        }
    };
    let inside = |x: &[f64]| opts.escape_box.as_ref().is_none_or(|b| b.contains(x));
    let guard = Guard { inside: &inside, limit: guard_limit(x0, opts) };
    let bad = opts.validate().is_err() || x0.len() != field.dim();
    let raw = if bad {
        Raw { samples: vec![(0.0, x0.to_vec())], reached: 0.0, status: FlowStatus::Blowup }
    } else {
        drive(&rhs, x0, t.abs(), opts, &guard, true)
    };
    FlowOutcome {
        samples: raw.samples.into_iter().map(|(s, x)| (sign * s, x)).collect(),
        requested_t: t,
        reached_t: sign * raw.reached,
        status: raw.status,
    }
}

/// `Phi^Z(t, x0)` or a domain error.
pub fn flow_map(field: &dyn VectorField, x0: &[f64], t: f64, opts: &FlowOptions) -> Result<Vec<f64>> {
    opts.validate()?;
    integrate(field, x0, t, opts).into_result()
}

/// Flows every `(t_k, x_k)` in one stacked integration with shared steps.
pub fn flow_batch(field: &dyn VectorField, jobs: &[(f64, Vec<f64>)], opts: &FlowOptions) -> Result<Vec<Vec<f64>>> {
    opts.validate()?;
    let d = field.dim();
    if let Some((_, x)) = jobs.iter().find(|(_, x)| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    let times: Vec<f64> = jobs.iter().map(|(t, _)| *t).collect();
    let span = times.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    if span == 0.0 {
        return Ok(jobs.iter().map(|(_, x)| x.clone()).collect());
    }
    let x0: Vec<f64> = jobs.iter().flat_map(|(_, x)| x.iter().copied()).collect();
    let rhs = |x: &[f64], out: &mut [f64]| {
        for (k, t) in times.iter().enumerate() {
            let v = field.eval(&x[k * d..(k + 1) * d]);
            for i in 0..d {
                out[k * d + i] = t * v[i];
            }
        }
    };
    let inside = |x: &[f64]| {
        opts.escape_box.as_ref().is_none_or(|b| x.chunks(d).all(|c| b.contains(c)))
    };
    let limit = guard_limit(&x0, opts);
    let guard = Guard { inside: &inside, limit };
    // Rescaled time: an Rk4 step in s must correspond to the requested step in t.
    let scaled = match opts.method {
        Method::Rk4 { step } => FlowOptions { method: Method::Rk4 { step: step / span }, ..opts.clone() },
        Method::Rk45 { .. } => opts.clone(),
    };
    let raw = drive(&rhs, &x0, 1.0, &scaled, &guard, false);
    match raw.status {
        FlowStatus::Complete => Ok(raw.samples[0].1.chunks(d).map(<[f64]>::to_vec).collect()),
        status => Err(Error::Domain { status, reached: raw.reached * span, requested: span }),
    }
}

/// Central-difference Jacobian of `map` evaluated through one batched call.
pub fn batched_jacobian(
    map_batch: &dyn Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let mut points = Vec::with_capacity(2 * x.len());
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        plus[i] += h;
        let mut minus = x.to_vec();
        minus[i] -= h;
        points.push(plus);
        points.push(minus);
    }
    let images = map_batch(&points)?;
    let rows = images.first().map_or(0, Vec::len);
    let jac = DMatrix::from_fn(rows, x.len(), |r, c| (images[2 * c][r] - images[2 * c + 1][r]) / (2.0 * h));
    for c in 0..jac.ncols() {
        for r in 0..jac.nrows() {
            if !jac[(r, c)].is_finite() {
                return Err(Error::NonFiniteJacobian { row: r, col: c });
            }
        }
    }
    Ok(jac)
}

/// `D Phi_t(x0)` by central differences of the flow map.
pub fn flow_jacobian(field: &dyn VectorField, x0: &[f64], t: f64, opts: &FlowOptions) -> Result<DMatrix<f64>> {
    if t == 0.0 {
        return Ok(DMatrix::identity(x0.len(), x0.len()));
    }
    let batch = |pts: &[Vec<f64>]| {
        let jobs: Vec<(f64, Vec<f64>)> = pts.iter().map(|p| (t, p.clone())).collect();
        flow_batch(field, &jobs, opts)
    };
    batched_jacobian(&batch, x0, opts.fd_step)
}

/// `D Phi_t(x0)` from the variational equation `J' = DZ(x) J`; needs a
/// closed-form field Jacobian.
pub fn flow_jacobian_variational(
    field: &dyn VectorField,
    x0: &[f64],
    t: f64,
    opts: &FlowOptions,
) -> Result<DMatrix<f64>> {
    opts.validate()?;
    let d = field.dim();
    if field.jacobian(x0).is_none() {
        return Err(Error::Precondition("variational equation needs a closed-form field Jacobian".into()));
    }
    if t == 0.0 {
        return Ok(DMatrix::identity(d, d));
    }
    let sign = t.signum();
    let mut state = x0.to_vec();
    state.extend(DMatrix::<f64>::identity(d, d).iter());
    let rhs = |s: &[f64], out: &mut [f64]| {
        let x = &s[..d];
        let v = field.eval(x);
        let a = field.jacobian(x).unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN));
        let j = DMatrix::from_column_slice(d, d, &s[d..]);
        let dj = a * j;
        for i in 0..d {
            out[i] = sign * v[i];
        }
        for (o, v) in out[d..].iter_mut().zip(dj.iter()) {
            *o = sign * v;
        }
    };
    let inside = |s: &[f64]| opts.escape_box.as_ref().is_none_or(|b| b.contains(&s[..d]));
    let guard = Guard { inside: &inside, limit: f64::INFINITY };
    let raw = drive(&rhs, &state, t.abs(), opts, &guard, false);
    match raw.status {
        FlowStatus::Complete => Ok(DMatrix::from_column_slice(d, d, &raw.samples[0].1[d..])),
        status => Err(Error::Domain { status, reached: sign * raw.reached, requested: t }),
    }
}

/// Anything that can produce `Phi_t(x)` and its Jacobian.
pub trait FlowMap {
    fn dim(&self) -> usize;
    fn flow(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>>;
}

/// Flow of a vector field by numerical integration.
pub struct NumericFlow<'a> {
    pub field: &'a dyn VectorField,
    pub options: FlowOptions,
}

impl<'a> NumericFlow<'a> {
    pub fn new(field: &'a dyn VectorField, options: FlowOptions) -> Self {
        Self { field, options }
    }
}

impl FlowMap for NumericFlow<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn flow(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        flow_map(self.field, x, t, &self.options)
    }
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        flow_jacobian(self.field, x, t, &self.options)
    }
}

/// A flow given in closed form; its Jacobian is taken by central differences.
pub struct ClosedFormFlow<F> {
    dim: usize,
    map: F,
    step: f64,
}

impl<F: Fn(f64, &[f64]) -> Vec<f64>> ClosedFormFlow<F> {
    pub fn new(dim: usize, map: F) -> Self {
        Self { dim, map, step: 1e-5 }
    }
}

impl<F: Fn(f64, &[f64]) -> Vec<f64>> FlowMap for ClosedFormFlow<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn flow(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.map)(t, x))
    }
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        if t == 0.0 {
            return Ok(DMatrix::identity(self.dim, self.dim));
        }
        let batch = |pts: &[Vec<f64>]| Ok(pts.iter().map(|p| (self.map)(t, p)).collect());
        batched_jacobian(&batch, x, self.step)
    }
}

/// `rho(Phi_t x0) |det D Phi_t(x0)| / rho(x0) - 1`: zero iff the density
/// `rho` times the coordinate volume is carried onto itself along this orbit.
pub fn pushforward_invariance_check(
    density: &dyn Fn(&[f64]) -> f64,
    flow: &dyn FlowMap,
    x0: &[f64],
    t: f64,
) -> Result<f64> {
    let rho0 = density(x0);
    if rho0 == 0.0 || !rho0.is_finite() {
        return Err(Error::ZeroDensity);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let xt = flow.flow(t, x0)?;
    let det = flow.jacobian(t, x0)?.determinant();
    Ok(density(&xt) * det.abs() / rho0 - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    /// `max |d(H o Phi)/dt + (H xi(H)) o Phi|` over the trajectory samples.
    pub h_rate_residual: f64,
    /// `max |H o Phi - H(x0)|`, reported when `xi(H)` vanishes along the orbit.
    pub energy_drift: Option<f64>,
    pub samples: usize,
}

/// Probes `X_H(H) = -H xi(H)` along the `X_H` orbit of `x0`. The time
/// derivative is a central difference over a tiny RK4 step either side of
/// each trajectory sample.
pub fn conservation_probe(system: &ContactSystem, x0: &[f64], t: f64, opts: &FlowOptions) -> Result<ConservationReport> {
    let field = system.hamiltonian_vector_field();
    let outcome = integrate(&field, x0, t, opts);
    if !outcome.is_complete() {
        return Err(Error::Domain { status: outcome.status, reached: outcome.reached_t, requested: t });
    }
    probe_samples(system, &outcome.samples)
}

/// Same probe over already integrated `(t, x)` samples, e.g. a truncated orbit.
pub fn probe_samples(system: &ContactSystem, samples: &[(f64, Vec<f64>)]) -> Result<ConservationReport> {
    const DELTA: f64 = 1e-4;
    let field = system.hamiltonian_vector_field();
    let forward = |x: &[f64], out: &mut [f64]| out.copy_from_slice(&field.eval(x));
    let backward = |x: &[f64], out: &mut [f64]| {
        for (o, v) in out.iter_mut().zip(field.eval(x)) {
            *o = -v;
        }
    };
    let h0 = system.h(&samples[0].1);
    let mut rate = 0.0_f64;
    let mut drift = 0.0_f64;
    let mut max_xi_h = 0.0_f64;
    for (_, x) in samples {
        let plus = rk4_step(&forward, x, DELTA);
        let minus = rk4_step(&backward, x, DELTA);
        let dh_dt = (system.h(&plus) - system.h(&minus)) / (2.0 * DELTA);
        let xi_h = system.reeb_h(x)?;
        rate = rate.max((dh_dt + system.h(x) * xi_h).abs());
        drift = drift.max((system.h(x) - h0).abs());
        max_xi_h = max_xi_h.max(xi_h.abs());
    }
    Ok(ConservationReport {
        h_rate_residual: rate,
        energy_drift: (max_xi_h <= 1e-12).then_some(drift),
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::VectorFn;

    fn rotation() -> VectorFn {
        VectorFn::new(2, |x| vec![-x[1], x[0]])
            .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]))
    }

    #[test]
    fn zero_time_is_identity() {
        let out = integrate(&rotation(), &[1.0, 2.0], 0.0, &FlowOptions::default());
        assert_eq!(out.status, FlowStatus::Complete);
        assert_eq!(out.samples.len(), 1);
        assert_eq!(out.final_point(), &[1.0, 2.0]);
        let j = flow_jacobian(&rotation(), &[1.0, 2.0], 0.0, &FlowOptions::default()).unwrap();
        assert_eq!(j, DMatrix::identity(2, 2));
    }

    #[test]
    fn constant_field_translates() {
        let f = VectorFn::constant(vec![1.0, 0.0, 0.0]);
        let x = flow_map(&f, &[0.5, 1.0, -2.0], 3.0, &FlowOptions::default()).unwrap();
        assert!(linalg::max_abs_diff(&x, &[3.5, 1.0, -2.0]) < 1e-12);
    }

    #[test]
    fn rotation_accuracy_both_methods() {
        let t: f64 = 2.0;
        let exact = [t.cos(), t.sin()];
        let a = flow_map(&rotation(), &[1.0, 0.0], t, &FlowOptions::default()).unwrap();
        assert!(linalg::max_abs_diff(&a, &exact) < 1e-9);
        let b = flow_map(&rotation(), &[1.0, 0.0], t, &FlowOptions::rk4(1e-3)).unwrap();
        assert!(linalg::max_abs_diff(&b, &exact) < 1e-11);
        let back = flow_map(&rotation(), &[1.0, 0.0], -t, &FlowOptions::default()).unwrap();
        assert!(linalg::max_abs_diff(&back, &[t.cos(), -t.sin()]) < 1e-9);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let err = |h: f64| {
            let x = flow_map(&rotation(), &[1.0, 0.0], 1.0, &FlowOptions::rk4(h)).unwrap();
            linalg::max_abs_diff(&x, &[1f64.cos(), 1f64.sin()])
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn escape_and_blowup_are_reported() {
        let grow = VectorFn::new(1, |x| vec![x[0] * x[0]]);
        let out = integrate(&grow, &[1.0], 2.0, &FlowOptions::default());
        assert_eq!(out.status, FlowStatus::Blowup);
        assert!(out.reached_t < 1.0);
        let boxed = FlowOptions::default().within(&Chart::cube("b", 1, 2.0).unwrap());
        let out = integrate(&grow, &[1.0], 2.0, &boxed);
        assert_eq!(out.status, FlowStatus::Escaped);
        // x(t) = 1/(1-t) leaves [-2.2, 2.2] at t = 1 - 1/2.2
        assert!(out.reached_t <= 1.0 - 1.0 / 2.2 + 1e-12);
        assert!(matches!(out.clone().into_result(), Err(Error::Domain { status: FlowStatus::Escaped, .. })));
        for w in out.samples.windows(2) {
            assert!(w[1].0 > w[0].0);
        }
    }

    #[test]
    fn semigroup_property() {
        let field = VectorFn::new(2, |x| vec![x[1], -x[0].sin() - 0.3 * x[1]]);
        let opts = FlowOptions::default();
        let x0 = [0.4, -0.2];
        let ab = flow_map(&field, &flow_map(&field, &x0, 0.7, &opts).unwrap(), 1.1, &opts).unwrap();
        let direct = flow_map(&field, &x0, 1.8, &opts).unwrap();
        assert!(linalg::max_abs_diff(&ab, &direct) < 1e-9);
    }

    #[test]
    fn batch_matches_individual_flows() {
        let field = VectorFn::new(2, |x| vec![x[1], -x[0].sin()]);
        let jobs = vec![(0.5, vec![0.1, 0.2]), (-1.2, vec![0.3, 0.0]), (0.0, vec![1.0, 1.0])];
        let batch = flow_batch(&field, &jobs, &FlowOptions::default()).unwrap();
        for ((t, x), b) in jobs.iter().zip(&batch) {
            let single = flow_map(&field, x, *t, &FlowOptions::default()).unwrap();
            assert!(linalg::max_abs_diff(&single, b) < 1e-9);
        }
    }

    #[test]
    fn csv_layout() {
        let out = integrate(&rotation(), &[1.0, 0.0], 0.0, &FlowOptions::default());
        let mut buf = Vec::new();
        out.write_csv(&mut buf, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x0,x1,status\n0,1,0,complete\n");
    }

    #[test]
    fn pushforward_zero_density_is_an_error() {
        let field = rotation();
        let flow = NumericFlow::new(&field, FlowOptions::default());
        let err = pushforward_invariance_check(&|_| 0.0, &flow, &[1.0, 0.0], 1.0).unwrap_err();
        assert_eq!(err, Error::ZeroDensity);
        assert_eq!(pushforward_invariance_check(&|_| 2.0, &flow, &[1.0, 0.0], 0.0).unwrap(), 0.0);
        // rotations preserve area
        let r = pushforward_invariance_check(&|_| 1.0, &flow, &[1.0, 0.5], 1.3).unwrap();
        assert!(r.abs() < 1e-8);
    }
}
