//! Flow-based rectification and the two maps of the sandwich
//! `C -> R x S -> R x (R x B)`.
//!
//! Given `Z(sigma) = r` with `r != 0`, the map
//! `phi(y) = (sigma(y)/r, Phi^Z(-sigma(y)/r, y))` sends `Z` to `d/dt` and
//! lands on the slice `D = {sigma = 0}`; its inverse is the flow restricted to
//! `R x D`. Both sandwich maps are instances:
//!
//! - `phi1`: `Z = xi`, `sigma = H`, `r = xi(H)` on `C`, target `R x S`.
//! - `phi2`: `Z = X_{H|S} / xi(H)`, `r = n` on `S`, target `R x B` with `B`
//!   the zero set of `sigma` in a slice chart.
//!
//! Every map may fail with a domain error when the flow leaves the chart
//! before reaching the slice; reports count those separately from identity
//! failures. The symplectification target uses
//! `exp(-s) (d eta_B - ds ^ eta_B)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chart::Chart;
use crate::contact::ContactSystem;
use crate::dynamics::{self, FlowOptions, NumericFlow};
use crate::error::{Error, Result};
use crate::exterior::{Calculus, FormField, KForm, ScalarField, VectorField};
use crate::linalg;
use crate::zeroset::LevelSetChart;

/// Allowed deviation of `Z(sigma)` from the rate.
pub const RATE_TOL: f64 = 1e-6;
/// Allowed `|sigma|` on the slice.
pub const SLICE_TOL: f64 = 1e-9;
/// Allowed deviation of `xi(H)` from a constant, and of the `sigma` residual from zero.
pub const CONSTANCY_TOL: f64 = 1e-8;

#[derive(Clone)]
pub struct Rectification {
    field: Arc<dyn VectorField>,
    sigma: Arc<dyn ScalarField>,
    rate: f64,
    calculus: Calculus,
    options: FlowOptions,
}

impl std::fmt::Debug for Rectification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rectification").field("rate", &self.rate).field("chart", self.calculus.chart()).finish()
    }
}

impl Rectification {
    /// Without an escape box in `options`, flows stop outside `chart` inflated by 10%.
    pub fn new(
        field: Arc<dyn VectorField>,
        sigma: Arc<dyn ScalarField>,
        rate: f64,
        chart: Chart,
        options: FlowOptions,
    ) -> Result<Self> {
        if rate == 0.0 || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("rectification rate must be nonzero, got {rate}")));
        }
        let dim = chart.dim();
        for found in [field.dim(), sigma.dim()] {
            if found != dim {
                return Err(Error::DimensionMismatch { expected: dim, found });
            }
        }
        let options = if options.escape_box.is_none() { options.within(&chart) } else { options };
        Ok(Self { field, sigma, rate, calculus: Calculus::new(chart), options })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn field(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn sigma(&self) -> &Arc<dyn ScalarField> {
        &self.sigma
    }

    pub fn options(&self) -> &FlowOptions {
        &self.options
    }

    pub fn chart(&self) -> &Chart {
        self.calculus.chart()
    }

    /// `|Z(sigma)(y) - r|`.
    pub fn rate_defect(&self, y: &[f64]) -> Result<f64> {
        let z = self.field.eval(y);
        Ok((self.calculus.directional(self.sigma.as_ref(), &z, y)? - self.rate).abs())
    }

    pub fn check_rate(&self, y: &[f64]) -> Result<()> {
        let defect = self.rate_defect(y)?;
        if !(defect <= RATE_TOL) {
            return Err(Error::Precondition(format!(
                "Z(sigma) deviates from the rate {} by {defect:e}",
                self.rate
            )));
        }
        Ok(())
    }

    /// Time from `y` to the slice.
    pub fn time_to_slice(&self, y: &[f64]) -> f64 {
        -self.sigma.value(y) / self.rate
    }

    /// `phi(y) = (t, d)` with `d` on the slice.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_rate(y)?;
        let t = self.time_to_slice(y);
        let d = dynamics::flow_map(self.field.as_ref(), y, t, &self.options)?;
        let mut out = Vec::with_capacity(y.len() + 1);
        out.push(-t);
        out.extend(d);
        Ok(out)
    }

    /// `phi` at many points through one shared-step integration.
    pub fn apply_batch(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let jobs: Vec<(f64, Vec<f64>)> = points.iter().map(|y| (self.time_to_slice(y), y.clone())).collect();
        let images = dynamics::flow_batch(self.field.as_ref(), &jobs, &self.options)?;
        Ok(jobs
            .iter()
            .zip(images)
            .map(|((t, _), d)| {
                let mut out = Vec::with_capacity(d.len() + 1);
                out.push(-t);
                out.extend(d);
                out
            })
            .collect())
    }

    /// Central-difference Jacobian of `phi` (rows: `t` then the flowed point).
    pub fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check_rate(y)?;
        dynamics::batched_jacobian(&|pts| self.apply_batch(pts), y, self.options.fd_step)
    }

    /// `max |D phi(y) Z(y) - e_t|`.
    pub fn rectified_defect(&self, y: &[f64]) -> Result<f64> {
        let pushed = linalg::mat_vec(&self.jacobian(y)?, &self.field.eval(y));
        Ok(unit_defect(&pushed, 0, 1.0))
    }

    /// `phi^{-1}(t, d) = Phi^Z(t, d)`.
    pub fn inverse(&self, t: f64, d: &[f64]) -> Result<Vec<f64>> {
        dynamics::flow_map(self.field.as_ref(), d, t, &self.options)
    }

    /// `max |phi^{-1}(phi(y)) - y|`.
    pub fn round_trip_defect(&self, y: &[f64]) -> Result<f64> {
        let image = self.apply(y)?;
        Ok(linalg::max_abs_diff(&self.inverse(image[0], &image[1..])?, y))
    }

    /// `|sigma(Phi^Z_t(y)) - r t - sigma(y)|`.
    pub fn transport_defect(&self, y: &[f64], t: f64) -> Result<f64> {
        let moved = dynamics::flow_map(self.field.as_ref(), y, t, &self.options)?;
        Ok((self.sigma.value(&moved) - self.rate * t - self.sigma.value(y)).abs())
    }
}

fn unit_defect(v: &[f64], axis: usize, scale: f64) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, c)| if i == axis { (c - scale).abs() } else { c.abs() })
        .fold(0.0, f64::max)
}

/// Shrinks a grid towards the box centre so finite differences keep their margin.
fn interior_grid(chart: &Chart, per_axis: usize) -> Vec<Vec<f64>> {
    let centre: Vec<f64> = chart.lower().iter().zip(chart.upper()).map(|(l, u)| 0.5 * (l + u)).collect();
    chart
        .grid(per_axis)
        .into_iter()
        .map(|x| x.iter().zip(&centre).map(|(a, c)| c + 0.9 * (a - c)).collect())
        .collect()
}

fn centre(chart: &Chart) -> Vec<f64> {
    chart.lower().iter().zip(chart.upper()).map(|(l, u)| 0.5 * (l + u)).collect()
}

/// The contactification map `C -> R x S` for constant `xi(H) = gamma`.
#[derive(Debug, Clone)]
pub struct Phi1 {
    surface: LevelSetChart,
    rect: Rectification,
    gamma: f64,
}

impl Phi1 {
    /// Checks that `xi(H)` is constant on a `per_axis` grid of the parent chart.
    pub fn new(surface: &LevelSetChart, options: FlowOptions, per_axis: usize) -> Result<Self> {
        let system = surface.system();
        let gamma = system.reeb_h(&centre(system.chart()))?;
        for x in interior_grid(system.chart(), per_axis) {
            let deviation = (system.reeb_h(&x)? - gamma).abs();
            if deviation > CONSTANCY_TOL * gamma.abs().max(1.0) {
                return Err(Error::Precondition(format!("xi(H) is not constant: deviation {deviation:e}")));
            }
        }
        let rect = Rectification::new(
            Arc::new(system.reeb_field()),
            system.hamiltonian().clone(),
            gamma,
            system.chart().clone(),
            options,
        )?;
        Ok(Self { surface: surface.clone(), rect, gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rectification(&self) -> &Rectification {
        &self.rect
    }

    fn system(&self) -> &ContactSystem {
        self.surface.system()
    }

    /// `(t, u)`: the Reeb time to `S` and the surface coordinates reached.
    pub fn map(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(drop_height(self.rect.apply(y)?))
    }

    pub fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.rect.check_rate(y)?;
        let batch = |pts: &[Vec<f64>]| Ok(self.rect.apply_batch(pts)?.into_iter().map(drop_height).collect());
        dynamics::batched_jacobian(&batch, y, self.rect.options.fd_step)
    }

    /// `max |phi1^*(dz + theta) - eta|` at `y`.
    pub fn pullback_residual(&self, y: &[f64]) -> Result<f64> {
        let image = self.map(y)?;
        let mut target = vec![1.0];
        target.extend_from_slice(self.surface.theta(&image[1..])?.coeffs());
        let pulled = KForm::covector(&target).pullback_linear(&self.jacobian(y)?)?;
        Ok(linalg::max_abs_diff(pulled.coeffs(), self.system().eta_at(y).coeffs()))
    }

    /// `max |D phi1(y) xi(y) - d/dz|`.
    pub fn reeb_defect(&self, y: &[f64]) -> Result<f64> {
        let pushed = linalg::mat_vec(&self.jacobian(y)?, &self.system().reeb(y)?);
        Ok(unit_defect(&pushed, 0, 1.0))
    }
}

fn drop_height(mut image: Vec<f64>) -> Vec<f64> {
    image.remove(1);
    image
}

/// Chart of `B = {sigma = 0}` inside `S`: one surface coordinate is eliminated
/// and recovered by Newton.
#[derive(Clone)]
pub struct BSlice {
    sigma: Arc<dyn ScalarField>,
    calculus: Calculus,
    eliminated: usize,
    seed: Vec<f64>,
    chart: Chart,
}

impl std::fmt::Debug for BSlice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BSlice").field("eliminated", &self.eliminated).field("seed", &self.seed).finish()
    }
}

impl BSlice {
    /// Eliminates the coordinate with the largest `|d sigma / du_i|` at
    /// `seed` (first index on ties).
    pub fn new(sigma: Arc<dyn ScalarField>, surface: &Calculus, seed: &[f64]) -> Result<Self> {
        let g = surface.gradient(sigma.as_ref(), seed)?;
        let (eliminated, largest) = g
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(k, m), (i, v)| if v.abs() > m { (i, v.abs()) } else { (k, m) });
        if !(largest > 1e-12) {
            return Err(Error::Precondition("sigma has a critical point at the slice seed".into()));
        }
        let remove = |v: &[f64]| -> Vec<f64> {
            v.iter().enumerate().filter(|(i, _)| *i != eliminated).map(|(_, x)| *x).collect()
        };
        let source = surface.chart();
        let chart = Chart::new("B", remove(source.lower()), remove(source.upper()))?;
        Ok(Self { sigma, calculus: surface.clone(), eliminated, seed: seed.to_vec(), chart })
    }

    pub fn eliminated(&self) -> usize {
        self.eliminated
    }

    pub fn dim(&self) -> usize {
        self.seed.len() - 1
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().filter(|(i, _)| *i != self.eliminated).map(|(_, x)| *x).collect()
    }

    fn insert(&self, b: &[f64], value: f64) -> Vec<f64> {
        let mut u = b.to_vec();
        u.insert(self.eliminated, value);
        u
    }

    /// The surface point over `b` with `sigma = 0`.
    pub fn embed(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        let k = self.eliminated;
        let mut u = self.insert(b, self.seed[k]);
        for _ in 0..50 {
            let s = self.sigma.value(&u);
            if !s.is_finite() {
                return Err(Error::NonFinite("sigma on the slice".into()));
            }
            let dk = self.calculus.gradient(self.sigma.as_ref(), &u)?[k];
            if dk.abs() < 1e-12 {
                return Err(Error::Precondition("slice chart degenerates: d sigma / du vanishes".into()));
            }
            let step = s / dk;
            u[k] -= step;
            if step.abs() <= 1e-15 * u[k].abs().max(1.0) {
                return Ok(u);
            }
        }
        let residual = self.sigma.value(&u).abs();
        if residual <= SLICE_TOL * 1e-3 {
            return Ok(u);
        }
        Err(Error::NoConvergence { iterations: 50, residual })
    }

    /// `D embed` at the surface point `u` (rows: surface axes).
    pub fn embed_jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.calculus.gradient(self.sigma.as_ref(), u)?;
        let k = self.eliminated;
        let m = u.len();
        Ok(DMatrix::from_fn(m, m - 1, |r, c| {
            let col = if c < k { c } else { c + 1 };
            if r == k {
                -g[col] / g[k]
            } else if r == col {
                1.0
            } else {
                0.0
            }
        }))
    }
}

/// The symplectification map `S -> R x B`.
#[derive(Debug, Clone)]
pub struct Phi2 {
    surface: LevelSetChart,
    rect: Rectification,
    slice: BSlice,
    gamma: f64,
}

impl Phi2 {
    /// Checks the `sigma` residual on a `per_axis` grid of the surface chart;
    /// `seed` fixes the slice chart of `B`.
    pub fn new(
        surface: &LevelSetChart,
        sigma: Arc<dyn ScalarField>,
        options: FlowOptions,
        seed: &[f64],
        per_axis: usize,
    ) -> Result<Self> {
        let n = surface.n() as f64;
        for u in interior_grid(surface.surface_chart(), per_axis) {
            let residual = surface.sigma_residual(sigma.as_ref(), &u)?.abs();
            let scale = (n * surface.reeb_h(&u)?).abs().max(1.0);
            if residual > CONSTANCY_TOL * scale {
                return Err(Error::Precondition(format!("sigma residual {residual:e} does not vanish")));
            }
        }
        let gamma = surface.reeb_h(seed)?;
        let rect = Rectification::new(
            Arc::new(surface.reparametrized_field()),
            sigma.clone(),
            n,
            surface.surface_chart().clone(),
            options,
        )?;
        let slice = BSlice::new(sigma, surface.surface_calculus(), seed)?;
        Ok(Self { surface: surface.clone(), rect, slice, gamma })
    }

    pub fn rectification(&self) -> &Rectification {
        &self.rect
    }

    pub fn slice(&self) -> &BSlice {
        &self.slice
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn to_b(&self, image: Vec<f64>) -> Vec<f64> {
        let mut out = vec![image[0]];
        out.extend(self.slice.project(&image[1..]));
        out
    }

    /// `(s, b)`.
    pub fn map(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.to_b(self.rect.apply(u)?))
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.rect.check_rate(u)?;
        let batch =
            |pts: &[Vec<f64>]| Ok(self.rect.apply_batch(pts)?.into_iter().map(|img| self.to_b(img)).collect());
        dynamics::batched_jacobian(&batch, u, self.rect.options.fd_step)
    }

    /// `eta_B = i_B^* eta` in slice coordinates.
    pub fn eta_b(&self, b: &[f64]) -> Result<KForm> {
        let u = self.slice.embed(b)?;
        self.surface.theta(&u)?.pullback_linear(&self.slice.embed_jacobian(&u)?)
    }

    /// `d eta_B` by central differences on the slice chart.
    pub fn d_eta_b(&self, b: &[f64]) -> Result<KForm> {
        Calculus::new(self.slice.chart.clone())
            .with_stencil(self.surface.surface_calculus().stencil())
            .d(&EtaB(self), b)
    }

    /// Contact volume coefficient of `eta_B ^ (d eta_B)^{n-1}` at `b`.
    pub fn eta_b_check(&self, b: &[f64]) -> Result<f64> {
        let u = self.slice.embed(b)?;
        let off = self.rect.sigma.value(&u).abs();
        if off > SLICE_TOL {
            return Err(Error::Precondition(format!("point is off B: |sigma| = {off:e}")));
        }
        self.rect.check_rate(&u)?;
        self.eta_b(b)?.wedge(&self.d_eta_b(b)?.power(self.surface.n() - 1)?)?.top_coefficient()
    }

    /// `exp(-s) (d eta_B - ds ^ eta_B)` at `(s, b)`.
    pub fn target_form(&self, sb: &[f64]) -> Result<KForm> {
        let (s, b) = (sb[0], &sb[1..]);
        let eta = self.eta_b(b)?.shifted(1);
        let d_eta = self.d_eta_b(b)?.shifted(1);
        let ds = KForm::elementary(sb.len(), &[0])?;
        Ok((&d_eta - &ds.wedge(&eta)?) * (-s).exp())
    }

    /// `max |phi2^*(exp(-s)(d eta_B - ds ^ eta_B)) - d theta|` at `u`.
    pub fn pullback_residual(&self, u: &[f64]) -> Result<f64> {
        let target = self.target_form(&self.map(u)?)?;
        let pulled = target.pullback_linear(&self.jacobian(u)?)?;
        Ok(linalg::max_abs_diff(pulled.coeffs(), self.surface.omega(u)?.coeffs()))
    }

    /// `max |D phi2(u) X_{H|S}(u) - gamma d/ds|`.
    pub fn speed_defect(&self, u: &[f64]) -> Result<f64> {
        let pushed = linalg::mat_vec(&self.jacobian(u)?, &self.surface.restricted_field(u)?);
        Ok(unit_defect(&pushed, 0, self.gamma))
    }
}

struct EtaB<'a>(&'a Phi2);

impl FormField for EtaB<'_> {
    fn dim(&self) -> usize {
        self.0.slice.dim()
    }
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, b: &[f64]) -> KForm {
        self.0.eta_b(b).unwrap_or_else(|_| KForm::covector(&vec![f64::NAN; self.dim()]))
    }
}

/// `max |((Id x phi2) o phi1)^*(dz + exp(-s) eta_B) - eta|` at `y`.
pub fn composite_pullback_residual(phi1: &Phi1, phi2: &Phi2, y: &[f64]) -> Result<f64> {
    let first = phi1.map(y)?;
    let second = phi2.map(&first[1..])?;
    let j1 = phi1.jacobian(y)?;
    let j2 = phi2.jacobian(&first[1..])?;
    let m = j1.nrows();
    let mut block = DMatrix::zeros(m, m);
    block[(0, 0)] = 1.0;
    block.view_mut((1, 1), (m - 1, m - 1)).copy_from(&j2);
    let mut target = vec![1.0, 0.0];
    let scale = (-second[0]).exp();
    target.extend(phi2.eta_b(&second[1..])?.coeffs().iter().map(|c| scale * c));
    let pulled = KForm::covector(&target).pullback_linear(&(block * j1))?;
    Ok(linalg::max_abs_diff(pulled.coeffs(), phi1.system().eta_at(y).coeffs()))
}

/// Inputs of [`sandwich_report`].
#[derive(Debug, Clone)]
pub struct SandwichConfig {
    pub options: FlowOptions,
    /// Region searched for zeros of `X_{H|S}` before anything is built.
    pub equilibrium_box: Chart,
    pub equilibrium_grid: usize,
    /// Grid used for the constancy and `sigma`-residual preconditions.
    pub precondition_grid: usize,
    pub threshold: f64,
    /// Flow time of the measure pushforward check.
    pub pushforward_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SandwichStatus {
    Verified,
    Failed,
    Untestable { reason: String },
    Obstructed { equilibria: Vec<Vec<f64>> },
}

/// Maxima over the rectified samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SandwichResiduals {
    pub phi1_pullback: f64,
    pub phi1_reeb: f64,
    pub phi2_pullback: f64,
    pub phi2_speed: f64,
    pub composite_pullback: f64,
    pub rectified_field: f64,
    pub round_trip: f64,
    pub measure_pushforward: f64,
    /// Smallest `|eta_B ^ (d eta_B)^{n-1}|` seen on `B`.
    pub eta_b_volume_min: f64,
}

impl SandwichResiduals {
    fn maxima(&self) -> [f64; 8] {
        [
            self.phi1_pullback,
            self.phi1_reeb,
            self.phi2_pullback,
            self.phi2_speed,
            self.composite_pullback,
            self.rectified_field,
            self.round_trip,
            self.measure_pushforward,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub status: SandwichStatus,
    pub samples: usize,
    pub rectified: usize,
    pub domain_failures: usize,
    pub other_failures: usize,
    /// `rectified / samples`.
    pub coverage: f64,
    pub threshold: f64,
    pub residuals: SandwichResiduals,
    pub notes: Vec<String>,
}

impl SandwichReport {
    fn empty(status: SandwichStatus, samples: usize, threshold: f64) -> Self {
        Self {
            status,
            samples,
            rectified: 0,
            domain_failures: 0,
            other_failures: 0,
            coverage: 0.0,
            threshold,
            residuals: SandwichResiduals::default(),
            notes: Vec::new(),
        }
    }
}

struct SampleResult {
    phi1_pullback: f64,
    phi1_reeb: f64,
    phi2_pullback: f64,
    phi2_speed: f64,
    composite: f64,
    rectified: f64,
    round_trip: f64,
    pushforward: f64,
    volume: f64,
}

fn check_sample(
    surface: &LevelSetChart,
    sigma: &dyn ScalarField,
    phi1: &Phi1,
    phi2: &Phi2,
    y: &[f64],
    t: f64,
) -> Result<SampleResult> {
    let image = phi1.map(y)?;
    let u = &image[1..];
    let sb = phi2.map(u)?;
    let density = |v: &[f64]| surface.measure_density(sigma, v).unwrap_or(f64::NAN);
    let field = surface.restricted_vector_field();
    let flow = NumericFlow::new(&field, phi2.rect.options.clone());
    Ok(SampleResult {
        phi1_pullback: phi1.pullback_residual(y)?,
        phi1_reeb: phi1.reeb_defect(y)?,
        phi2_pullback: phi2.pullback_residual(u)?,
        phi2_speed: phi2.speed_defect(u)?,
        composite: composite_pullback_residual(phi1, phi2, y)?,
        rectified: phi2.rect.rectified_defect(u)?,
        round_trip: phi2.rect.round_trip_defect(u)?,
        pushforward: dynamics::pushforward_invariance_check(&density, &flow, u, t)?.abs(),
        volume: phi2.eta_b_check(&sb[1..])?.abs(),
    })
}

/// Builds both sandwich maps and verifies them at `samples` (points of `C`).
///
/// Zeros of `X_{H|S}` short-circuit the construction: no invariant measure can
/// exist then. The equivalence between invariant measures and the sandwich is
/// only checked at sample resolution.
pub fn sandwich_report(
    surface: &LevelSetChart,
    sigma: Arc<dyn ScalarField>,
    samples: &[Vec<f64>],
    config: &SandwichConfig,
) -> SandwichReport {
    let threshold = config.threshold;
    let equilibria = surface.find_equilibria(&config.equilibrium_box, config.equilibrium_grid);
    if equilibria.obstruction_found() {
        let mut report =
            SandwichReport::empty(SandwichStatus::Obstructed { equilibria: equilibria.roots }, samples.len(), threshold);
        report.notes.push("X_{H|S} vanishes somewhere: no invariant measure, sandwich skipped".into());
        return report;
    }
    let untestable = |reason: String| SandwichReport::empty(SandwichStatus::Untestable { reason }, samples.len(), threshold);
    let phi1 = match Phi1::new(surface, config.options.clone(), config.precondition_grid) {
        Ok(p) => p,
        Err(e) => return untestable(e.to_string()),
    };
    let seed = centre(surface.surface_chart());
    let phi2 = match Phi2::new(surface, sigma.clone(), config.options.clone(), &seed, config.precondition_grid) {
        Ok(p) => p,
        Err(e) => return untestable(e.to_string()),
    };

    let mut report = SandwichReport::empty(SandwichStatus::Failed, samples.len(), threshold);
    let mut residuals = SandwichResiduals { eta_b_volume_min: f64::INFINITY, ..Default::default() };
    for y in samples {
        match check_sample(surface, sigma.as_ref(), &phi1, &phi2, y, config.pushforward_time) {
            Ok(r) => {
                report.rectified += 1;
                let r_ = &mut residuals;
                r_.phi1_pullback = r_.phi1_pullback.max(r.phi1_pullback);
                r_.phi1_reeb = r_.phi1_reeb.max(r.phi1_reeb);
                r_.phi2_pullback = r_.phi2_pullback.max(r.phi2_pullback);
                r_.phi2_speed = r_.phi2_speed.max(r.phi2_speed);
                r_.composite_pullback = r_.composite_pullback.max(r.composite);
                r_.rectified_field = r_.rectified_field.max(r.rectified);
                r_.round_trip = r_.round_trip.max(r.round_trip);
                r_.measure_pushforward = r_.measure_pushforward.max(r.pushforward);
                r_.eta_b_volume_min = r_.eta_b_volume_min.min(r.volume);
            }
            Err(e) if e.is_domain_failure() => report.domain_failures += 1,
            Err(e) => {
                report.other_failures += 1;
                if report.notes.len() < 5 {
                    report.notes.push(format!("sample failed: {e}"));
                }
            }
        }
    }
    if report.rectified == 0 {
        residuals.eta_b_volume_min = 0.0;
    }
    report.coverage = if samples.is_empty() { 0.0 } else { report.rectified as f64 / samples.len() as f64 };
    let pass = report.rectified > 0
        && report.other_failures == 0
        && residuals.maxima().iter().all(|r| *r <= threshold)
        && residuals.eta_b_volume_min > 1e-10;
    report.status = if pass { SandwichStatus::Verified } else { SandwichStatus::Failed };
    report.residuals = residuals;
    if report.domain_failures > 0 {
        report.notes.push(format!(
            "{} of {} samples left the chart before reaching the slice",
            report.domain_failures, report.samples
        ));
    }
    report.notes.push("equivalence verified at sample resolution only".into());
    report
}
