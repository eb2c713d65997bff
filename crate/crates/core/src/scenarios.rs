//! Ready-made systems.
//!
//! - [`dissipative`]: `H = |p|^2/2 + V(q) + gamma z` on the Darboux chart of
//!   `R x T*R^2`, with built-in potentials [`Potential`].
//! - [`LinearOracles`]: closed forms for `V = q1 + q2` (surface flow, `sigma`,
//!   both sandwich maps, `eta_B`), checked against their defining identities
//!   when built.
//! - [`CotangentSampler`]: `T*Q` minus the zero section with the Liouville
//!   field `p d/dp` and the kinetic-energy measure.
//! - [`contactify`], [`symplectify`] and the energy-level Reeb check.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::contact::ContactSystem;
use crate::dynamics::FlowMap;
use crate::error::{Error, Result};
use crate::exterior::{Calculus, FormField, KForm, ScalarField, ScalarFn};
use crate::linalg;
use crate::zeroset::LevelSetChart;

/// `eta = dz - sum p_i dq^i` on `(z, q_1..q_n, p_1..p_n)`.
#[derive(Debug, Clone, Copy)]
pub struct DarbouxForm {
    pub n: usize,
}

impl FormField for DarbouxForm {
    fn dim(&self) -> usize {
        2 * self.n + 1
    }
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> KForm {
        let mut c = vec![0.0; self.dim()];
        c[0] = 1.0;
        for i in 0..self.n {
            c[1 + i] = -x[1 + self.n + i];
        }
        KForm::covector(&c)
    }
    fn derivative(&self, _x: &[f64]) -> Option<KForm> {
        let dim = self.dim();
        let mut w = DMatrix::zeros(dim, dim);
        for i in 0..self.n {
            w[(1 + i, 1 + self.n + i)] = 1.0;
            w[(1 + self.n + i, 1 + i)] = -1.0;
        }
        Some(KForm::from_antisymmetric(&w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    /// `sum q_i`: no critical points.
    Linear,
    /// `|q|^2 / 2`: critical point at the origin.
    Harmonic,
    /// `sum (q_i^3 / 3 + q_i)`: no critical points.
    Cubic,
}

impl Potential {
    pub fn name(self) -> &'static str {
        match self {
            Potential::Linear => "linear",
            Potential::Harmonic => "harmonic",
            Potential::Cubic => "cubic",
        }
    }

    pub fn value(self, q: &[f64]) -> f64 {
        match self {
            Potential::Linear => q.iter().sum(),
            Potential::Harmonic => 0.5 * q.iter().map(|v| v * v).sum::<f64>(),
            Potential::Cubic => q.iter().map(|v| v * v * v / 3.0 + v).sum(),
        }
    }

    pub fn gradient(self, q: &[f64]) -> Vec<f64> {
        match self {
            Potential::Linear => vec![1.0; q.len()],
            Potential::Harmonic => q.to_vec(),
            Potential::Cubic => q.iter().map(|v| v * v + 1.0).collect(),
        }
    }

    /// Critical points, known in closed form.
    pub fn critical_points(self, n: usize) -> Vec<Vec<f64>> {
        match self {
            Potential::Harmonic => vec![vec![0.0; n]],
            Potential::Linear | Potential::Cubic => Vec::new(),
        }
    }
}

/// `H(z, q, p) = |p|^2/2 + V(q) + gamma z`.
#[derive(Debug, Clone, Copy)]
pub struct DissipativeHamiltonian {
    pub n: usize,
    pub gamma: f64,
    pub potential: Potential,
}

impl ScalarField for DissipativeHamiltonian {
    fn dim(&self) -> usize {
        2 * self.n + 1
    }
    fn value(&self, x: &[f64]) -> f64 {
        let (q, p) = x[1..].split_at(self.n);
        0.5 * p.iter().map(|v| v * v).sum::<f64>() + self.potential.value(q) + self.gamma * x[0]
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (q, p) = x[1..].split_at(self.n);
        let mut g = vec![self.gamma];
        g.extend(self.potential.gradient(q));
        g.extend_from_slice(p);
        Some(g)
    }
}

/// Half width of the `(q, p)` box of the built-in scenarios.
pub const PHASE_HALF_WIDTH: f64 = 25.0;
/// Half width of the height box; wide enough to contain `S` over the phase box.
pub const HEIGHT_HALF_WIDTH: f64 = 1e5;

/// A dissipative mechanical system together with its zero level set and,
/// when known, an invariant-measure weight `sigma` on `S` and closed forms.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub gamma: f64,
    pub potential: Potential,
    pub system: ContactSystem,
    pub surface: LevelSetChart,
    pub sigma: Option<Arc<dyn ScalarField>>,
    pub oracles: Option<LinearOracles>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("potential", &self.potential)
            .finish()
    }
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.system.n()
    }
}

/// Two degrees of freedom on the default box.
pub fn dissipative(gamma: f64, potential: Potential) -> Result<Scenario> {
    dissipative_in(gamma, potential, PHASE_HALF_WIDTH)
}

/// Same system on `|q_i|, |p_i| <= half_width`; small boxes make rectifying
/// flows leave the chart.
pub fn dissipative_in(gamma: f64, potential: Potential, half_width: f64) -> Result<Scenario> {
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be nonzero and finite, got {gamma}")));
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidParameter("phase box half width must be positive".into()));
    }
    let n = 2;
    let mut lower = vec![-HEIGHT_HALF_WIDTH];
    let mut upper = vec![HEIGHT_HALF_WIDTH];
    lower.extend(vec![-half_width; 2 * n]);
    upper.extend(vec![half_width; 2 * n]);
    let chart = Chart::new("darboux", lower, upper)?;
    let hamiltonian = DissipativeHamiltonian { n, gamma, potential };
    let system = ContactSystem::new(chart, Arc::new(DarbouxForm { n }), Arc::new(hamiltonian))?;
    let surface = LevelSetChart::new(system.clone())?;
    let (sigma, oracles): (Option<Arc<dyn ScalarField>>, _) = match potential {
        Potential::Linear => {
            let oracles = LinearOracles::new(gamma)?;
            (Some(Arc::new(oracles.sigma_field())), Some(oracles))
        }
        _ => (None, None),
    };
    Ok(Scenario {
        name: format!("dissipative-{}", potential.name()),
        gamma,
        potential,
        system,
        surface,
        sigma,
        oracles,
    })
}

/// Closed forms for the linear potential `V = q1 + q2`, coordinates
/// `u = (q1, q2, p1, p2)` on `S` and `b = (q2, p1, p2)` on `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOracles {
    pub gamma: f64,
}

impl LinearOracles {
    /// Fails when a closed form misses its defining identity by more than `1e-7`.
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma == 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be nonzero and finite, got {gamma}")));
        }
        let oracles = Self { gamma };
        let worst = oracles.self_check();
        if !(worst <= 1e-7) {
            return Err(Error::Precondition(format!("closed-form oracle misses its identities by {worst:e}")));
        }
        Ok(oracles)
    }

    /// `X_{H|S}(u) = (p, -(gamma p + 1))`.
    pub fn restricted_field(&self, u: &[f64]) -> Vec<f64> {
        let g = self.gamma;
        vec![u[2], u[3], -(g * u[2] + 1.0), -(g * u[3] + 1.0)]
    }

    /// Flow of `X_{H|S}` for time `s`.
    pub fn surface_flow(&self, s: f64, u: &[f64]) -> Vec<f64> {
        let g = self.gamma;
        let decay = (-g * s).exp();
        let q = |i: usize| (u[2 + i] + 1.0 / g) * (1.0 - decay) / g - s / g + u[i];
        let p = |i: usize| (u[2 + i] + 1.0 / g) * decay - 1.0 / g;
        vec![q(0), q(1), p(0), p(1)]
    }

    /// `det D Phi_s = exp(-2 gamma s)`.
    pub fn flow_determinant(&self, s: f64) -> f64 {
        (-2.0 * self.gamma * s).exp()
    }

    /// `sigma = -gamma (p1 + p2) - gamma^2 (q1 + q2)`.
    pub fn sigma(&self, u: &[f64]) -> f64 {
        let g = self.gamma;
        -g * (u[2] + u[3]) - g * g * (u[0] + u[1])
    }

    pub fn sigma_gradient(&self) -> Vec<f64> {
        let g = self.gamma;
        vec![-g * g, -g * g, -g, -g]
    }

    pub fn sigma_field(&self) -> ScalarFn {
        let oracle = *self;
        let grad = self.sigma_gradient();
        ScalarFn::new(4, move |u| oracle.sigma(u)).with_gradient(move |_| grad.clone())
    }

    /// Invariant density `exp(sigma) / gamma` of `X_{H|S}`.
    pub fn density(&self, u: &[f64]) -> f64 {
        self.sigma(u).exp() / self.gamma
    }

    /// Height of `S` over `u`.
    pub fn height(&self, u: &[f64]) -> f64 {
        -(0.5 * (u[2] * u[2] + u[3] * u[3]) + u[0] + u[1]) / self.gamma
    }

    /// `theta = -sum (1/gamma + p_i) dq^i + (p_i / gamma) dp_i`.
    pub fn theta(&self, u: &[f64]) -> Vec<f64> {
        let g = self.gamma;
        vec![-(1.0 / g + u[2]), -(1.0 / g + u[3]), -u[2] / g, -u[3] / g]
    }

    /// `phi1(z, q, p) = (z + (|p|^2/2 + q1 + q2)/gamma, q, p)`.
    pub fn phi1(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![y[0] - self.height(&y[1..])];
        out.extend_from_slice(&y[1..]);
        out
    }

    /// `F = sigma / (2 gamma)`.
    pub fn f(&self, u: &[f64]) -> f64 {
        self.sigma(u) / (2.0 * self.gamma)
    }

    /// `phi2(u) = (gamma F, q2, p1, p2 after flowing for -F)`.
    pub fn phi2(&self, u: &[f64]) -> Vec<f64> {
        let g = self.gamma;
        let e = (g * self.f(u)).exp();
        let (q1, q2, p1, p2) = (u[0], u[1], u[2], u[3]);
        vec![
            g * self.f(u),
            ((-2.0 * g * p2 - 2.0) * e + 2.0 + g * g * (q2 - q1) + g * (p2 - p1)) / (2.0 * g * g),
            (e * (g * p1 + 1.0) - 1.0) / g,
            (e * (g * p2 + 1.0) - 1.0) / g,
        ]
    }

    /// `B -> S`: `q1 = -q2 - (p1 + p2) / gamma`.
    pub fn b_embed(&self, b: &[f64]) -> Vec<f64> {
        vec![-b[0] - (b[1] + b[2]) / self.gamma, b[0], b[1], b[2]]
    }

    /// `eta_B = (p1 - p2) dq2 + dp1 / gamma^2 + ((p1 - p2)/gamma + 1/gamma^2) dp2`.
    pub fn eta_b(&self, b: &[f64]) -> Vec<f64> {
        let g2 = self.gamma * self.gamma;
        let diff = b[1] - b[2];
        vec![diff, 1.0 / g2, diff / self.gamma + 1.0 / g2]
    }

    /// `eta_B ^ d eta_B = -2 / gamma^2 dq2 ^ dp1 ^ dp2`.
    pub fn eta_b_volume(&self) -> f64 {
        -2.0 / (self.gamma * self.gamma)
    }

    /// Largest violation of the identities the closed forms must satisfy.
    pub fn self_check(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let box4 = Chart::cube("u", 4, 1.0).expect("valid box");
        let mut worst = 0.0_f64;
        for _ in 0..10 {
            let u = box4.sample(&mut rng, 0.0);
            // the flow solves the ODE
            let s = 0.37;
            let dt = 1e-4;
            let ahead = self.surface_flow(s + dt, &u);
            let behind = self.surface_flow(s - dt, &u);
            let rate: Vec<f64> = ahead.iter().zip(&behind).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
            worst = worst.max(linalg::max_abs_diff(&rate, &self.restricted_field(&self.surface_flow(s, &u))));
            worst = worst.max(linalg::max_abs_diff(&self.surface_flow(0.0, &u), &u));
            // sigma solves X(sigma) = 2 gamma
            let x = self.restricted_field(&u);
            worst = worst.max((linalg::dot(&x, &self.sigma_gradient()) - 2.0 * self.gamma).abs());
            // phi2 = (sigma / 2, flow to the slice), and lands on B
            let image = self.phi2(&u);
            let landed = self.surface_flow(-self.f(&u), &u);
            worst = worst.max((image[0] - 0.5 * self.sigma(&u)).abs());
            worst = worst.max(linalg::max_abs_diff(&image[1..], &landed[1..]));
            worst = worst.max(self.sigma(&self.b_embed(&image[1..])).abs());
            // eta_B is theta pulled back along the slice embedding
            let b = &image[1..];
            let theta = self.theta(&self.b_embed(b));
            let g = self.gamma;
            let pulled = [theta[1] - theta[0], theta[2] - theta[0] / g, theta[3] - theta[0] / g];
            worst = worst.max(linalg::max_abs_diff(&pulled, &self.eta_b(b)));
            // phi1 lands on S
            let mut y = vec![rng.gen_range(-1.0..1.0)];
            y.extend_from_slice(&u);
            let first = self.phi1(&y);
            worst = worst.max((first[0] - (y[0] - self.height(&u))).abs());
        }
        worst
    }
}

/// `phi(t, x) = (q, exp(t) p)`, the flow of `p d/dp`, with its exact Jacobian.
#[derive(Debug, Clone, Copy)]
pub struct DilationFlow {
    pub n: usize,
}

impl FlowMap for DilationFlow {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn flow(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        Ok(u.iter().enumerate().map(|(i, v)| if i < self.n { *v } else { v * t.exp() }).collect())
    }
    fn jacobian(&self, t: f64, _u: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |r, c| match (r == c, r < self.n) {
            (false, _) => 0.0,
            (true, true) => 1.0,
            (true, false) => t.exp(),
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Identity,
    /// `g_ii(q) = scale_i (1 + q_i^2)`.
    Diagonal(Vec<f64>),
}

/// Default radius of the excluded tube around the zero section.
pub const ZERO_SECTION_TUBE: f64 = 1e-3;

/// `T*Q` minus the zero section, `Q` a box in `R^n`, coordinates `(q, p)`.
#[derive(Clone)]
pub struct CotangentSampler {
    n: usize,
    metric: Metric,
    potential: Arc<dyn ScalarField>,
    eps: f64,
    chart: Chart,
}

impl std::fmt::Debug for CotangentSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CotangentSampler").field("n", &self.n).field("metric", &self.metric).finish()
    }
}

impl CotangentSampler {
    /// `potential` is `F` on `Q`; the target density in `q` is `exp(-n F)`.
    pub fn new(metric: Metric, potential: Arc<dyn ScalarField>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("sampler needs n >= 1".into()));
        }
        if potential.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: potential.dim() });
        }
        if let Metric::Diagonal(scales) = &metric {
            if scales.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: scales.len() });
            }
            if scales.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidParameter("metric scales must be positive".into()));
            }
        }
        let chart = Chart::cube("cotangent", 2 * n, 5.0)?;
        Ok(Self { n, metric, potential, eps: ZERO_SECTION_TUBE, chart })
    }

    pub fn with_tube(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn tube(&self) -> f64 {
        self.eps
    }

    /// `g^{ii}(q)`.
    pub fn inverse_metric(&self, q: &[f64]) -> Vec<f64> {
        match &self.metric {
            Metric::Identity => vec![1.0; self.n],
            Metric::Diagonal(s) => s.iter().zip(q).map(|(s, q)| 1.0 / (s * (1.0 + q * q))).collect(),
        }
    }

    pub fn admissible(&self, u: &[f64]) -> bool {
        linalg::norm2(&u[self.n..]) >= self.eps
    }

    fn guard(&self, u: &[f64]) -> Result<()> {
        if u.len() != 2 * self.n {
            return Err(Error::DimensionMismatch { expected: 2 * self.n, found: u.len() });
        }
        if !self.admissible(u) {
            return Err(Error::Excluded(format!("|p| < {} (zero section)", self.eps)));
        }
        Ok(())
    }

    /// `K(q, p) = g^{ij}(q) p_i p_j / 2`.
    pub fn kinetic(&self, u: &[f64]) -> Result<f64> {
        self.guard(u)?;
        let (q, p) = u.split_at(self.n);
        Ok(0.5 * self.inverse_metric(q).iter().zip(p).map(|(g, p)| g * p * p).sum::<f64>())
    }

    pub fn kinetic_field(&self) -> Arc<dyn ScalarField> {
        let me = self.clone();
        let grad_me = self.clone();
        Arc::new(
            ScalarFn::new(2 * self.n, move |u| me.kinetic(u).unwrap_or(f64::NAN))
                .with_gradient(move |u| grad_me.kinetic_gradient(u)),
        )
    }

    fn kinetic_gradient(&self, u: &[f64]) -> Vec<f64> {
        let (q, p) = u.split_at(self.n);
        let ginv = self.inverse_metric(q);
        let mut g: Vec<f64> = match &self.metric {
            Metric::Identity => vec![0.0; self.n],
            // d/dq (1 / (s (1 + q^2))) = -2 q s / (s (1 + q^2))^2
            Metric::Diagonal(s) => (0..self.n)
                .map(|i| -0.5 * p[i] * p[i] * 2.0 * q[i] * s[i] * ginv[i] * ginv[i])
                .collect(),
        };
        g.extend((0..self.n).map(|i| ginv[i] * p[i]));
        g
    }

    /// `sigma = ln(K) / 2 + F(q)`, with analytic gradient; NaN in the tube.
    pub fn sigma_field(&self) -> Arc<dyn ScalarField> {
        let me = self.clone();
        let grad_me = self.clone();
        Arc::new(
            ScalarFn::new(2 * self.n, move |u| {
                me.kinetic(u).map(|k| 0.5 * k.ln() + me.potential.value(&u[..me.n])).unwrap_or(f64::NAN)
            })
            .with_gradient(move |u| {
                let Ok(k) = grad_me.kinetic(u) else { return vec![f64::NAN; u.len()] };
                let mut g: Vec<f64> = grad_me.kinetic_gradient(u).iter().map(|d| 0.5 * d / k).collect();
                let df = grad_me
                    .potential
                    .gradient(&u[..grad_me.n])
                    .unwrap_or_else(|| vec![f64::NAN; grad_me.n]);
                for (gi, fi) in g.iter_mut().zip(df) {
                    *gi += fi;
                }
                g
            }),
        )
    }

    /// `Delta(u) = (0, p)`.
    pub fn liouville(&self, u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        v.extend_from_slice(&u[self.n..]);
        v
    }

    /// `Delta(f)` at `u`, from the analytic gradient when available.
    pub fn liouville_derivative(&self, f: &dyn ScalarField, u: &[f64]) -> Result<f64> {
        self.guard(u)?;
        let g = Calculus::new(self.chart.clone()).gradient(f, u)?;
        Ok(linalg::dot(&g, &self.liouville(u)))
    }

    /// `(d lambda)^n` coefficient for `lambda = sum p_i dq^i`.
    pub fn symplectic_volume(&self) -> f64 {
        let d = 2 * self.n;
        let mut w = DMatrix::zeros(d, d);
        for i in 0..self.n {
            w[(self.n + i, i)] = 1.0;
            w[(i, self.n + i)] = -1.0;
        }
        KForm::from_antisymmetric(&w)
            .power(self.n)
            .and_then(|v| v.top_coefficient())
            .expect("top degree")
    }

    /// Coordinate density of `K^{-n/2} exp(-n F) (d lambda)^n`.
    pub fn density(&self, u: &[f64]) -> Result<f64> {
        let k = self.kinetic(u)?;
        let n = self.n as f64;
        Ok(k.powf(-0.5 * n) * (-n * self.potential.value(&u[..self.n])).exp() * self.symplectic_volume())
    }

    pub fn dilation(&self) -> DilationFlow {
        DilationFlow { n: self.n }
    }

    /// The same data as the zero set of `H = gamma z` on `R x T*Q` with
    /// `eta = dz - p dq`: there `theta = -p dq` and `Delta = p d/dp`.
    pub fn contact_realization(&self, gamma: f64) -> Result<LevelSetChart> {
        if gamma == 0.0 {
            return Err(Error::InvalidParameter("gamma must be nonzero".into()));
        }
        let n = self.n;
        let mut lower = vec![-1.0];
        let mut upper = vec![1.0];
        lower.extend_from_slice(self.chart.lower());
        upper.extend_from_slice(self.chart.upper());
        let mut g = vec![0.0; 2 * n + 1];
        g[0] = gamma;
        let h = ScalarFn::new(2 * n + 1, move |x| gamma * x[0]).with_gradient(move |_| g.clone());
        let system = ContactSystem::new(Chart::new("cotangent-contact", lower, upper)?, Arc::new(DarbouxForm { n }), Arc::new(h))?;
        LevelSetChart::new(system)
    }
}

/// `dz + lambda` on `R x M`.
pub struct Contactified {
    lambda: Arc<dyn FormField>,
}

impl FormField for Contactified {
    fn dim(&self) -> usize {
        self.lambda.dim() + 1
    }
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> KForm {
        let mut c = vec![1.0];
        c.extend_from_slice(self.lambda.eval(&x[1..]).coeffs());
        KForm::covector(&c)
    }
    fn derivative(&self, x: &[f64]) -> Option<KForm> {
        self.lambda.derivative(&x[1..]).map(|d| d.shifted(1))
    }
}

/// The contact system `(R x M, dz + lambda, H = -1)`; its Hamiltonian field is
/// the Reeb field. `d lambda` must be nondegenerate on a `per_axis` grid of `M`.
pub fn contactify(chart: &Chart, lambda: Arc<dyn FormField>, z_half_width: f64, per_axis: usize) -> Result<ContactSystem> {
    if lambda.degree() != 1 || lambda.dim() != chart.dim() {
        return Err(Error::DimensionMismatch { expected: chart.dim(), found: lambda.dim() });
    }
    let calculus = Calculus::new(chart.clone());
    let h = calculus.step();
    let inner = chart.with_bounds(
        chart.lower().iter().map(|l| l + 2.0 * h).collect(),
        chart.upper().iter().map(|u| u - 2.0 * h).collect(),
    )?;
    for x in inner.grid(per_axis) {
        let det = calculus.d(lambda.as_ref(), &x)?.to_matrix()?.determinant();
        if !(det.abs() > 1e-10) {
            return Err(Error::DegenerateSymplectic { det });
        }
    }
    let mut lower = vec![-z_half_width];
    let mut upper = vec![z_half_width];
    lower.extend_from_slice(chart.lower());
    upper.extend_from_slice(chart.upper());
    let product = Chart::new(format!("R x {}", chart.name()), lower, upper)?;
    let dim = product.dim();
    ContactSystem::new(product, Arc::new(Contactified { lambda }), Arc::new(ScalarFn::constant(dim, -1.0)))
}

/// `Omega_c = exp(c s) (d eta + c ds ^ eta)` on `R x C`, coordinates `(s, x)`.
pub struct Symplectified {
    eta: Arc<dyn FormField>,
    calculus: Calculus,
    c: f64,
}

impl Symplectified {
    pub fn form_at(&self, x: &[f64]) -> Result<KForm> {
        let (s, y) = (x[0], &x[1..]);
        let eta = self.eta.eval(y).shifted(1);
        let d_eta = self.calculus.d(self.eta.as_ref(), y)?.shifted(1);
        let ds = KForm::elementary(x.len(), &[0])?;
        Ok((&d_eta + &(ds.wedge(&eta)? * self.c)) * (self.c * s).exp())
    }

    /// Determinant of `Omega_c`; nonzero iff `eta` is contact at `x[1..]`.
    pub fn determinant(&self, x: &[f64]) -> Result<f64> {
        Ok(self.form_at(x)?.to_matrix()?.determinant())
    }
}

impl FormField for Symplectified {
    fn dim(&self) -> usize {
        self.eta.dim() + 1
    }
    fn degree(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64]) -> KForm {
        self.form_at(x).unwrap_or_else(|_| {
            KForm::from_antisymmetric(&DMatrix::from_element(self.dim(), self.dim(), f64::NAN))
        })
    }
}

pub fn symplectify(chart: &Chart, eta: Arc<dyn FormField>, c: f64) -> Result<Symplectified> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("symplectification constant must be nonzero, got {c}")));
    }
    if eta.dim() != chart.dim() || eta.degree() != 1 {
        return Err(Error::DimensionMismatch { expected: chart.dim(), found: eta.dim() });
    }
    Ok(Symplectified { eta, calculus: Calculus::new(chart.clone()), c })
}

/// Energy level `|p|^2 / 2 = 1` of `T*R^2`, charted by `(q1, q2, phi)` with
/// `p = sqrt(2) (cos phi, sin phi)` and carrying `eta = i^* (p dq)`.
pub fn energy_level_system() -> Result<ContactSystem> {
    let r = 2f64.sqrt();
    let eta = crate::exterior::FormFn::new(3, 1, move |x| KForm::covector(&[r * x[2].cos(), r * x[2].sin(), 0.0]));
    let chart = Chart::new("energy-level", vec![-5.0, -5.0, -4.0], vec![5.0, 5.0, 4.0])?;
    ContactSystem::new(chart, Arc::new(eta), Arc::new(ScalarFn::constant(3, -1.0)))
}

/// Largest deviation between the Reeb field of the energy level (pushed into
/// `T*R^2`) and `H_H / Delta(H)` for `H = |p|^2 / 2`, over `points` of the
/// level chart.
pub fn energy_level_reeb_check(points: &[Vec<f64>]) -> Result<f64> {
    let system = energy_level_system()?;
    let r = 2f64.sqrt();
    let mut worst = 0.0_f64;
    for x in points {
        let xi = system.reeb(x)?;
        let phi = x[2];
        let pushed = [xi[0], xi[1], -r * phi.sin() * xi[2], r * phi.cos() * xi[2]];
        let p = [r * phi.cos(), r * phi.sin()];
        // symplectic field of |p|^2/2 is (p, 0); Delta(H) = |p|^2
        let norm = p[0] * p[0] + p[1] * p[1];
        let expected = [p[0] / norm, p[1] / norm, 0.0, 0.0];
        worst = worst.max(linalg::max_abs_diff(&pushed, &expected));
    }
    Ok(worst)
}
