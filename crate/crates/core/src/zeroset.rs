//! The zero level set `S = {H = 0}` as a graph `z = zeta(u)` over the
//! surface coordinates `u = (q, p)`.
//!
//! Conventions: `Omega` is stored as the matrix of values `Omega(e_i, e_j)`
//! and `i_Delta Omega` is the covector `w -> Omega(Delta, w)`, so the
//! Liouville field solves `Omega^T Delta = theta`.
//!
//! The height solver starts from a caller-supplied seed every time; there is
//! no warm-start cache, so every query is a pure function of its inputs.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chart::Chart;
use crate::contact::ContactSystem;
use crate::error::{Error, Result};
use crate::exterior::{Calculus, FormField, KForm, ScalarField, Stencil, VectorField};
use crate::linalg;

/// `|H|` accepted as a surface point.
pub const SURFACE_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// Below this `|dH/dz|` the level set is not a graph over `u`.
pub const TRANSVERSALITY_TOL: f64 = 1e-8;
/// Relative tolerance of the `X_H`-tangency assertion on `S`.
pub const TANGENCY_TOL: f64 = 1e-8;
/// Below this `|det Omega|` the induced 2-form is reported degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LevelSetChart {
    system: ContactSystem,
    surface: Calculus,
    z_seed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedStructure {
    /// `psi(u)` in the parent chart.
    pub point: Vec<f64>,
    pub theta: KForm,
    pub omega: KForm,
    pub liouville: Vec<f64>,
    pub det_omega: f64,
}

impl LevelSetChart {
    /// Coordinate 0 of the parent chart is the height `z`; the rest are `u`.
    pub fn new(system: ContactSystem) -> Result<Self> {
        let chart = system.chart();
        let surface = Chart::new(
            format!("{}|S", chart.name()),
            chart.lower()[1..].to_vec(),
            chart.upper()[1..].to_vec(),
        )?;
        let stencil = system.calculus().stencil();
        Ok(Self { system, surface: Calculus::new(surface).with_stencil(stencil), z_seed: 0.0 })
    }

    /// Starting height of every surface solve.
    pub fn with_seed(mut self, z: f64) -> Self {
        self.z_seed = z;
        self
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.surface = self.surface.with_stencil(stencil);
        self
    }

    pub fn system(&self) -> &ContactSystem {
        &self.system
    }

    pub fn surface_chart(&self) -> &Chart {
        self.surface.chart()
    }

    pub fn surface_calculus(&self) -> &Calculus {
        &self.surface
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// Dimension `2n` of `S`.
    pub fn dim(&self) -> usize {
        2 * self.system.n()
    }

    pub fn seed(&self) -> f64 {
        self.z_seed
    }

    fn lift(&self, z: f64, u: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(u.len() + 1);
        x.push(z);
        x.extend_from_slice(u);
        x
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.len() });
        }
        Ok(())
    }

    /// `psi(u) = (zeta(u), u)` by Newton in `z` from the chart seed.
    pub fn solve_surface(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.solve_surface_from(u, self.z_seed)
    }

    pub fn solve_surface_from(&self, u: &[f64], z0: f64) -> Result<Vec<f64>> {
        self.check_dim(u)?;
        let mut x = self.lift(z0, u);
        for iteration in 0..NEWTON_MAX_ITER {
            let h = self.system.h(&x);
            if !h.is_finite() {
                return Err(Error::NonFinite(format!("H at surface iterate {iteration}")));
            }
            if h.abs() <= SURFACE_TOL {
                let xi_h = self.system.reeb_h(&x)?;
                if xi_h.abs() < TRANSVERSALITY_TOL {
                    return Err(Error::Transversality { value: xi_h });
                }
                // One polishing step takes the residual to rounding level,
                // which keeps finite differences of zeta smooth.
                let dz = self.system.grad_h(&x)?[0];
                if dz.abs() >= TRANSVERSALITY_TOL {
                    let polished = self.lift(x[0] - h / dz, u);
                    if self.system.h(&polished).abs() <= h.abs() {
                        x = polished;
                    }
                }
                return Ok(x);
            }
            let dz = self.system.grad_h(&x)?[0];
            if dz.abs() < TRANSVERSALITY_TOL {
                return Err(Error::Transversality { value: dz });
            }
            x[0] -= h / dz;
        }
        Err(Error::NoConvergence { iterations: NEWTON_MAX_ITER, residual: self.system.h(&x).abs() })
    }

    /// `D psi` at a point `x = psi(u)`: rows are parent axes, columns surface
    /// axes. The height row is `-grad_u H / dH/dz`.
    pub fn inclusion_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.system.grad_h(x)?;
        if g[0].abs() < TRANSVERSALITY_TOL {
            return Err(Error::Transversality { value: g[0] });
        }
        let m = self.dim();
        Ok(DMatrix::from_fn(m + 1, m, |r, c| match r {
            0 => -g[c + 1] / g[0],
            r if r == c + 1 => 1.0,
            _ => 0.0,
        }))
    }

    fn theta_at(&self, x: &[f64]) -> Result<KForm> {
        self.system.eta_at(x).pullback_linear(&self.inclusion_jacobian(x)?)
    }

    /// `theta = psi^* eta` at `u`.
    pub fn theta(&self, u: &[f64]) -> Result<KForm> {
        self.theta_at(&self.solve_surface(u)?)
    }

    /// `Omega = d theta` by central differences on the surface chart.
    pub fn omega(&self, u: &[f64]) -> Result<KForm> {
        let x = self.solve_surface(u)?;
        self.omega_near(u, x[0])
    }

    fn omega_near(&self, u: &[f64], z0: f64) -> Result<KForm> {
        let field = SurfaceTheta { chart: self, z0 };
        self.surface.d(&field, u)
    }

    /// `psi^*(d eta)` at `u`; equals [`Self::omega`] by naturality of `d`.
    pub fn omega_pullback(&self, u: &[f64]) -> Result<KForm> {
        let x = self.solve_surface(u)?;
        self.system.d_eta_at(&x)?.pullback_linear(&self.inclusion_jacobian(&x)?)
    }

    pub fn induced(&self, u: &[f64]) -> Result<InducedStructure> {
        let x = self.solve_surface(u)?;
        let theta = self.theta_at(&x)?;
        let omega = self.omega_near(u, x[0])?;
        let det_omega = omega.to_matrix()?.determinant();
        let liouville = liouville_field(&theta, &omega)?;
        Ok(InducedStructure { point: x, theta, omega, liouville, det_omega })
    }

    /// `xi(H)` at `psi(u)`.
    pub fn reeb_h(&self, u: &[f64]) -> Result<f64> {
        self.system.reeb_h(&self.solve_surface(u)?)
    }

    /// Surface components of `X_H(psi(u))`. The height component is checked
    /// against `D zeta` applied to them (tangency of `X_H` to `S`).
    pub fn restricted_field(&self, u: &[f64]) -> Result<Vec<f64>> {
        let x = self.solve_surface(u)?;
        let xh = self.system.hamiltonian_field(&x)?;
        let jac = self.inclusion_jacobian(&x)?;
        let along: f64 = (0..self.dim()).map(|c| jac[(0, c)] * xh[c + 1]).sum();
        let defect = (xh[0] - along).abs();
        if defect > TANGENCY_TOL * linalg::max_abs(&xh).max(1.0) {
            return Err(Error::Tangency { defect });
        }
        Ok(xh[1..].to_vec())
    }

    /// `X_{H|S}(sigma) - n xi(H)`; zero iff `exp(sigma)/xi(H) (d theta)^n`
    /// is invariant under `X_{H|S}`.
    pub fn sigma_residual(&self, sigma: &dyn ScalarField, u: &[f64]) -> Result<f64> {
        let field = self.restricted_field(u)?;
        let ds = self.surface.gradient(sigma, u)?;
        Ok(linalg::dot(&field, &ds) - self.n() as f64 * self.reeb_h(u)?)
    }

    /// Coordinate density of `exp(sigma)/xi(H) (d theta)^n` at `u`.
    pub fn measure_density(&self, sigma: &dyn ScalarField, u: &[f64]) -> Result<f64> {
        let xi_h = self.reeb_h(u)?;
        if xi_h == 0.0 {
            return Err(Error::Transversality { value: 0.0 });
        }
        let top = self.omega(u)?.power(self.n())?.top_coefficient()?;
        Ok(sigma.value(u).exp() / xi_h * top)
    }

    /// Coordinate density of `exp(sigma) (d theta)^n` at `u`.
    pub fn liouville_density(&self, sigma: &dyn ScalarField, u: &[f64]) -> Result<f64> {
        let top = self.omega(u)?.power(self.n())?.top_coefficient()?;
        Ok(sigma.value(u).exp() * top)
    }

    pub fn restricted_vector_field(&self) -> RestrictedField {
        RestrictedField(self.clone())
    }

    /// `Z = X_{H|S} / xi(H)`.
    pub fn reparametrized_field(&self) -> ReparametrizedField {
        ReparametrizedField(self.clone())
    }

    pub fn liouville_vector_field(&self) -> LiouvilleField {
        LiouvilleField(self.clone())
    }

    /// Zeros of `X_{H|S}` found from a grid of seeds inside `bounds`.
    pub fn find_equilibria(&self, bounds: &Chart, per_axis: usize) -> EquilibriumReport {
        let field = self.restricted_vector_field();
        find_equilibria(&field, &SearchRegion::new(bounds.clone()), per_axis)
    }
}

struct SurfaceTheta<'a> {
    chart: &'a LevelSetChart,
    z0: f64,
}

impl FormField for SurfaceTheta<'_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, u: &[f64]) -> KForm {
        self.chart
            .solve_surface_from(u, self.z0)
            .and_then(|x| self.chart.theta_at(&x))
            .unwrap_or_else(|_| KForm::covector(&vec![f64::NAN; self.chart.dim()]))
    }
}

/// Solves `i_Delta Omega = theta`.
pub fn liouville_field(theta: &KForm, omega: &KForm) -> Result<Vec<f64>> {
    let m = omega.to_matrix()?;
    let det = m.determinant();
    if !(det.abs() > DEGENERACY_TOL) {
        return Err(Error::DegenerateSymplectic { det });
    }
    linalg::solve(&m.transpose(), theta.coeffs())
}

/// `u -> X_{H|S}(u)`; failures become NaN.
#[derive(Debug, Clone)]
pub struct RestrictedField(pub LevelSetChart);

/// `u -> X_{H|S}(u) / xi(H)(psi(u))`; failures become NaN.
#[derive(Debug, Clone)]
pub struct ReparametrizedField(pub LevelSetChart);

/// `u -> Delta(u)`; failures become NaN.
#[derive(Debug, Clone)]
pub struct LiouvilleField(pub LevelSetChart);

fn or_nan(v: Result<Vec<f64>>, dim: usize) -> Vec<f64> {
    v.unwrap_or_else(|_| vec![f64::NAN; dim])
}

impl VectorField for RestrictedField {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, u: &[f64]) -> Vec<f64> {
        or_nan(self.0.restricted_field(u), self.dim())
    }
}

impl VectorField for ReparametrizedField {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, u: &[f64]) -> Vec<f64> {
        let v = self.0.restricted_field(u).and_then(|f| {
            let xi_h = self.0.reeb_h(u)?;
            Ok(f.iter().map(|c| c / xi_h).collect())
        });
        or_nan(v, self.dim())
    }
}

impl VectorField for LiouvilleField {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, u: &[f64]) -> Vec<f64> {
        or_nan(self.0.induced(u).map(|s| s.liouville), self.dim())
    }
}

/// Where equilibria are looked for.
pub struct SearchRegion<'a> {
    pub bounds: Chart,
    /// Points failing this are discarded (e.g. a tube around an excluded set).
    pub admissible: Option<&'a dyn Fn(&[f64]) -> bool>,
}

impl<'a> SearchRegion<'a> {
    pub fn new(bounds: Chart) -> Self {
        Self { bounds, admissible: None }
    }

    pub fn with_admissible(mut self, admissible: &'a dyn Fn(&[f64]) -> bool) -> Self {
        self.admissible = Some(admissible);
        self
    }

    fn accepts(&self, x: &[f64]) -> bool {
        self.bounds.contains(x) && self.admissible.is_none_or(|f| f(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub roots: Vec<Vec<f64>>,
    /// `max |field|` at each root.
    pub residuals: Vec<f64>,
    pub seeds: usize,
}

impl EquilibriumReport {
    /// A zero of the field rules out any invariant volume.
    pub fn obstruction_found(&self) -> bool {
        !self.roots.is_empty()
    }

    /// An empty search is not a proof that an invariant measure exists.
    pub fn verdict(&self) -> &'static str {
        if self.obstruction_found() {
            "obstruction found"
        } else {
            "no obstruction found"
        }
    }
}

pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// Grid-seeded damped Newton (minimum-norm steps) on `field = 0`.
pub fn find_equilibria(field: &dyn VectorField, region: &SearchRegion, per_axis: usize) -> EquilibriumReport {
    let seeds = region.bounds.grid(per_axis);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut residuals = Vec::new();
    for seed in &seeds {
        let Some((x, r)) = newton_root(field, seed) else { continue };
        if r > EQUILIBRIUM_TOL || !region.accepts(&x) {
            continue;
        }
        if roots.iter().any(|y| linalg::max_abs_diff(y, &x) <= 1e-6) {
            continue;
        }
        roots.push(x);
        residuals.push(r);
    }
    EquilibriumReport { roots, residuals, seeds: seeds.len() }
}

fn newton_root(field: &dyn VectorField, seed: &[f64]) -> Option<(Vec<f64>, f64)> {
    let norm = |v: &[f64]| if v.iter().all(|c| c.is_finite()) { linalg::max_abs(v) } else { f64::INFINITY };
    let mut x = seed.to_vec();
    let mut f = field.eval(&x);
    let mut r = norm(&f);
    for _ in 0..60 {
        if !r.is_finite() || r <= 1e-14 {
            break;
        }
        let jac = DMatrix::from_fn(x.len(), x.len(), |_, _| 0.0);
        let jac = (0..x.len()).fold(jac, |mut jac, c| {
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut y = x.clone();
            y[c] += h;
            let plus = field.eval(&y);
            y[c] -= 2.0 * h;
            let minus = field.eval(&y);
            for row in 0..x.len() {
                jac[(row, c)] = (plus[row] - minus[row]) / (2.0 * h);
            }
            jac
        });
        let step = linalg::least_squares_step(&jac, &f)?;
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            let ft = field.eval(&trial);
            let rt = norm(&ft);
            if rt < r {
                x = trial;
                f = ft;
                r = rt;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    r.is_finite().then_some((x, r))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::exterior::{FormFn, ScalarFn, VectorFn};

    fn darboux(n: usize) -> Arc<dyn FormField> {
        let dim = 2 * n + 1;
        let eta = move |x: &[f64]| {
            let mut c = vec![0.0; dim];
            c[0] = 1.0;
            for i in 0..n {
                c[1 + i] = -x[1 + n + i];
            }
            KForm::covector(&c)
        };
        let d = move |_: &[f64]| {
            let mut w = DMatrix::zeros(dim, dim);
            for i in 0..n {
                w[(1 + i, 1 + n + i)] = 1.0;
                w[(1 + n + i, 1 + i)] = -1.0;
            }
            KForm::from_antisymmetric(&w)
        };
        Arc::new(FormFn::new(dim, 1, eta).with_derivative(d))
    }

    fn lsc(h: ScalarFn) -> LevelSetChart {
        let chart = Chart::cube("c", 5, 10.0).unwrap();
        LevelSetChart::new(ContactSystem::new(chart, darboux(2), Arc::new(h)).unwrap()).unwrap()
    }

    fn dissipative(gamma: f64) -> LevelSetChart {
        lsc(ScalarFn::new(5, move |x| 0.5 * (x[3] * x[3] + x[4] * x[4]) + x[1] + x[2] + gamma * x[0])
            .with_gradient(move |x| vec![gamma, 1.0, 1.0, x[3], x[4]]))
    }

    #[test]
    fn pure_height_surface() {
        let s = lsc(ScalarFn::new(5, |x| x[0]).with_gradient(|_| vec![1.0, 0.0, 0.0, 0.0, 0.0]));
        let x = s.with_seed(3.0).solve_surface(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn tangent_reeb_field_is_rejected() {
        let s = lsc(ScalarFn::new(5, |x| x[0] * x[0]).with_gradient(|x| vec![2.0 * x[0], 0.0, 0.0, 0.0, 0.0]));
        assert!(matches!(s.solve_surface(&[0.0; 4]), Err(Error::Transversality { .. })));
        let s = lsc(ScalarFn::new(5, |x| x[1] - 1.0).with_gradient(|_| vec![0.0, 1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(s.solve_surface(&[0.0; 4]), Err(Error::Transversality { .. })));
    }

    #[test]
    fn dissipative_height_and_theta() {
        let gamma = 2.0;
        let s = dissipative(gamma);
        let u = [0.3, -0.7, 1.1, 0.4];
        let x = s.solve_surface(&u).unwrap();
        let expected = -(0.5 * (1.1f64.powi(2) + 0.4f64.powi(2)) + 0.3 - 0.7) / gamma;
        assert!((x[0] - expected).abs() <= 1e-12);
        let theta = s.theta(&u).unwrap();
        let oracle = [-(1.0 / gamma + 1.1), -(1.0 / gamma + 0.4), -1.1 / gamma, -0.4 / gamma];
        assert!(linalg::max_abs_diff(theta.coeffs(), &oracle) < 1e-12);
    }

    #[test]
    fn induced_structure_and_liouville_identity() {
        let gamma = 0.5;
        let s = dissipative(gamma);
        let u = [0.2, 0.1, -0.6, 0.9];
        let ind = s.induced(&u).unwrap();
        let m = ind.omega.to_matrix().unwrap();
        assert_eq!(&m + m.transpose(), DMatrix::zeros(4, 4));
        assert!((ind.det_omega - 1.0).abs() < 1e-8);
        let pulled = s.omega_pullback(&u).unwrap();
        assert!(linalg::max_abs_diff(ind.omega.coeffs(), pulled.coeffs()) < 1e-8);
        let xs = s.restricted_field(&u).unwrap();
        let defect: Vec<f64> = xs.iter().zip(&ind.liouville).map(|(a, d)| a + gamma * d).collect();
        assert!(linalg::max_abs(&defect) < 1e-7);
        // X_{H|S} = sum p dq - (gamma p + 1) dp
        let expected = [-0.6, 0.9, -(gamma * -0.6 + 1.0), -(gamma * 0.9 + 1.0)];
        assert!(linalg::max_abs_diff(&xs, &expected) < 1e-10);
    }

    #[test]
    fn sigma_residual_and_delta_form() {
        let gamma = 1.0;
        let s = dissipative(gamma);
        let sigma = ScalarFn::new(4, move |u| -gamma * (u[2] + u[3]) - gamma * gamma * (u[0] + u[1]))
            .with_gradient(move |_| vec![-gamma * gamma, -gamma * gamma, -gamma, -gamma]);
        let u = [0.4, -0.3, 0.2, 0.7];
        assert!(s.sigma_residual(&sigma, &u).unwrap().abs() <= 1e-12);
        let zero = ScalarFn::constant(4, 0.0);
        assert!((s.sigma_residual(&zero, &u).unwrap() + 2.0 * gamma).abs() < 1e-12);
        let density = s.measure_density(&sigma, &u).unwrap();
        let shifted = ScalarFn::new(4, move |u| sigma.value(u) + 0.5);
        let ratio = s.measure_density(&shifted, &u).unwrap() / density;
        assert!((ratio - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn equilibria_of_linear_fields() {
        let field = VectorFn::new(2, |x| vec![x[1] - 1.0, -x[0] - 0.5 * x[1]]);
        let region = SearchRegion::new(Chart::cube("b", 2, 3.0).unwrap());
        let report = find_equilibria(&field, &region, 3);
        assert_eq!(report.roots.len(), 1);
        assert!(linalg::max_abs_diff(&report.roots[0], &[-0.5, 1.0]) < 1e-10);
        assert_eq!(report.verdict(), "obstruction found");
        let shifted = VectorFn::new(2, |x| vec![x[0] - 10.0, x[1]]);
        let report = find_equilibria(&shifted, &region, 3);
        assert!(!report.obstruction_found());
        assert_eq!(report.verdict(), "no obstruction found");
    }

    #[test]
    fn dilation_has_no_admissible_zero() {
        let field = VectorFn::new(2, |x| vec![0.0, x[1]]);
        let admissible = |x: &[f64]| x[1].abs() >= 1e-3;
        let region = SearchRegion::new(Chart::cube("b", 2, 2.0).unwrap()).with_admissible(&admissible);
        assert!(find_equilibria(&field, &region, 4).roots.is_empty());
    }
}
