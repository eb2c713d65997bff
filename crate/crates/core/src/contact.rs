//! Contact forms, Reeb fields and contact Hamiltonian vector fields.
//!
//! Everything is computed pointwise from the contact form `eta` and its
//! exterior derivative. The isomorphism `b(v) = i_v d(eta) + eta(v) eta` is a
//! dense `(2n+1) x (2n+1)` matrix; the Reeb field, the bivector and the
//! Hamiltonian field all come from solving against it, so no Darboux chart is
//! assumed. The closed Darboux formulas live in [`darboux`] as an independent
//! route.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::exterior::{Calculus, FormField, KForm, ScalarField, Stencil, VectorField};
use crate::linalg;

/// `|H|` below this is treated as the zero level set by the conformal system.
pub const ZERO_HAMILTONIAN: f64 = 1e-14;

/// A chart of dimension `2n+1` carrying a contact form and a Hamiltonian.
#[derive(Clone)]
pub struct ContactSystem {
    calculus: Calculus,
    n: usize,
    eta: Arc<dyn FormField>,
    hamiltonian: Arc<dyn ScalarField>,
    length_scale: f64,
}

impl std::fmt::Debug for ContactSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContactSystem").field("chart", self.calculus.chart()).field("n", &self.n).finish()
    }
}

impl ContactSystem {
    pub fn new(chart: Chart, eta: Arc<dyn FormField>, hamiltonian: Arc<dyn ScalarField>) -> Result<Self> {
        let dim = chart.dim();
        if dim < 3 || dim % 2 == 0 {
            return Err(Error::InvalidParameter(format!("contact chart must have odd dimension >= 3, got {dim}")));
        }
        if eta.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: eta.dim() });
        }
        if eta.degree() != 1 {
            return Err(Error::InvalidDegree { degree: eta.degree(), dim });
        }
        if hamiltonian.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: hamiltonian.dim() });
        }
        Ok(Self { calculus: Calculus::new(chart), n: (dim - 1) / 2, eta, hamiltonian, length_scale: 1.0 })
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.calculus = self.calculus.with_stencil(stencil);
        self
    }

    /// Typical coordinate length; sets the degeneracy threshold of [`Self::check_contact`].
    pub fn with_length_scale(mut self, scale: f64) -> Self {
        self.length_scale = scale;
        self
    }

    /// Same form and chart, different Hamiltonian.
    pub fn with_hamiltonian(&self, hamiltonian: Arc<dyn ScalarField>) -> Self {
        Self { hamiltonian, ..self.clone() }
    }

    pub fn chart(&self) -> &Chart {
        self.calculus.chart()
    }

    pub fn calculus(&self) -> &Calculus {
        &self.calculus
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn eta(&self) -> &Arc<dyn FormField> {
        &self.eta
    }

    pub fn hamiltonian(&self) -> &Arc<dyn ScalarField> {
        &self.hamiltonian
    }

    pub fn h(&self, x: &[f64]) -> f64 {
        self.hamiltonian.value(x)
    }

    pub fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.calculus.gradient(self.hamiltonian.as_ref(), x)
    }

    pub fn eta_at(&self, x: &[f64]) -> KForm {
        self.eta.eval(x)
    }

    pub fn d_eta_at(&self, x: &[f64]) -> Result<KForm> {
        self.calculus.d(self.eta.as_ref(), x)
    }

    /// `eta ^ (d eta)^n` at `x`.
    pub fn volume_at(&self, x: &[f64]) -> Result<KForm> {
        self.eta_at(x).wedge(&self.d_eta_at(x)?.power(self.n)?)
    }

    /// Coordinate coefficient of `eta ^ (d eta)^n`; zero means the contact
    /// condition fails at `x`.
    pub fn check_contact(&self, x: &[f64]) -> Result<f64> {
        self.volume_at(x)?.top_coefficient()
    }

    pub fn tol_degenerate(&self) -> f64 {
        1e-10 * self.length_scale.powi(self.n as i32 + 1)
    }

    pub fn is_contact_at(&self, x: &[f64]) -> Result<bool> {
        Ok(self.check_contact(x)?.abs() > self.tol_degenerate())
    }

    /// Matrix of `b(v) = i_v d(eta) + eta(v) eta` acting on vector components.
    pub fn morphism(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let eta = self.eta_at(x);
        let w = self.d_eta_at(x)?.to_matrix()?;
        let e = nalgebra::DVector::from_column_slice(eta.coeffs());
        Ok(w.transpose() + &e * e.transpose())
    }

    pub fn reeb(&self, x: &[f64]) -> Result<Vec<f64>> {
        linalg::solve(&self.morphism(x)?, self.eta_at(x).coeffs())
    }

    /// `b^{-1}(a)`: the vector field dual to the covector `a`.
    pub fn sharp(&self, a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        linalg::solve(&self.morphism(x)?, a)
    }

    /// Matrix `L[(i, j)] = Lambda(dx^i, dx^j) = d(eta)(b^{-1} dx^i, b^{-1} dx^j)`.
    pub fn lambda_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let p = linalg::inverse(&self.morphism(x)?)?;
        let w = self.d_eta_at(x)?.to_matrix()?;
        Ok(p.transpose() * w * p)
    }

    /// `Lambda(a, b)` for covectors `a`, `b`.
    pub fn lambda2(&self, a: &[f64], b: &[f64], x: &[f64]) -> Result<f64> {
        let sa = self.sharp(a, x)?;
        let sb = self.sharp(b, x)?;
        self.d_eta_at(x)?.evaluate(&[&sa, &sb])
    }

    /// `xi(f)` at `x`.
    pub fn reeb_derivative(&self, f: &dyn ScalarField, x: &[f64]) -> Result<f64> {
        Ok(linalg::dot(&self.calculus.gradient(f, x)?, &self.reeb(x)?))
    }

    /// `xi(H)` at `x`.
    pub fn reeb_h(&self, x: &[f64]) -> Result<f64> {
        self.reeb_derivative(self.hamiltonian.as_ref(), x)
    }

    /// `{f, g} = Lambda(df, dg) + f xi(g) - g xi(f)`.
    pub fn jacobi_bracket(&self, f: &dyn ScalarField, g: &dyn ScalarField, x: &[f64]) -> Result<f64> {
        let df = self.calculus.gradient(f, x)?;
        let dg = self.calculus.gradient(g, x)?;
        let xi = self.reeb(x)?;
        let lambda = self.lambda_matrix(x)?;
        let l = linalg::dot(&df, &linalg::mat_vec(&lambda, &dg));
        Ok(l + f.value(x) * linalg::dot(&dg, &xi) - g.value(x) * linalg::dot(&df, &xi))
    }

    /// `X_H = -i_{dH} Lambda - H xi`, componentwise
    /// `X^j = -sum_k dH_k Lambda(dx^k, dx^j) - H xi^j`.
    pub fn hamiltonian_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dh = self.grad_h(x)?;
        let lambda = self.lambda_matrix(x)?;
        let xi = self.reeb(x)?;
        let h = self.h(x);
        let contracted = linalg::mat_vec(&lambda.transpose(), &dh);
        Ok(contracted.iter().zip(&xi).map(|(c, r)| -c - h * r).collect())
    }

    /// Defects of the defining conditions `i_X d(eta) = dH - xi(H) eta` and
    /// `eta(X) = -H` for the computed `X_H`.
    pub fn hamiltonian_defect(&self, x: &[f64]) -> Result<(f64, f64)> {
        let xh = self.hamiltonian_field(x)?;
        let eta = self.eta_at(x);
        let lhs = self.d_eta_at(x)?.interior(&xh)?;
        let dh = self.grad_h(x)?;
        let xi_h = self.reeb_h(x)?;
        let rhs: Vec<f64> = dh.iter().zip(eta.coeffs()).map(|(g, e)| g - xi_h * e).collect();
        let first = linalg::max_abs_diff(lhs.coeffs(), &rhs);
        let second = (linalg::dot(eta.coeffs(), &xh) + self.h(x)).abs();
        Ok((first, second))
    }

    /// `X_H(sigma) - (n+1) xi(H)`; zero iff `exp(sigma) eta ^ (d eta)^n` is
    /// invariant at `x`.
    pub fn measure_residual(&self, sigma: &dyn ScalarField, x: &[f64]) -> Result<f64> {
        let xh = self.hamiltonian_field(x)?;
        let ds = self.calculus.gradient(sigma, x)?;
        Ok(linalg::dot(&xh, &ds) - (self.n as f64 + 1.0) * self.reeb_h(x)?)
    }

    /// The system carrying `eta_H = -eta / H` on `{H != 0}`.
    pub fn conformal(&self) -> ConformalSystem {
        let form = ConformalForm { eta: self.eta.clone(), hamiltonian: self.hamiltonian.clone() };
        let minus_one: Arc<dyn ScalarField> = Arc::new(crate::exterior::ScalarFn::constant(self.dim(), -1.0));
        let system = ContactSystem {
            calculus: self.calculus.clone(),
            n: self.n,
            eta: Arc::new(form),
            hamiltonian: minus_one,
            length_scale: self.length_scale,
        };
        ConformalSystem { original: self.clone(), system }
    }

    pub fn reeb_field(&self) -> ReebField {
        ReebField(self.clone())
    }

    pub fn hamiltonian_vector_field(&self) -> HamiltonianField {
        HamiltonianField(self.clone())
    }

    /// `nu = eta ^ (d eta)^n` as a field.
    pub fn volume_form(&self) -> VolumeForm {
        VolumeForm(self.clone())
    }
}

/// `-eta / H`, with a closed-form derivative whenever `eta` and `H` provide one:
/// `d(eta_H) = H^{-2} dH ^ eta - H^{-1} d(eta)`.
struct ConformalForm {
    eta: Arc<dyn FormField>,
    hamiltonian: Arc<dyn ScalarField>,
}

impl FormField for ConformalForm {
    fn dim(&self) -> usize {
        self.eta.dim()
    }
    fn degree(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> KForm {
        &self.eta.eval(x) * (-1.0 / self.hamiltonian.value(x))
    }
    fn derivative(&self, x: &[f64]) -> Option<KForm> {
        let d_eta = self.eta.derivative(x)?;
        let dh = self.hamiltonian.gradient(x)?;
        let h = self.hamiltonian.value(x);
        let first = KForm::covector(&dh).wedge(&self.eta.eval(x)).ok()?;
        Some(&(&first * (1.0 / (h * h))) - &(&d_eta * (1.0 / h)))
    }
}

/// The contact system `({H != 0}, eta_H)`; every evaluation checks `H(x) != 0`.
#[derive(Clone, Debug)]
pub struct ConformalSystem {
    original: ContactSystem,
    system: ContactSystem,
}

impl ConformalSystem {
    fn guard(&self, x: &[f64]) -> Result<()> {
        let h = self.original.h(x);
        if !h.is_finite() || h.abs() < ZERO_HAMILTONIAN {
            return Err(Error::ZeroHamiltonian);
        }
        Ok(())
    }

    pub fn system(&self) -> &ContactSystem {
        &self.system
    }

    pub fn check_contact(&self, x: &[f64]) -> Result<f64> {
        self.guard(x)?;
        self.system.check_contact(x)
    }

    pub fn reeb(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.guard(x)?;
        self.system.reeb(x)
    }

    pub fn eta_at(&self, x: &[f64]) -> Result<KForm> {
        self.guard(x)?;
        Ok(self.system.eta_at(x))
    }

    /// Ratio of the conformal contact volume to the original one.
    pub fn volume_ratio(&self, x: &[f64]) -> Result<f64> {
        Ok(self.check_contact(x)? / self.original.check_contact(x)?)
    }
}

pub struct ReebField(ContactSystem);

impl VectorField for ReebField {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.0.reeb(x).unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }
}

pub struct HamiltonianField(ContactSystem);

impl VectorField for HamiltonianField {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.0.hamiltonian_field(x).unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }
}

pub struct VolumeForm(ContactSystem);

impl FormField for VolumeForm {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn degree(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64]) -> KForm {
        self.0.volume_at(x).unwrap_or_else(|_| {
            KForm::from_coeffs(self.dim(), self.dim(), vec![f64::NAN]).expect("top form has one coefficient")
        })
    }
}

/// `sigma = -(n+1) ln|H|`, the weight making `exp(sigma) nu` invariant on `{H != 0}`.
pub struct ReebRegionWeight {
    hamiltonian: Arc<dyn ScalarField>,
    n: usize,
}

impl ReebRegionWeight {
    pub fn new(system: &ContactSystem) -> Self {
        Self { hamiltonian: system.hamiltonian().clone(), n: system.n() }
    }
}

impl ScalarField for ReebRegionWeight {
    fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        -(self.n as f64 + 1.0) * self.hamiltonian.value(x).abs().ln()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let h = self.hamiltonian.value(x);
        let k = -(self.n as f64 + 1.0) / h;
        self.hamiltonian.gradient(x).map(|g| g.iter().map(|v| k * v).collect())
    }
}

/// A volume `exp(sigma) * reference`, reference being the contact volume.
#[derive(Clone)]
pub struct MeasureDensity {
    sigma: Arc<dyn ScalarField>,
}

impl MeasureDensity {
    pub fn new(sigma: Arc<dyn ScalarField>) -> Self {
        Self { sigma }
    }

    pub fn sigma(&self) -> &Arc<dyn ScalarField> {
        &self.sigma
    }

    /// Signed coordinate density `exp(sigma) * coeff(eta ^ (d eta)^n)`.
    pub fn density(&self, system: &ContactSystem, x: &[f64]) -> Result<f64> {
        Ok(self.sigma.value(x).exp() * system.check_contact(x)?)
    }

    pub fn residual(&self, system: &ContactSystem, x: &[f64]) -> Result<f64> {
        system.measure_residual(self.sigma.as_ref(), x)
    }
}

/// Closed-form expressions in Darboux coordinates `(z, q^1..q^n, p_1..p_n)`
/// with `eta = dz - p_i dq^i`.
pub mod darboux {
    /// `X_H = H_{p_i} d/dq^i - (H_{q^i} + p_i H_z) d/dp_i + (p_i H_{p_i} - H) d/dz`.
    pub fn hamiltonian_field(n: usize, x: &[f64], h: f64, grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * n + 1];
        let hz = grad[0];
        let mut z_dot = -h;
        for i in 0..n {
            let (qi, pi) = (1 + i, 1 + n + i);
            out[qi] = grad[pi];
            out[pi] = -(grad[qi] + x[pi] * hz);
            z_dot += x[pi] * grad[pi];
        }
        out[0] = z_dot;
        out
    }

    /// Left minus right side of the invariant-measure PDE
    /// `H_{p_i} s_{q^i} - (H_{q^i} + p_i H_z) s_{p_i} + (p_i H_{p_i} - H) s_z = (n+1) H_z`.
    pub fn measure_pde_residual(n: usize, x: &[f64], h: f64, grad_h: &[f64], grad_sigma: &[f64]) -> f64 {
        let field = hamiltonian_field(n, x, h, grad_h);
        let lhs: f64 = field.iter().zip(grad_sigma).map(|(a, b)| a * b).sum();
        lhs - (n as f64 + 1.0) * grad_h[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{FormFn, ScalarFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn darboux_eta(n: usize) -> Arc<dyn FormField> {
        let dim = 2 * n + 1;
        Arc::new(
            FormFn::new(dim, 1, move |x| {
                let mut c = vec![0.0; dim];
                c[0] = 1.0;
                for i in 0..n {
                    c[1 + i] = -x[1 + n + i];
                }
                KForm::covector(&c)
            })
            .with_derivative(move |_| {
                let mut w = KForm::zero(dim, 2);
                for i in 0..n {
                    w = &w + &KForm::elementary(dim, &[1 + i, 1 + n + i]).unwrap();
                }
                w
            }),
        )
    }

    fn system(n: usize, h: ScalarFn) -> ContactSystem {
        let chart = Chart::cube("darboux", 2 * n + 1, 5.0).unwrap();
        ContactSystem::new(chart, darboux_eta(n), Arc::new(h)).unwrap()
    }

    /// `H = |p|^2/2 + q1 + q2 + gamma z` with closed-form gradient.
    fn dissipative(gamma: f64) -> ScalarFn {
        ScalarFn::new(5, move |x| 0.5 * (x[3] * x[3] + x[4] * x[4]) + x[1] + x[2] + gamma * x[0])
            .with_gradient(move |x| vec![gamma, 1.0, 1.0, x[3], x[4]])
    }

    #[test]
    fn darboux_volume_and_reeb() {
        let sys = system(2, ScalarFn::constant(5, -1.0));
        let x = [0.1, 0.2, -0.3, 0.7, -1.2];
        // n = 2: 2! times the sign of (z,q1,p1,q2,p2) -> (z,q1,q2,p1,p2)
        assert_eq!(sys.check_contact(&x).unwrap(), -2.0);
        let xi = sys.reeb(&x).unwrap();
        assert!(linalg::max_abs_diff(&xi, &[1.0, 0.0, 0.0, 0.0, 0.0]) < 1e-14);
    }

    #[test]
    fn degenerate_form_is_detected() {
        let chart = Chart::cube("c", 3, 1.0).unwrap();
        let dz = Arc::new(FormFn::constant(KForm::covector(&[1.0, 0.0, 0.0])));
        let sys = ContactSystem::new(chart, dz, Arc::new(ScalarFn::constant(3, -1.0))).unwrap();
        assert_eq!(sys.check_contact(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(!sys.is_contact_at(&[0.0, 0.0, 0.0]).unwrap());
        assert!(matches!(sys.reeb(&[0.0, 0.0, 0.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn scaled_form_has_scaled_reeb() {
        // the Reeb field of c * eta is xi / c
        let c = 2.5;
        let chart = Chart::cube("c", 3, 2.0).unwrap();
        let eta = Arc::new(FormFn::new(3, 1, move |x| KForm::covector(&[c, -c * x[2], 0.0])));
        let sys = ContactSystem::new(chart, eta, Arc::new(ScalarFn::constant(3, -1.0))).unwrap();
        let xi = sys.reeb(&[0.3, 0.1, -0.4]).unwrap();
        assert!(linalg::max_abs_diff(&xi, &[1.0 / c, 0.0, 0.0]) < 1e-9);
    }

    #[test]
    fn bivector_in_darboux_coordinates() {
        let sys = system(2, ScalarFn::constant(5, -1.0));
        let x = [0.4, -0.3, 0.2, 0.9, -0.6];
        let e = |i: usize| {
            let mut v = vec![0.0; 5];
            v[i] = 1.0;
            v
        };
        assert!((sys.lambda2(&e(1), &e(3), &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((sys.lambda2(&e(2), &e(4), &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((sys.lambda2(&e(0), &e(3), &x).unwrap() - x[3]).abs() < 1e-12);
        assert!((sys.lambda2(&e(0), &e(4), &x).unwrap() - x[4]).abs() < 1e-12);
        assert!(sys.lambda2(&e(2), &e(2), &x).unwrap().abs() < 1e-14);
        let a = [0.3, -1.0, 0.5, 0.2, 0.7];
        let b = [1.1, 0.4, -0.2, 0.6, -0.3];
        let ab = sys.lambda2(&a, &b, &x).unwrap();
        let ba = sys.lambda2(&b, &a, &x).unwrap();
        assert!((ab + ba).abs() < 1e-13);
    }

    #[test]
    fn bracket_with_minus_one_is_reeb_derivative() {
        let sys = system(2, dissipative(0.7));
        let f = ScalarFn::new(5, |x| (x[0] * x[3]).sin() + x[1] * x[4] * x[4]);
        let minus_one = ScalarFn::constant(5, -1.0);
        let x = [0.2, 0.5, -0.1, 0.3, 0.8];
        let bracket = sys.jacobi_bracket(&f, &minus_one, &x).unwrap();
        let xi_f = sys.reeb_derivative(&f, &x).unwrap();
        assert!((bracket - xi_f).abs() < 1e-9);
        assert!(sys.jacobi_bracket(&f, &f, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_field_of_minus_one_is_reeb() {
        let sys = system(2, ScalarFn::constant(5, -1.0));
        let x = [0.2, 0.5, -0.1, 0.3, 0.8];
        let xh = sys.hamiltonian_field(&x).unwrap();
        assert!(linalg::max_abs_diff(&xh, &sys.reeb(&x).unwrap()) < 1e-14);
    }

    #[test]
    fn dissipative_equations_of_motion() {
        let gamma = 0.7;
        let sys = system(2, dissipative(gamma));
        let x = [0.2, 0.5, -0.1, 0.3, 0.8];
        let h = sys.h(&x);
        let (p1, p2) = (x[3], x[4]);
        let expected = [p1 * p1 + p2 * p2 - h, p1, p2, -1.0 - gamma * p1, -1.0 - gamma * p2];
        assert!(linalg::max_abs_diff(&sys.hamiltonian_field(&x).unwrap(), &expected) < 1e-12);
        let (a, b) = sys.hamiltonian_defect(&x).unwrap();
        assert!(a < 1e-12 && b < 1e-12);
    }

    #[test]
    fn conformal_system() {
        let sys = system(2, dissipative(1.0));
        let conf = sys.conformal();
        // H(x) = 2 here: ratio (-1)^3 / 2^3
        let x = [2.0 - 0.5 * (0.04 + 0.09) - 0.5, 0.2, 0.3, 0.2, -0.3];
        assert!((sys.h(&x) - 2.0).abs() < 1e-14);
        assert!((conf.volume_ratio(&x).unwrap() + 0.125).abs() < 1e-12);
        let reeb = conf.reeb(&x).unwrap();
        assert!(linalg::max_abs_diff(&reeb, &sys.hamiltonian_field(&x).unwrap()) < 1e-10);
        let zero = [-(0.5 * (0.04 + 0.09) + 0.5), 0.2, 0.3, 0.2, -0.3];
        assert!(matches!(conf.reeb(&zero), Err(Error::ZeroHamiltonian)));
    }

    #[test]
    fn conformal_of_minus_one_is_original() {
        let sys = system(1, ScalarFn::constant(3, -1.0));
        let conf = sys.conformal();
        let x = [0.1, 0.2, 0.3];
        assert_eq!(conf.eta_at(&x).unwrap(), sys.eta_at(&x));
        assert_eq!(conf.check_contact(&x).unwrap(), sys.check_contact(&x).unwrap());
    }

    #[test]
    fn measure_residual_examples() {
        let gamma = 0.8;
        let sys = system(2, dissipative(gamma));
        let zero = ScalarFn::constant(5, 0.0);
        let x = [0.2, 0.5, -0.1, 0.3, 0.8];
        assert!((sys.measure_residual(&zero, &x).unwrap() + 3.0 * gamma).abs() < 1e-12);
        let weight = ReebRegionWeight::new(&sys);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if sys.h(&y).abs() < 0.1 {
                continue;
            }
            assert!(sys.measure_residual(&weight, &y).unwrap().abs() < 1e-8);
        }
        let trivial = system(2, ScalarFn::constant(5, -1.0));
        assert_eq!(trivial.measure_residual(&ScalarFn::constant(5, 3.0), &x).unwrap(), 0.0);
    }

    #[test]
    fn darboux_pde_matches_measure_residual() {
        let sys = system(2, dissipative(1.3));
        let sigma = ScalarFn::new(5, |x| x[0] * x[1] - x[3].powi(2) + x[4])
            .with_gradient(|x| vec![x[1], x[0], 0.0, -2.0 * x[3], 1.0]);
        let x = [0.2, 0.5, -0.1, 0.3, 0.8];
        let via_lambda = sys.measure_residual(&sigma, &x).unwrap();
        let pde = darboux::measure_pde_residual(
            2,
            &x,
            sys.h(&x),
            &sys.grad_h(&x).unwrap(),
            &sigma.gradient(&x).unwrap(),
        );
        assert!((via_lambda - pde).abs() < 1e-12);
    }
}
