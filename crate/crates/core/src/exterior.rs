//! Pointwise exterior calculus on a single coordinate chart.
//!
//! A [`KForm`] stores the coefficients of a k-form at one point over the
//! strictly increasing index tuples of length `k`, in lexicographic order.
//! The wedge product follows the shuffle (determinant) convention with no
//! factorial normalisation, so `(dx0 ^ dx1)(e0, e1) = 1` and the evaluation of
//! a form on `k` vectors is `sum_I c_I det(v[I])`.
//!
//! Derivatives of fields go through [`Calculus`], which pairs a chart with a
//! finite-difference [`Stencil`]. Closed-form derivatives supplied by a field
//! always take precedence over finite differences.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chart::Chart;
use crate::error::{Error, Result};

/// Strictly increasing index tuples of length `k` drawn from `0..dim`, in
/// lexicographic order.
pub fn combinations(dim: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, dim: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            if dim - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, dim, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= dim {
        rec(0, dim, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Sorts `idx` in place and returns the permutation sign, or 0 on a repeat.
fn sort_with_sign(idx: &mut [usize]) -> i32 {
    let mut sign = 1;
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if idx.windows(2).any(|w| w[0] == w[1]) {
        0
    } else {
        sign
    }
}

fn small_det(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.determinant(),
    }
}

/// Alternating k-form at a point, dense over increasing multi-indices.
#[derive(Debug, Clone, PartialEq)]
pub struct KForm {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl KForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        assert!(degree <= dim, "degree {degree} exceeds dimension {dim}");
        Self { dim, degree, coeffs: vec![0.0; binomial(dim, degree)] }
    }

    pub fn from_coeffs(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > dim {
            return Err(Error::InvalidDegree { degree, dim });
        }
        let expected = binomial(dim, degree);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: coeffs.len() });
        }
        Ok(Self { dim, degree, coeffs })
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self { dim, degree: 0, coeffs: vec![value] }
    }

    /// The 1-form `sum a_i dx^i`.
    pub fn covector(a: &[f64]) -> Self {
        Self { dim: a.len(), degree: 1, coeffs: a.to_vec() }
    }

    /// `dx^{i_1} ^ ... ^ dx^{i_k}` for indices in any order; repeats give zero.
    pub fn elementary(dim: usize, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad + 1 });
        }
        let mut form = Self::zero(dim, indices.len());
        let mut sorted = indices.to_vec();
        let sign = sort_with_sign(&mut sorted);
        if sign != 0 {
            let pos = form.position(&sorted);
            form.coeffs[pos] = sign as f64;
        }
        Ok(form)
    }

    /// 2-form with `w(e_i, e_j) = m[(i, j)]`, read from the strict upper triangle.
    pub fn from_antisymmetric(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let coeffs = combinations(dim, 2).iter().map(|c| m[(c[0], c[1])]).collect();
        Self { dim, degree: 2, coeffs }
    }

    /// Matrix `W[(i, j)] = w(e_i, e_j)` of a 2-form.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.degree != 2 {
            return Err(Error::InvalidDegree { degree: self.degree, dim: self.dim });
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (c, v) in combinations(self.dim, 2).iter().zip(&self.coeffs) {
            m[(c[0], c[1])] = *v;
            m[(c[1], c[0])] = -*v;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn position(&self, sorted: &[usize]) -> usize {
        combinations(self.dim, self.degree)
            .binary_search_by(|c| c.as_slice().cmp(sorted))
            .expect("index tuple belongs to the basis")
    }

    /// Signed component on an arbitrary index tuple.
    pub fn component(&self, indices: &[usize]) -> f64 {
        assert_eq!(indices.len(), self.degree);
        let mut sorted = indices.to_vec();
        match sort_with_sign(&mut sorted) {
            0 => 0.0,
            s => s as f64 * self.coeffs[self.position(&sorted)],
        }
    }

    /// Value of the form on `vectors.len() == degree` tangent vectors.
    pub fn evaluate(&self, vectors: &[&[f64]]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(Error::DimensionMismatch { expected: self.degree, found: vectors.len() });
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        let k = self.degree;
        let mut total = 0.0;
        for (c, coeff) in combinations(self.dim, k).iter().zip(&self.coeffs) {
            if *coeff == 0.0 {
                continue;
            }
            let m = DMatrix::from_fn(k, k, |a, b| vectors[b][c[a]]);
            total += coeff * small_det(&m);
        }
        Ok(total)
    }

    pub fn wedge(&self, other: &KForm) -> Result<KForm> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let degree = self.degree + other.degree;
        if degree > self.dim {
            return Err(Error::DegreeOverflow { left: self.degree, right: other.degree, dim: self.dim });
        }
        let mut out = KForm::zero(self.dim, degree);
        let targets = combinations(self.dim, degree);
        let left = combinations(self.dim, self.degree);
        let right = combinations(self.dim, other.degree);
        for (i, a) in left.iter().enumerate() {
            let ca = self.coeffs[i];
            if ca == 0.0 {
                continue;
            }
            for (j, b) in right.iter().enumerate() {
                let cb = other.coeffs[j];
                if cb == 0.0 {
                    continue;
                }
                let mut merged: Vec<usize> = a.iter().chain(b).copied().collect();
                let sign = sort_with_sign(&mut merged);
                if sign == 0 {
                    continue;
                }
                let pos = targets.binary_search(&merged).expect("merged tuple is a basis element");
                out.coeffs[pos] += sign as f64 * ca * cb;
            }
        }
        Ok(out)
    }

    /// `self ^ self ^ ... ^ self` (`k` factors); the 0-th power is the constant 1.
    pub fn power(&self, k: usize) -> Result<KForm> {
        let mut acc = KForm::scalar(self.dim, 1.0);
        for _ in 0..k {
            acc = acc.wedge(self)?;
        }
        Ok(acc)
    }

    /// Interior product `(i_v w)(u_2, ..) = w(v, u_2, ..)`.
    pub fn interior(&self, v: &[f64]) -> Result<KForm> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        if self.degree == 0 {
            return Err(Error::InvalidDegree { degree: 0, dim: self.dim });
        }
        let mut out = KForm::zero(self.dim, self.degree - 1);
        for (pos, j) in combinations(self.dim, self.degree - 1).iter().enumerate() {
            let mut acc = 0.0;
            for (i, vi) in v.iter().enumerate() {
                if *vi == 0.0 || j.contains(&i) {
                    continue;
                }
                let mut idx = Vec::with_capacity(self.degree);
                idx.push(i);
                idx.extend_from_slice(j);
                acc += vi * self.component(&idx);
            }
            out.coeffs[pos] = acc;
        }
        Ok(out)
    }

    /// Pullback along a linear map with Jacobian `jac` (rows: target axes,
    /// columns: source axes). `self` lives on the target.
    pub fn pullback_linear(&self, jac: &DMatrix<f64>) -> Result<KForm> {
        if jac.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: jac.nrows() });
        }
        let source = jac.ncols();
        if self.degree > source {
            return Err(Error::InvalidDegree { degree: self.degree, dim: source });
        }
        let k = self.degree;
        let target_basis = combinations(self.dim, k);
        let coeffs = combinations(source, k)
            .iter()
            .map(|cols| {
                target_basis
                    .iter()
                    .zip(&self.coeffs)
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(rows, c)| c * small_det(&DMatrix::from_fn(k, k, |a, b| jac[(rows[a], cols[b])])))
                    .sum()
            })
            .collect();
        Ok(KForm { dim: source, degree: k, coeffs })
    }

    /// Coefficient of a top-degree form relative to `dx^0 ^ ... ^ dx^{dim-1}`.
    pub fn top_coefficient(&self) -> Result<f64> {
        if self.degree != self.dim {
            return Err(Error::InvalidDegree { degree: self.degree, dim: self.dim });
        }
        Ok(self.coeffs[0])
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Re-embeds a form on `dim` coordinates into `dim + offset` coordinates,
    /// shifting every index by `offset` (the new leading axes carry nothing).
    pub fn shifted(&self, offset: usize) -> KForm {
        let dim = self.dim + offset;
        let mut out = KForm::zero(dim, self.degree);
        let basis = combinations(dim, self.degree);
        for (c, v) in combinations(self.dim, self.degree).iter().zip(&self.coeffs) {
            let idx: Vec<usize> = c.iter().map(|i| i + offset).collect();
            let pos = basis.binary_search(&idx).expect("shifted tuple is a basis element");
            out.coeffs[pos] = *v;
        }
        out
    }

    fn assert_compatible(&self, other: &KForm) {
        assert_eq!((self.dim, self.degree), (other.dim, other.degree), "incompatible forms");
    }
}

impl Add for &KForm {
    type Output = KForm;
    fn add(self, rhs: &KForm) -> KForm {
        self.assert_compatible(rhs);
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        KForm { dim: self.dim, degree: self.degree, coeffs }
    }
}

impl Sub for &KForm {
    type Output = KForm;
    fn sub(self, rhs: &KForm) -> KForm {
        self.assert_compatible(rhs);
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        KForm { dim: self.dim, degree: self.degree, coeffs }
    }
}

impl Mul<f64> for &KForm {
    type Output = KForm;
    fn mul(self, rhs: f64) -> KForm {
        KForm { dim: self.dim, degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * rhs).collect() }
    }
}

impl Neg for &KForm {
    type Output = KForm;
    fn neg(self) -> KForm {
        self * -1.0
    }
}

impl Add for KForm {
    type Output = KForm;
    fn add(self, rhs: KForm) -> KForm {
        &self + &rhs
    }
}

impl Sub for KForm {
    type Output = KForm;
    fn sub(self, rhs: KForm) -> KForm {
        &self - &rhs
    }
}

impl Mul<f64> for KForm {
    type Output = KForm;
    fn mul(self, rhs: f64) -> KForm {
        &self * rhs
    }
}

// ---------------------------------------------------------------------------
// Fields

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Closed-form gradient, when known.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    /// Closed-form Jacobian `d eval_i / d x_j`, when known.
    fn jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

pub trait FormField: Send + Sync {
    fn dim(&self) -> usize;
    fn degree(&self) -> usize;
    fn eval(&self, x: &[f64]) -> KForm;
    /// Closed-form exterior derivative, when known.
    fn derivative(&self, _x: &[f64]) -> Option<KForm> {
        None
    }
}

macro_rules! forward_field_impls {
    ($($ptr:ty),*) => {$(
        impl<T: ScalarField + ?Sized> ScalarField for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn value(&self, x: &[f64]) -> f64 { (**self).value(x) }
            fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> { (**self).gradient(x) }
        }
    )*};
}
forward_field_impls!(&T, Arc<T>, Box<T>);

macro_rules! forward_vector_impls {
    ($($ptr:ty),*) => {$(
        impl<T: VectorField + ?Sized> VectorField for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn eval(&self, x: &[f64]) -> Vec<f64> { (**self).eval(x) }
            fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> { (**self).jacobian(x) }
        }
        impl<T: FormField + ?Sized> FormField for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn degree(&self) -> usize { (**self).degree() }
            fn eval(&self, x: &[f64]) -> KForm { (**self).eval(x) }
            fn derivative(&self, x: &[f64]) -> Option<KForm> { (**self).derivative(x) }
        }
    )*};
}
forward_vector_impls!(&T, Arc<T>, Box<T>);

type ScalarFnBox = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VecFnBox = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatFnBox = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type FormFnBox = Box<dyn Fn(&[f64]) -> KForm + Send + Sync>;

/// Scalar field from closures.
pub struct ScalarFn {
    dim: usize,
    value: ScalarFnBox,
    gradient: Option<VecFnBox>,
}

impl ScalarFn {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { dim, value: Box::new(value), gradient: None }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c).with_gradient(move |_| vec![0.0; dim])
    }
}

impl ScalarField for ScalarFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

/// Vector field from closures.
pub struct VectorFn {
    dim: usize,
    eval: VecFnBox,
    jacobian: Option<MatFnBox>,
}

impl VectorFn {
    pub fn new(dim: usize, eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { dim, eval: Box::new(eval), jacobian: None }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }

    /// Constant coordinate field.
    pub fn constant(v: Vec<f64>) -> Self {
        let dim = v.len();
        Self::new(dim, move |_| v.clone()).with_jacobian(move |_| DMatrix::zeros(dim, dim))
    }

    /// Linear field `x -> a x`.
    pub fn linear(a: DMatrix<f64>) -> Self {
        let dim = a.nrows();
        let b = a.clone();
        Self::new(dim, move |x| crate::linalg::mat_vec(&a, x)).with_jacobian(move |_| b.clone())
    }
}

impl VectorField for VectorFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}

/// Form field from closures.
pub struct FormFn {
    dim: usize,
    degree: usize,
    eval: FormFnBox,
    derivative: Option<FormFnBox>,
}

impl FormFn {
    pub fn new(dim: usize, degree: usize, eval: impl Fn(&[f64]) -> KForm + Send + Sync + 'static) -> Self {
        Self { dim, degree, eval: Box::new(eval), derivative: None }
    }

    pub fn with_derivative(mut self, d: impl Fn(&[f64]) -> KForm + Send + Sync + 'static) -> Self {
        self.derivative = Some(Box::new(d));
        self
    }

    pub fn constant(form: KForm) -> Self {
        let (dim, degree) = (form.dim(), form.degree());
        let mut field = Self::new(dim, degree, move |_| form.clone());
        if degree < dim {
            field = field.with_derivative(move |_| KForm::zero(dim, degree + 1));
        }
        field
    }
}

impl FormField for FormFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn degree(&self) -> usize {
        self.degree
    }
    fn eval(&self, x: &[f64]) -> KForm {
        (self.eval)(x)
    }
    fn derivative(&self, x: &[f64]) -> Option<KForm> {
        self.derivative.as_ref().map(|d| d(x))
    }
}

/// A scalar field viewed as a 0-form.
pub struct ScalarForm<S>(pub S);

impl<S: ScalarField> FormField for ScalarForm<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn degree(&self) -> usize {
        0
    }
    fn eval(&self, x: &[f64]) -> KForm {
        KForm::scalar(self.0.dim(), self.0.value(x))
    }
    fn derivative(&self, x: &[f64]) -> Option<KForm> {
        self.0.gradient(x).map(|g| KForm::covector(&g))
    }
}

/// `x -> i_{X(x)} F(x)`.
struct Contracted<'a> {
    field: &'a dyn VectorField,
    form: &'a dyn FormField,
}

impl FormField for Contracted<'_> {
    fn dim(&self) -> usize {
        self.form.dim()
    }
    fn degree(&self) -> usize {
        self.form.degree() - 1
    }
    fn eval(&self, x: &[f64]) -> KForm {
        self.form
            .eval(x)
            .interior(&self.field.eval(x))
            .unwrap_or_else(|_| nan_form(self.dim(), self.degree()))
    }
}

fn nan_form(dim: usize, degree: usize) -> KForm {
    KForm { dim, degree, coeffs: vec![f64::NAN; binomial(dim, degree)] }
}

// ---------------------------------------------------------------------------
// Finite differences

/// Finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub h: f64,
    /// Combine steps `h` and `h/2` to cancel the `h^2` error term.
    pub richardson: bool,
}

impl Default for Stencil {
    fn default() -> Self {
        Self { h: 1e-5, richardson: false }
    }
}

impl Stencil {
    pub fn new(h: f64) -> Self {
        Self { h, richardson: false }
    }
}

/// Chart-aware differential operators.
#[derive(Debug, Clone)]
pub struct Calculus {
    chart: Chart,
    stencil: Stencil,
}

impl Calculus {
    pub fn new(chart: Chart) -> Self {
        Self { chart, stencil: Stencil::default() }
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.stencil.h = h;
        self
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn step(&self) -> f64 {
        self.stencil.h
    }

    fn check_margin(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.chart.dim() {
            return Err(Error::DimensionMismatch { expected: self.chart.dim(), found: x.len() });
        }
        let margin = self.chart.margin(x);
        if margin < self.stencil.h {
            return Err(Error::BoundaryMargin { margin, step: self.stencil.h });
        }
        Ok(())
    }

    /// `out[axis][i] = d f_i / d x_axis` at `x`.
    fn partials(&self, f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        let central = |h: f64| -> Vec<Vec<f64>> {
            let mut y = x.to_vec();
            (0..x.len())
                .map(|axis| {
                    y[axis] = x[axis] + h;
                    let plus = f(&y);
                    y[axis] = x[axis] - h;
                    let minus = f(&y);
                    y[axis] = x[axis];
                    plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect()
                })
                .collect()
        };
        let coarse = central(h);
        if !self.stencil.richardson {
            return coarse;
        }
        let fine = central(0.5 * h);
        coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| c.iter().zip(f).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
            .collect()
    }

    pub fn gradient(&self, field: &dyn ScalarField, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(g) = field.gradient(x) {
            return Ok(g);
        }
        self.check_margin(x)?;
        let parts = self.partials(&|y| vec![field.value(y)], x, self.stencil.h);
        let g: Vec<f64> = parts.into_iter().map(|p| p[0]).collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(g)
    }

    /// Directional derivative `v(f)` at `x`.
    pub fn directional(&self, field: &dyn ScalarField, v: &[f64], x: &[f64]) -> Result<f64> {
        Ok(crate::linalg::dot(&self.gradient(field, x)?, v))
    }

    /// Exterior derivative of a field at `x`.
    pub fn d(&self, field: &dyn FormField, x: &[f64]) -> Result<KForm> {
        let (dim, k) = (field.dim(), field.degree());
        if k >= dim {
            return Err(Error::InvalidDegree { degree: k + 1, dim });
        }
        if let Some(dw) = field.derivative(x) {
            return Ok(dw);
        }
        self.check_margin(x)?;
        let parts = self.partials(&|y| field.eval(y).into_coeffs(), x, self.stencil.h);
        let lower = combinations(dim, k);
        let mut out = KForm::zero(dim, k + 1);
        for (pos, idx) in combinations(dim, k + 1).iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..idx.len() {
                let rest: Vec<usize> = idx.iter().enumerate().filter(|(m, _)| *m != j).map(|(_, v)| *v).collect();
                let r = lower.binary_search(&rest).expect("face is a basis element");
                let term = parts[idx[j]][r];
                acc += if j % 2 == 0 { term } else { -term };
            }
            out.coeffs[pos] = acc;
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("exterior derivative".into()));
        }
        Ok(out)
    }

    /// Lie derivative by Cartan's formula `L_X F = i_X dF + d(i_X F)`.
    pub fn lie(&self, vector: &dyn VectorField, field: &dyn FormField, x: &[f64]) -> Result<KForm> {
        let (dim, k) = (field.dim(), field.degree());
        if vector.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: vector.dim() });
        }
        let v = vector.eval(x);
        let transport = if k == dim { KForm::zero(dim, k) } else { self.d(field, x)?.interior(&v)? };
        if k == 0 {
            return Ok(transport);
        }
        let contracted = Contracted { field: vector, form: field };
        Ok(&transport + &self.d(&contracted, x)?)
    }

    /// Central-difference Jacobian of `map` at `x` (rows: outputs).
    pub fn jacobian(&self, map: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
        let parts = self.partials(map, x, self.stencil.h);
        let rows = parts.first().map_or(0, Vec::len);
        let jac = DMatrix::from_fn(rows, x.len(), |r, c| parts[c][r]);
        for c in 0..jac.ncols() {
            for r in 0..jac.nrows() {
                if !jac[(r, c)].is_finite() {
                    return Err(Error::NonFiniteJacobian { row: r, col: c });
                }
            }
        }
        Ok(jac)
    }

    /// `(map^* w)(v..) = w(J v, ..)` with a numeric Jacobian at `x`; `w` is the
    /// form at `map(x)`.
    pub fn pullback(&self, map: &dyn Fn(&[f64]) -> Vec<f64>, w: &KForm, x: &[f64]) -> Result<KForm> {
        let jac = self.jacobian(map, x)?;
        w.pullback_linear(&jac)
    }
}

/// The field `x -> dF(x)` evaluated through a [`Calculus`]; failures become NaN.
pub struct Differentiated<'a> {
    pub calculus: &'a Calculus,
    pub field: &'a dyn FormField,
}

impl FormField for Differentiated<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn degree(&self) -> usize {
        self.field.degree() + 1
    }
    fn eval(&self, x: &[f64]) -> KForm {
        self.calculus.d(self.field, x).unwrap_or_else(|_| nan_form(self.dim(), self.degree()))
    }
}

/// The field `x -> L_X F(x)`; failures become NaN.
pub struct LieDerivative<'a> {
    pub calculus: &'a Calculus,
    pub vector: &'a dyn VectorField,
    pub field: &'a dyn FormField,
}

impl FormField for LieDerivative<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn degree(&self) -> usize {
        self.field.degree()
    }
    fn eval(&self, x: &[f64]) -> KForm {
        self.calculus
            .lie(self.vector, self.field, x)
            .unwrap_or_else(|_| nan_form(self.dim(), self.degree()))
    }
}
