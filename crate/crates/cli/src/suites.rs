//! Verification suites and their identity checklists.

use std::sync::Arc;

use contactkit::chart::Chart;
use contactkit::contact::{darboux, ReebRegionWeight};
use contactkit::dynamics::{self, ClosedFormFlow, NumericFlow};
use contactkit::exterior::{Calculus, ScalarField, ScalarFn};
use contactkit::linalg::{max_abs, max_abs_diff};
use contactkit::sandwich::{composite_pullback_residual, Phi1, Phi2};
use contactkit::scenarios::{CotangentSampler, Metric, Potential, Scenario};
use contactkit::zeroset::EquilibriumReport;
use contactkit::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::{DomainFailure, Finding, IdentityEntry, SuiteReport, Tally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ContactIdentities,
    Zeroset,
    Measure,
    Sandwich,
    Sampler,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::ContactIdentities, Suite::Zeroset, Suite::Measure, Suite::Sandwich, Suite::Sampler];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ContactIdentities => "contact-identities",
            Suite::Zeroset => "zeroset",
            Suite::Measure => "measure",
            Suite::Sandwich => "sandwich",
            Suite::Sampler => "sampler",
        }
    }
}

/// One identity of a suite's checklist.
#[derive(Debug)]
pub struct Check {
    pub suite: Suite,
    pub id: &'static str,
    pub quote: &'static str,
    pub threshold: f64,
}

const fn check(suite: Suite, id: &'static str, quote: &'static str, threshold: f64) -> Check {
    Check { suite, id, quote, threshold }
}

use Suite::{ContactIdentities as C, Measure as M, Sampler as P, Sandwich as W, Zeroset as Z};

static CHECKLIST: [Check; 35] = [
    check(C, "reeb.darboux", "xi = d/dz for eta = dz - p_i dq^i", 1e-10),
    check(C, "reeb.normalization", "eta(xi) = 1 and i_xi d eta = 0", 1e-10),
    check(C, "hamiltonian.dual-route", "-Lambda(dH, .) - H xi agrees with the Darboux formula for X_H", 1e-8),
    check(C, "hamiltonian.defining", "i_{X_H} d eta = dH - xi(H) eta and eta(X_H) = -H", 1e-8),
    check(C, "hamiltonian.energy", "X_H(H) + H xi(H) = 0", 1e-6),
    check(C, "hamiltonian.form", "L_{X_H} eta + xi(H) eta = 0", 1e-6),
    check(C, "hamiltonian.volume", "L_{X_H} nu + (n+1) xi(H) nu = 0", 1e-6),
    check(C, "conformal.reeb", "the Reeb field of -eta/H is X_H where |H| >= 0.1", 1e-7),
    check(C, "conformal.volume", "eta_H ^ (d eta_H)^n = (-1)^(n+1) H^-(n+1) nu, relative", 1e-8),
    check(Z, "zeroset.surface", "H(psi(u)) = 0", 1e-12),
    check(Z, "zeroset.nondegenerate", "1 / |det Omega| stays below the threshold", 10.0),
    check(Z, "zeroset.omega-routes", "d(psi^* eta) = psi^*(d eta)", 1e-6),
    check(Z, "zeroset.liouville", "X_H|S + xi(H) Delta = 0 where i_Delta Omega = theta", 1e-7),
    check(M, "measure.off-zero-set", "|H|^-(n+1) nu is carried onto itself by the flow of X_H on H != 0", 1e-6),
    check(M, "measure.equilibria", "zeros of X_H|S are (q, 0) with q critical for V", 1e-10),
    check(M, "measure.sigma-residual", "X_H|S(sigma) = n xi(H)", 1e-12),
    check(M, "measure.pushforward-closed", "exp(sigma)/xi(H) Omega^n is invariant, closed-form flow", 1e-6),
    check(M, "measure.pushforward-numeric", "exp(sigma)/xi(H) Omega^n is invariant, integrated flow", 1e-5),
    check(W, "sandwich.phi1-closed-form", "phi1 matches its closed form", 1e-6),
    check(W, "sandwich.phi1-pullback", "phi1^*(dz + theta) = eta", 1e-5),
    check(W, "sandwich.phi1-reeb", "T phi1 (xi) = d/dz", 1e-5),
    check(W, "sandwich.phi2-closed-form", "phi2 matches its closed form", 1e-6),
    check(W, "sandwich.phi2-pullback", "phi2^*(exp(-s)(d eta_B - ds ^ eta_B)) = d theta", 1e-5),
    check(W, "sandwich.phi2-speed", "T phi2 (X_H|S) = xi(H) d/ds", 1e-5),
    check(W, "sandwich.composite-pullback", "((Id x phi2) o phi1)^*(dz + exp(-s) eta_B) = eta", 1e-5),
    check(W, "sandwich.round-trip", "Phi^Z(t, d) inverts the rectification", 1e-7),
    check(W, "sandwich.sigma-transport", "sigma(Phi^Z_t(u)) = sigma(u) + n t", 1e-6),
    check(W, "sandwich.eta-b-closed-form", "eta_B matches its closed form", 1e-8),
    check(W, "sandwich.eta-b-volume", "eta_B ^ (d eta_B)^(n-1) matches its closed form, relative", 1e-6),
    check(P, "sampler.kinetic-homogeneity.identity", "Delta(K) = 2K, identity metric, relative", 1e-10),
    check(P, "sampler.kinetic-homogeneity.diagonal", "Delta(K) = 2K, diagonal metric, relative", 1e-10),
    check(P, "sampler.sigma.identity", "Delta(ln(K)/2 + F) = 1, identity metric", 1e-10),
    check(P, "sampler.sigma.diagonal", "Delta(ln(K)/2 + F) = 1, diagonal metric", 1e-10),
    check(P, "sampler.dilation.identity", "K^(-n/2) exp(-nF) (d lambda)^n is invariant under p -> e^t p, identity metric", 1e-8),
    check(P, "sampler.dilation.diagonal", "K^(-n/2) exp(-nF) (d lambda)^n is invariant under p -> e^t p, diagonal metric", 1e-8),
];

/// Every identity of every suite, in report order.
pub fn checklist() -> &'static [Check] {
    &CHECKLIST
}

/// Step of the finite differences behind the structural identities.
const STRUCTURAL_STEP: f64 = 1e-5;
/// The conformal form is only checked where `|H|` is at least this.
const MIN_ABS_H: f64 = 0.1;
/// Smallest momentum norm drawn for the sampler.
const MIN_MOMENTUM: f64 = 0.1;
const MAX_DRAWS_PER_SAMPLE: usize = 1000;

/// Runs one suite. Each suite draws from its own ChaCha stream, so results do
/// not depend on which other suites are selected.
pub fn run_suite(suite: Suite, config: &RunConfig, scenario: &Scenario) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(suite as u64 + 1);
    let mut b = Builder::new(suite, config);
    let mut ctx = Ctx { config, scenario, rng: &mut rng };
    match suite {
        Suite::ContactIdentities => contact_identities(&mut ctx, &mut b),
        Suite::Zeroset => zeroset(&mut ctx, &mut b),
        Suite::Measure => measure(&mut ctx, &mut b),
        Suite::Sandwich => sandwich(&mut ctx, &mut b),
        Suite::Sampler => sampler(&mut ctx, &mut b),
    }
    b.finish()
}

struct Ctx<'a> {
    config: &'a RunConfig,
    scenario: &'a Scenario,
    rng: &'a mut ChaCha8Rng,
}

impl Ctx<'_> {
    fn uniform(&mut self, dim: usize) -> Vec<f64> {
        let a = self.config.sample_half_width;
        (0..dim).map(|_| self.rng.gen_range(-a..a)).collect()
    }

    fn time(&mut self, max: f64) -> f64 {
        self.rng.gen_range(-max..max)
    }

    /// A point of the contact chart with `|H| >= MIN_ABS_H`, if one turns up.
    fn off_zero_set(&mut self) -> Option<Vec<f64>> {
        let system = &self.scenario.system;
        (0..MAX_DRAWS_PER_SAMPLE).find_map(|_| Some(self.uniform(5)).filter(|y| system.h(y).abs() >= MIN_ABS_H))
    }

    /// `(q, p)` with `|p| >= MIN_MOMENTUM`, if one turns up.
    fn away_from_zero_section(&mut self) -> Option<Vec<f64>> {
        (0..MAX_DRAWS_PER_SAMPLE).map(|_| self.uniform(4)).find(|u| u[2].hypot(u[3]) >= MIN_MOMENTUM)
    }
}

enum Slot {
    Active(Tally),
    Skipped(&'static Check, f64),
}

struct Builder {
    name: &'static str,
    slots: Vec<Slot>,
    domain_failures: Vec<DomainFailure>,
    findings: Vec<Finding>,
}

impl Builder {
    fn new(suite: Suite, config: &RunConfig) -> Self {
        let slots = CHECKLIST
            .iter()
            .filter(|c| c.suite == suite)
            .map(|c| Slot::Active(Tally::new(c, config.threshold(c.id, c.threshold))))
            .collect();
        Self { name: suite.name(), slots, domain_failures: Vec::new(), findings: Vec::new() }
    }

    fn record(&mut self, id: &str, sample: usize, outcome: Result<f64>) {
        let tally = self
            .slots
            .iter_mut()
            .find_map(|s| match s {
                Slot::Active(t) if t.id() == id => Some(t),
                _ => None,
            })
            .unwrap_or_else(|| panic!("identity {id} is not active in suite {}", self.name));
        if let Some(reason) = tally.record(outcome) {
            self.domain_failures.push(DomainFailure { sample, identity: id.into(), reason });
        }
    }

    fn skip(&mut self, id: &str) {
        for slot in &mut self.slots {
            if let Slot::Active(t) = slot {
                if t.id() == id {
                    let check = CHECKLIST.iter().find(|c| c.id == id).expect("listed");
                    *slot = Slot::Skipped(check, t.threshold());
                }
            }
        }
    }

    fn skip_all(&mut self) {
        let ids: Vec<&'static str> = CHECKLIST.iter().filter(|c| c.suite.name() == self.name).map(|c| c.id).collect();
        for id in ids {
            self.skip(id);
        }
    }

    fn finish(mut self) -> SuiteReport {
        for slot in &self.slots {
            if let Slot::Active(t) = slot {
                if let Some(e) = t.first_error() {
                    self.findings.push(Finding::new("error", format!("{}: {e}", t.id())));
                }
            }
        }
        let identities: Vec<IdentityEntry> = self
            .slots
            .into_iter()
            .map(|s| match s {
                Slot::Active(t) => t.finish(),
                Slot::Skipped(c, threshold) => Tally::not_applicable(c, threshold),
            })
            .collect();
        SuiteReport {
            name: self.name.into(),
            pass: identities.iter().all(|e| e.pass),
            identities,
            domain_failures: self.domain_failures,
            findings: self.findings,
        }
    }
}

fn unit(dim: usize, axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

fn contact_identities(ctx: &mut Ctx, b: &mut Builder) {
    let sys = &ctx.scenario.system;
    let n = sys.n();
    let calculus = Calculus::new(sys.chart().clone()).with_step(STRUCTURAL_STEP);
    let xh_field = sys.hamiltonian_vector_field();
    let volume = sys.volume_form();
    let e_z = unit(sys.dim(), 0);
    for k in 0..ctx.config.samples {
        let y = ctx.uniform(sys.dim());
        b.record("reeb.darboux", k, sys.reeb(&y).map(|xi| max_abs_diff(&xi, &e_z)));
        b.record(
            "reeb.normalization",
            k,
            (|| {
                let xi = sys.reeb(&y)?;
                let unit_defect = (sys.eta_at(&y).evaluate(&[&xi])? - 1.0).abs();
                Ok(unit_defect.max(sys.d_eta_at(&y)?.interior(&xi)?.max_abs()))
            })(),
        );
        b.record(
            "hamiltonian.dual-route",
            k,
            (|| {
                let closed = darboux::hamiltonian_field(n, &y, sys.h(&y), &sys.grad_h(&y)?);
                Ok(max_abs_diff(&closed, &sys.hamiltonian_field(&y)?))
            })(),
        );
        b.record("hamiltonian.defining", k, sys.hamiltonian_defect(&y).map(|(a, c)| a.max(c)));
        b.record(
            "hamiltonian.energy",
            k,
            (|| {
                // X_H(H) as a central difference along X_H
                let x = sys.hamiltonian_field(&y)?;
                let h = STRUCTURAL_STEP;
                let shift = |s: f64| -> Vec<f64> { y.iter().zip(&x).map(|(a, v)| a + s * v).collect() };
                let rate = (sys.h(&shift(h)) - sys.h(&shift(-h))) / (2.0 * h);
                Ok(rate + sys.h(&y) * sys.reeb_h(&y)?)
            })(),
        );
        b.record(
            "hamiltonian.form",
            k,
            (|| {
                let lie = calculus.lie(&xh_field, sys.eta().as_ref(), &y)?;
                Ok((&lie + &(sys.eta_at(&y) * sys.reeb_h(&y)?)).max_abs())
            })(),
        );
        b.record(
            "hamiltonian.volume",
            k,
            (|| {
                let lie = calculus.lie(&xh_field, &volume, &y)?;
                let nu = sys.volume_at(&y)?;
                Ok((&lie + &(nu * ((n as f64 + 1.0) * sys.reeb_h(&y)?))).max_abs())
            })(),
        );
    }

    let conformal = sys.conformal();
    let mut missing = 0;
    for k in 0..ctx.config.samples {
        let Some(y) = ctx.off_zero_set() else {
            missing += 1;
            continue;
        };
        b.record(
            "conformal.reeb",
            k,
            (|| Ok(max_abs_diff(&conformal.reeb(&y)?, &sys.hamiltonian_field(&y)?)))(),
        );
        b.record(
            "conformal.volume",
            k,
            (|| {
                let h = sys.h(&y);
                let expected = (-1f64).powi(n as i32 + 1) / h.powi(n as i32 + 1);
                Ok(conformal.volume_ratio(&y)? / expected - 1.0)
            })(),
        );
    }
    if missing > 0 {
        b.findings.push(Finding::new("sampling", format!("{missing} draws found no point with |H| >= {MIN_ABS_H}")));
    }
}

fn zeroset(ctx: &mut Ctx, b: &mut Builder) {
    let surface = &ctx.scenario.surface;
    for k in 0..ctx.config.samples {
        let u = ctx.uniform(surface.dim());
        b.record("zeroset.surface", k, surface.solve_surface(&u).map(|x| ctx.scenario.system.h(&x)));
        let induced = surface.induced(&u);
        b.record("zeroset.nondegenerate", k, induced.clone().map(|ind| 1.0 / ind.det_omega.abs()));
        b.record(
            "zeroset.omega-routes",
            k,
            (|| Ok(max_abs_diff(induced.clone()?.omega.coeffs(), surface.omega_pullback(&u)?.coeffs())))(),
        );
        b.record(
            "zeroset.liouville",
            k,
            (|| {
                let ind = induced.clone()?;
                let xi_h = surface.reeb_h(&u)?;
                let restricted = surface.restricted_field(&u)?;
                let defect: Vec<f64> = restricted.iter().zip(&ind.liouville).map(|(x, d)| x + xi_h * d).collect();
                Ok(max_abs(&defect))
            })(),
        );
    }
}

/// Searches for zeros of `X_H|S`, records the outcome as a finding and
/// returns the search report.
fn search_equilibria(ctx: &Ctx, b: &mut Builder) -> EquilibriumReport {
    let a = ctx.config.equilibrium_half_width.min(ctx.scenario.surface.surface_chart().upper()[0]);
    let region = Chart::cube("equilibria", 4, a).expect("positive half width");
    let report = ctx.scenario.surface.find_equilibria(&region, ctx.config.equilibrium_grid);
    if report.obstruction_found() {
        let mut f = Finding::new(
            "obstruction",
            format!("{}: X_H|S vanishes, so no invariant measure of this form exists on S", report.verdict()),
        );
        f.points = report.roots.clone();
        b.findings.push(f);
    } else {
        b.findings.push(Finding::new(
            "equilibria",
            format!("{} in [-{a}, {a}]^4; this is not a proof that an invariant measure exists", report.verdict()),
        ));
    }
    report
}

fn expected_equilibria(potential: Potential, a: f64) -> Vec<Vec<f64>> {
    potential
        .critical_points(2)
        .into_iter()
        .filter(|q| q.iter().all(|c| c.abs() <= a))
        .map(|mut q| {
            q.extend([0.0, 0.0]);
            q
        })
        .collect()
}

fn equilibrium_mismatch(found: &[Vec<f64>], expected: &[Vec<f64>]) -> Result<f64> {
    if found.len() != expected.len() {
        return Err(Error::Precondition(format!(
            "found {} equilibria where {} were expected",
            found.len(),
            expected.len()
        )));
    }
    let nearest = |p: &[f64], set: &[Vec<f64>]| set.iter().map(|s| max_abs_diff(p, s)).fold(f64::INFINITY, f64::min);
    Ok(found
        .iter()
        .map(|p| nearest(p, expected))
        .chain(expected.iter().map(|p| nearest(p, found)))
        .fold(0.0, f64::max))
}

fn measure(ctx: &mut Ctx, b: &mut Builder) {
    let sys = ctx.scenario.system.clone();
    let surface = ctx.scenario.surface.clone();
    let options = ctx.config.flow_options();

    let weight = ReebRegionWeight::new(&sys);
    let off_density = |x: &[f64]| weight.value(x).exp() * sys.check_contact(x).map_or(f64::NAN, f64::abs);
    let xh_field = sys.hamiltonian_vector_field();
    let xh_flow = NumericFlow::new(&xh_field, options.clone().with_escape_box(sys.chart().clone()));
    for k in 0..ctx.config.flow_samples {
        let t = ctx.time(1.0);
        match ctx.off_zero_set() {
            Some(y) => b.record(
                "measure.off-zero-set",
                k,
                dynamics::pushforward_invariance_check(&off_density, &xh_flow, &y, t),
            ),
            None => b.findings.push(Finding::new("sampling", format!("no point with |H| >= {MIN_ABS_H} drawn"))),
        }
    }

    let report = search_equilibria(ctx, b);
    let a = ctx.config.equilibrium_half_width.min(surface.surface_chart().upper()[0]);
    b.record("measure.equilibria", 0, equilibrium_mismatch(&report.roots, &expected_equilibria(ctx.scenario.potential, a)));

    let on_s = ["measure.sigma-residual", "measure.pushforward-closed", "measure.pushforward-numeric"];
    let sigma = match (&ctx.scenario.sigma, report.obstruction_found()) {
        (_, true) => None,
        (None, false) => {
            b.findings.push(Finding::new(
                "untestable",
                format!("no closed-form sigma for the {} potential", ctx.scenario.potential.name()),
            ));
            None
        }
        (Some(s), false) => Some(s.clone()),
    };
    let Some(sigma) = sigma else {
        on_s.iter().for_each(|id| b.skip(id));
        return;
    };
    for k in 0..ctx.config.samples {
        let u = ctx.uniform(4);
        b.record("measure.sigma-residual", k, surface.sigma_residual(sigma.as_ref(), &u));
    }
    let density = |u: &[f64]| surface.measure_density(sigma.as_ref(), u).unwrap_or(f64::NAN);
    let field = surface.restricted_vector_field();
    let numeric = NumericFlow::new(&field, options.within(surface.surface_chart()));
    let oracles = ctx.scenario.oracles;
    if oracles.is_none() {
        b.skip("measure.pushforward-closed");
    }
    let mut k = 0;
    for _ in 0..ctx.config.flow_samples {
        let u = ctx.uniform(4);
        for t in [-2.0, -1.0, 1.0, 2.0] {
            if let Some(o) = oracles {
                let closed = ClosedFormFlow::new(4, move |s: f64, v: &[f64]| o.surface_flow(s, v));
                b.record("measure.pushforward-closed", k, dynamics::pushforward_invariance_check(&density, &closed, &u, t));
            }
            b.record("measure.pushforward-numeric", k, dynamics::pushforward_invariance_check(&density, &numeric, &u, t));
            k += 1;
        }
    }
}

fn sandwich(ctx: &mut Ctx, b: &mut Builder) {
    let Some(sigma) = ctx.scenario.sigma.clone() else {
        b.findings.push(Finding::new(
            "untestable",
            format!("no closed-form sigma for the {} potential", ctx.scenario.potential.name()),
        ));
        b.skip_all();
        return;
    };
    if search_equilibria(ctx, b).obstruction_found() {
        b.skip_all();
        return;
    }
    let surface = &ctx.scenario.surface;
    let options = ctx.config.flow_options();
    let maps = Phi1::new(surface, options.clone(), 3)
        .and_then(|p1| Phi2::new(surface, sigma, options, &[0.0; 4], 3).map(|p2| (p1, p2)));
    let (phi1, phi2) = match maps {
        Ok(m) => m,
        Err(e) => {
            b.findings.push(Finding::new("untestable", format!("sandwich maps not built: {e}")));
            b.skip_all();
            return;
        }
    };
    let oracles = ctx.scenario.oracles;
    if oracles.is_none() {
        for id in ["sandwich.phi1-closed-form", "sandwich.phi2-closed-form", "sandwich.eta-b-closed-form", "sandwich.eta-b-volume"] {
            b.skip(id);
        }
    }
    for k in 0..ctx.config.flow_samples {
        let y = ctx.uniform(5);
        let t = ctx.time(2.0);
        let image = phi1.map(&y);
        let u = image.clone().map(|i| i[1..].to_vec());
        let sb = u.clone().and_then(|u| phi2.map(&u));
        if let Some(o) = oracles {
            b.record("sandwich.phi1-closed-form", k, image.clone().map(|i| max_abs_diff(&i, &o.phi1(&y))));
            b.record(
                "sandwich.phi2-closed-form",
                k,
                (|| Ok(max_abs_diff(&sb.clone()?, &o.phi2(&u.clone()?))))(),
            );
            b.record(
                "sandwich.eta-b-closed-form",
                k,
                (|| {
                    let sb = sb.clone()?;
                    Ok(max_abs_diff(phi2.eta_b(&sb[1..])?.coeffs(), &o.eta_b(&sb[1..])))
                })(),
            );
            b.record(
                "sandwich.eta-b-volume",
                k,
                (|| Ok(phi2.eta_b_check(&sb.clone()?[1..])? / o.eta_b_volume() - 1.0))(),
            );
        }
        b.record("sandwich.phi1-pullback", k, phi1.pullback_residual(&y));
        b.record("sandwich.phi1-reeb", k, phi1.reeb_defect(&y));
        b.record("sandwich.phi2-pullback", k, u.clone().and_then(|u| phi2.pullback_residual(&u)));
        b.record("sandwich.phi2-speed", k, u.clone().and_then(|u| phi2.speed_defect(&u)));
        b.record("sandwich.composite-pullback", k, composite_pullback_residual(&phi1, &phi2, &y));
        b.record("sandwich.round-trip", k, u.clone().and_then(|u| phi2.rectification().round_trip_defect(&u)));
        b.record("sandwich.sigma-transport", k, u.and_then(|u| phi2.rectification().transport_defect(&u, t)));
    }
}

fn sampler(ctx: &mut Ctx, b: &mut Builder) {
    let potential = ctx.scenario.potential;
    let f: Arc<dyn ScalarField> =
        Arc::new(ScalarFn::new(2, move |q| potential.value(q)).with_gradient(move |q| potential.gradient(q)));
    let metrics = [("identity", Metric::Identity), ("diagonal", Metric::Diagonal(ctx.config.sampler.diagonal.clone()))];
    for (label, metric) in metrics {
        let sampler = match CotangentSampler::new(metric, f.clone(), 2) {
            Ok(s) => s,
            Err(e) => {
                b.findings.push(Finding::new("untestable", format!("{label} metric rejected: {e}")));
                for id in ["sampler.kinetic-homogeneity", "sampler.sigma", "sampler.dilation"] {
                    b.skip(&format!("{id}.{label}"));
                }
                continue;
            }
        };
        let kinetic = sampler.kinetic_field();
        let sigma = sampler.sigma_field();
        let (homogeneity, sigma_id, dilation) = (
            format!("sampler.kinetic-homogeneity.{label}"),
            format!("sampler.sigma.{label}"),
            format!("sampler.dilation.{label}"),
        );
        for k in 0..ctx.config.samples {
            let Some(u) = ctx.away_from_zero_section() else { continue };
            b.record(
                &homogeneity,
                k,
                (|| {
                    let kin = sampler.kinetic(&u)?;
                    Ok((sampler.liouville_derivative(kinetic.as_ref(), &u)? - 2.0 * kin) / kin)
                })(),
            );
            b.record(&sigma_id, k, sampler.liouville_derivative(sigma.as_ref(), &u).map(|d| d - 1.0));
        }
        let density = |u: &[f64]| sampler.density(u).unwrap_or(f64::NAN);
        let flow = sampler.dilation();
        for k in 0..ctx.config.flow_samples {
            let t = ctx.time(1.0);
            let Some(u) = ctx.away_from_zero_section() else { continue };
            b.record(&dilation, k, dynamics::pushforward_invariance_check(&density, &flow, &u, t));
        }
    }
}
