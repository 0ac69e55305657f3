//! Check registry and orchestration for `verify`, `converge` and `ito-table`.
//!
//! Every check draws from its own ChaCha stream of the configured seed, so
//! selecting a subset of checks does not change the values of the others.
//! Checks whose defect is an identity use the Frobenius norm, an upper bound
//! for the spectral norm; closed-form comparisons use the spectral norm.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::SuiteConfig;
use super::emit::{CheckResult, ConvergencePoint, ConvergenceSeries, Measurement, Report};
use super::fit::fit_slope;
use crate::error::{Error, Result};
use crate::fock::{
    diff_second_quantize, exp_tail_bound, exponential_from_coeffs, field_from_coeffs, oracle::tensor_oracle_compare,
    partial_exp, second_quantize, split_intertwining_defect, FieldKind, FockBasis, FockVector, Statistics,
};
use crate::grid::{OneParticleVector, SpectralGrid, SpectralWindow};
use crate::linalg::{hermitian_exp, random_hermitian, random_matrix, random_unitary, random_vector};
use crate::processes::SpectralProcesses;
use crate::sparse::SparseOperator;
use crate::unification::{build_xi, ordered_product_defect, Direction};
use crate::wick::{
    adjoint_defect, default_panel, estimate_bound_check, exact_probe, ito_correction_defect, ito_table,
    ito_table_probe, matrix_element_form, null_pairs, random_integrand, random_panel, wick_integral,
    wick_matrix_element, AdaptedStepProcess, Differential, ItoProbe, WickIntegrand, WickSpace,
};

/// Seeded pairs drawn by the relation checks.
pub const PAIRS: usize = 20;
/// Integrands drawn by the estimate check.
pub const ESTIMATE_SAMPLES: usize = 100;

pub const VERIFY_CHECKS: [&str; 19] = [
    "oracle",
    "ccr",
    "car",
    "exponential-vectors",
    "second-quantization",
    "factorization",
    "ito-table-exact",
    "ito-abel",
    "wick-matrix-elements",
    "wick-adjoint",
    "estimate",
    "parity",
    "parity-anticommutation",
    "car-closed-form",
    "ordered-products-disjoint",
    "xi-isometry",
    "xi-field-covariance",
    "xi-number-covariance",
    "xi-consistency",
];

pub const XI_CHECKS: [&str; 4] = ["xi-isometry", "xi-field-covariance", "xi-number-covariance", "xi-consistency"];

/// Convergence checks with their expected slope band in `Δω`.
pub const CONVERGE_CHECKS: [(&str, f64, Option<f64>); 6] = [
    ("car-defect", 0.8, Some(1.2)),
    ("car-square", 0.3, Some(0.7)),
    ("xi-leakage", 0.3, Some(0.7)),
    ("ito-null-pairs", 1.8, None),
    ("ordered-products", 0.3, Some(0.7)),
    ("ito-correction", 0.8, Some(1.2)),
];

pub fn converge_names() -> Vec<&'static str> {
    CONVERGE_CHECKS.iter().map(|c| c.0).collect()
}

/// Generator for check number `stream` of a run.
pub fn check_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Ctx {
    grid: Arc<SpectralGrid>,
    m: usize,
}

#[derive(Default)]
struct Outcome {
    params: BTreeMap<String, Value>,
    defects: Vec<Measurement>,
    observations: Vec<Measurement>,
}

impl Outcome {
    fn param(&mut self, k: &str, v: Value) -> &mut Self {
        self.params.insert(k.to_string(), v);
        self
    }

    fn defect(&mut self, k: &str, v: f64) -> &mut Self {
        self.defects.push(Measurement { name: k.to_string(), value: v });
        self
    }

    fn observe(&mut self, k: &str, v: f64) -> &mut Self {
        self.observations.push(Measurement { name: k.to_string(), value: v });
        self
    }
}

fn selected<'a>(requested: &'a [String], all: &[&'a str]) -> Vec<&'a str> {
    if requested.is_empty() {
        all.to_vec()
    } else {
        all.iter().copied().filter(|c| requested.iter().any(|r| r == c)).collect()
    }
}

fn stream_of(name: &str) -> u64 {
    let verify = VERIFY_CHECKS.iter().position(|c| *c == name);
    let converge = CONVERGE_CHECKS.iter().position(|c| c.0 == name).map(|i| i + 100);
    verify.or(converge).expect("registered check") as u64
}

/// Runs the exact-identity checks at the configured grid.
pub fn run_verify(config: &SuiteConfig) -> Result<Report> {
    let bins = config.validate_verify(&VERIFY_CHECKS)?;
    let ctx = Ctx { grid: config.grid(bins)?, m: config.truncation };
    let mut report = Report::new(config.clone());
    for name in selected(&config.checks, &VERIFY_CHECKS) {
        let mut rng = check_rng(config.seed, stream_of(name));
        let mut out = Outcome::default();
        out.param("seed", json!(config.seed)).param("stream", json!(stream_of(name)));
        run_check(name, &ctx, &mut rng, &mut out)?;
        report.checks.push(CheckResult::new(name, out.params, out.defects, out.observations, config.tolerance));
    }
    Ok(report)
}

fn run_check(name: &str, ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    match name {
        "oracle" => check_oracle(ctx, rng, out),
        "ccr" => check_ccr(ctx, rng, out),
        "car" => check_car(ctx, rng, out),
        "exponential-vectors" => check_exponential(ctx, rng, out),
        "second-quantization" => check_second_quantization(ctx, rng, out),
        "factorization" => check_factorization(ctx, out),
        "ito-table-exact" => check_ito_exact(ctx, rng, out),
        "ito-abel" => check_ito_abel(ctx, rng, out),
        "wick-matrix-elements" => check_matrix_elements(ctx, rng, out),
        "wick-adjoint" => check_adjoint(ctx, rng, out),
        "estimate" => check_estimate(ctx, rng, out),
        "parity" => check_parity(ctx, out),
        "parity-anticommutation" => check_parity_anticommutation(ctx, rng, out),
        "car-closed-form" => check_car_closed_form(ctx, out),
        "ordered-products-disjoint" => check_disjoint_products(ctx, rng, out),
        "xi-isometry" => check_xi_isometry(ctx, out),
        "xi-field-covariance" => check_xi_fields(ctx, rng, out),
        "xi-number-covariance" => check_xi_number(ctx, out),
        "xi-consistency" => check_xi_consistency(ctx, out),
        other => Err(Error::ConfigInvalid(format!("unknown check `{other}`"))),
    }
}

fn random_opv<R: Rng + ?Sized>(grid: &Arc<SpectralGrid>, rng: &mut R) -> OneParticleVector {
    OneParticleVector::from_coeffs(grid, random_vector(rng, grid.mode_count())).expect("length matches grid")
}

fn cuts(grid: &SpectralGrid) -> Vec<f64> {
    grid.edges().to_vec()
}

fn keep_below(basis: &FockBasis, k: Option<usize>) -> Vec<usize> {
    k.map(|k| basis.up_to_grade(k)).unwrap_or_default()
}

fn check_oracle(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let d = ctx.grid.mode_count().min(3);
    let n = ctx.m.min(3);
    let seed: u64 = rng.gen();
    let r = tensor_oracle_compare(d, n, seed)?;
    out.param("modes", json!(d)).param("max_grade", json!(n)).param("oracle_seed", json!(seed));
    out.defect("max_entry", r.max_defect()).observe("literal_annihilation_gap", r.literal_annihilation_gap);
    Ok(())
}

fn check_ccr(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let basis = FockBasis::new(Statistics::Bose, ctx.grid.mode_count(), ctx.m)?;
    let keep = keep_below(&basis, ctx.m.checked_sub(1));
    let id = SparseOperator::identity(basis.dim());
    let (mut mixed, mut pure): (f64, f64) = (0.0, 0.0);
    for _ in 0..PAIRS {
        let f = random_vector(rng, basis.modes());
        let g = random_vector(rng, basis.modes());
        let fm = field_from_coeffs(&basis, FieldKind::Annihilation, &f)?;
        let gp = field_from_coeffs(&basis, FieldKind::Creation, &g)?;
        let fp = field_from_coeffs(&basis, FieldKind::Creation, &f)?;
        let gm = field_from_coeffs(&basis, FieldKind::Annihilation, &g)?;
        let overlap = crate::grid::dot(&f, &g);
        mixed = mixed.max(fm.commutator(&gp).add_scaled(&id, -overlap).compress(&keep).frobenius_norm());
        pure = pure
            .max(fp.commutator(&gp).compress(&keep).frobenius_norm())
            .max(fm.commutator(&gm).compress(&keep).frobenius_norm());
    }
    out.param("modes", json!(basis.modes())).param("pairs", json!(PAIRS));
    out.defect("annihilator_creator", mixed).defect("like_fields", pure);
    Ok(())
}

fn check_car(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let d = ctx.grid.mode_count();
    let basis = FockBasis::new(Statistics::Fermi, d, d)?;
    let id = SparseOperator::identity(basis.dim());
    let (mut mixed, mut pure): (f64, f64) = (0.0, 0.0);
    for _ in 0..PAIRS {
        let f = random_vector(rng, d);
        let g = random_vector(rng, d);
        let fm = field_from_coeffs(&basis, FieldKind::Annihilation, &f)?;
        let gp = field_from_coeffs(&basis, FieldKind::Creation, &g)?;
        let fp = field_from_coeffs(&basis, FieldKind::Creation, &f)?;
        let gm = field_from_coeffs(&basis, FieldKind::Annihilation, &g)?;
        let overlap = crate::grid::dot(&f, &g);
        mixed = mixed.max(fm.anticommutator(&gp).add_scaled(&id, -overlap).frobenius_norm());
        pure = pure.max(fp.anticommutator(&gp).frobenius_norm()).max(fm.anticommutator(&gm).frobenius_norm());
    }
    out.param("modes", json!(d)).param("truncation", json!(d)).param("pairs", json!(PAIRS));
    out.defect("annihilator_creator", mixed).defect("like_fields", pure);
    Ok(())
}

fn check_exponential(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let basis = Arc::new(FockBasis::new(Statistics::Bose, ctx.grid.mode_count(), ctx.m)?);
    let (mut partial, mut tail): (f64, f64) = (0.0, 0.0);
    let mut ratio: f64 = 0.0;
    for _ in 0..PAIRS {
        let f = random_opv(&ctx.grid, rng).normalized();
        let g = random_opv(&ctx.grid, rng).normalized().scaled(C64::new(0.8, 0.0));
        let ef = exponential_from_coeffs(&basis, f.coeffs(), ctx.m)?;
        let eg = exponential_from_coeffs(&basis, g.coeffs(), ctx.m)?;
        let z = f.inner(&g)?;
        let inner = ef.inner(&eg);
        partial = partial.max((inner - partial_exp(z, ctx.m)).norm());
        let gap = (inner - z.exp()).norm();
        let bound = exp_tail_bound(z, ctx.m);
        tail = tail.max((gap - bound).max(0.0));
        ratio = ratio.max(gap / bound);
    }
    out.param("pairs", json!(PAIRS));
    out.defect("partial_sum", partial).defect("tail_bound_excess", tail).observe("max_gap_over_bound", ratio);
    Ok(())
}

fn check_second_quantization(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let d = ctx.grid.mode_count();
    let (mut mult, mut expo, mut cov, mut rank): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for stat in [Statistics::Bose, Statistics::Fermi] {
        let basis = FockBasis::new(stat, d, ctx.m)?;
        let u = random_unitary(rng, d);
        let v = random_matrix(rng, d);
        let gu = second_quantize(&basis, &u)?;
        let lhs = second_quantize(&basis, &(&u * &v))?;
        mult = mult.max((&lhs - &gu.matmul(&second_quantize(&basis, &v)?)).frobenius_norm());

        let h = random_hermitian(rng, d);
        let t = 0.7;
        let lifted = second_quantize(&basis, &hermitian_exp(&h, t))?.to_dense();
        let gamma = diff_second_quantize(&basis, &h)?.to_dense();
        let direct = gamma.map(|z| z * C64::new(0.0, t)).exp();
        expo = expo.max((lifted - direct).norm());

        let f = random_vector(rng, d);
        let uf: Vec<C64> = (&u * DMatrix::from_column_slice(d, 1, &f)).iter().cloned().collect();
        for kind in [FieldKind::Creation, FieldKind::Annihilation] {
            let conj = gu.matmul(&field_from_coeffs(&basis, kind, &f)?).matmul(&gu.adjoint());
            cov = cov.max((&conj - &field_from_coeffs(&basis, kind, &uf)?).frobenius_norm());
        }

        let g = random_vector(rng, d);
        let outer = DMatrix::from_fn(d, d, |p, q| f[p] * g[q].conj());
        let lhs = diff_second_quantize(&basis, &outer)?;
        let rhs = field_from_coeffs(&basis, FieldKind::Creation, &f)?
            .matmul(&field_from_coeffs(&basis, FieldKind::Annihilation, &g)?);
        rank = rank.max((&lhs - &rhs).frobenius_norm());
    }
    out.param("modes", json!(d)).param("time", json!(0.7));
    out.defect("multiplicative", mult)
        .defect("exponential", expo)
        .defect("covariance", cov)
        .defect("rank_one", rank);
    Ok(())
}

fn check_factorization(ctx: &Ctx, out: &mut Outcome) -> Result<()> {
    let mut worst: f64 = 0.0;
    for stat in [Statistics::Bose, Statistics::Fermi] {
        let basis = FockBasis::new(stat, ctx.grid.mode_count(), ctx.m)?;
        for omega in cuts(&ctx.grid) {
            worst = worst.max(split_intertwining_defect(&ctx.grid, &basis, omega)?);
        }
    }
    out.param("cuts", json!(ctx.grid.bin_count() + 1));
    out.defect("intertwining", worst);
    Ok(())
}

fn check_ito_exact(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let space = WickSpace::build(&ctx.grid, ctx.m, 1)?;
    let (phi, psi, f, g) =
        (random_opv(&ctx.grid, rng), random_opv(&ctx.grid, rng), random_opv(&ctx.grid, rng), random_opv(&ctx.grid, rng));
    let (exact, null) = ito_table_defects(&space, &phi, &psi, &f, &g)?;
    out.param("truncation", json!(ctx.m));
    out.defect("exact_entries", exact).observe("null_pairs_coherent", null);
    Ok(())
}

/// Largest exact-entry deviation and largest null-pair coherent expectation
/// over all bins.
fn ito_table_defects(
    space: &WickSpace,
    phi: &OneParticleVector,
    psi: &OneParticleVector,
    f: &OneParticleVector,
    g: &OneParticleVector,
) -> Result<(f64, f64)> {
    let (mut exact, mut null): (f64, f64) = (0.0, 0.0);
    for bin in 0..space.grid().bin_count() {
        for row in Differential::ALL {
            for col in Differential::ALL {
                if let Some(probe) = exact_probe(row, col, f, g) {
                    let (e, p) = ito_table_probe(space, row, col, bin, phi, psi, &probe)?;
                    exact = exact.max((e - p).norm());
                }
            }
        }
        null = null.max(null_pair_magnitude(space, bin, phi, psi, f, g)?);
    }
    Ok((exact, null))
}

fn null_pair_magnitude(
    space: &WickSpace,
    bin: usize,
    phi: &OneParticleVector,
    psi: &OneParticleVector,
    f: &OneParticleVector,
    g: &OneParticleVector,
) -> Result<f64> {
    let probe = ItoProbe::Coherent(f.clone(), g.clone());
    let mut worst: f64 = 0.0;
    for (row, col) in null_pairs() {
        let (e, _) = ito_table_probe(space, row, col, bin, phi, psi, &probe)?;
        worst = worst.max(e.norm());
    }
    Ok(worst)
}

fn check_ito_abel(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let space = WickSpace::build(&ctx.grid, ctx.m, 2)?;
    let x = random_integrand(&space, rng, 3)?;
    let y = random_integrand(&space, rng, 3)?;
    let panel = random_panel(&space, rng, 3, 0.5);
    let k = ctx.m.saturating_sub(3);
    let r = ito_correction_defect(&space, &x, &y, &panel, ctx.grid.omega_max(), k)?;
    out.param("initial", json!(2)).param("probe_cutoff", json!(k));
    out.defect("abel", r.abel).observe("table_correction_deviation", r.deviation);
    Ok(())
}

fn check_matrix_elements(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let space = WickSpace::build(&ctx.grid, ctx.m, 2)?;
    let top = ctx.grid.omega_max();
    let ig = random_integrand(&space, rng, 3)?;
    // random coefficients raise particle number by at most one
    let k = ctx.m.saturating_sub(2);
    let mut route: f64 = 0.0;
    for p in random_panel(&space, rng, 4, 0.6) {
        let a = wick_matrix_element(&space, &ig, &p, top, k)?;
        let b = matrix_element_form(&space, &ig, &p, top, k)?;
        route = route.max((a - b).norm());
    }

    let zero = OneParticleVector::zeros(&ctx.grid);
    let psi = random_opv(&ctx.grid, rng);
    let id = AdaptedStepProcess::identity(&space);
    let time = WickIntegrand::single(&space, Differential::Time, id.clone(), &zero);
    let time_defect = (&wick_integral(&space, &time, top)? - &space.identity().scaled_real(top)).frobenius_norm();
    let down = WickIntegrand::single(&space, Differential::Annihilate, id, &psi);
    let b = space.process(crate::processes::ProcessKind::Annihilate, Some(&psi), top)?;
    let down_defect = (&wick_integral(&space, &down, top)? - &b).frobenius_norm();
    out.param("probe_cutoff", json!(k)).param("initial", json!(2));
    out.defect("routes", route).defect("time_integral", time_defect).defect("annihilation_integral", down_defect);
    Ok(())
}

fn check_adjoint(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let space = WickSpace::build(&ctx.grid, ctx.m, 2)?;
    let ig = random_integrand(&space, rng, 2)?;
    let k = ctx.m.saturating_sub(2);
    let (conv, lit) = adjoint_defect(&space, &ig, &default_panel(&space, 0.5), ctx.grid.omega_max(), k)?;
    out.param("probe_cutoff", json!(k));
    out.defect("adjoint_coefficients", conv).observe("unstarred_coefficients", lit);
    Ok(())
}

fn check_estimate(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let (violations, worst, ratio) = estimate_run(&ctx.grid, ctx.m, rng, ESTIMATE_SAMPLES)?;
    out.param("samples", json!(ESTIMATE_SAMPLES)).param("initial", json!(2));
    out.defect("excess", worst).observe("violations", violations as f64).observe("max_lhs_over_rhs", ratio);
    Ok(())
}

/// Draws integrands, states and test functions and evaluates both sides of
/// the growth estimate. Returns `(violations, max(lhs − rhs, 0), max lhs/rhs)`.
pub fn estimate_run<R: Rng + ?Sized>(grid: &Arc<SpectralGrid>, m: usize, rng: &mut R, samples: usize) -> Result<(usize, f64, f64)> {
    let space = WickSpace::build(grid, m, 2)?;
    let (mut violations, mut worst, mut ratio) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let ig = random_integrand(&space, rng, 3)?;
        let u = random_vector(rng, 2);
        let f = random_opv(grid, rng).normalized().scaled(C64::new(rng.gen_range(0.0..1.5), 0.0));
        let (lhs, rhs) = estimate_bound_check(&space, &ig, &u, &f, grid.omega_max())?;
        if lhs > rhs {
            violations += 1;
        }
        worst = worst.max(lhs - rhs);
        if rhs > 0.0 {
            ratio = ratio.max(lhs / rhs);
        }
    }
    Ok((violations, worst, ratio))
}

fn check_parity(ctx: &Ctx, out: &mut Outcome) -> Result<()> {
    let p = SpectralProcesses::build(&ctx.grid, ctx.m)?;
    let id = SparseOperator::identity(p.dim());
    let vacuum = FockVector::vacuum(p.basis());
    let js: Vec<SparseOperator> = cuts(&ctx.grid).into_iter().map(|w| p.parity_process(w)).collect::<Result<_>>()?;
    let (mut unitary, mut commute, mut vac, mut lift, mut diff_low): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut multi_only = true;
    for (k, j) in js.iter().enumerate() {
        unitary = unitary.max((&j.matmul(j) - &id).frobenius_norm()).max((&j.adjoint() - j).frobenius_norm());
        for other in &js[k + 1..] {
            commute = commute.max(j.commutator(other).frobenius_norm());
        }
        vac = vac.max(vacuum.apply(j).sub(&vacuum).norm());
        let omega = ctx.grid.edges()[k];
        let pi = ctx.grid.projector_matrix(&SpectralWindow::below(omega))?;
        let reflect = DMatrix::<C64>::identity(pi.nrows(), pi.ncols()) - pi * C64::new(2.0, 0.0);
        lift = lift.max((&second_quantize(p.basis(), &reflect)? - j).frobenius_norm());
    }
    for bin in 0..ctx.grid.bin_count() {
        let (d, only) = p.parity_differential_defect(bin)?;
        diff_low = diff_low.max(d);
        multi_only &= only;
    }
    out.param("cuts", json!(js.len()));
    out.defect("unitary_self_adjoint", unitary)
        .defect("commutation", commute)
        .defect("vacuum", vac)
        .defect("recursion", p.parity_recursion_defect())
        .defect("second_quantized_reflection", lift)
        .defect("differential_single_occupancy", diff_low)
        .observe("differential_defect_only_on_multiple_occupancy", if multi_only { 1.0 } else { 0.0 });
    Ok(())
}

fn check_parity_anticommutation(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let p = SpectralProcesses::build(&ctx.grid, ctx.m)?;
    let phi = random_opv(&ctx.grid, rng);
    let mut worst: f64 = 0.0;
    for omega in cuts(&ctx.grid) {
        worst = worst.max(p.car_defect(&phi, &phi, omega)?.parity);
    }
    out.defect("anticommutator", worst);
    Ok(())
}

/// Unit-norm constant test function on the grid.
pub fn uniform_vector(grid: &Arc<SpectralGrid>) -> OneParticleVector {
    OneParticleVector::sample_scalar(grid, |_| C64::new(1.0, 0.0)).normalized()
}

/// Unit-norm linear ramp, used where a non-constant smeared function is needed.
pub fn smeared_vector(grid: &Arc<SpectralGrid>) -> OneParticleVector {
    let top = grid.omega_max();
    OneParticleVector::sample_scalar(grid, |w| C64::new(1.0 + w / top, 0.5 * w / top)).normalized()
}

/// One-particle CAR defect of the uniform field at truncation 2 and its
/// closed form `2/D`.
pub fn car_uniform(grid: &Arc<SpectralGrid>) -> Result<(f64, f64)> {
    let p = SpectralProcesses::build(grid, 2)?;
    let u = uniform_vector(grid);
    let d = p.car_defect(&u, &u, grid.omega_max())?;
    Ok((d.anticommutator, 2.0 / grid.mode_count() as f64))
}

fn check_car_closed_form(ctx: &Ctx, out: &mut Outcome) -> Result<()> {
    let (measured, closed) = car_uniform(&ctx.grid)?;
    out.param("truncation", json!(2));
    out.defect("closed_form", (measured - closed).abs()).observe("one_particle_defect", measured);
    Ok(())
}

fn check_disjoint_products(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let p = SpectralProcesses::build(&ctx.grid, ctx.m)?;
    let bins = ctx.grid.bin_count();
    let n = ctx.m.min(bins).min(3);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        // split the bins into n disjoint random groups and smear over each
        let mut owner: Vec<usize> = (0..bins).map(|j| j % n).collect();
        for j in (1..bins).rev() {
            owner.swap(j, rng.gen_range(0..=j));
        }
        let phis: Vec<OneParticleVector> = (0..n)
            .map(|i| {
                let c: Vec<C64> = (0..ctx.grid.mode_count())
                    .map(|m| if owner[ctx.grid.mode_bin(m)] == i { crate::linalg::random_complex(rng) } else { C64::new(0.0, 0.0) })
                    .collect();
                OneParticleVector::from_coeffs(&ctx.grid, c)
            })
            .collect::<Result<_>>()?;
        for dir in [Direction::FermiFromBose, Direction::BoseFromFermi] {
            worst = worst.max(ordered_product_defect(&p, &phis, ctx.grid.omega_max(), dir)?);
        }
    }
    out.param("factors", json!(n));
    out.defect("simplex_sum", worst);
    Ok(())
}

fn xi_truncation(ctx: &Ctx) -> usize {
    ctx.m.min(ctx.grid.mode_count())
}

fn check_xi_isometry(ctx: &Ctx, out: &mut Outcome) -> Result<()> {
    let xi = build_xi(&ctx.grid, xi_truncation(ctx))?;
    let (a, b) = xi.isometry_defect();
    let vac = xi.apply(&FockVector::vacuum(xi.bose()))?.sub(&FockVector::vacuum(xi.fermi())).norm();
    out.param("truncation", json!(xi_truncation(ctx)));
    out.defect("initial_projection", a).defect("final_projection", b).defect("vacuum", vac);
    Ok(())
}

fn check_xi_fields(ctx: &Ctx, rng: &mut ChaCha8Rng, out: &mut Outcome) -> Result<()> {
    let xi = build_xi(&ctx.grid, xi_truncation(ctx))?;
    let phi = random_opv(&ctx.grid, rng);
    let (mut create, mut annihilate, mut leak): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for omega in cuts(&ctx.grid) {
        let c = xi.field_covariance_defect(&phi, omega)?;
        create = create.max(c.creation);
        annihilate = annihilate.max(c.annihilation);
        leak = leak.max(c.one_particle_leakage);
    }
    let uniform = xi.field_covariance_defect(&uniform_vector(&ctx.grid), ctx.grid.omega_max())?;
    out.defect("creation", create)
        .defect("annihilation", annihilate)
        .observe("random_one_particle_leakage", leak)
        .observe("uniform_one_particle_leakage", uniform.one_particle_leakage);
    Ok(())
}

fn check_xi_number(ctx: &Ctx, out: &mut Outcome) -> Result<()> {
    let xi = build_xi(&ctx.grid, xi_truncation(ctx))?;
    let mut worst: f64 = 0.0;
    for omega in cuts(&ctx.grid) {
        worst = worst.max(xi.number_covariance_defect(omega)?);
    }
    out.defect("number_covariance", worst);
    Ok(())
}

fn check_xi_consistency(ctx: &Ctx, out: &mut Outcome) -> Result<()> {
    let xi = build_xi(&ctx.grid, xi_truncation(ctx))?;
    let n = xi_truncation(ctx).min(3);
    out.param("max_factors", json!(n));
    out.defect("signed_labels", xi.consistency_defect(n)?);
    Ok(())
}

/// One point of a convergence series at `grid` with truncation `m`.
pub fn converge_point(name: &str, grid: &Arc<SpectralGrid>, m: usize) -> Result<f64> {
    let top = grid.omega_max();
    match name {
        "car-defect" | "car-square" => {
            let p = SpectralProcesses::build(grid, m)?;
            let phi = smeared_vector(grid);
            let d = p.car_defect(&phi, &phi, top)?;
            Ok(if name == "car-defect" { d.anticommutator } else { d.square })
        }
        "xi-leakage" => Ok(build_xi(grid, m.min(grid.mode_count()))?
            .field_covariance_defect(&uniform_vector(grid), top)?
            .one_particle_leakage),
        "ito-null-pairs" => {
            let space = WickSpace::build(grid, 1, 1)?;
            let (phi, psi, f, g) = smooth_quartet(grid);
            let mut worst: f64 = 0.0;
            for bin in 0..grid.bin_count() {
                worst = worst.max(null_pair_magnitude(&space, bin, &phi, &psi, &f, &g)?);
            }
            Ok(worst)
        }
        "ordered-products" => {
            let p = SpectralProcesses::build(grid, m)?;
            let u = smeared_vector(grid);
            let pair = [u.clone(), u];
            let a = ordered_product_defect(&p, &pair, top, Direction::FermiFromBose)?;
            let b = ordered_product_defect(&p, &pair, top, Direction::BoseFromFermi)?;
            Ok(a.max(b))
        }
        "ito-correction" => Ok(pairing_correction(grid, m)?.deviation),
        other => Err(Error::ConfigInvalid(format!("unknown convergence check `{other}`"))),
    }
}

/// Fixed smooth `(φ, ψ, f, g)` for the Itô probes.
pub fn smooth_quartet(grid: &Arc<SpectralGrid>) -> (OneParticleVector, OneParticleVector, OneParticleVector, OneParticleVector) {
    let s = |h: fn(f64) -> C64| OneParticleVector::sample_scalar(grid, h);
    (
        s(|w| C64::new(w.cos(), 0.3)),
        s(|w| C64::new(1.0, -0.5 * w)),
        s(|w| C64::new(0.5 * (1.0 + w), 0.0)),
        s(|w| C64::new(0.5 * (-w).exp(), 0.2)),
    )
}

/// Product correction of `X = ∫dB⁻_ψ`, `Y = ∫dB⁺_φ` against its table value.
pub fn pairing_correction(grid: &Arc<SpectralGrid>, m: usize) -> Result<crate::wick::CorrectionReport> {
    let space = WickSpace::build(grid, m, 1)?;
    let (phi, psi, _, _) = smooth_quartet(grid);
    let id = AdaptedStepProcess::identity(&space);
    let x = WickIntegrand::single(&space, Differential::Annihilate, id.clone(), &psi);
    let y = WickIntegrand::single(&space, Differential::Create, id, &phi);
    ito_correction_defect(&space, &x, &y, &default_panel(&space, 0.5), grid.omega_max(), m - 1)
}

/// Runs each convergence check over the configured bin counts and fits the
/// slope of `log defect` against `log Δω`.
pub fn run_converge(config: &SuiteConfig) -> Result<Report> {
    let names = converge_names();
    let counts = config.validate_converge(&names)?;
    let mut report = Report::new(config.clone());
    for name in selected(&config.checks, &names) {
        let &(_, lo, hi) = CONVERGE_CHECKS.iter().find(|c| c.0 == name).expect("registered");
        let mut points = Vec::with_capacity(counts.len());
        for &n in &counts {
            let grid = config.grid(n)?;
            let defect = converge_point(name, &grid, config.truncation)?;
            points.push(ConvergencePoint { n, delta_omega: grid.max_width(), defect });
        }
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.delta_omega, p.defect)).collect();
        let (slope, residual) = match fit_slope(&xy) {
            Ok(f) => (Some(f.slope), Some(f.residual)),
            Err(_) => (None, None),
        };
        let pass = slope.is_some_and(|s| s >= lo && hi.is_none_or(|h| s <= h));
        let mut parameters = BTreeMap::new();
        parameters.insert("truncation".to_string(), json!(config.truncation));
        report.convergence.push(ConvergenceSeries {
            check: name.to_string(),
            parameters,
            points,
            slope,
            residual,
            expected_min: lo,
            expected_max: hi,
            pass,
        });
    }
    Ok(report)
}

/// The Itô table on the configured grid: per pair, the table entry, the
/// largest exact-probe deviation (if the pair has an exact probe), and the
/// largest coherent expectation over bins.
pub fn run_ito_table(config: &SuiteConfig) -> Result<Report> {
    let bins = config.validate_verify(&[])?;
    let grid = config.grid(bins)?;
    let space = WickSpace::build(&grid, config.truncation, 1)?;
    let (phi, psi, f, g) = smooth_quartet(&grid);
    let coherent = ItoProbe::Coherent(f.clone(), g.clone());
    let mut report = Report::new(config.clone());
    for row in Differential::ALL {
        for col in Differential::ALL {
            let mut out = Outcome::default();
            out.param("entry", serde_json::to_value(ito_table(row, col))?);
            let (mut exact, mut mag, mut dev): (f64, f64, f64) = (0.0, 0.0, 0.0);
            for bin in 0..bins {
                if let Some(probe) = exact_probe(row, col, &f, &g) {
                    let (e, p) = ito_table_probe(&space, row, col, bin, &phi, &psi, &probe)?;
                    exact = exact.max((e - p).norm());
                }
                let (e, p) = ito_table_probe(&space, row, col, bin, &phi, &psi, &coherent)?;
                mag = mag.max(e.norm());
                dev = dev.max((e - p).norm());
            }
            if exact_probe(row, col, &f, &g).is_some() {
                out.defect("exact_probe", exact);
            }
            out.observe("coherent_max", mag).observe("coherent_deviation", dev);
            let name = format!("{}*{}", row.name(), col.name());
            report.checks.push(CheckResult::new(&name, out.params, out.defects, out.observations, config.tolerance));
        }
    }
    Ok(report)
}

/// `verify` restricted to the `Ξ` checks.
pub fn run_xi(config: &SuiteConfig) -> Result<Report> {
    let mut cfg = config.clone();
    if cfg.checks.is_empty() {
        cfg.checks = XI_CHECKS.iter().map(|s| s.to_string()).collect();
    } else if let Some(bad) = cfg.checks.iter().find(|c| !XI_CHECKS.contains(&c.as_str())) {
        return Err(Error::ConfigInvalid(format!("`{bad}` is not a Xi check")));
    }
    run_verify(&cfg)
}
