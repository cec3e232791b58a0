//! End-to-end acceptance checks, one per headline capability.
//!
//! Each check builds its own operators and grids from presets, measures a
//! headline quantity, and compares it against a pinned budget. The checks
//! are callable individually (the integration gate prints one line per
//! check) and collectively through [`run_all`] (the CLI suite runner).
//!
//! Budgets are fixed constants chosen once against independent oracles;
//! they are not tuned to the implementation. A check that cannot run
//! (construction or evaluation error) reports a failure with the error
//! text instead of panicking.

use num_complex::Complex64;
use serde::Serialize;

use crate::calculus::{
    compose_fio_pair, compose_mixed, egorov_symbol, parametrix, psi_derivative, EgorovVariant,
    FioPairOrder, MixedMode,
};
use crate::grid::{Grid, GridFunction};
use crate::handle::{FnHandle, PhaseHandle, SgClass, SymbolHandle, WeightHandle};
use crate::jet::MultiIndex;
use crate::operators::{adjoint_pair_check, SgOperator};
use crate::presets::{self, Params};
use crate::symbols::{diagonal_cutoff, excision, seminorm_probe};
use crate::verify::{self, fit_decay, operator_norm, remainder_probe, schur_bound, CompositionSpec, Ray};
use crate::weights::ProbeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of one acceptance check.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub index: usize,
    pub name: String,
    pub pass: bool,
    /// Headline measurement; its meaning is described in `detail`.
    pub measured: f64,
    /// Budget the measurement is held against.
    pub budget: f64,
    pub detail: String,
    pub elapsed_ms: u128,
}

/// Runs all checks in order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        identity_reduction(),
        plane_phase_consistency(),
        adjoint_pairing(),
        terminating_composition(),
        classical_reduction(),
        remainder_order_drop(),
        phase_envelope_decay(),
        pair_composition(),
        parametrix_defect_order(),
        egorov_leading_symbol(),
        norm_stability(),
        structure_functions(),
        jet_integrity(),
    ]
}

type Measurement = Result<(f64, String), String>;

fn finish(
    index: usize,
    name: &str,
    budget: f64,
    started: std::time::Instant,
    outcome: Measurement,
) -> CriterionResult {
    finish_with_budget(index, name, started, outcome.map(|(m, d)| (m, budget, d)))
}

/// Like [`finish`] but the measurement itself fixes the budget, for
/// checks whose margin is another measured quantity.
fn finish_with_budget(
    index: usize,
    name: &str,
    started: std::time::Instant,
    outcome: Result<(f64, f64, String), String>,
) -> CriterionResult {
    let elapsed_ms = started.elapsed().as_millis();
    match outcome {
        Ok((measured, budget, detail)) => CriterionResult {
            index,
            name: name.to_string(),
            pass: measured <= budget,
            measured,
            budget,
            detail,
            elapsed_ms,
        },
        Err(e) => CriterionResult {
            index,
            name: name.to_string(),
            pass: false,
            measured: f64::INFINITY,
            budget: f64::NAN,
            detail: format!("error: {e}"),
            elapsed_ms,
        },
    }
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn symbol(d: usize, name: &str) -> Result<SymbolHandle, String> {
    let params = match name {
        "theta" => Params::empty().with_scalar("m", 1.0).with_scalar("mu", -1.0),
        _ => Params::empty(),
    };
    presets::symbol(d, name, &params, "acceptance").map_err(s)
}

fn theta_symbol(d: usize, m: f64, mu: f64) -> Result<SymbolHandle, String> {
    presets::symbol(
        d,
        "theta",
        &Params::empty().with_scalar("m", m).with_scalar("mu", mu),
        "acceptance",
    )
    .map_err(s)
}

fn phase(d: usize, name: &str) -> Result<PhaseHandle, String> {
    let params = match name {
        "transport" => Params::scalar("t", 0.5),
        "perturbed" => Params::scalar("eps", 0.25),
        _ => Params::empty(),
    };
    presets::phase(d, name, &params, "acceptance").map_err(s)
}

fn perturbed_phase(d: usize, eps: f64) -> Result<PhaseHandle, String> {
    presets::phase(d, "perturbed", &Params::scalar("eps", eps), "acceptance").map_err(s)
}

fn minus_i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

// 1 -----------------------------------------------------------------------

/// Quantizing the constant symbol with the plane phase reproduces every
/// test-function preset through the full analysis/synthesis pipeline.
pub fn identity_reduction() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let grid = Grid::new(1, 128, 10.0).map_err(s)?;
        let op = SgOperator::fio_type_i(symbol(1, "one")?, phase(1, "identity")?).map_err(s)?;
        let inputs: [(&str, Params); 4] = [
            ("gaussian", Params::empty()),
            ("hermite", Params::empty().with_vector("n", vec![3.0])),
            (
                "modulated_gaussian",
                Params::empty().with_vector("freq", vec![2.5]),
            ),
            ("random", Params::empty()),
        ];
        let mut worst = 0.0f64;
        let mut lines = Vec::new();
        for (name, params) in &inputs {
            let u = presets::test_input(&grid, name, params, 7, "acceptance").map_err(s)?;
            let out = op.apply(&u).map_err(s)?.output;
            let err = out.relative_distance(&u).map_err(s)?;
            worst = worst.max(err);
            lines.push(format!("{name} {err:.2e}"));
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 1.0 {
            return Err(format!("runtime {elapsed:.2} s exceeds the 1 s budget"));
        }
        Ok((worst, lines.join(", ")))
    };
    finish(1, "identity_reduction", 1e-10, start, run())
}

// 2 -----------------------------------------------------------------------

/// The phase-carrying quantization with the plane phase agrees with the
/// ordinary quantization of the same symbol.
pub fn plane_phase_consistency() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let grid = Grid::new(1, 128, 10.0).map_err(s)?;
        let u = presets::random_test_input(&grid, 5).map_err(s)?;
        let plane = phase(1, "identity")?;
        let mut worst = 0.0f64;
        let mut lines = Vec::new();
        for name in ["gaussian", "decay_xi", "elliptic_base"] {
            let a = symbol(1, name)?;
            let fio = SgOperator::fio_type_i(a.clone(), plane.clone()).map_err(s)?;
            let pdo = SgOperator::kohn_nirenberg(a);
            let err = fio
                .apply(&u)
                .map_err(s)?
                .output
                .relative_distance(&pdo.apply(&u).map_err(s)?.output)
                .map_err(s)?;
            worst = worst.max(err);
            lines.push(format!("{name} {err:.2e}"));
        }
        Ok((worst, lines.join(", ")))
    };
    finish(2, "plane_phase_consistency", 1e-11, start, run())
}

// 3 -----------------------------------------------------------------------

/// The type II operator acts as the inner-product adjoint of the type I
/// operator for every preset symbol and phase.
pub fn adjoint_pairing() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let grid = Grid::new(1, 64, 8.0).map_err(s)?;
        let pairs: Vec<(GridFunction, GridFunction)> = (0..5)
            .map(|k| {
                Ok((
                    presets::random_test_input(&grid, 21 + k).map_err(s)?,
                    presets::random_test_input(&grid, 121 + k).map_err(s)?,
                ))
            })
            .collect::<Result<_, String>>()?;
        let mut worst = 0.0f64;
        let mut worst_pair = String::new();
        for phase_name in presets::PHASE_PRESETS {
            let phi = phase(1, phase_name)?;
            for symbol_name in presets::SYMBOL_PRESETS {
                let a = symbol(1, symbol_name)?;
                for (u, v) in &pairs {
                    let check = adjoint_pair_check(&a, &phi, u, v).map_err(s)?;
                    if check.defect > worst {
                        worst = check.defect;
                        worst_pair = format!("({phase_name}, {symbol_name})");
                    }
                }
            }
        }
        Ok((
            worst,
            format!(
                "{} symbol x phase pairs, 5 seeded input pairs, worst at {worst_pair}",
                presets::PHASE_PRESETS.len() * presets::SYMBOL_PRESETS.len()
            ),
        ))
    };
    finish(3, "adjoint_pairing", 1e-8, start, run())
}

// 4 -----------------------------------------------------------------------

/// A frequency-linear multiplier makes the mixed expansion terminate, so
/// the composed-vs-direct defect sits at the quadrature floor. The floor
/// is measured independently as the self-convergence of the direct
/// two-step route between the working grid and its refinement.
pub fn terminating_composition() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let spec = CompositionSpec::Mixed {
            mode: MixedMode::PdoFio1,
            p: symbol(1, "xi1")?,
            amp: symbol(1, "gaussian")?,
            phi: perturbed_phase(1, 0.2)?,
        };
        let grid = Grid::new(1, 128, 9.0).map_err(s)?;
        let fine = Grid::new(1, 256, 9.0).map_err(s)?;
        let u = presets::test_input(&grid, "gaussian", &Params::empty(), 0, "acceptance")
            .map_err(s)?;
        let u_fine =
            presets::test_input(&fine, "gaussian", &Params::empty(), 0, "acceptance").map_err(s)?;

        let direct = spec.direct(&u).map_err(s)?;
        let direct_fine = spec.direct(&u_fine).map_err(s)?;
        // The fine grid shares every second node with the working grid.
        let coarse = direct.values();
        let restricted: Vec<Complex64> = (0..coarse.len())
            .map(|j| direct_fine.values()[2 * j])
            .collect();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (c, f) in coarse.iter().zip(&restricted) {
            num += (c - f).norm_sqr();
            den += f.norm_sqr();
        }
        let floor = (num / den).sqrt();

        let composed = spec
            .compose(2)
            .map_err(s)?
            .realize()
            .map_err(s)?
            .apply(&u)
            .map_err(s)?
            .output;
        let defect = composed.relative_distance(&direct).map_err(s)?;
        if floor > 1e-8 {
            return Err(format!("quadrature floor {floor:.2e} above 1e-8"));
        }
        Ok((
            defect / floor.max(f64::MIN_POSITIVE),
            format!("defect {defect:.2e}, measured floor {floor:.2e}"),
        ))
    };
    // Budget: the terminating defect may exceed the floor by at most 10x.
    finish(4, "terminating_composition", 10.0, start, run())
}

// 5 -----------------------------------------------------------------------

/// With the plane phase the mixed expansion reduces to the classical
/// composition formula; terms are re-derived here directly from jets of
/// the factors, without the envelope machinery.
pub fn classical_reduction() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let mut worst = 0.0f64;
        let mut checked = 0usize;
        for d in [1usize, 2] {
            let p = symbol(d, "xxi")?;
            let a = symbol(d, "gaussian")?;
            let plane = phase(d, "identity")?;
            let probes = ProbeSet::standard(d, 0xc5, 20, 6.0);
            let points: Vec<&Vec<f64>> = probes.points().iter().take(20).collect();
            for mode in [MixedMode::PdoFio1, MixedMode::Fio1Pdo] {
                for m in 1..=3usize {
                    let comp = compose_mixed(mode, &p, &a, &plane, m).map_err(s)?;
                    let alphas = MultiIndex::enumerate(d, m - 1);
                    if comp.terms.len() != alphas.len() {
                        return Err(format!(
                            "{mode:?} M={m}: {} terms vs {} indices",
                            comp.terms.len(),
                            alphas.len()
                        ));
                    }
                    for pt in &points {
                        let pj = p.jet(pt, m - 1).map_err(s)?;
                        let aj = a.jet(pt, m - 1).map_err(s)?;
                        for (alpha, term) in alphas.iter().zip(&comp.terms) {
                            let k = alpha.degree();
                            let dx = alpha.concat(&MultiIndex::zeros(d));
                            let dxi = MultiIndex::zeros(d).concat(alpha);
                            // Op(p) . Op(a): d_xi on the left factor,
                            // d_x on the right one; the reversed mode
                            // swaps the factor roles.
                            let want = match mode {
                                MixedMode::PdoFio1 => pj.partial(&dxi) * aj.partial(&dx),
                                _ => aj.partial(&dxi) * pj.partial(&dx),
                            } * minus_i_pow(k)
                                / alpha.factorial();
                            let got = term.value(pt).map_err(s)?;
                            let scale = want.norm().max(1.0);
                            worst = worst.max((got - want).norm() / scale);
                            checked += 1;
                        }
                    }
                }
            }
        }
        Ok((worst, format!("{checked} term evaluations, d in {{1, 2}}")))
    };
    finish(5, "classical_reduction", 1e-12, start, run())
}

// 6 -----------------------------------------------------------------------

/// For the bracket-weight multiplier the expansion does not terminate:
/// operator defects must shrink strictly with the truncation order and
/// the fitted symbol-defect slopes must drop at the predicted rate.
pub fn remainder_order_drop() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Result<(f64, f64, String), String> {
        let spec = CompositionSpec::Mixed {
            mode: MixedMode::PdoFio1,
            p: theta_symbol(1, 0.0, 1.0)?,
            amp: symbol(1, "gaussian")?,
            phi: perturbed_phase(1, 0.2)?,
        };
        let grid = Grid::new(1, 128, 9.0).map_err(s)?;
        let u = presets::test_input(&grid, "gaussian", &Params::empty(), 0, "acceptance")
            .map_err(s)?;
        let report = remainder_probe(&spec, 3, &[u], &Ray::standard(1)).map_err(s)?;
        let defects: Vec<f64> = report.orders.iter().map(|o| o.defects[0]).collect();
        for k in 1..defects.len() {
            if defects[k] >= defects[k - 1] {
                return Err(format!("defect did not shrink at order {k}: {defects:?}"));
            }
        }
        if !report.defects_monotone {
            return Err("monotonicity flag cleared".into());
        }
        if !report.slopes_ok {
            return Err("slope drop below the predicted rate".into());
        }
        let shown: Vec<String> = defects.iter().map(|v| format!("{v:.3e}")).collect();
        let m = defects.len() - 1;
        // Budget is the next-best defect: the top order must strictly
        // improve on it, which makes the margin visible in the line.
        Ok((
            defects[m],
            defects[m - 1],
            format!("defects [{}], slopes ok", shown.join(", ")),
        ))
    };
    finish_with_budget(6, "remainder_order_drop", start, run())
}

// 7 -----------------------------------------------------------------------

/// Diagonal derivatives of the phase envelope decay at least at the
/// half-order rate: along frequency rays the fitted slope stays at or
/// below |alpha|/2 + 0.3 and along position rays at or below
/// -|alpha|/2 + 0.3. Identically zero data passes outright.
pub fn phase_envelope_decay() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let one = symbol(1, "one")?;
        let rays = [
            Ray::position(1, 0).with_base(vec![0.0, 0.4]),
            Ray::frequency(1, 0).with_base(vec![0.7, 0.0]),
        ];
        let mut worst_margin = f64::NEG_INFINITY;
        let mut fits = 0usize;
        let mut degenerate = 0usize;
        for phase_name in ["transport", "perturbed"] {
            let phi = phase(1, phase_name)?;
            for k in 1..=4usize {
                let alpha = MultiIndex(vec![k as u8]);
                for ray in &rays {
                    let mags: Vec<f64> = verify::RAY_SCALES
                        .iter()
                        .map(|&t| {
                            let pt = ray.point(t);
                            psi_derivative(&phi, &one, &alpha, &pt[..1], &pt[1..])
                                .map(|v| v.norm())
                                .map_err(s)
                        })
                        .collect::<Result<_, _>>()?;
                    let fit = fit_decay(
                        format!("{phase_name} |alpha|={k} {}", ray.label),
                        &verify::RAY_SCALES,
                        &mags,
                    );
                    if fit.degenerate {
                        degenerate += 1;
                        continue;
                    }
                    let bound = if ray.is_frequency() {
                        k as f64 / 2.0 + 0.3
                    } else {
                        -(k as f64) / 2.0 + 0.3
                    };
                    worst_margin = worst_margin.max(fit.slope - bound);
                    fits += 1;
                }
            }
        }
        Ok((
            worst_margin,
            format!("{fits} fitted rays, {degenerate} identically zero, worst slope margin"),
        ))
    };
    finish(7, "phase_envelope_decay", 0.0, start, run())
}

// 8 -----------------------------------------------------------------------

/// Shared-phase pair composition: with the plane phase the single-term
/// truncation collapses to the pointwise product a . conj(b); with a
/// perturbed phase the order-3 symbol reproduces the two-step
/// application.
pub fn pair_composition() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let plane = phase(1, "identity")?;
        let a = symbol(1, "gaussian")?;
        let b = symbol(1, "elliptic_base")?;
        let probes = ProbeSet::standard(1, 0xc8, 12, 5.0);
        let mut collapse = 0.0f64;
        for order in [FioPairOrder::TypeIOuter, FioPairOrder::TypeIIOuter] {
            let comp = compose_fio_pair(order, &a, &b, &plane, 1, 1.0).map_err(s)?;
            for pt in probes.points() {
                let got = comp.symbol.value(pt).map_err(s)?;
                let want = a.value(pt).map_err(s)? * b.value(pt).map_err(s)?.conj();
                collapse = collapse.max((got - want).norm() / want.norm().max(1.0));
            }
        }
        if collapse > 1e-12 {
            return Err(format!("plane-phase collapse defect {collapse:.2e} above 1e-12"));
        }

        let spec = CompositionSpec::Pair {
            order: FioPairOrder::TypeIOuter,
            a,
            b: symbol(1, "xi1")?,
            phi: perturbed_phase(1, 1e-3)?,
            cutoff: 1.0,
        };
        let grid = Grid::new(1, 128, 9.0).map_err(s)?;
        let u = presets::test_input(&grid, "gaussian", &Params::empty(), 0, "acceptance")
            .map_err(s)?;
        let direct = spec.direct(&u).map_err(s)?;
        let composed = spec
            .compose(3)
            .map_err(s)?
            .realize()
            .map_err(s)?
            .apply(&u)
            .map_err(s)?
            .output;
        let defect = composed.relative_distance(&direct).map_err(s)?;
        Ok((
            defect,
            format!("plane-phase collapse {collapse:.2e}, perturbed order-3 defect"),
        ))
    };
    finish(8, "pair_composition", 1e-3, start, run())
}

// 9 -----------------------------------------------------------------------

/// Parametrix refinement: the composition defect of the refined inverse
/// drops one weight order per refinement step, witnessed by seminorm
/// probes against the dropped classes.
pub fn parametrix_defect_order() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let a = symbol(1, "elliptic_base")?;
        let phi = perturbed_phase(1, 0.2)?;
        // Truncation order 2: the refinement gain comes from squaring the
        // defect, and the shorter expansion keeps the near-origin
        // constants of the iterated corrections small.
        let result = parametrix(&a, &phi, &WeightHandle::one(1), 2, 2).map_err(s)?;
        let probes = ProbeSet::standard(1, 0x9a, 16, 25.0);
        let mut worst = 0.0f64;
        let mut lines = Vec::new();
        for (step, drop) in [(1usize, 1.0f64), (2, 2.0)] {
            let defect = result.defects[step].with_class(SgClass::new(
                WeightHandle::theta(1, -drop, -drop),
                1.0,
                1.0,
            ));
            let report = seminorm_probe(&defect, 1, &probes, 50.0).map_err(s)?;
            if !report.pass {
                return Err(format!(
                    "defect after {step} refinement(s) misses class theta[-{drop},-{drop}]: \
                     constant {:.2e}",
                    report.max_constant
                ));
            }
            worst = worst.max(report.max_constant);
            lines.push(format!("step {step}: {:.2e}", report.max_constant));
        }
        Ok((worst, lines.join(", ")))
    };
    finish(9, "parametrix_defect_order", 50.0, start, run())
}

// 10 ----------------------------------------------------------------------

/// The transported multiplier symbol matches the fully composed
/// sandwich chain to one weight order: the discrepancy times the
/// frequency bracket stays bounded along frequency rays.
pub fn egorov_leading_symbol() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let p = symbol(1, "elliptic_base")?;
        let a = symbol(1, "elliptic_base")?;
        let phi = phase(1, "perturbed")?;
        let inner = compose_mixed(MixedMode::PdoFio2, &p, &a, &phi, 3).map_err(s)?;
        let chain =
            compose_fio_pair(FioPairOrder::TypeIOuter, &a, &inner.symbol, &phi, 3, 1.0)
                .map_err(s)?;
        let predicted = egorov_symbol(&p, &a, &phi, EgorovVariant::SandwichAdjoint).map_err(s)?;
        let scales = [4.0f64, 8.0, 16.0, 32.0, 64.0];
        let mut worst_ratio = 0.0f64;
        let mut lines = Vec::new();
        for sign in [1.0f64, -1.0] {
            let ray = Ray::frequency(1, 0).with_base(vec![0.7, 0.0]);
            let mut weighted = Vec::new();
            for &t in &scales {
                let mut pt = ray.point(t);
                pt[1] *= sign;
                let r = (chain.symbol.value(&pt).map_err(s)?
                    - predicted.value(&pt).map_err(s)?)
                .norm();
                weighted.push(t * r);
            }
            let base = weighted[0].max(f64::MIN_POSITIVE);
            let peak = weighted.iter().cloned().fold(0.0f64, f64::max);
            worst_ratio = worst_ratio.max(peak / base);
            lines.push(format!(
                "sign {sign:+.0}: bracket-weighted discrepancy {:.2e} -> {:.2e}",
                weighted[0],
                weighted[weighted.len() - 1]
            ));
        }
        Ok((worst_ratio, lines.join("; ")))
    };
    finish(10, "egorov_leading_symbol", 10.0, start, run())
}

// 11 ----------------------------------------------------------------------

/// Norm estimates for order-zero amplitudes are stable across a 3x3
/// grid-refinement matrix and dominated by the kernel bound where the
/// kernel is integrable.
pub fn norm_stability() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let phi = phase(1, "perturbed")?;
        let mut worst_variation = 0.0f64;
        let mut ceiling = 0.0f64;
        let mut lines = Vec::new();
        for name in ["gaussian", "decay_xi", "elliptic_base"] {
            let a = symbol(1, name)?;
            let op = SgOperator::fio_type_i(a, phi.clone()).map_err(s)?;
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for n in [64usize, 128, 256] {
                for l in [5.0f64, 10.0, 20.0] {
                    let grid = Grid::new(1, n, l).map_err(s)?;
                    let est = operator_norm(&op, &grid, 50, 0xa11).map_err(s)?;
                    lo = lo.min(est.estimate);
                    hi = hi.max(est.estimate);
                }
            }
            let variation = (hi - lo) / lo;
            worst_variation = worst_variation.max(variation);
            ceiling = ceiling.max(hi);
            lines.push(format!("{name} [{lo:.4}, {hi:.4}] var {variation:.3}"));
        }
        let schur_grid = Grid::new(1, 128, 10.0).map_err(s)?;
        for name in ["gaussian", "decay_xi"] {
            let a = symbol(1, name)?;
            let op = SgOperator::fio_type_i(a, phi.clone()).map_err(s)?;
            let bound = schur_bound(&op, &schur_grid).map_err(s)?;
            let est = operator_norm(&op, &schur_grid, 50, 0xa11).map_err(s)?;
            if est.estimate > bound + 1e-6 {
                return Err(format!(
                    "{name}: norm {:.6} exceeds kernel bound {bound:.6}",
                    est.estimate
                ));
            }
            lines.push(format!("{name} norm {:.4} <= schur {:.4}", est.estimate, bound));
        }
        lines.push(format!("ceiling {ceiling:.4}"));
        Ok((worst_variation, lines.join("; ")))
    };
    finish(11, "norm_stability", 0.10, start, run())
}

// 12 ----------------------------------------------------------------------

/// A few unit vectors spanning axis and diagonal directions.
fn span_dirs(d: usize) -> Vec<Vec<f64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    if d == 1 {
        vec![vec![1.0]]
    } else {
        vec![vec![1.0, 0.0], vec![h, h]]
    }
}

/// Points `(x, y)` sweeping the cutoff transition `|y - x| ~ k <x>`
/// across base radii, directions, and the full shell thickness.
fn cutoff_shell_points(d: usize, k: f64) -> Vec<Vec<f64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let offsets: Vec<Vec<f64>> = if d == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![h, h],
            vec![-h, h],
            vec![-1.0, 0.0],
        ]
    };
    let mut pts = Vec::new();
    for &r in &[0.0f64, 1.0, 4.0, 32.0] {
        for u in &span_dirs(d) {
            let x: Vec<f64> = u.iter().map(|c| c * r).collect();
            let bx = (1.0 + r * r).sqrt();
            for v in &offsets {
                for j in 0..=40 {
                    let frac = 0.45 + 0.015 * j as f64;
                    let mut p = x.clone();
                    p.extend((0..d).map(|i| x[i] + frac * k * bx * v[i]));
                    pts.push(p);
                }
            }
            if r == 0.0 {
                break;
            }
        }
    }
    pts
}

/// Points `(x, xi)` sweeping the excision transition band
/// `|x| + |xi| ~ radius` over both block norms and directions.
fn excision_band_points(d: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for i in 0..=40 {
        for j in 0..=40 {
            let a = radius * i as f64 / 40.0;
            let b = radius * j as f64 / 40.0;
            if a + b < 0.4 * radius || a + b > 1.05 * radius {
                continue;
            }
            for u in &span_dirs(d) {
                for v in &span_dirs(d) {
                    let mut p: Vec<f64> = u.iter().map(|c| c * a).collect();
                    p.extend(v.iter().map(|c| c * b));
                    pts.push(p);
                }
            }
        }
    }
    pts
}

/// Structure functions: both plateaus of the diagonal cutoff and the
/// excision are bit-exact (values and jets), and both functions pass
/// order-two seminorm probes as flat symbols of unit rates.
pub fn structure_functions() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc12);
        let mut plateau_checks = 0usize;
        let k = 2.0;
        for d in [1usize, 2] {
            let chi = diagonal_cutoff(d, k);
            for _ in 0..12 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-6.0..6.0)).collect();
                let bx = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
                let mut dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
                dir.iter_mut().for_each(|v| *v /= n);
                for (frac, inner) in [(0.0, true), (0.3, true), (0.499, true), (1.0, false), (1.7, false)] {
                    let mut pt = x.clone();
                    pt.extend(x.iter().zip(&dir).map(|(xi, di)| xi + frac * k * bx * di));
                    let expect = if inner { 1.0 } else { 0.0 };
                    let v = chi.value(&pt).map_err(s)?;
                    if v.re != expect || v.im != 0.0 {
                        return Err(format!("cutoff plateau broken at {pt:?}: {v}"));
                    }
                    let jet = chi.jet(&pt, 2).map_err(s)?;
                    for (idx, c) in jet.coeffs().iter().enumerate() {
                        let want = if idx == 0 { expect } else { 0.0 };
                        if c.re != want || c.im != 0.0 {
                            return Err(format!("cutoff jet not flat at {pt:?}"));
                        }
                    }
                    plateau_checks += 1;
                }
            }
            for radius in [4.0f64, 8.0] {
                let ex = excision(d, radius);
                for _ in 0..12 {
                    let q: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let block = |v: &[f64]| -> f64 {
                        let a: f64 = v[..d].iter().map(|w| w * w).sum::<f64>().sqrt();
                        let b: f64 = v[d..].iter().map(|w| w * w).sum::<f64>().sqrt();
                        a + b
                    };
                    let sigma = block(&q).max(1e-9);
                    for (target, expect) in [
                        (0.3 * radius / 2.0, 0.0),
                        (0.95 * radius / 2.0, 0.0),
                        (radius, 1.0),
                        (1.6 * radius, 1.0),
                    ] {
                        let pt: Vec<f64> = q.iter().map(|v| v * target / sigma).collect();
                        let v = ex.value(&pt).map_err(s)?;
                        if v.re != expect || v.im != 0.0 {
                            return Err(format!("excision plateau broken at {pt:?}: {v}"));
                        }
                        let jet = ex.jet(&pt, 2).map_err(s)?;
                        for (idx, c) in jet.coeffs().iter().enumerate() {
                            let want = if idx == 0 { expect } else { 0.0 };
                            if c.re != want || c.im != 0.0 {
                                return Err(format!("excision jet not flat at {pt:?}"));
                            }
                        }
                        plateau_checks += 1;
                    }
                }
            }
        }

        // Seminorm probes concentrate on the transition shells, where the
        // only nonzero derivatives live; random probing understates the
        // constants by an order of magnitude.
        let flat = |d: usize| SgClass::new(WeightHandle::one(d), 1.0, 1.0);
        let mut worst = 0.0f64;
        let mut lines = vec![format!("{plateau_checks} exact plateau checks")];
        for d in [1usize, 2] {
            let mut targets = vec![(
                "cutoff".to_string(),
                diagonal_cutoff(d, k),
                cutoff_shell_points(d, k),
            )];
            for radius in [4.0f64, 8.0] {
                targets.push((
                    format!("excision{radius:.0}"),
                    excision(d, radius),
                    excision_band_points(d, radius),
                ));
            }
            for (label, fun, pts) in targets {
                let sym = SymbolHandle::new(format!("{label}_{d}"), d, fun, flat(d));
                let probes = ProbeSet::from_points(d, pts);
                let report = seminorm_probe(&sym, 2, &probes, 50.0).map_err(s)?;
                if !report.pass {
                    return Err(format!(
                        "{label} d={d}: seminorm constant {:.2e} above 50",
                        report.max_constant
                    ));
                }
                worst = worst.max(report.max_constant);
                lines.push(format!("{label} d={d} constant {:.1}", report.max_constant));
            }
        }
        Ok((worst, lines.join("; ")))
    };
    finish(12, "structure_functions", 50.0, start, run())
}

// 13 ----------------------------------------------------------------------

/// Jets of every preset agree with tensorized high-order central
/// differences for all derivatives of total order up to four.
pub fn jet_integrity() -> CriterionResult {
    let start = std::time::Instant::now();
    let run = || -> Measurement {
        let mut worst = 0.0f64;
        let mut worst_at = String::new();
        let mut count = 0usize;
        for d in [1usize, 2] {
            let mut handles: Vec<(String, FnHandle)> = Vec::new();
            for name in presets::SYMBOL_PRESETS {
                if *name == "gaussian_kernel" && d != 1 {
                    continue;
                }
                handles.push((format!("symbol {name} d={d}"), symbol(d, name)?.fun().clone()));
            }
            for name in presets::PHASE_PRESETS {
                handles.push((format!("phase {name} d={d}"), phase(d, name)?.fun().clone()));
            }
            for (name, w) in [
                ("one", WeightHandle::one(d)),
                ("theta", WeightHandle::theta(d, 2.0, 0.0)),
            ] {
                handles.push((format!("weight {name} d={d}"), w.fun().clone()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0xd1f + d as u64);
            let points: Vec<Vec<f64>> = (0..100)
                .map(|_| (0..2 * d).map(|_| rng.gen_range(-4.0..4.0)).collect())
                .collect();
            for (label, fun) in &handles {
                for pt in &points {
                    let (err, at) = jet_vs_differences(fun, pt).map_err(s)?;
                    if err > worst {
                        worst = err;
                        worst_at = format!("{label} {at}");
                    }
                    count += 1;
                }
            }
        }
        Ok((
            worst,
            format!("{count} jet/stencil comparisons, worst at {worst_at}"),
        ))
    };
    finish(13, "jet_integrity", 1e-6, start, run())
}

const FD_STEP: f64 = 0.02;
const FD_NODES: i64 = 4;

/// Nine-node central-difference weights for axis orders 0..=4; all rows
/// are exact on polynomials of degree eight, so the fourth-derivative
/// truncation error is O(h^6) and stays below the 1e-6 budget even for
/// the oscillatory presets.
fn fd_weights(order: usize, h: f64) -> [f64; 9] {
    match order {
        0 => [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        1 => {
            let c = 840.0 * h;
            [3.0, -32.0, 168.0, -672.0, 0.0, 672.0, -168.0, 32.0, -3.0].map(|w| w / c)
        }
        2 => {
            let c = 5040.0 * h * h;
            [
                -9.0, 128.0, -1008.0, 8064.0, -14350.0, 8064.0, -1008.0, 128.0, -9.0,
            ]
            .map(|w| w / c)
        }
        3 => {
            let c = 240.0 * h.powi(3);
            [-7.0, 72.0, -338.0, 488.0, 0.0, -488.0, 338.0, -72.0, 7.0].map(|w| w / c)
        }
        _ => {
            let c = 240.0 * h.powi(4);
            [
                7.0, -96.0, 676.0, -1952.0, 2730.0, -1952.0, 676.0, -96.0, 7.0,
            ]
            .map(|w| w / c)
        }
    }
}

/// Compares all jet coefficients of total order <= 4 at `pt` against
/// tensorized stencils over a 9^n displacement grid. Differences are
/// scaled by the larger of the coefficient itself and the largest
/// coefficient at the point.
fn jet_vs_differences(fun: &FnHandle, pt: &[f64]) -> Result<(f64, String), String> {
    let n = pt.len();
    let jet = fun.jet(pt, 4).map_err(s)?;
    let jet_scale = MultiIndex::enumerate(n, 4)
        .iter()
        .map(|m| jet.partial(m).norm())
        .fold(0.0f64, f64::max)
        .max(1e-9);

    // One function table per point: offsets in {-4..4}^n.
    let width = (2 * FD_NODES + 1) as usize;
    let table_len = width.pow(n as u32);
    let mut table = vec![Complex64::new(0.0, 0.0); table_len];
    let mut q = vec![0.0f64; n];
    for (flat, slot) in table.iter_mut().enumerate() {
        let mut rest = flat;
        for (axis, qv) in q.iter_mut().enumerate() {
            let node = (rest % width) as i64 - FD_NODES;
            rest /= width;
            *qv = pt[axis] + node as f64 * FD_STEP;
        }
        *slot = fun.value(&q).map_err(s)?;
    }

    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for gamma in MultiIndex::enumerate(n, 4) {
        let weights: Vec<[f64; 9]> = gamma
            .0
            .iter()
            .map(|&k| fd_weights(k as usize, FD_STEP))
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (flat, value) in table.iter().enumerate() {
            let mut w = 1.0f64;
            let mut rest = flat;
            for wrow in &weights {
                let node = rest % width;
                rest /= width;
                w *= wrow[node];
                if w == 0.0 {
                    break;
                }
            }
            if w != 0.0 {
                acc += value * w;
            }
        }
        let exact = jet.partial(&gamma);
        let scale = exact.norm().max(jet_scale);
        let err = (acc - exact).norm() / scale;
        if err > worst {
            worst = err;
            worst_at = format!("gamma {:?}", gamma.0);
        }
    }
    Ok((worst, worst_at))
}
