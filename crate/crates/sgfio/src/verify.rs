//! Quantitative verification of the operator layer: L2 operator-norm
//! estimation by power iteration, Schur kernel bounds, measurement of
//! composition-truncation remainders, and decay-slope fitting along
//! weight rays.
//!
//! Nothing in this module assumes a claimed estimate holds; every
//! routine measures and reports, and pass flags are computed from the
//! measurements with their tolerances stated next to the constants

use num_complex::Complex64;
use serde::Serialize;

use crate::calculus::{
    compose_fio_pair, compose_mixed, CompositionResult, FioPairOrder, MixedMode,
};
use crate::error::{CalculusError, OperatorError};
use crate::grid::{Grid, GridFunction};
use crate::handle::{FnHandle, PhaseHandle, SymbolHandle};
use crate::operators::{OperatorKind, SgOperator};
use crate::presets;

/// Relative change between successive power-iteration values at which
/// the norm estimate is declared converged.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Magnitudes at or below this are treated as identically zero when
/// fitting decay slopes: a defect that underflows is a terminated
/// expansion, not a data point.
pub const ZERO_FLOOR: f64 = 1e-300;

/// Operator-level discretization floor, calibrated on the terminating
/// composition where the expansion is exact and the entire measured
/// defect is quadrature error.  Below this level defect orderings are
/// noise.
pub const QUADRATURE_FLOOR: f64 = 1e-8;

/// Scales sampled along rays.  Coordinates are placed so that the
/// bracket weight of the moving slot equals the scale exactly, and the
/// six values span 1.5 decades.
pub const RAY_SCALES: [f64; 6] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// Slack granted on fitted slopes against predicted class drops; the
/// fits sample a probe box, not the asymptotic regime.
pub const SLOPE_SLACK: f64 = 0.5;

// Operator norms ----------------------------------------------------------

/// Result of the power-iteration norm estimate.
#[derive(Debug, Clone, Serialize)]
pub struct NormEstimate {
    /// Estimated L2 -> L2 operator norm.
    pub estimate: f64,
    /// Iterations actually performed.
    pub iterations: usize,
    /// Relative change of the squared-norm iterate at the last step.
    pub residual: f64,
    /// Whether the residual reached `NORM_TOLERANCE`.
    pub converged: bool,
    /// Grid the estimate was computed on.
    pub grid: String,
}

/// The adjoint of an operator, reached through the type I / type II
/// pairing: the two kinds are formal adjoints of each other for a
/// shared symbol and phase, the ordinary quantization is type I with
/// the pairing phase, and the symmetric quantization conjugates its
/// symbol.
pub fn adjoint_operator(op: &SgOperator) -> SgOperator {
    match op.kind() {
        OperatorKind::FioTypeI => SgOperator::fio_type_ii(
            op.symbol().clone(),
            op.phase().expect("type I carries a phase").clone(),
        )
        .expect("dimensions already validated"),
        OperatorKind::FioTypeII => SgOperator::fio_type_i(
            op.symbol().clone(),
            op.phase().expect("type II carries a phase").clone(),
        )
        .expect("dimensions already validated"),
        OperatorKind::KohnNirenberg => {
            let d = op.symbol().d();
            let pairing = PhaseHandle::new(
                "identity",
                d,
                FnHandle::pairing_block(2 * d, 0, d, d),
            );
            SgOperator::fio_type_ii(op.symbol().clone(), pairing)
                .expect("dimensions already validated")
        }
        OperatorKind::Weyl => SgOperator::weyl(op.symbol().conj()),
    }
}

/// Estimates the L2 operator norm of `op` on `grid` by power iteration
/// on u -> A*(A u), so only the squared norm is ever iterated and
/// complex eigenvalues never enter.  The start vector is a seeded
/// random Schwartz-type input; the run is deterministic for a fixed
/// seed.  `iters` must be at least 10.
pub fn operator_norm(
    op: &SgOperator,
    grid: &Grid,
    iters: usize,
    seed: u64,
) -> Result<NormEstimate, OperatorError> {
    assert!(iters >= 10, "power iteration needs at least 10 iterations");
    let adjoint = adjoint_operator(op);
    let mut u = presets::random_test_input(grid, seed)?;
    let mut lambda = 0.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..iters {
        let au = op.apply(&u)?.output;
        let mut v = adjoint.apply(&au)?.output;
        let next = v.norm();
        iterations += 1;
        if next <= ZERO_FLOOR {
            // The operator annihilates the iterate; the norm of the
            // restriction is zero and there is nothing to iterate.
            lambda = 0.0;
            residual = 0.0;
            converged = true;
            break;
        }
        residual = (next - lambda).abs() / next;
        lambda = next;
        v.scale(Complex64::new(1.0 / next, 0.0));
        u = v;
        if residual <= NORM_TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(NormEstimate {
        estimate: lambda.sqrt(),
        iterations,
        residual,
        converged,
        grid: format!(
            "d={} n={} l={}",
            grid.dim(),
            grid.points_per_axis(),
            grid.half_width()
        ),
    })
}

// Schur bounds ------------------------------------------------------------

/// Kernel-integral bound max(sup_x int |K(x,y)| dy, sup_y int |K(x,y)| dx)
/// dominating the L2 operator norm.  Requires a kernel whose rows are
/// grid-integrable; non-decaying amplitudes are rejected by the kernel
/// evaluator's tail guard.
pub fn schur_bound(op: &SgOperator, grid: &Grid) -> Result<f64, OperatorError> {
    let d = grid.dim();
    let cell = grid.spacing().powi(d as i32);
    let n = grid.len();
    let mut column_sums = vec![0.0f64; n];
    let mut max_row = 0.0f64;
    let mut x = vec![0.0f64; d];
    for j in 0..n {
        grid.point(j, &mut x);
        let row = op.kernel_row(grid, &x)?;
        let mut row_sum = 0.0;
        for (k, v) in row.values().iter().enumerate() {
            let m = v.norm();
            row_sum += m;
            column_sums[k] += m;
        }
        max_row = max_row.max(row_sum * cell);
    }
    let max_column = column_sums.iter().fold(0.0f64, |a, &s| a.max(s * cell));
    Ok(max_row.max(max_column))
}

// Decay fits --------------------------------------------------------------

/// A ray through phase space: one coordinate sweeps so that its
/// bracket weight equals the scale parameter exactly, the others stay
/// at the base point.
#[derive(Debug, Clone, Serialize)]
pub struct Ray {
    pub label: String,
    /// Flat coordinate index in 0..2d (position block first).
    pub axis: usize,
    pub sign: f64,
    pub base: Vec<f64>,
}

impl Ray {
    /// Ray along position axis `axis`, other coordinates zero.
    pub fn position(d: usize, axis: usize) -> Ray {
        assert!(axis < d);
        Ray {
            label: format!("x{axis}"),
            axis,
            sign: 1.0,
            base: vec![0.0; 2 * d],
        }
    }

    /// Ray along frequency axis `axis`, other coordinates zero.
    pub fn frequency(d: usize, axis: usize) -> Ray {
        assert!(axis < d);
        Ray {
            label: format!("xi{axis}"),
            axis: d + axis,
            sign: 1.0,
            base: vec![0.0; 2 * d],
        }
    }

    /// One position and one frequency ray along the first axis.
    pub fn standard(d: usize) -> Vec<Ray> {
        vec![Ray::position(d, 0), Ray::frequency(d, 0)]
    }

    pub fn with_base(mut self, base: Vec<f64>) -> Ray {
        assert_eq!(base.len(), self.base.len());
        self.base = base;
        self
    }

    /// Whether the moving coordinate sits in the frequency block.
    pub fn is_frequency(&self) -> bool {
        self.axis >= self.base.len() / 2
    }

    /// The sample point at scale `t`: the moving coordinate is
    /// sign * sqrt(t^2 - 1), so its bracket weight is exactly `t`.
    pub fn point(&self, t: f64) -> Vec<f64> {
        assert!(t >= 1.0);
        let mut p = self.base.clone();
        p[self.axis] = self.sign * (t * t - 1.0).sqrt();
        p
    }
}

/// Least-squares log-log fit of sampled magnitudes against scales.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub label: String,
    pub scales: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Fitted exponent of the power law (log-log slope).
    pub slope: f64,
    /// Fitted log-magnitude at scale 1 (natural log).
    pub intercept: f64,
    /// Root-mean-square log residual of the fit.
    pub residual: f64,
    /// True when a sample underflowed `ZERO_FLOOR`: the data is an
    /// exact zero (terminated expansion), not a power law, and slope,
    /// intercept and residual are reported as zero.
    pub degenerate: bool,
}

/// Fits `log magnitude = slope * log scale + intercept`.  Requires at
/// least five samples spanning at least 1.5 decades in scale.
pub fn fit_decay(label: impl Into<String>, scales: &[f64], magnitudes: &[f64]) -> DecayFit {
    assert_eq!(scales.len(), magnitudes.len());
    assert!(scales.len() >= 5, "a decay fit needs at least five samples");
    let lo = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().cloned().fold(0.0f64, f64::max);
    assert!(
        hi / lo >= 10f64.powf(1.5) * (1.0 - 1e-12),
        "decay-fit scales must span 1.5 decades"
    );
    let label = label.into();
    if magnitudes.iter().any(|&m| m <= ZERO_FLOOR) {
        return DecayFit {
            label,
            scales: scales.to_vec(),
            magnitudes: magnitudes.to_vec(),
            slope: 0.0,
            intercept: 0.0,
            residual: 0.0,
            degenerate: true,
        };
    }
    let n = scales.len() as f64;
    let xs: Vec<f64> = scales.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = magnitudes.iter().map(|m| m.ln()).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - slope * x - intercept;
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    DecayFit {
        label,
        scales: scales.to_vec(),
        magnitudes: magnitudes.to_vec(),
        slope,
        intercept,
        residual,
        degenerate: false,
    }
}

// Remainder measurement ---------------------------------------------------

/// A composition whose truncation remainder is to be measured: either
/// a mixed multiplier/phase-carrying product or a shared-phase type
/// I / type II pair.
#[derive(Clone)]
pub enum CompositionSpec {
    Mixed {
        mode: MixedMode,
        p: SymbolHandle,
        amp: SymbolHandle,
        phi: PhaseHandle,
    },
    Pair {
        order: FioPairOrder,
        a: SymbolHandle,
        b: SymbolHandle,
        phi: PhaseHandle,
        cutoff: f64,
    },
}

impl CompositionSpec {
    pub fn d(&self) -> usize {
        match self {
            CompositionSpec::Mixed { phi, .. } | CompositionSpec::Pair { phi, .. } => phi.d(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            CompositionSpec::Mixed { mode, p, amp, phi } => format!(
                "{mode:?}[{}, {}; {}]",
                p.name(),
                amp.name(),
                phi.name()
            ),
            CompositionSpec::Pair {
                order, a, b, phi, ..
            } => format!("{order:?}[{}, {}; {}]", a.name(), b.name(), phi.name()),
        }
    }

    /// The truncated composition at `m` expansion orders.
    pub fn compose(&self, m: usize) -> Result<CompositionResult, CalculusError> {
        match self {
            CompositionSpec::Mixed { mode, p, amp, phi } => compose_mixed(*mode, p, amp, phi, m),
            CompositionSpec::Pair {
                order,
                a,
                b,
                phi,
                cutoff,
            } => compose_fio_pair(*order, a, b, phi, m, *cutoff),
        }
    }

    /// The uncomposed reference: both factors applied in sequence.
    pub fn direct(&self, u: &GridFunction) -> Result<GridFunction, CalculusError> {
        match self {
            CompositionSpec::Mixed { mode, p, amp, phi } => {
                let pdo = SgOperator::kohn_nirenberg(p.clone());
                let out = match mode {
                    MixedMode::PdoFio1 => {
                        let fio = SgOperator::fio_type_i(amp.clone(), phi.clone())?;
                        pdo.apply(&fio.apply(u)?.output)?.output
                    }
                    MixedMode::Fio1Pdo => {
                        let fio = SgOperator::fio_type_i(amp.clone(), phi.clone())?;
                        fio.apply(&pdo.apply(u)?.output)?.output
                    }
                    MixedMode::Fio2Pdo => {
                        let fio = SgOperator::fio_type_ii(amp.clone(), phi.clone())?;
                        fio.apply(&pdo.apply(u)?.output)?.output
                    }
                    MixedMode::PdoFio2 => {
                        let fio = SgOperator::fio_type_ii(amp.clone(), phi.clone())?;
                        pdo.apply(&fio.apply(u)?.output)?.output
                    }
                };
                Ok(out)
            }
            CompositionSpec::Pair {
                order, a, b, phi, ..
            } => {
                let fio1 = SgOperator::fio_type_i(a.clone(), phi.clone())?;
                let fio2 = SgOperator::fio_type_ii(b.clone(), phi.clone())?;
                let out = match order {
                    FioPairOrder::TypeIOuter => fio1.apply(&fio2.apply(u)?.output)?.output,
                    FioPairOrder::TypeIIOuter => fio2.apply(&fio1.apply(u)?.output)?.output,
                };
                Ok(out)
            }
        }
    }

    /// Predicted class drop per expansion order in the position and
    /// frequency slots.
    pub fn drop_rates(&self) -> (f64, f64) {
        match self {
            CompositionSpec::Mixed { amp, .. } => (amp.class().r.min(0.5), 0.5),
            CompositionSpec::Pair { .. } => (1.0, 1.0),
        }
    }
}

/// Remainder data for one truncation order.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderEntry {
    pub order: usize,
    /// Relative operator-level defect per test function.
    pub defects: Vec<f64>,
    /// Symbol-level truncation-defect decay per ray.
    pub fits: Vec<DecayFit>,
}

/// Sweep of truncation orders 0..=m against the direct two-step
/// reference and a one-order-deeper reference symbol.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderReport {
    pub spec: String,
    pub reference_order: usize,
    pub orders: Vec<RemainderEntry>,
    /// Operator defects non-increasing in the order (ties below the
    /// quadrature floor allowed).
    pub defects_monotone: bool,
    /// Fitted defect slopes drop against the order-0 baseline at the
    /// predicted per-order rate, within `SLOPE_SLACK`.
    pub slopes_ok: bool,
    pub slack: f64,
}

/// Measures truncation remainders of `spec` for orders 0..=m.
///
/// Operator level: the relative L2 defect between the direct two-step
/// application and the quantized truncated symbol, per test function;
/// order 0 quantizes the zero symbol, so its defect is 1 by
/// construction.  Symbol level: |c_(m+1) - c_order| sampled along each
/// ray and fitted to a power law, with the one-order-deeper truncation
/// standing in for the full symbol.
pub fn remainder_probe(
    spec: &CompositionSpec,
    m: usize,
    testset: &[GridFunction],
    rays: &[Ray],
) -> Result<RemainderReport, CalculusError> {
    assert!(m >= 1, "remainder sweep needs a positive top order");
    let reference = spec.compose(m + 1)?;
    let direct: Vec<GridFunction> = testset
        .iter()
        .map(|u| spec.direct(u))
        .collect::<Result<_, _>>()?;
    let mut orders: Vec<RemainderEntry> = Vec::with_capacity(m + 1);
    for truncation in 0..=m {
        let comp = if truncation == 0 {
            None
        } else {
            Some(spec.compose(truncation)?)
        };
        let mut defects = Vec::with_capacity(testset.len());
        for (u, du) in testset.iter().zip(&direct) {
            let approximated = match &comp {
                None => GridFunction::zeros(u.grid().clone()),
                Some(c) => c.realize()?.apply(u)?.output,
            };
            defects.push(du.relative_distance(&approximated)?);
        }
        let mut fits = Vec::with_capacity(rays.len());
        for ray in rays {
            let mut magnitudes = Vec::with_capacity(RAY_SCALES.len());
            for &t in RAY_SCALES.iter() {
                let q = ray.point(t);
                let full = reference.symbol.value(&q)?;
                let truncated = match &comp {
                    None => Complex64::new(0.0, 0.0),
                    Some(c) => c.symbol.value(&q)?,
                };
                magnitudes.push((full - truncated).norm());
            }
            fits.push(fit_decay(
                format!("m={truncation} {}", ray.label),
                &RAY_SCALES,
                &magnitudes,
            ));
        }
        orders.push(RemainderEntry {
            order: truncation,
            defects,
            fits,
        });
    }

    let defects_monotone = (1..orders.len()).all(|k| {
        orders[k]
            .defects
            .iter()
            .zip(&orders[k - 1].defects)
            .all(|(now, before)| now <= before || (*now <= QUADRATURE_FLOOR && *before <= QUADRATURE_FLOOR))
    });
    let (x_rate, xi_rate) = spec.drop_rates();
    let slopes_ok = orders.iter().skip(1).all(|entry| {
        entry.fits.iter().enumerate().all(|(j, fit)| {
            let baseline = &orders[0].fits[j];
            if fit.degenerate || baseline.degenerate {
                return true;
            }
            let rate = if rays[j].is_frequency() { xi_rate } else { x_rate };
            fit.slope <= baseline.slope - rate * entry.order as f64 + SLOPE_SLACK
        })
    });
    Ok(RemainderReport {
        spec: spec.label(),
        reference_order: m + 1,
        orders,
        defects_monotone,
        slopes_ok,
        slack: SLOPE_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Params;

    fn sym(name: &str) -> SymbolHandle {
        presets::symbol(1, name, &Params::empty(), "t").unwrap()
    }

    fn gaussian_input(grid: &Grid) -> GridFunction {
        presets::test_input(grid, "gaussian", &Params::empty(), 0, "t").unwrap()
    }

    #[test]
    fn identity_norm_is_one() {
        let grid = Grid::new(1, 64, 6.0).unwrap();
        let op = SgOperator::kohn_nirenberg(sym("one"));
        let est = operator_norm(&op, &grid, 50, 7).unwrap();
        assert!(est.converged);
        assert!((est.estimate - 1.0).abs() < 1e-10, "{}", est.estimate);
    }

    #[test]
    fn norm_is_homogeneous() {
        let grid = Grid::new(1, 64, 6.0).unwrap();
        let a = sym("gaussian");
        let one = operator_norm(&SgOperator::kohn_nirenberg(a.clone()), &grid, 400, 3).unwrap();
        let two = operator_norm(
            &SgOperator::kohn_nirenberg(a.scale(Complex64::new(2.0, 0.0))),
            &grid,
            400,
            3,
        )
        .unwrap();
        assert!(
            (two.estimate - 2.0 * one.estimate).abs() < 1e-10 * two.estimate.max(1.0),
            "{} vs {}",
            two.estimate,
            one.estimate
        );
    }

    #[test]
    fn norm_matches_dense_singular_value() {
        // Assemble the dense matrix by applying to the delta basis and
        // compare the power-iteration estimate with its largest
        // singular value.
        let n = 64;
        let grid = Grid::new(1, n, 6.0).unwrap();
        let op = SgOperator::kohn_nirenberg(sym("gaussian"));
        let mut mat = nalgebra::DMatrix::<Complex64>::zeros(n, n);
        for j in 0..n {
            let mut delta = GridFunction::zeros(grid.clone());
            delta.values_mut()[j] = Complex64::new(1.0, 0.0);
            let col = op.apply(&delta).unwrap().output;
            for (i, v) in col.values().iter().enumerate() {
                mat[(i, j)] = *v;
            }
        }
        let sigma = mat.svd(false, false).singular_values[0];
        let est = operator_norm(&op, &grid, 400, 11).unwrap();
        assert!(est.converged, "residual {:e}", est.residual);
        assert!(
            (est.estimate - sigma).abs() < 1e-6,
            "power {} vs svd {}",
            est.estimate,
            sigma
        );
    }

    #[test]
    fn schur_bound_matches_the_separable_kernel() {
        // The kernel preset quantizes to K(x, y) = e^(-x^2 - y^2):
        // both Schur integrals equal sqrt(pi), and the rank-one norm
        // sqrt(pi/2) must sit below the bound.
        let grid = Grid::new(1, 64, 6.0).unwrap();
        let op = SgOperator::kohn_nirenberg(sym("gaussian_kernel"));
        let bound = schur_bound(&op, &grid).unwrap();
        let want = std::f64::consts::PI.sqrt();
        assert!((bound - want).abs() < 1e-6, "{bound} vs {want}");
        let est = operator_norm(&op, &grid, 100, 5).unwrap();
        let rank_one = (std::f64::consts::PI / 2.0).sqrt();
        assert!((est.estimate - rank_one).abs() < 1e-6);
        assert!(est.estimate <= bound + 1e-6);
    }

    #[test]
    fn schur_bound_rejects_non_integrable_amplitudes() {
        let grid = Grid::new(1, 64, 6.0).unwrap();
        let op = SgOperator::kohn_nirenberg(sym("one"));
        match schur_bound(&op, &grid) {
            Err(OperatorError::TailMass { .. }) => {}
            other => panic!("expected a tail-mass rejection, got {other:?}"),
        }
    }

    #[test]
    fn decay_fit_recovers_a_power_law() {
        let mags: Vec<f64> = RAY_SCALES.iter().map(|t| 3.0 * t.powf(-2.0)).collect();
        let fit = fit_decay("t^-2", &RAY_SCALES, &mags);
        assert!(!fit.degenerate);
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!(fit.residual < 1e-13);

        let zeros = vec![0.0; RAY_SCALES.len()];
        let flat = fit_decay("zero", &RAY_SCALES, &zeros);
        assert!(flat.degenerate);
    }

    #[test]
    fn terminating_remainder_sits_at_the_quadrature_floor() {
        // p = xi ends the expansion after two orders; every defect
        // beyond is pure discretization.  The frequency-differentiating
        // reference needs spectral headroom, hence the finer grid.
        let spec = CompositionSpec::Mixed {
            mode: MixedMode::PdoFio1,
            p: sym("xi1"),
            amp: sym("gaussian"),
            phi: presets::phase(1, "perturbed", &Params::scalar("eps", 0.2), "t").unwrap(),
        };
        let grid = Grid::new(1, 128, 9.0).unwrap();
        let report = remainder_probe(
            &spec,
            2,
            &[gaussian_input(&grid)],
            &Ray::standard(1),
        )
        .unwrap();
        assert_eq!(report.orders.len(), 3);
        assert!((report.orders[0].defects[0] - 1.0).abs() < 1e-12);
        let last = report.orders[2].defects[0];
        assert!(last <= QUADRATURE_FLOOR, "defect {last:e}");
        assert!(report.defects_monotone);
        // The order-2 truncation already equals the reference, so its
        // ray defects are exact zeros.
        assert!(report.orders[2].fits.iter().all(|f| f.degenerate));
        assert!(report.slopes_ok);
    }

    #[test]
    fn bracket_multiplier_defects_shrink_and_slopes_drop() {
        // p = <xi> does not terminate: defects must decrease strictly
        // with the order and the ray slopes must fall at the predicted
        // half-order rate.
        let p = presets::symbol(
            1,
            "theta",
            &Params::empty().with_scalar("m", 0.0).with_scalar("mu", 1.0),
            "t",
        )
        .unwrap();
        let spec = CompositionSpec::Mixed {
            mode: MixedMode::PdoFio1,
            p,
            amp: sym("gaussian"),
            phi: presets::phase(1, "perturbed", &Params::scalar("eps", 0.2), "t").unwrap(),
        };
        let grid = Grid::new(1, 128, 9.0).unwrap();
        let report = remainder_probe(
            &spec,
            3,
            &[gaussian_input(&grid)],
            &Ray::standard(1),
        )
        .unwrap();
        for k in 1..report.orders.len() {
            assert!(
                report.orders[k].defects[0] < report.orders[k - 1].defects[0],
                "defect did not shrink at order {k}"
            );
        }
        assert!(report.defects_monotone);
        assert!(report.slopes_ok, "report: {report:?}");
        // One kept term beats zero kept terms by at least a factor of
        // two along the frequency ray at bracket weight 32.
        let xi_ray = 1;
        let at = 4;
        let none = report.orders[0].fits[xi_ray].magnitudes[at];
        let one = report.orders[1].fits[xi_ray].magnitudes[at];
        assert!(none >= 2.0 * one, "{none:e} vs {one:e}");
    }
}
