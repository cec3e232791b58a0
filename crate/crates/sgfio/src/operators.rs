//! Discretized operator application by oscillatory quadrature.
//!
//! Four operator kinds act on grid functions:
//!
//! * `KohnNirenberg`: (Au)(x) = (2pi)^(-d/2) Int e^(i<x,xi>) a(x,xi) Fu(xi) dxi,
//!   evaluated as a frequency quadrature against the discrete transform.
//! * `Weyl`: symmetric quantization with the symbol read at the midpoint
//!   (x+y)/2, evaluated by a double quadrature in y and xi.
//! * `FioTypeI`: same frequency quadrature with e^(i phi(x,xi)) in place of
//!   the plane wave.
//! * `FioTypeII`: the formal adjoint of the type I operator with the same
//!   data, realized exactly on the grid as F^(-1) o Op_(-phi^t)(b^#) o F^(-1)
//!   with b^#(x,xi) = conj(b(xi,x)).
//!
//! Every application reports how much of the frequency integrand was still
//! alive at the edge of the dual grid. Kernel evaluation treats an
//! unacceptable tail as an error; application reports it and lets the caller
//! decide.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::OperatorError;
use crate::grid::{fourier, Grid, GridFunction, TransformDirection};
use crate::handle::{FnHandle, PhaseHandle, SymbolHandle};
use crate::phases::phase_probe;
use crate::weights::ProbeSet;

/// Largest tolerated ratio between the integrand magnitude at the boundary
/// of the dual grid and its peak.
pub const TAIL_THRESHOLD: f64 = 1e-10;

/// Default thresholds for the constructor-time phase admissibility probe:
/// seminorm constant, gradient comparability constant, mixed Hessian floor.
pub const PHASE_PROBE_THRESHOLDS: (f64, f64, f64) = (100.0, 100.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    KohnNirenberg,
    Weyl,
    FioTypeI,
    FioTypeII,
}

/// A quantized operator: a symbol, an optional phase, and a kind.
///
/// For the pseudodifferential kinds the phase slot is empty and the plane
/// wave <x,xi> is used. For `FioTypeII` the stored symbol is the `b` whose
/// conjugate appears under the integral; the operator is the adjoint of the
/// type I operator built from the same data.
#[derive(Debug, Clone)]
pub struct SgOperator {
    kind: OperatorKind,
    symbol: SymbolHandle,
    phase: Option<PhaseHandle>,
}

/// Result of applying an operator to a grid function.
#[derive(Debug, Clone)]
pub struct ApplyReport {
    pub output: GridFunction,
    /// Boundary-to-peak magnitude ratio of the frequency integrand.
    pub tail_ratio: f64,
    /// True when `tail_ratio <= TAIL_THRESHOLD`.
    pub tail_ok: bool,
}

impl SgOperator {
    pub fn kohn_nirenberg(symbol: SymbolHandle) -> Self {
        SgOperator {
            kind: OperatorKind::KohnNirenberg,
            symbol,
            phase: None,
        }
    }

    pub fn weyl(symbol: SymbolHandle) -> Self {
        SgOperator {
            kind: OperatorKind::Weyl,
            symbol,
            phase: None,
        }
    }

    pub fn fio_type_i(symbol: SymbolHandle, phase: PhaseHandle) -> Result<Self, OperatorError> {
        check_pair(&symbol, &phase)?;
        Ok(SgOperator {
            kind: OperatorKind::FioTypeI,
            symbol,
            phase: Some(phase),
        })
    }

    pub fn fio_type_ii(symbol: SymbolHandle, phase: PhaseHandle) -> Result<Self, OperatorError> {
        check_pair(&symbol, &phase)?;
        Ok(SgOperator {
            kind: OperatorKind::FioTypeII,
            symbol,
            phase: Some(phase),
        })
    }

    /// Builds an FIO after running the phase admissibility probe; rejects
    /// phases that fail the seminorm, comparability, or Hessian checks.
    pub fn fio_checked(
        kind: OperatorKind,
        symbol: SymbolHandle,
        phase: PhaseHandle,
        probes: &ProbeSet,
    ) -> Result<Self, OperatorError> {
        let (sem, simple, det) = PHASE_PROBE_THRESHOLDS;
        let report = phase_probe(&phase, probes, sem, simple, det)?;
        if !report.pass {
            return Err(OperatorError::PhaseNotSimple(format!(
                "phase `{}`: seminorm {:.3e}, comparability {:.3e}, min |det| {:.3e}",
                phase.name(),
                report.seminorm.max_constant,
                report.simple_constant,
                report.det_min
            )));
        }
        match kind {
            OperatorKind::FioTypeI => SgOperator::fio_type_i(symbol, phase),
            OperatorKind::FioTypeII => SgOperator::fio_type_ii(symbol, phase),
            _ => SgOperator::fio_type_i(symbol, phase),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn symbol(&self) -> &SymbolHandle {
        &self.symbol
    }

    pub fn phase(&self) -> Option<&PhaseHandle> {
        self.phase.as_ref()
    }

    /// Applies the operator to `f` by quadrature on the dual grid.
    pub fn apply(&self, f: &GridFunction) -> Result<ApplyReport, OperatorError> {
        let d = self.symbol.d();
        if f.grid().dim() != d {
            return Err(OperatorError::DimensionMismatch {
                op: d,
                grid: f.grid().dim(),
            });
        }
        match self.kind {
            OperatorKind::KohnNirenberg => apply_frequency_quadrature(&self.symbol, None, f),
            OperatorKind::FioTypeI => {
                apply_frequency_quadrature(&self.symbol, self.phase.as_ref(), f)
            }
            OperatorKind::Weyl => apply_weyl(&self.symbol, f),
            OperatorKind::FioTypeII => {
                let phi = self.phase.as_ref().expect("type II carries a phase");
                apply_adjoint_route(&self.symbol, phi, f)
            }
        }
    }

    /// Evaluates one row K(x, .) of the Schwartz kernel on `grid`.
    ///
    /// Fails with `TailMass` when the frequency integrand has not decayed at
    /// the edge of the dual grid.
    pub fn kernel_row(&self, grid: &Grid, x: &[f64]) -> Result<GridFunction, OperatorError> {
        let d = self.symbol.d();
        if grid.dim() != d || x.len() != d {
            return Err(OperatorError::DimensionMismatch {
                op: d,
                grid: grid.dim(),
            });
        }
        match self.kind {
            OperatorKind::KohnNirenberg | OperatorKind::FioTypeI => {
                kernel_row_fft(&self.symbol, self.phase.as_ref(), grid, x)
            }
            OperatorKind::Weyl => kernel_row_weyl(&self.symbol, grid, x),
            OperatorKind::FioTypeII => {
                let phi = self.phase.as_ref().expect("type II carries a phase");
                kernel_row_type_ii(&self.symbol, phi, grid, x)
            }
        }
    }
}

fn check_pair(symbol: &SymbolHandle, phase: &PhaseHandle) -> Result<(), OperatorError> {
    if symbol.d() != phase.d() {
        return Err(OperatorError::SymbolPhaseMismatch {
            symbol: symbol.d(),
            phase: phase.d(),
        });
    }
    Ok(())
}

fn two_pi_pow(d: usize, halves: i32) -> f64 {
    // (2 pi)^(halves * d / 2)
    (2.0 * std::f64::consts::PI).powf(0.5 * halves as f64 * d as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Shared core for Kohn-Nirenberg and type I application:
/// out(x) = (2pi)^(-d/2) * cell * sum_k e^(i phi(x, xi_k)) a(x, xi_k) Fu(xi_k).
fn apply_frequency_quadrature(
    a: &SymbolHandle,
    phase: Option<&PhaseHandle>,
    f: &GridFunction,
) -> Result<ApplyReport, OperatorError> {
    let grid = f.grid().clone();
    let d = grid.dim();
    let dual = grid.dual();
    let fhat = fourier(f, TransformDirection::Forward)?;
    let dual_pts = dual.points();
    let boundary: Vec<bool> = (0..dual.len()).map(|k| dual.is_boundary_index(k)).collect();
    let scale = dual.spacing().powi(d as i32) * two_pi_pow(d, -1);

    let rows: Result<Vec<(Complex64, f64, f64)>, OperatorError> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let mut buf = vec![0.0; 2 * d];
            grid.point(j, &mut buf[..d]);
            let x: Vec<f64> = buf[..d].to_vec();
            let mut acc = Complex64::default();
            let mut peak = 0.0f64;
            let mut edge = 0.0f64;
            for (k, xi) in dual_pts.iter().enumerate() {
                buf[d..].copy_from_slice(xi);
                let ph = match phase {
                    Some(p) => p.value(&buf)?,
                    None => dot(&x, xi),
                };
                let term = Complex64::from_polar(1.0, ph) * a.value(&buf)? * fhat.values()[k];
                let m = term.norm();
                peak = peak.max(m);
                if boundary[k] {
                    edge = edge.max(m);
                }
                acc += term;
            }
            Ok((acc * scale, peak, edge))
        })
        .collect();
    let rows = rows?;
    finish_apply(grid, rows)
}

/// Midpoint quantization by double quadrature:
/// out(x) = (2pi)^(-d) * sum_k e^(i<x,xi_k>) * [sum_j e^(-i<y_j,xi_k>) a((x+y_j)/2, xi_k) u(y_j) h^d] * h_dual^d.
fn apply_weyl(a: &SymbolHandle, f: &GridFunction) -> Result<ApplyReport, OperatorError> {
    let grid = f.grid().clone();
    let d = grid.dim();
    let dual = grid.dual();
    let pts = grid.points();
    let dual_pts = dual.points();
    let boundary: Vec<bool> = (0..dual.len()).map(|k| dual.is_boundary_index(k)).collect();
    let cell_y = grid.spacing().powi(d as i32);
    let cell_xi = dual.spacing().powi(d as i32);
    let scale = cell_xi * two_pi_pow(d, -2);

    let rows: Result<Vec<(Complex64, f64, f64)>, OperatorError> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let x = &pts[j];
            let mut buf = vec![0.0; 2 * d];
            let mut acc = Complex64::default();
            let mut peak = 0.0f64;
            let mut edge = 0.0f64;
            for (k, xi) in dual_pts.iter().enumerate() {
                buf[d..].copy_from_slice(xi);
                let mut inner = Complex64::default();
                for (i, y) in pts.iter().enumerate() {
                    for ax in 0..d {
                        buf[ax] = 0.5 * (x[ax] + y[ax]);
                    }
                    inner += Complex64::from_polar(1.0, -dot(y, xi))
                        * a.value(&buf)?
                        * f.values()[i];
                }
                inner *= cell_y;
                let m = inner.norm();
                peak = peak.max(m);
                if boundary[k] {
                    edge = edge.max(m);
                }
                acc += Complex64::from_polar(1.0, dot(x, xi)) * inner;
            }
            Ok((acc * scale, peak, edge))
        })
        .collect();
    let rows = rows?;
    finish_apply(grid, rows)
}

/// Type II route. With F the discrete unitary transform,
/// Op*_phi(b) = F^(-1) o Op_(-phi^t)(b^#) o F^(-1), which reproduces the
/// discrete adjoint of the type I quadrature exactly.
fn apply_adjoint_route(
    b: &SymbolHandle,
    phi: &PhaseHandle,
    f: &GridFunction,
) -> Result<ApplyReport, OperatorError> {
    let b_sharp = b.transpose().conj();
    let neg_t_phase = phi.transpose().scale(-1.0);
    let inner = fourier(f, TransformDirection::Inverse)?;
    let mid = apply_frequency_quadrature(&b_sharp, Some(&neg_t_phase), &inner)?;
    let output = fourier(&mid.output, TransformDirection::Inverse)?;
    Ok(ApplyReport {
        output,
        tail_ratio: mid.tail_ratio,
        tail_ok: mid.tail_ok,
    })
}

fn finish_apply(
    grid: Grid,
    rows: Vec<(Complex64, f64, f64)>,
) -> Result<ApplyReport, OperatorError> {
    let peak = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
    let edge = rows.iter().fold(0.0f64, |m, r| m.max(r.2));
    let tail_ratio = if peak > 0.0 { edge / peak } else { 0.0 };
    let values = rows.into_iter().map(|r| r.0).collect();
    let output = GridFunction::new(grid, values)?;
    Ok(ApplyReport {
        output,
        tail_ratio,
        tail_ok: tail_ratio <= TAIL_THRESHOLD,
    })
}

fn tail_guard(magnitudes: &[f64], boundary: &[bool]) -> Result<(), OperatorError> {
    let peak = magnitudes.iter().fold(0.0f64, |m, v| m.max(*v));
    let edge = magnitudes
        .iter()
        .zip(boundary)
        .filter(|(_, b)| **b)
        .fold(0.0f64, |m, (v, _)| m.max(*v));
    if peak > 0.0 && edge > TAIL_THRESHOLD * peak {
        return Err(OperatorError::TailMass {
            boundary: edge,
            peak,
            threshold: TAIL_THRESHOLD,
        });
    }
    Ok(())
}

/// K(x, y) = (2pi)^(-d) Int e^(i(phi(x,xi) - <y,xi>)) a(x,xi) dxi, evaluated
/// for fixed x as a single transform of the dual-grid profile.
fn kernel_row_fft(
    a: &SymbolHandle,
    phase: Option<&PhaseHandle>,
    grid: &Grid,
    x: &[f64],
) -> Result<GridFunction, OperatorError> {
    let d = grid.dim();
    let dual = grid.dual();
    let dual_pts = dual.points();
    let mut buf = vec![0.0; 2 * d];
    buf[..d].copy_from_slice(x);
    let mut profile = Vec::with_capacity(dual.len());
    let mut mags = Vec::with_capacity(dual.len());
    for xi in &dual_pts {
        buf[d..].copy_from_slice(xi);
        let ph = match phase {
            Some(p) => p.value(&buf)?,
            None => dot(x, xi),
        };
        let v = Complex64::from_polar(1.0, ph) * a.value(&buf)?;
        mags.push(v.norm());
        profile.push(v);
    }
    let boundary: Vec<bool> = (0..dual.len()).map(|k| dual.is_boundary_index(k)).collect();
    tail_guard(&mags, &boundary)?;
    let g = GridFunction::new(dual, profile)?;
    let mut row = fourier(&g, TransformDirection::Forward)?;
    row.scale(Complex64::new(two_pi_pow(d, -1), 0.0));
    Ok(row)
}

fn kernel_row_weyl(
    a: &SymbolHandle,
    grid: &Grid,
    x: &[f64],
) -> Result<GridFunction, OperatorError> {
    let d = grid.dim();
    let dual = grid.dual();
    let dual_pts = dual.points();
    let pts = grid.points();
    let boundary: Vec<bool> = (0..dual.len()).map(|k| dual.is_boundary_index(k)).collect();
    let scale = dual.spacing().powi(d as i32) * two_pi_pow(d, -2);

    let rows: Result<Vec<(Complex64, Vec<f64>)>, OperatorError> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let y = &pts[j];
            let mut buf = vec![0.0; 2 * d];
            let mut acc = Complex64::default();
            let mut mags = Vec::with_capacity(dual_pts.len());
            for xi in &dual_pts {
                for ax in 0..d {
                    buf[ax] = 0.5 * (x[ax] + y[ax]);
                }
                buf[d..].copy_from_slice(xi);
                let t = a.value(&buf)?;
                mags.push(t.norm());
                let ph = dot(x, xi) - dot(y, xi);
                acc += Complex64::from_polar(1.0, ph) * t;
            }
            Ok((acc * scale, mags))
        })
        .collect();
    let rows = rows?;
    let mut values = Vec::with_capacity(rows.len());
    for (v, mags) in &rows {
        tail_guard(mags, &boundary)?;
        values.push(*v);
    }
    Ok(GridFunction::new(grid.clone(), values)?)
}

/// Type II kernel row through the adjoint relation
/// K_B(x, y) = conj(K_A(y, x)) with A the type I operator on the same data.
fn kernel_row_type_ii(
    b: &SymbolHandle,
    phi: &PhaseHandle,
    grid: &Grid,
    x: &[f64],
) -> Result<GridFunction, OperatorError> {
    let d = grid.dim();
    let dual = grid.dual();
    let dual_pts = dual.points();
    let pts = grid.points();
    let boundary: Vec<bool> = (0..dual.len()).map(|k| dual.is_boundary_index(k)).collect();
    let scale = dual.spacing().powi(d as i32) * two_pi_pow(d, -2);

    let rows: Result<Vec<(Complex64, Vec<f64>)>, OperatorError> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let y = &pts[j];
            let mut buf = vec![0.0; 2 * d];
            buf[..d].copy_from_slice(y);
            let mut acc = Complex64::default();
            let mut mags = Vec::with_capacity(dual_pts.len());
            for xi in &dual_pts {
                buf[d..].copy_from_slice(xi);
                let t = b.value(&buf)?;
                mags.push(t.norm());
                let ph = phi.value(&buf)? - dot(x, xi);
                acc += Complex64::from_polar(1.0, ph) * t;
            }
            Ok(((acc * scale).conj(), mags))
        })
        .collect();
    let rows = rows?;
    let mut values = Vec::with_capacity(rows.len());
    for (v, mags) in &rows {
        tail_guard(mags, &boundary)?;
        values.push(*v);
    }
    Ok(GridFunction::new(grid.clone(), values)?)
}

/// Result of testing the type I / type II pair against the inner product
/// identity (A u, v) = (u, B v).
#[derive(Debug, Clone)]
pub struct AdjointCheck {
    pub forward: Complex64,
    pub transposed: Complex64,
    pub defect: f64,
}

/// Verifies that the type II operator built from `(a, phi)` acts as the
/// adjoint of the type I operator on the pair `(u, v)`.
pub fn adjoint_pair_check(
    a: &SymbolHandle,
    phi: &PhaseHandle,
    u: &GridFunction,
    v: &GridFunction,
) -> Result<AdjointCheck, OperatorError> {
    let op_a = SgOperator::fio_type_i(a.clone(), phi.clone())?;
    let op_b = SgOperator::fio_type_ii(a.clone(), phi.clone())?;
    let au = op_a.apply(u)?.output;
    let bv = op_b.apply(v)?.output;
    let forward = au.inner_product(v)?;
    let transposed = u.inner_product(&bv)?;
    let denom = forward.norm().max(transposed.norm()).max(f64::MIN_POSITIVE);
    Ok(AdjointCheck {
        forward,
        transposed,
        defect: (forward - transposed).norm() / denom,
    })
}

/// The damping factor D(x,xi) = <grad_xi phi>^2 - i Laplace_xi phi.
///
/// Its real part is at least 1 for any phase, so 1/D is well defined; for
/// admissible phases D grows like <x>^2.
pub fn phase_damping(phi: &PhaseHandle) -> FnHandle {
    let d = phi.d();
    let mut s = FnHandle::constant(2 * d, Complex64::new(1.0, 0.0));
    for i in 0..d {
        let g = phi.grad_xi_component(i);
        s = s.add(&g.mul(&g));
    }
    let lap = phi.fun().laplacian_block(d, d);
    s.sub(&lap.scale(Complex64::new(0.0, 1.0)))
}

/// Applies l rounds of the transposed regularizer
/// g -> (1 - Laplace_xi)(g / D), which leaves Int e^(i phi) g dxi unchanged
/// because (1/D)(1 - Laplace_xi) fixes e^(i phi).
pub fn transposed_regularizer(f: &FnHandle, phi: &PhaseHandle, l: usize) -> FnHandle {
    let d = phi.d();
    let dinv = phase_damping(phi).recip();
    let mut cur = f.clone();
    for _ in 0..l {
        let t = cur.mul(&dinv);
        cur = t.sub(&t.laplacian_block(d, d));
    }
    cur
}

/// Principal part of the regularized amplitude: a / D^l. For admissible
/// phases this drops the position growth by <x>^(-2l) while keeping the
/// frequency behavior.
pub fn principal_regularized(a: &SymbolHandle, phi: &PhaseHandle, l: usize) -> FnHandle {
    let dinv = phase_damping(phi).recip();
    let mut out = a.fun().clone();
    for _ in 0..l {
        out = out.mul(&dinv);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{test_function, TestFunction};
    use crate::presets;
    use crate::presets::Params;
    use approx::assert_relative_eq;

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    fn sym(d: usize, name: &str) -> SymbolHandle {
        presets::symbol(d, name, &Params::empty(), "test").unwrap()
    }

    fn sym_p(d: usize, name: &str, params: Params) -> SymbolHandle {
        presets::symbol(d, name, &params, "test").unwrap()
    }

    fn phase_p(d: usize, name: &str, params: Params) -> PhaseHandle {
        presets::phase(d, name, &params, "test").unwrap()
    }

    #[test]
    fn unit_symbol_acts_as_identity() {
        let g = grid1(64, 9.0);
        // Narrow random packets leave real frequency mass at the dual
        // boundary, so only the wide gaussian is asserted tail-clean.
        let f = presets::random_test_input(&g, 7).unwrap();
        let op = SgOperator::kohn_nirenberg(sym(1, "one"));
        let r = op.apply(&f).unwrap();
        assert!(r.output.relative_distance(&f).unwrap() < 1e-12);

        let smooth = test_function(
            &g,
            &TestFunction::Gaussian {
                width: 1.0,
                center: vec![0.0],
            },
        )
        .unwrap();
        let r = op.apply(&smooth).unwrap();
        assert!(r.tail_ok, "tail ratio {:.3e}", r.tail_ratio);
        assert!(r.output.relative_distance(&smooth).unwrap() < 1e-12);
    }

    #[test]
    fn frequency_symbol_differentiates() {
        // a = xi acts as -i d/dx; on the normalized gaussian e^(-x^2/2) this
        // is i x f(x).
        let g = grid1(64, 9.0);
        let f = test_function(
            &g,
            &TestFunction::Gaussian {
                width: 1.0,
                center: vec![0.0],
            },
        )
        .unwrap();
        let op = SgOperator::kohn_nirenberg(sym(1, "xi1"));
        let out = op.apply(&f).unwrap().output;
        let mut expect = f.clone();
        for (j, v) in expect.values_mut().iter_mut().enumerate() {
            let x = g.axis_coordinate(j);
            *v *= Complex64::new(0.0, x);
        }
        assert!(out.relative_distance(&expect).unwrap() < 1e-10);
    }

    #[test]
    fn weyl_matches_kohn_nirenberg_for_x_free_symbols() {
        let g = grid1(48, 10.0);
        let f = test_function(
            &g,
            &TestFunction::Gaussian {
                width: 1.1,
                center: vec![0.4],
            },
        )
        .unwrap();
        let a = sym(1, "decay_xi");
        let kn = SgOperator::kohn_nirenberg(a.clone()).apply(&f).unwrap();
        let w = SgOperator::weyl(a).apply(&f).unwrap();
        assert!(w.output.relative_distance(&kn.output).unwrap() < 1e-12);
    }

    #[test]
    fn weyl_oscillator_fixes_the_ground_state() {
        // The midpoint quantization of x^2 + xi^2 has e^(-x^2/2) as an
        // eigenfunction with eigenvalue 1.
        let g = grid1(64, 9.0);
        let f = test_function(
            &g,
            &TestFunction::Gaussian {
                width: 1.0,
                center: vec![0.0],
            },
        )
        .unwrap();
        let x = FnHandle::coordinate(2, 0);
        let xi = FnHandle::coordinate(2, 1);
        let fun = x.mul(&x).add(&xi.mul(&xi));
        let a = SymbolHandle::new(
            "oscillator",
            1,
            fun,
            crate::handle::SgClass::new(crate::handle::WeightHandle::theta(1, 2.0, 2.0), 1.0, 1.0),
        );
        let out = SgOperator::weyl(a).apply(&f).unwrap().output;
        assert!(out.relative_distance(&f).unwrap() < 1e-8);
    }

    #[test]
    fn transport_phase_moves_a_wave_packet() {
        // Op with phase <x,xi> + t<xi> and unit symbol shifts the packet
        // center by -t xi0/<xi0> and preserves the norm.
        let g = grid1(256, 12.0);
        let f = test_function(
            &g,
            &TestFunction::ModulatedGaussian {
                width: 0.7,
                center: vec![0.0],
                freq: vec![-6.0],
            },
        )
        .unwrap();
        let t = 1.5f64;
        let phi = phase_p(1, "transport", Params::scalar("t", t));
        let op = SgOperator::fio_type_i(sym(1, "one"), phi).unwrap();
        let r = op.apply(&f).unwrap();
        assert!(r.tail_ok);
        assert_relative_eq!(r.output.norm(), f.norm(), max_relative = 1e-12);
        let mut best = 0usize;
        let mut mag = 0.0;
        for (j, v) in r.output.values().iter().enumerate() {
            if v.norm() > mag {
                mag = v.norm();
                best = j;
            }
        }
        let expect = -t * (-6.0) / (1.0f64 + 36.0).sqrt();
        assert!((g.axis_coordinate(best) - expect).abs() <= 2.0 * g.spacing());
    }

    #[test]
    fn type_ii_with_identity_phase_matches_the_multiplier() {
        // With phase <x,xi> and a real x-free symbol, type I is a
        // self-adjoint multiplier, so type II reproduces it.
        let g = grid1(64, 9.0);
        let f = presets::random_test_input(&g, 3).unwrap();
        let a = sym(1, "decay_xi");
        let phi = phase_p(1, "identity", Params::empty());
        let t1 = SgOperator::fio_type_i(a.clone(), phi.clone()).unwrap();
        let t2 = SgOperator::fio_type_ii(a, phi).unwrap();
        let u = t1.apply(&f).unwrap().output;
        let v = t2.apply(&f).unwrap().output;
        assert!(u.relative_distance(&v).unwrap() < 1e-12);
    }

    #[test]
    fn adjoint_identity_is_exact_on_the_grid() {
        let g = grid1(48, 8.0);
        let u = presets::random_test_input(&g, 11).unwrap();
        let v = presets::random_test_input(&g, 12).unwrap();
        let a = sym(1, "gaussian");
        let phi = phase_p(1, "perturbed", Params::scalar("eps", 0.1));
        let check = adjoint_pair_check(&a, &phi, &u, &v).unwrap();
        assert!(
            check.defect < 1e-13,
            "adjoint defect {:.3e}",
            check.defect
        );
    }

    #[test]
    fn kernel_row_matches_the_gaussian_oracle() {
        // a = e^(-xi^2), phase <x,xi>, d = 1:
        // K(x,y) = (2pi)^(-1) sqrt(pi) e^(-(x-y)^2/4).
        // The half-width keeps the 2L-periodized alias of the gaussian
        // kernel below the tolerance at the far edge of the row.
        let g = grid1(128, 14.0);
        let a = sym(1, "decay_xi");
        let x = 2.5;
        for op in [
            SgOperator::kohn_nirenberg(a.clone()),
            SgOperator::fio_type_i(a.clone(), phase_p(1, "identity", Params::empty())).unwrap(),
        ] {
            let row = op.kernel_row(&g, &[x]).unwrap();
            let c = std::f64::consts::PI.sqrt() / (2.0 * std::f64::consts::PI);
            let mut worst = 0.0f64;
            for (j, v) in row.values().iter().enumerate() {
                let y = g.axis_coordinate(j);
                let expect = c * (-(x - y) * (x - y) / 4.0).exp();
                worst = worst.max((v - Complex64::new(expect, 0.0)).norm());
            }
            assert!(worst < 1e-10, "kernel error {worst:.3e}");
        }
    }

    #[test]
    fn type_ii_kernel_is_the_conjugate_transpose() {
        let g = grid1(32, 6.0);
        let b = sym(1, "gaussian");
        let phi = phase_p(1, "perturbed", Params::scalar("eps", 0.3));
        let op_a = SgOperator::fio_type_i(b.clone(), phi.clone()).unwrap();
        let op_b = SgOperator::fio_type_ii(b, phi).unwrap();
        let xi = 20usize;
        let x = [g.axis_coordinate(xi)];
        let row_b = op_b.kernel_row(&g, &x).unwrap();
        let mut worst = 0.0f64;
        for j in 0..g.len() {
            let y = [g.axis_coordinate(j)];
            let row_a = op_a.kernel_row(&g, &y).unwrap();
            let expect = row_a.values()[xi].conj();
            worst = worst.max((row_b.values()[j] - expect).norm());
        }
        assert!(worst < 1e-12, "reciprocity defect {worst:.3e}");
    }

    #[test]
    fn undecayed_symbol_fails_the_kernel_tail_guard() {
        let g = grid1(32, 6.0);
        let op = SgOperator::kohn_nirenberg(sym(1, "one"));
        let err = op.kernel_row(&g, &[0.0]).unwrap_err();
        assert!(matches!(err, OperatorError::TailMass { .. }));
    }

    #[test]
    fn growing_symbol_reports_a_bad_tail_without_failing() {
        let g = grid1(32, 9.0);
        let f = test_function(
            &g,
            &TestFunction::Gaussian {
                width: 1.0,
                center: vec![0.0],
            },
        )
        .unwrap();
        let a = sym_p(1, "theta", Params::scalar("m", 0.0).with_scalar("mu", 30.0));
        let r = SgOperator::kohn_nirenberg(a).apply(&f).unwrap();
        assert!(!r.tail_ok);
        assert!(r.tail_ratio > TAIL_THRESHOLD);
        r.output.check_finite().unwrap();
    }

    #[test]
    fn degenerate_phase_is_rejected_by_the_checked_constructor() {
        let probes = ProbeSet::standard(1, 5, 40, 100.0);
        let phi = phase_p(1, "perturbed", Params::scalar("eps", 1.0));
        let err = SgOperator::fio_checked(OperatorKind::FioTypeI, sym(1, "one"), phi, &probes)
            .unwrap_err();
        assert!(matches!(err, OperatorError::PhaseNotSimple(_)));
    }

    #[test]
    fn damping_factor_matches_closed_forms() {
        let phi = phase_p(1, "identity", Params::empty());
        let v = phase_damping(&phi).value(&[3.0, -2.0]).unwrap();
        assert_relative_eq!(v.re, 10.0, max_relative = 1e-12);
        assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);

        // transport: grad_xi phi = x + t xi/<xi>, Laplace_xi phi = t/<xi>^3
        let t = 0.7;
        let phi = phase_p(1, "transport", Params::scalar("t", t));
        let (x, xi) = (1.3f64, -0.4f64);
        let br = (1.0 + xi * xi).sqrt();
        let gx = x + t * xi / br;
        let expect = Complex64::new(1.0 + gx * gx, -t / (br * br * br));
        let v = phase_damping(&phi).value(&[x, xi]).unwrap();
        assert!((v - expect).norm() < 1e-12);
    }

    #[test]
    fn regularizer_preserves_the_oscillatory_integral() {
        // Int e^(i phi) F dxi is invariant under F -> (1-Lap)(F/D), checked
        // by dual-grid quadrature at a fixed x. The bracket factors are
        // analytic only in |Im xi| < 1, so the rectangle rule needs the
        // dual spacing pi/L well under 1/4 to clear the tolerance; the
        // l = 2 round sharpens the pole and is the binding case.
        let g = grid1(256, 20.0);
        let dual = g.dual();
        let phi = phase_p(1, "perturbed", Params::scalar("eps", 0.2));
        let a = sym(1, "elliptic_base");
        let xi_h = FnHandle::coordinate(2, 1);
        let gauss = xi_h.mul(&xi_h).scale(Complex64::new(-0.5, 0.0)).exp();
        let f0 = a.fun().mul(&gauss);
        let x = 0.37;

        let quad = |f: &FnHandle| -> Complex64 {
            let mut acc = Complex64::default();
            for k in 0..dual.len() {
                let xi = dual.axis_coordinate(k);
                let p = [x, xi];
                let ph = phi.value(&p).unwrap();
                acc += Complex64::from_polar(1.0, ph) * f.value(&p).unwrap();
            }
            acc * dual.spacing()
        };

        let base = quad(&f0);
        assert!(base.norm() > 1e-3);
        for l in 1..=2 {
            let reg = transposed_regularizer(&f0, &phi, l);
            let v = quad(&reg);
            assert!(
                (v - base).norm() / base.norm() < 1e-8,
                "l = {l}: {:?} vs {:?}",
                v,
                base
            );
        }
    }

    #[test]
    fn principal_part_divides_by_the_identity_damping() {
        let phi = phase_p(1, "identity", Params::empty());
        let a = sym(1, "elliptic_base");
        let p = principal_regularized(&a, &phi, 2);
        let pt = [3.0, -1.0];
        let expect = a.value(&pt).unwrap() / (10.0 * 10.0);
        assert!((p.value(&pt).unwrap() - expect).norm() < 1e-12);
    }
}

