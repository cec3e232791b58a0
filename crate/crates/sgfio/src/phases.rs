//! Phase-function machinery: admissibility probes, inversion of gradient
//! maps by damped Newton iteration with exact jets via the implicit
//! function theorem, averaged gradients along straight paths, and the
//! canonical transformation attached to a phase.

use crate::error::EvalError;
use crate::handle::{FnHandle, JetFn, PhaseHandle, SgClass, SymbolHandle, WeightHandle};
use crate::jet::Jet;
use crate::symbols::{seminorm_probe, SeminormReport};
use crate::weights::ProbeSet;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

// Admissibility probe -----------------------------------------------------

/// Observed constants for one phase function.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub phase: String,
    /// Seminorm probe of the phase against the class with weight
    /// `theta[1,1]` and unit decay gains.
    pub seminorm: SeminormReport,
    /// Largest two-sided ratio between `<phi'_xi>` and `<x>`, and between
    /// `<phi'_x>` and `<xi>`.
    pub simple_constant: f64,
    pub simple_pass: bool,
    /// Smallest observed `|det phi''_(x xi)|`.
    pub det_min: f64,
    pub regular_pass: bool,
    pub pass: bool,
}

/// Probes the defining bounds of an admissible phase: symbol estimates of
/// bilinear growth, two-sided gradient comparability, and mixed-Hessian
/// nondegeneracy.
pub fn phase_probe(
    phi: &PhaseHandle,
    probes: &ProbeSet,
    seminorm_threshold: f64,
    simple_threshold: f64,
    det_threshold: f64,
) -> Result<PhaseReport, EvalError> {
    let d = phi.d();
    assert_eq!(probes.d(), d);
    let as_symbol = SymbolHandle::new(
        phi.name().to_string(),
        d,
        phi.fun().clone(),
        SgClass::new(WeightHandle::theta(d, 1.0, 1.0), 1.0, 1.0),
    );
    let seminorm = seminorm_probe(&as_symbol, 3, probes, seminorm_threshold)?;

    let det = phi.mixed_hessian_det();
    let mut simple_constant = 0.0f64;
    let mut det_min = f64::INFINITY;
    for p in probes.points() {
        let (gx, gxi) = phi.gradient(p)?;
        let bx = bracket(&p[..d]);
        let bxi = bracket(&p[d..]);
        let bgx = bracket(&gx);
        let bgxi = bracket(&gxi);
        for ratio in [bgxi / bx, bx / bgxi, bgx / bxi, bxi / bgx] {
            simple_constant = simple_constant.max(ratio);
        }
        det_min = det_min.min(det.value(p)?.re.abs());
    }
    let simple_pass = simple_constant <= simple_threshold;
    let regular_pass = det_min >= 1.0 / det_threshold;
    Ok(PhaseReport {
        phase: phi.name().to_string(),
        pass: seminorm.pass && simple_pass && regular_pass,
        seminorm,
        simple_constant,
        simple_pass,
        det_min,
        regular_pass,
    })
}

fn bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

// Linear algebra helpers --------------------------------------------------

/// Gaussian elimination with partial pivoting for the tiny systems that
/// arise here (`n <= 3`). Returns `None` for a singular matrix.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn invert_matrix(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve_linear(a.to_vec(), e)?;
        for (row, inv_row) in inv.iter_mut().enumerate() {
            inv_row[col] = x[row];
        }
    }
    Some(inv)
}

// Implicit inversion ------------------------------------------------------

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 25;
const NEWTON_TOL: f64 = 1e-12;

/// A vector map defined implicitly: given components `M_i` on `R^n` and a
/// set of solve axes, the inverse map `W` reads its input `p` as the fixed
/// axes plus target values in the solve slots, and returns `u` with
/// `M(fixed, u) = target`. Values come from damped Newton iteration;
/// jets from the implicit function theorem, iterated to the requested
/// order with the base-point Jacobian.
pub struct ImplicitMap {
    core: Arc<ImplicitCore>,
}

struct ImplicitCore {
    components: Vec<FnHandle>,
    solve_axes: Vec<usize>,
    value_cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
    jet_cache: Mutex<HashMap<(Vec<u64>, usize), Vec<Jet>>>,
}

impl ImplicitCore {
    fn n(&self) -> usize {
        self.components[0].dim_in()
    }

    fn d_solve(&self) -> usize {
        self.components.len()
    }

    fn residual(&self, q: &[f64], target: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut r = Vec::with_capacity(self.d_solve());
        for (m, t) in self.components.iter().zip(target) {
            r.push(m.value(q)?.re - t);
        }
        Ok(r)
    }

    fn jacobian(&self, q: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        let n = self.n();
        let mut j = vec![vec![0.0; self.d_solve()]; self.d_solve()];
        for (i, m) in self.components.iter().enumerate() {
            let jet = m.jet(q, 1)?;
            for (k, &axis) in self.solve_axes.iter().enumerate() {
                j[i][k] = jet
                    .partial(&crate::jet::MultiIndex::unit(n, axis))
                    .re;
            }
        }
        Ok(j)
    }

    /// Damped Newton solve with the target as the starting guess.
    fn solve(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        if let Some(hit) = self.value_cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let target: Vec<f64> = self.solve_axes.iter().map(|&a| p[a]).collect();
        let scale = 1.0 + target.iter().map(|t| t * t).sum::<f64>().sqrt();
        let mut q = p.to_vec();
        let mut u = target.clone();
        let mut residuals = Vec::new();
        for _ in 0..NEWTON_MAX_ITERS {
            for (&axis, &ui) in self.solve_axes.iter().zip(&u) {
                q[axis] = ui;
            }
            let r = self.residual(&q, &target)?;
            let rnorm = norm(&r);
            residuals.push(rnorm);
            if rnorm <= NEWTON_TOL * scale {
                self.value_cache.lock().unwrap().insert(key, u.clone());
                return Ok(u);
            }
            let jac = self.jacobian(&q)?;
            let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = solve_linear(jac, neg_r).ok_or_else(|| EvalError::NewtonFailed {
                point: p.to_vec(),
                reason: "singular jacobian".to_string(),
                residuals: residuals.clone(),
            })?;
            // Halve the step until the residual decreases.
            let mut lambda = 1.0f64;
            let mut accepted = false;
            for _ in 0..NEWTON_MAX_HALVINGS {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(&delta)
                    .map(|(ui, di)| ui + lambda * di)
                    .collect();
                for (&axis, &ti) in self.solve_axes.iter().zip(&trial) {
                    q[axis] = ti;
                }
                let rt = self.residual(&q, &target)?;
                if norm(&rt) < rnorm {
                    u = trial;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(EvalError::NewtonFailed {
                    point: p.to_vec(),
                    reason: "damping stalled; the target may be outside the range".to_string(),
                    residuals,
                });
            }
        }
        Err(EvalError::NewtonFailed {
            point: p.to_vec(),
            reason: format!("no convergence in {NEWTON_MAX_ITERS} iterations"),
            residuals,
        })
    }

    /// Jets of all solved components at `p`. One Newton order is gained per
    /// pass with the frozen base-point Jacobian, so `order + 1` passes give
    /// the exact truncated expansion.
    fn jets(&self, p: &[f64], order: usize) -> Result<Vec<Jet>, EvalError> {
        let key = (
            p.iter().map(|x| x.to_bits()).collect::<Vec<u64>>(),
            order,
        );
        if let Some(hit) = self.jet_cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let n = self.n();
        let u = self.solve(p)?;
        let mut q = p.to_vec();
        for (&axis, &ui) in self.solve_axes.iter().zip(&u) {
            q[axis] = ui;
        }
        let jac = self.jacobian(&q)?;
        let jac_inv = invert_matrix(&jac).ok_or_else(|| EvalError::NewtonFailed {
            point: p.to_vec(),
            reason: "singular jacobian at the solution".to_string(),
            residuals: vec![],
        })?;
        // Component jets of M at the solution, for composition.
        let m_jets: Vec<Jet> = self
            .components
            .iter()
            .map(|m| m.jet(&q, order))
            .collect::<Result<_, _>>()?;
        // Target jets: the solve slots of the input are the targets.
        let target_jets: Vec<Jet> = self
            .solve_axes
            .iter()
            .map(|&a| Jet::variable(n, order, a, p[a]))
            .collect();
        // Inner jets for composition: variables on fixed axes, the current
        // candidate on solve axes.
        let mut u_jets: Vec<Jet> = u
            .iter()
            .map(|&ui| Jet::constant(n, order, Complex64::new(ui, 0.0)))
            .collect();
        for _ in 0..=order {
            let mut inners: Vec<Jet> = (0..n).map(|a| Jet::variable(n, order, a, q[a])).collect();
            for (k, &axis) in self.solve_axes.iter().enumerate() {
                inners[axis] = u_jets[k].clone();
            }
            let residual_jets: Vec<Jet> = m_jets
                .iter()
                .zip(&target_jets)
                .map(|(mj, tj)| mj.compose(&inners).sub(tj))
                .collect();
            for (k, uj) in u_jets.iter_mut().enumerate() {
                let mut corr = Jet::zero(n, order);
                for (i, rj) in residual_jets.iter().enumerate() {
                    corr = corr.add(&rj.scale(Complex64::new(jac_inv[k][i], 0.0)));
                }
                *uj = uj.sub(&corr);
            }
        }
        self.jet_cache.lock().unwrap().insert(key, u_jets.clone());
        Ok(u_jets)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct ImplicitComponent {
    core: Arc<ImplicitCore>,
    index: usize,
}

impl JetFn for ImplicitComponent {
    fn dim_in(&self) -> usize {
        self.core.n()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(Complex64::new(self.core.solve(p)?[self.index], 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        Ok(self.core.jets(p, order)?[self.index].clone())
    }
}

impl ImplicitMap {
    /// `components` are the coordinates of the forward map `M` on `R^n`;
    /// `solve_axes` names the input axes to be solved for (and, in the
    /// inverse map's own input, the slots carrying the target values).
    pub fn new(components: Vec<FnHandle>, solve_axes: Vec<usize>) -> Self {
        assert!(!components.is_empty());
        assert_eq!(components.len(), solve_axes.len());
        let n = components[0].dim_in();
        assert!(components.iter().all(|c| c.dim_in() == n));
        assert!(solve_axes.iter().all(|&a| a < n));
        ImplicitMap {
            core: Arc::new(ImplicitCore {
                components,
                solve_axes,
                value_cache: Mutex::new(HashMap::new()),
                jet_cache: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn dim_in(&self) -> usize {
        self.core.n()
    }

    pub fn len(&self) -> usize {
        self.core.d_solve()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Solved values at `p`.
    pub fn solve(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.core.solve(p)
    }

    /// Handle for one solved component.
    pub fn component(&self, index: usize) -> FnHandle {
        assert!(index < self.len());
        FnHandle::from_jet_fn(Arc::new(ImplicitComponent {
            core: self.core.clone(),
            index,
        }))
    }

    pub fn components(&self) -> Vec<FnHandle> {
        (0..self.len()).map(|i| self.component(i)).collect()
    }

    /// `|det dW_i / dp_(axes_j)|` of the solved map with respect to chosen
    /// input axes.
    pub fn jacobian_abs_det(&self, wrt_axes: &[usize]) -> FnHandle {
        assert_eq!(wrt_axes.len(), self.len());
        let n = self.dim_in();
        let entries: Vec<Vec<FnHandle>> = (0..self.len())
            .map(|i| {
                wrt_axes
                    .iter()
                    .map(|&a| {
                        self.component(i)
                            .partial(&crate::jet::MultiIndex::unit(n, a))
                    })
                    .collect()
            })
            .collect();
        FnHandle::det(&entries).abs_real()
    }
}

/// Which gradient map of the phase is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientInverse {
    /// `W(x, xi) = eta` solving `phi'_x(x, eta) = xi`.
    FrequencyFromGradX,
    /// `W(x, xi) = w` solving `phi'_xi(w, xi) = x`.
    PositionFromGradXi,
}

/// Builds the inverse-gradient map of a phase as an implicit map on
/// `(x, xi)`.
pub fn gradient_inverse(phi: &PhaseHandle, which: GradientInverse) -> ImplicitMap {
    let d = phi.d();
    match which {
        GradientInverse::FrequencyFromGradX => {
            ImplicitMap::new(phi.grad_x(), (d..2 * d).collect())
        }
        GradientInverse::PositionFromGradXi => {
            ImplicitMap::new(phi.grad_xi(), (0..d).collect())
        }
    }
}

/// One-shot inversion of a gradient map at fixed complementary data.
pub fn invert_gradient(
    phi: &PhaseHandle,
    which: GradientInverse,
    fixed: &[f64],
    target: &[f64],
) -> Result<Vec<f64>, EvalError> {
    let d = phi.d();
    assert_eq!(fixed.len(), d);
    assert_eq!(target.len(), d);
    let map = gradient_inverse(phi, which);
    let p: Vec<f64> = match which {
        GradientInverse::FrequencyFromGradX => {
            fixed.iter().chain(target.iter()).copied().collect()
        }
        GradientInverse::PositionFromGradXi => {
            target.iter().chain(fixed.iter()).copied().collect()
        }
    };
    map.solve(&p)
}

// Gauss-Legendre averaging ------------------------------------------------

/// Nodes and weights on `[0, 1]`, derived from the standard rules.
fn gauss_legendre_01(points: usize) -> Vec<(f64, f64)> {
    let (xs, ws): (&[f64], &[f64]) = match points {
        8 => (
            &[
                -0.9602898564975363,
                -0.7966664774136267,
                -0.5255324099163290,
                -0.1834346424956498,
                0.1834346424956498,
                0.5255324099163290,
                0.7966664774136267,
                0.9602898564975363,
            ],
            &[
                0.1012285362903763,
                0.2223810344533745,
                0.3137066458778873,
                0.3626837833783620,
                0.3626837833783620,
                0.3137066458778873,
                0.2223810344533745,
                0.1012285362903763,
            ],
        ),
        16 => (
            &[
                -0.9894009349916499,
                -0.9445750230732326,
                -0.8656312023878318,
                -0.7554044083550030,
                -0.6178762444026438,
                -0.4580167776572274,
                -0.2816035507792589,
                -0.0950125098376374,
                0.0950125098376374,
                0.2816035507792589,
                0.4580167776572274,
                0.6178762444026438,
                0.7554044083550030,
                0.8656312023878318,
                0.9445750230732326,
                0.9894009349916499,
            ],
            &[
                0.0271524594117541,
                0.0622535239386479,
                0.0951585116824928,
                0.1246289712555339,
                0.1495959888165767,
                0.1691565193950025,
                0.1826034150449236,
                0.1894506104550685,
                0.1894506104550685,
                0.1826034150449236,
                0.1691565193950025,
                0.1495959888165767,
                0.1246289712555339,
                0.0951585116824928,
                0.0622535239386479,
                0.0271524594117541,
            ],
        ),
        _ => panic!("supported node counts are 8 and 16"),
    };
    xs.iter()
        .zip(ws)
        .map(|(&x, &w)| ((x + 1.0) / 2.0, w / 2.0))
        .collect()
}

/// `V_i(x, y, zeta) = integral_0^1 phi'_(x_i)(y + t (x - y), zeta) dt` as
/// handles on `R^(3d)` with slots `(x, y, zeta)`.
pub fn averaged_grad_x(phi: &PhaseHandle, nodes: usize) -> Vec<FnHandle> {
    let d = phi.d();
    let n = 3 * d;
    let rule = gauss_legendre_01(nodes);
    (0..d)
        .map(|i| {
            let g = phi.grad_x_component(i);
            let mut acc: Option<FnHandle> = None;
            for &(t, w) in &rule {
                // Inner map: x_j -> y_j + t (x_j - y_j), zeta passthrough.
                let mut inners = Vec::with_capacity(2 * d);
                for j in 0..d {
                    let xj = FnHandle::coordinate(n, j).scale(Complex64::new(t, 0.0));
                    let yj =
                        FnHandle::coordinate(n, d + j).scale(Complex64::new(1.0 - t, 0.0));
                    inners.push(xj.add(&yj));
                }
                for j in 0..d {
                    inners.push(FnHandle::coordinate(n, 2 * d + j));
                }
                let term = g.compose_with(&inners).scale(Complex64::new(w, 0.0));
                acc = Some(match acc {
                    None => term,
                    Some(a) => a.add(&term),
                });
            }
            acc.unwrap()
        })
        .collect()
}

/// `V_i(w, xi, eta) = integral_0^1 phi'_(xi_i)(w, eta + t (xi - eta)) dt`
/// as handles on `R^(3d)` with slots `(w, xi, eta)`.
pub fn averaged_grad_xi(phi: &PhaseHandle, nodes: usize) -> Vec<FnHandle> {
    let d = phi.d();
    let n = 3 * d;
    let rule = gauss_legendre_01(nodes);
    (0..d)
        .map(|i| {
            let g = phi.grad_xi_component(i);
            let mut acc: Option<FnHandle> = None;
            for &(t, w) in &rule {
                let mut inners = Vec::with_capacity(2 * d);
                for j in 0..d {
                    inners.push(FnHandle::coordinate(n, j));
                }
                for j in 0..d {
                    let xij = FnHandle::coordinate(n, d + j).scale(Complex64::new(t, 0.0));
                    let etaj =
                        FnHandle::coordinate(n, 2 * d + j).scale(Complex64::new(1.0 - t, 0.0));
                    inners.push(xij.add(&etaj));
                }
                let term = g.compose_with(&inners).scale(Complex64::new(w, 0.0));
                acc = Some(match acc {
                    None => term,
                    Some(a) => a.add(&term),
                });
            }
            acc.unwrap()
        })
        .collect()
}

// Canonical transformation ------------------------------------------------

/// The transformation generated by the phase: `(x, eta)` maps to
/// `(phi'_xi(x, eta), phi'_x(x, eta))`.
pub fn canonical_transform(
    phi: &PhaseHandle,
    x: &[f64],
    eta: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let mut p = x.to_vec();
    p.extend_from_slice(eta);
    let (gx, gxi) = phi.gradient(&p)?;
    Ok((gxi, gx))
}
