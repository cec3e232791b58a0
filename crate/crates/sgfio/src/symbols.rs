//! Symbol-level probes and constructions: observed seminorm constants
//! against a declared class, smooth structure functions with exactly flat
//! plateaus, ellipticity probes, and asymptotic summation of a sequence of
//! terms of decreasing order.

use crate::error::{CalculusError, EvalError};
use crate::handle::{FnHandle, JetFn, SymbolHandle};
use crate::jet::{Jet, MultiIndex};
use crate::weights::ProbeSet;
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

// Seminorm probes ---------------------------------------------------------

/// Observed constant for one derivative pair.
#[derive(Debug, Clone, Serialize)]
pub struct SeminormEntry {
    pub alpha: Vec<u8>,
    pub beta: Vec<u8>,
    pub constant: f64,
    pub worst_point: Vec<f64>,
}

/// Result of a seminorm probe: for every `(alpha, beta)` with total order
/// up to the requested one, the largest observed value of
/// `|d^alpha_x d^beta_xi a| / (omega <x>^(-r|alpha|) <xi>^(-rho|beta|))`.
#[derive(Debug, Clone, Serialize)]
pub struct SeminormReport {
    pub symbol: String,
    pub class: String,
    pub order: usize,
    pub entries: Vec<SeminormEntry>,
    pub max_constant: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn seminorm_probe(
    a: &SymbolHandle,
    order: usize,
    probes: &ProbeSet,
    threshold: f64,
) -> Result<SeminormReport, EvalError> {
    let d = a.d();
    assert_eq!(probes.d(), d);
    let class = a.class().clone();
    let pairs: Vec<MultiIndex> = MultiIndex::enumerate(2 * d, order);
    let mut entries: Vec<SeminormEntry> = pairs
        .iter()
        .map(|m| SeminormEntry {
            alpha: m.0[..d].to_vec(),
            beta: m.0[d..].to_vec(),
            constant: 0.0,
            worst_point: vec![],
        })
        .collect();
    for p in probes.points() {
        let jet = a.jet(p, order)?;
        let omega = class.weight.value(p)?;
        let bx = bracket(&p[..d]);
        let bxi = bracket(&p[d..]);
        for (m, entry) in pairs.iter().zip(entries.iter_mut()) {
            let na: u32 = m.0[..d].iter().map(|&e| e as u32).sum();
            let nb: u32 = m.0[d..].iter().map(|&e| e as u32).sum();
            let normalizer =
                omega * bx.powf(-class.r * na as f64) * bxi.powf(-class.rho * nb as f64);
            let ratio = jet.partial(m).norm() / normalizer;
            if ratio > entry.constant {
                entry.constant = ratio;
                entry.worst_point = p.clone();
            }
        }
    }
    let max_constant = entries.iter().map(|e| e.constant).fold(0.0, f64::max);
    Ok(SeminormReport {
        symbol: a.name().to_string(),
        class: class.describe(),
        order,
        entries,
        max_constant,
        threshold,
        pass: max_constant <= threshold,
    })
}

fn bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

// Smooth step -------------------------------------------------------------

/// Exponent scale of the flat factor `exp(-c / s^(1/4))`. Chosen to
/// minimize the peak second derivative of the resulting step (about 5.4,
/// versus 9.9 for the usual `exp(-1/s)` partition), which is what the
/// class seminorms of the cutoff and excision constructions inherit.
const STEP_SHARPNESS: f64 = 6.0;

/// Below this argument the flat factor underflows to zero in `f64`; the
/// jet branch returns an exact zero there so both plateaus are literal.
const STEP_UNDERFLOW: f64 = 1.0e-8;

fn h_value(s: f64) -> f64 {
    if s <= STEP_UNDERFLOW {
        0.0
    } else {
        (-STEP_SHARPNESS / s.sqrt().sqrt()).exp()
    }
}

fn h_jet(s: &Jet) -> Jet {
    let s0 = s.value().re;
    if s0 <= STEP_UNDERFLOW {
        Jet::zero(s.vars(), s.order())
    } else {
        s.sqrt()
            .sqrt()
            .recip()
            .scale(Complex64::new(-STEP_SHARPNESS, 0.0))
            .exp()
    }
}

/// Decreasing smooth step: exactly `1` for `t <= 1/2`, exactly `0` for
/// `t >= 1`, strictly in between on the transition.
pub fn smooth_step_value(t: f64) -> f64 {
    let h1 = h_value(2.0 - 2.0 * t);
    let h2 = h_value(2.0 * t - 1.0);
    if h2 == 0.0 {
        return 1.0;
    }
    if h1 == 0.0 {
        return 0.0;
    }
    h1 / (h1 + h2)
}

/// Jet of the decreasing smooth step through a jet of its argument. On
/// either plateau the result is an exact constant jet.
pub fn smooth_step_jet(t: &Jet) -> Jet {
    let one = Complex64::new(1.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    let t0 = t.value().re;
    if 2.0 * t0 - 1.0 <= STEP_UNDERFLOW {
        return Jet::constant(t.vars(), t.order(), one);
    }
    if 2.0 - 2.0 * t0 <= STEP_UNDERFLOW {
        return Jet::zero(t.vars(), t.order());
    }
    let u1 = t.scale(-two).add_scalar(two);
    let u2 = t.scale(two).add_scalar(-one);
    let h1 = h_jet(&u1);
    let h2 = h_jet(&u2);
    h1.mul(&h1.add(&h2).recip())
}

// Diagonal cutoff ---------------------------------------------------------

/// `chi(x, y) = step(|y - x| / (k <x>))`: exactly `1` where
/// `|y - x| <= k <x> / 2` and exactly `0` where `|y - x| >= k <x>`. The
/// apparent corner of `|y - x|` at the diagonal sits inside the inner
/// plateau, so the function is smooth.
struct DiagonalCutoff {
    d: usize,
    k: f64,
}

impl DiagonalCutoff {
    fn t_value(&self, p: &[f64]) -> f64 {
        let d = self.d;
        let r2: f64 = (0..d).map(|i| (p[d + i] - p[i]).powi(2)).sum();
        r2.sqrt() / (self.k * bracket(&p[..d]))
    }
}

impl JetFn for DiagonalCutoff {
    fn dim_in(&self) -> usize {
        2 * self.d
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(Complex64::new(smooth_step_value(self.t_value(p)), 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let t0 = self.t_value(p);
        let n = 2 * self.d;
        if 2.0 * t0 - 1.0 <= STEP_UNDERFLOW {
            return Ok(Jet::constant(n, order, Complex64::new(1.0, 0.0)));
        }
        if 2.0 - 2.0 * t0 <= STEP_UNDERFLOW {
            return Ok(Jet::zero(n, order));
        }
        // Transition region: |y - x| > 0 there, so the radius jet exists.
        let vars = Jet::variables(order, p);
        let mut r2 = Jet::zero(n, order);
        for i in 0..self.d {
            let diff = vars[self.d + i].sub(&vars[i]);
            r2 = r2.add(&diff.mul(&diff));
        }
        let mut bx2 = Jet::constant(n, order, Complex64::new(1.0, 0.0));
        for v in vars.iter().take(self.d) {
            bx2 = bx2.add(&v.mul(v));
        }
        let t = r2
            .sqrt()
            .mul(&bx2.sqrt().recip())
            .scale(Complex64::new(1.0 / self.k, 0.0));
        Ok(smooth_step_jet(&t))
    }
}

/// Cutoff handle on `(x, y)` concentrated near the spatial diagonal.
pub fn diagonal_cutoff(d: usize, k: f64) -> FnHandle {
    assert!(k > 0.0);
    FnHandle::from_jet_fn(Arc::new(DiagonalCutoff { d, k }))
}

// Excision ----------------------------------------------------------------

/// Ratio of the block-norm regularization `delta` to the excision radius.
/// Larger values shave the usable transition width `R/2 - 2 delta`; smaller
/// ones sharpen the smoothed-norm curvature `1/delta` near the axes.
const EXCISION_DELTA_FRAC: f64 = 1.0 / 16.0;

/// Excision of a ball in `(x, xi)`: with `a = |x|`, `b = |xi|` (block
/// Euclidean norms), the function is exactly `0` where `a + b <= R/2` and
/// exactly `1` where `a + b >= R`. The step argument is the smoothed sum
/// `sqrt(a^2 + delta^2) + sqrt(b^2 + delta^2) - 2 delta`, which never
/// exceeds `a + b` and undershoots it by at most `2 delta`, so both
/// plateaus are implied while the transition keeps most of the `R/2` gap.
/// Smoothing per block also pins the norm-curvature spikes to the axes,
/// where the `<x>`/`<xi>` seminorm normalizers are smallest.
struct Excision {
    d: usize,
    radius: f64,
}

impl Excision {
    fn delta(&self) -> f64 {
        self.radius * EXCISION_DELTA_FRAC
    }

    fn t_of_s(&self, s: f64) -> f64 {
        let width = self.radius / 2.0 - 2.0 * self.delta();
        0.5 + (s - self.radius / 2.0) / (2.0 * width)
    }

    fn s_value(&self, p: &[f64]) -> f64 {
        let d = self.d;
        let dd = self.delta() * self.delta();
        let a2: f64 = p[..d].iter().map(|x| x * x).sum();
        let b2: f64 = p[d..].iter().map(|x| x * x).sum();
        (a2 + dd).sqrt() + (b2 + dd).sqrt() - 2.0 * self.delta()
    }
}

impl JetFn for Excision {
    fn dim_in(&self) -> usize {
        2 * self.d
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(Complex64::new(
            1.0 - smooth_step_value(self.t_of_s(self.s_value(p))),
            0.0,
        ))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let n = 2 * self.d;
        let t0 = self.t_of_s(self.s_value(p));
        if 2.0 * t0 - 1.0 <= STEP_UNDERFLOW {
            return Ok(Jet::zero(n, order));
        }
        if 2.0 - 2.0 * t0 <= STEP_UNDERFLOW {
            return Ok(Jet::constant(n, order, Complex64::new(1.0, 0.0)));
        }
        let delta = self.delta();
        let dd = Complex64::new(delta * delta, 0.0);
        let vars = Jet::variables(order, p);
        let mut blocks = Jet::zero(n, order);
        for half in [&vars[..self.d], &vars[self.d..]] {
            let mut q2 = Jet::constant(n, order, dd);
            for v in half {
                q2 = q2.add(&v.mul(v));
            }
            blocks = blocks.add(&q2.sqrt());
        }
        let width = self.radius / 2.0 - 2.0 * delta;
        let shift = -2.0 * delta - self.radius / 2.0 + width;
        let t = blocks
            .add_scalar(Complex64::new(shift, 0.0))
            .scale(Complex64::new(1.0 / (2.0 * width), 0.0));
        Ok(smooth_step_jet(&t)
            .scale(Complex64::new(-1.0, 0.0))
            .add_scalar(Complex64::new(1.0, 0.0)))
    }
}

/// Excision handle on `(x, xi)` vanishing on a ball around the origin.
pub fn excision(d: usize, radius: f64) -> FnHandle {
    assert!(radius > 0.0);
    FnHandle::from_jet_fn(Arc::new(Excision { d, radius }))
}

// Ellipticity -------------------------------------------------------------

/// Observed lower ellipticity constant: the smallest value of
/// `|a| / omega` over the probe set.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub symbol: String,
    pub points: usize,
    pub min_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
    pub worst_point: Vec<f64>,
}

/// Checks `|a| >= omega / C` over the probes; passes when the observed `C`
/// stays below `threshold`.
pub fn ellipticity_probe(
    a: &SymbolHandle,
    probes: &ProbeSet,
    threshold: f64,
) -> Result<EllipticityReport, EvalError> {
    assert_eq!(probes.d(), a.d());
    let mut min_ratio = f64::INFINITY;
    let mut worst = 0usize;
    for (i, p) in probes.points().iter().enumerate() {
        let v = a.value(p)?.norm();
        let w = a.class().weight.value(p)?;
        let ratio = v / w;
        if ratio < min_ratio {
            min_ratio = ratio;
            worst = i;
        }
    }
    Ok(EllipticityReport {
        symbol: a.name().to_string(),
        points: probes.points().len(),
        min_ratio,
        threshold,
        pass: min_ratio >= 1.0 / threshold,
        worst_point: probes.points()[worst].clone(),
    })
}

// Asymptotic summation ----------------------------------------------------

/// Radii and observed masked bounds from an asymptotic summation.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticSumReport {
    pub terms: usize,
    pub radii: Vec<f64>,
    /// Observed `sup |excision * term_j| / weight_(j-1)` at the chosen
    /// radius, for each summed term `j >= 1`.
    pub bounds: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Builds `a = a_0 + sum_j excision_(R_j) a_j` where each radius is chosen
/// by doubling until the masked term `j` is small against the class weight
/// of term `j - 1`: `sup |excision a_j| / omega_(j-1) <= 2^(-j)` over the
/// probe set. Masking against the previous weight makes the partial-sum
/// tails collapse at the observed points.
pub fn asymptotic_sum(
    terms: &[SymbolHandle],
    probes: &ProbeSet,
    max_doublings: u32,
) -> Result<(SymbolHandle, AsymptoticSumReport), CalculusError> {
    assert!(!terms.is_empty());
    let d = terms[0].d();
    assert!(terms.iter().all(|t| t.d() == d));
    assert_eq!(probes.d(), d);
    let mut fun = terms[0].fun().clone();
    let mut radii = Vec::new();
    let mut bounds = Vec::new();
    let mut targets = Vec::new();
    for (j, term) in terms.iter().enumerate().skip(1) {
        let target = 2f64.powi(-(j as i32));
        let prev_weight = &terms[j - 1].class().weight;
        let mut radius = 1.0f64;
        let mut chosen = None;
        for _ in 0..=max_doublings {
            let masked = excision(d, radius).mul(term.fun());
            let mut sup = 0.0f64;
            for p in probes.points() {
                let num = masked.value(p).map_err(CalculusError::Eval)?.norm();
                let den = prev_weight.value(p).map_err(CalculusError::Eval)?;
                sup = sup.max(num / den);
            }
            if sup <= target {
                chosen = Some((radius, sup));
                break;
            }
            radius *= 2.0;
        }
        let (radius, sup) = chosen.ok_or(CalculusError::HypothesisFailed {
            probe: "asymptotic_sum".to_string(),
            detail: format!(
                "term {j} not summable: masked bound stayed above {target:.3e} \
                 after {max_doublings} doublings"
            ),
        })?;
        fun = fun.add(&excision(d, radius).mul(term.fun()));
        radii.push(radius);
        bounds.push(sup);
        targets.push(target);
    }
    let sum = SymbolHandle::new(
        format!("asym_sum[{}]", terms.len()),
        d,
        fun,
        terms[0].class().clone(),
    );
    let report = AsymptoticSumReport {
        terms: terms.len(),
        radii,
        bounds,
        targets,
    };
    Ok((sum, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handle::{SgClass, WeightHandle};
    use crate::presets::{symbol, Params};
    use approx::assert_relative_eq;

    fn probes(d: usize) -> ProbeSet {
        ProbeSet::standard(d, 31, 48, 100.0)
    }

    #[test]
    fn theta_symbol_passes_its_own_class() {
        let a = symbol(1, "theta", &Params::empty().with_scalar("m", 1.0).with_scalar("mu", 1.0), "s")
            .unwrap();
        let report = seminorm_probe(&a, 3, &probes(1), 100.0).unwrap();
        assert!(report.pass, "max constant {}", report.max_constant);
        // The zeroth entry is the plain sup of |a|/omega, which is 1 here.
        assert_relative_eq!(report.entries[0].constant, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn wrong_class_claim_is_caught() {
        // exp(i x xi) with a fraudulent claim of derivative decay.
        let a = symbol(1, "oscillatory", &Params::empty(), "s").unwrap();
        let claimed = a.with_class(SgClass::new(WeightHandle::one(1), 1.0, 1.0));
        let report = seminorm_probe(&claimed, 2, &probes(1), 100.0).unwrap();
        assert!(!report.pass, "max constant {}", report.max_constant);
        // With the honest tag (no decay gain) the probe passes at a higher
        // threshold driven by |x|, |xi| <= probe radius.
        let honest = seminorm_probe(&a, 1, &probes(1), 200.0).unwrap();
        assert!(honest.pass, "max constant {}", honest.max_constant);
    }

    #[test]
    fn smooth_step_plateaus_are_exact() {
        for t in [-1.0, 0.0, 0.3, 0.5] {
            assert_eq!(smooth_step_value(t), 1.0);
        }
        for t in [1.0, 1.5, 10.0] {
            assert_eq!(smooth_step_value(t), 0.0);
        }
        for t in [0.6, 0.75, 0.9] {
            let v = smooth_step_value(t);
            assert!(v > 0.0 && v < 1.0);
        }
        // Monotone decreasing on samples.
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = smooth_step_value(0.4 + 0.7 * i as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn step_jet_matches_finite_differences_in_transition() {
        let t0 = 0.72;
        let tj = Jet::variable(1, 3, 0, t0);
        let j = smooth_step_jet(&tj);
        let h = 1e-4;
        let d1 = (smooth_step_value(t0 + h) - smooth_step_value(t0 - h)) / (2.0 * h);
        assert_relative_eq!(
            j.partial(&MultiIndex(vec![1])).re,
            d1,
            max_relative = 1e-6
        );
        let d2 = (smooth_step_value(t0 + h) - 2.0 * smooth_step_value(t0)
            + smooth_step_value(t0 - h))
            / (h * h);
        assert_relative_eq!(
            j.partial(&MultiIndex(vec![2])).re,
            d2,
            max_relative = 1e-5
        );
    }

    #[test]
    fn cutoff_plateau_identities() {
        let chi = diagonal_cutoff(1, 1.0);
        // x = 3: <x> = sqrt(10); inner plateau |y - x| <= sqrt(10)/2.
        let x = 3.0;
        let bx = 10.0f64.sqrt();
        for dy in [0.0, 0.2, 0.49 * bx] {
            let v = chi.value(&[x, x + dy]).unwrap().re;
            assert_eq!(v, 1.0);
            let j = chi.jet(&[x, x + dy], 3).unwrap();
            for (idx, c) in j.coeffs().iter().enumerate() {
                let expect = if idx == 0 { 1.0 } else { 0.0 };
                assert_eq!(c.re, expect);
                assert_eq!(c.im, 0.0);
            }
        }
        for dy in [bx, 1.2 * bx, 5.0 * bx] {
            assert_eq!(chi.value(&[x, x + dy]).unwrap().re, 0.0);
            let j = chi.jet(&[x, x + dy], 2).unwrap();
            assert!(j.coeffs().iter().all(|c| c.re == 0.0 && c.im == 0.0));
        }
        let mid = chi.value(&[x, x + 0.75 * bx]).unwrap().re;
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn cutoff_transition_jet_cross_check() {
        let chi = diagonal_cutoff(1, 1.0);
        let p = [3.0, 3.0 + 0.75 * 10.0f64.sqrt()];
        let j = chi.jet(&p, 2).unwrap();
        let h = 1e-5;
        let vx = |x: f64, y: f64| chi.value(&[x, y]).unwrap().re;
        let dx = (vx(p[0] + h, p[1]) - vx(p[0] - h, p[1])) / (2.0 * h);
        let dy = (vx(p[0], p[1] + h) - vx(p[0], p[1] - h)) / (2.0 * h);
        assert_relative_eq!(j.partial(&MultiIndex(vec![1, 0])).re, dx, max_relative = 1e-5);
        assert_relative_eq!(j.partial(&MultiIndex(vec![0, 1])).re, dy, max_relative = 1e-5);
    }

    #[test]
    fn excision_block_norm_plateaus() {
        for d in [1usize, 2] {
            let r = 8.0;
            let ex = excision(d, r);
            // Points with |x| + |xi| <= R/2 give exactly zero.
            let inner: Vec<Vec<f64>> = match d {
                1 => vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![-3.9, 0.0], vec![0.0, 3.9]],
                _ => vec![
                    vec![0.0; 4],
                    vec![1.0, 1.0, 1.0, 1.0],
                    vec![2.7, 0.0, 0.0, 0.0],
                ],
            };
            for p in &inner {
                assert_eq!(ex.value(p).unwrap().re, 0.0, "at {p:?}");
                let j = ex.jet(p, 2).unwrap();
                assert!(j.coeffs().iter().all(|c| c.re == 0.0 && c.im == 0.0));
            }
            // Points with |x| + |xi| >= R give exactly one.
            let outer: Vec<Vec<f64>> = match d {
                1 => vec![vec![8.0, 0.0], vec![4.0, 4.0], vec![-6.0, 3.0]],
                _ => vec![vec![4.0, 0.0, 4.0, 0.0], vec![5.7, 5.7, 0.0, 0.0]],
            };
            for p in &outer {
                assert_eq!(ex.value(p).unwrap().re, 1.0, "at {p:?}");
                let j = ex.jet(p, 2).unwrap();
                assert_eq!(j.value().re, 1.0);
                for c in j.coeffs().iter().skip(1) {
                    assert_eq!(c.re, 0.0);
                }
            }
        }
    }

    #[test]
    fn excision_transition_jet_cross_check() {
        let ex = excision(1, 8.0);
        let p = [4.2, 1.1];
        assert!(ex.value(&p).unwrap().re > 0.0);
        assert!(ex.value(&p).unwrap().re < 1.0);
        let j = ex.jet(&p, 1).unwrap();
        let h = 1e-5;
        let v = |x: f64, xi: f64| ex.value(&[x, xi]).unwrap().re;
        let dx = (v(p[0] + h, p[1]) - v(p[0] - h, p[1])) / (2.0 * h);
        assert_relative_eq!(j.partial(&MultiIndex(vec![1, 0])).re, dx, max_relative = 1e-5);
    }

    #[test]
    fn elliptic_base_passes_and_degenerate_fails() {
        let good = symbol(1, "elliptic_base", &Params::empty(), "s").unwrap();
        let report = ellipticity_probe(&good, &probes(1), 10.0).unwrap();
        assert!(report.pass);
        assert!(report.min_ratio >= 1.0);
        // x1 xi1 vanishes on the axes, so it cannot be elliptic for its
        // weight theta[1,1].
        let bad = symbol(1, "xxi", &Params::empty(), "s").unwrap();
        let report = ellipticity_probe(&bad, &probes(1), 10.0).unwrap();
        assert!(!report.pass, "min ratio {}", report.min_ratio);
    }

    #[test]
    fn asymptotic_sum_masks_terms_to_target() {
        // Terms of decreasing joint order: theta[-j, -j], j = 0..3.
        let terms: Vec<SymbolHandle> = (0..4)
            .map(|j| {
                let m = -(j as f64);
                symbol(
                    1,
                    "theta",
                    &Params::empty().with_scalar("m", m).with_scalar("mu", m),
                    "s",
                )
                .unwrap()
            })
            .collect();
        let (sum, report) = asymptotic_sum(&terms, &probes(1), 40).unwrap();
        assert_eq!(report.radii.len(), 3);
        for (bound, target) in report.bounds.iter().zip(&report.targets) {
            assert!(bound <= target);
        }
        // Near the origin all excisions vanish, so the sum equals the
        // leading term there.
        let p = [0.1, -0.1];
        let lead = terms[0].value(&p).unwrap();
        let total = sum.value(&p).unwrap();
        assert_relative_eq!(lead.re, total.re, max_relative = 1e-12);
        // Far out, the sum differs from the leading term by the later
        // terms, which are small.
        let q = [60.0, 0.0];
        let diff = (sum.value(&q).unwrap() - terms[0].value(&q).unwrap()).norm();
        assert!(diff > 0.0);
        assert!(diff < 0.1 * terms[0].value(&q).unwrap().norm());
    }
}
