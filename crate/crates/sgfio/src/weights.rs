//! Numerical probes for order functions (weights): moderation against a
//! reference envelope, comparability of two weights, and the two gradient
//! substitutions tying a weight to a phase function.
//!
//! All probes run over seeded deterministic point sets, report the observed
//! constants, and compare them against explicit thresholds instead of
//! asserting abstract statements.

use crate::error::EvalError;
use crate::handle::{FnHandle, PhaseHandle, WeightHandle};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Default acceptance threshold for observed comparability and moderation
/// constants.
pub const DEFAULT_THRESHOLD: f64 = 100.0;

/// Deterministic probe points in `R^(2d)`, spread log-uniformly in radius
/// so both the unit scale and the far field are exercised.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    d: usize,
    points: Vec<Vec<f64>>,
}

impl ProbeSet {
    /// `count` seeded random points with radii up to `radius`, plus fixed
    /// anchors (origin, coordinate axes at two scales).
    pub fn standard(d: usize, seed: u64, count: usize, radius: f64) -> Self {
        assert!(radius > 1.0);
        let n = 2 * d;
        let mut points = Vec::with_capacity(count + 2 * n + 1);
        points.push(vec![0.0; n]);
        for axis in 0..n {
            for scale in [1.0, radius / 2.0] {
                let mut p = vec![0.0; n];
                p[axis] = scale;
                points.push(p);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_max = radius.log10();
        for _ in 0..count {
            let r = 10.0f64.powf(rng.gen_range(-1.0..log_max));
            // Direction via normalized Gaussian draws.
            let mut dir: Vec<f64> = (0..n).map(|_| gaussian_draw(&mut rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in dir.iter_mut() {
                *x *= r / norm;
            }
            points.push(dir);
        }
        ProbeSet { d, points }
    }

    /// Wraps an explicit list of `(x, xi)` points, each of length `2 d`.
    /// Useful when the interesting region of a symbol is known in advance
    /// (transition shells, rays) and random sampling would miss it.
    pub fn from_points(d: usize, points: Vec<Vec<f64>>) -> Self {
        assert!(!points.is_empty());
        for p in &points {
            assert_eq!(p.len(), 2 * d);
        }
        ProbeSet { d, points }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

fn gaussian_draw(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniform draws.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// The default moderation envelope `v(w) = <w>^4` on `R^(2d)` as a plain
/// handle (its argument is a displacement, not an `(x, xi)` split).
pub fn default_moderation_envelope(d: usize) -> FnHandle {
    FnHandle::bracket_block(2 * d, 0, 2 * d).powf(4.0)
}

/// Moderation probe result: the largest observed value of
/// `omega(z + w) / (v(w) omega(z))` over ordered probe pairs.
#[derive(Debug, Clone, Serialize)]
pub struct ModerationReport {
    pub weight: String,
    pub pairs: usize,
    pub constant: f64,
    pub threshold: f64,
    pub pass: bool,
    pub worst_base: Vec<f64>,
    pub worst_shift: Vec<f64>,
}

/// Checks `omega(z + w) <= C v(w) omega(z)` over all ordered pairs from the
/// probe set and reports the best (smallest) admissible `C`.
pub fn moderation_probe(
    omega: &WeightHandle,
    envelope: &FnHandle,
    probes: &ProbeSet,
    threshold: f64,
) -> Result<ModerationReport, EvalError> {
    assert_eq!(probes.d(), omega.d());
    let pts = probes.points();
    let mut constant = 0.0f64;
    let mut worst = (0usize, 0usize);
    let values: Vec<f64> = pts
        .iter()
        .map(|z| omega.value(z))
        .collect::<Result<_, _>>()?;
    for (i, z) in pts.iter().enumerate() {
        for (j, w) in pts.iter().enumerate() {
            let shifted: Vec<f64> = z.iter().zip(w).map(|(a, b)| a + b).collect();
            let num = omega.value(&shifted)?;
            let env = envelope.value(w)?.re;
            let ratio = num / (env * values[i]);
            if ratio > constant {
                constant = ratio;
                worst = (i, j);
            }
        }
    }
    Ok(ModerationReport {
        weight: omega.name().to_string(),
        pairs: pts.len() * pts.len(),
        constant,
        threshold,
        pass: constant <= threshold,
        worst_base: pts[worst.0].clone(),
        worst_shift: pts[worst.1].clone(),
    })
}

/// Two-sided comparability of weights: the largest observed value of
/// `max(left/right, right/left)` over the probe set.
#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityReport {
    pub left: String,
    pub right: String,
    pub points: usize,
    pub max_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
    pub worst_point: Vec<f64>,
}

pub fn comparability_probe(
    left: &WeightHandle,
    right: &WeightHandle,
    probes: &ProbeSet,
    threshold: f64,
) -> Result<ComparabilityReport, EvalError> {
    assert_eq!(left.d(), right.d());
    assert_eq!(probes.d(), left.d());
    let mut max_ratio = 0.0f64;
    let mut worst = 0usize;
    for (i, p) in probes.points().iter().enumerate() {
        let l = left.value(p)?;
        let r = right.value(p)?;
        let ratio = (l / r).max(r / l);
        if ratio > max_ratio {
            max_ratio = ratio;
            worst = i;
        }
    }
    Ok(ComparabilityReport {
        left: left.name().to_string(),
        right: right.name().to_string(),
        points: probes.points().len(),
        max_ratio,
        threshold,
        pass: max_ratio <= threshold,
        worst_point: probes.points()[worst].clone(),
    })
}

/// Which gradient of the phase replaces which slot of the weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSlot {
    /// Replace the position slot by `phi'_xi`: `omega(phi'_xi(x, xi), xi)`.
    PositionByGradXi,
    /// Replace the frequency slot by `phi'_x`: `omega(x, phi'_x(x, xi))`.
    FrequencyByGradX,
}

/// The substituted weight `Theta_j omega` for a phase function.
pub fn gradient_substitution(
    omega: &WeightHandle,
    phi: &PhaseHandle,
    slot: GradientSlot,
) -> WeightHandle {
    assert_eq!(omega.d(), phi.d());
    let d = omega.d();
    let n = 2 * d;
    let mut inners: Vec<FnHandle> = Vec::with_capacity(n);
    match slot {
        GradientSlot::PositionByGradXi => {
            inners.extend(phi.grad_xi());
            inners.extend((d..n).map(|i| FnHandle::coordinate(n, i)));
        }
        GradientSlot::FrequencyByGradX => {
            inners.extend((0..d).map(|i| FnHandle::coordinate(n, i)));
            inners.extend(phi.grad_x());
        }
    }
    let tag = match slot {
        GradientSlot::PositionByGradXi => 1,
        GradientSlot::FrequencyByGradX => 2,
    };
    WeightHandle::new(
        format!("Theta{tag}[{}]({})", phi.name(), omega.name()),
        d,
        omega.fun().compose_with(&inners),
    )
}

/// Checks the compatibility condition between a weight and a phase: the two
/// gradient substitutions must be comparable.
pub fn weight_phase_compatibility(
    omega: &WeightHandle,
    phi: &PhaseHandle,
    probes: &ProbeSet,
    threshold: f64,
) -> Result<ComparabilityReport, EvalError> {
    let t1 = gradient_substitution(omega, phi, GradientSlot::PositionByGradXi);
    let t2 = gradient_substitution(omega, phi, GradientSlot::FrequencyByGradX);
    comparability_probe(&t1, &t2, probes, threshold)
}

/// Checks invariance of a weight under one gradient substitution:
/// `Theta_j omega` comparable with `omega` itself.
pub fn invariance_probe(
    omega: &WeightHandle,
    phi: &PhaseHandle,
    slot: GradientSlot,
    probes: &ProbeSet,
    threshold: f64,
) -> Result<ComparabilityReport, EvalError> {
    let t = gradient_substitution(omega, phi, slot);
    comparability_probe(&t, omega, probes, threshold)
}
