//! Symbolic composition calculus.
//!
//! Compositions of quadrature operators are reduced back to single
//! operators with expanded symbols:
//!
//! * a multiplier-side operator against a phase-carrying one (either
//!   order, either phase-carrying kind) expands into derivative terms of
//!   the multiplier evaluated on the phase gradient, paired with
//!   derivatives of the oscillatory envelope `exp(i psi) a` restricted to
//!   the diagonal;
//! * a type I / type II pair with a shared phase collapses to an ordinary
//!   quantized symbol after substituting the frequency (or position)
//!   variable through an averaged-gradient change of variables;
//! * the pair collapse drives a parametrix iteration for elliptic
//!   symbols and the conjugation formulas that transport a multiplier
//!   symbol along the canonical transformation of the phase.
//!
//! Every expansion is finite: `m` counts the included derivative orders
//! (`|alpha| < m`) and the dropped remainder is left to the probe tools.

use num_complex::Complex64;

use crate::error::CalculusError;
use crate::grid::GridFunction;
use crate::handle::{FnHandle, PhaseHandle, SgClass, SymbolHandle, WeightHandle};
use crate::jet::MultiIndex;
use crate::operators::{OperatorKind, SgOperator};
use crate::phases::{
    averaged_grad_x, averaged_grad_xi, gradient_inverse, phase_probe, GradientInverse,
    ImplicitMap,
};
use crate::symbols::{diagonal_cutoff, ellipticity_probe};
use crate::weights::{gradient_substitution, GradientSlot, ProbeSet};

/// Largest supported expansion order; jets of order `2 m` back the pair
/// collapse, so this stays well below the handle order cap.
pub const EXPANSION_ORDER_CAP: usize = 6;

/// Quadrature nodes for the averaged phase gradients.
const AVERAGING_NODES: usize = 16;

/// Allowed ellipticity constant in `|a| >= omega / C` before a parametrix
/// is refused.
const ELLIPTICITY_CAP: f64 = 1e4;

fn i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn neg_i_pow(k: usize) -> Complex64 {
    i_pow(k).conj()
}

fn alpha_label(alpha: &MultiIndex) -> String {
    let parts: Vec<String> = alpha.0.iter().map(|e| e.to_string()).collect();
    parts.join(",")
}

fn order_gate(m: usize) -> Result<(), CalculusError> {
    if m == 0 {
        return Err(CalculusError::HypothesisFailed {
            probe: "expansion_order".into(),
            detail: "at least one expansion term is required (m >= 1)".into(),
        });
    }
    if m > EXPANSION_ORDER_CAP {
        return Err(CalculusError::OrderTooLarge {
            m,
            cap: EXPANSION_ORDER_CAP,
        });
    }
    Ok(())
}

fn phase_gate(phi: &PhaseHandle) -> Result<(), CalculusError> {
    let probes = ProbeSet::standard(phi.d(), 0x9a5e, 12, 25.0);
    let report = phase_probe(phi, &probes, 100.0, 100.0, 100.0)?;
    if !report.pass {
        return Err(CalculusError::HypothesisFailed {
            probe: "phase_admissibility".into(),
            detail: format!(
                "phase `{}` failed (simple constant {:.3e}, min mixed-Hessian det {:.3e})",
                phi.name(),
                report.simple_constant,
                report.det_min
            ),
        });
    }
    Ok(())
}

fn rate_gate(what: &str, got: f64) -> Result<(), CalculusError> {
    if (got - 1.0).abs() > 1e-9 {
        return Err(CalculusError::HypothesisFailed {
            probe: "class_rate".into(),
            detail: format!("{what} must equal 1, the class declares {got}"),
        });
    }
    Ok(())
}

// Oscillatory envelope ----------------------------------------------------

/// Second-order remainder of the phase in its position slot:
/// `psi(x, y, xi) = phi(y, xi) - phi(x, xi) - <y - x, phi'_x(x, xi)>`
/// as a handle on `R^(3d)` with slots `(x, y, xi)`.
pub fn psi_handle(phi: &PhaseHandle) -> FnHandle {
    let d = phi.d();
    let n = 3 * d;
    let map_y: Vec<usize> = (d..2 * d).chain(2 * d..3 * d).collect();
    let map_x: Vec<usize> = (0..d).chain(2 * d..3 * d).collect();
    let mut acc = phi.fun().reindex(n, &map_y).sub(&phi.fun().reindex(n, &map_x));
    for i in 0..d {
        let gi = phi.grad_x_component(i).reindex(n, &map_x);
        let diff = FnHandle::coordinate(n, d + i).sub(&FnHandle::coordinate(n, i));
        acc = acc.sub(&gi.mul(&diff));
    }
    acc
}

/// `D^alpha_y [exp(i psi(x, y, xi)) a(y, xi)]` restricted to `y = x`, as a
/// handle on `(x, xi)`. The diagonal restriction reuses the outer slots,
/// so jets of the result are exact diagonal pullbacks.
pub fn psi_factor(phi: &PhaseHandle, amp: &SymbolHandle, alpha: &MultiIndex) -> FnHandle {
    let d = phi.d();
    assert_eq!(amp.d(), d);
    assert_eq!(alpha.vars(), d);
    let n = 3 * d;
    let k = alpha.degree();
    let envelope = psi_handle(phi).scale(Complex64::new(0.0, 1.0)).exp();
    let map_y: Vec<usize> = (d..2 * d).chain(2 * d..3 * d).collect();
    let big = envelope.mul(&amp.fun().reindex(n, &map_y));
    let full = MultiIndex::zeros(d)
        .concat(alpha)
        .concat(&MultiIndex::zeros(d));
    let diag: Vec<usize> = (0..d).chain(0..d).chain(d..2 * d).collect();
    big.partial(&full).scale(neg_i_pow(k)).reindex(2 * d, &diag)
}

/// Pointwise value of the diagonal envelope derivative, computed through
/// one-sided jets in the `y` block; serves as an independent cross-check
/// of [`psi_factor`].
pub fn psi_derivative(
    phi: &PhaseHandle,
    amp: &SymbolHandle,
    alpha: &MultiIndex,
    x: &[f64],
    xi: &[f64],
) -> Result<Complex64, CalculusError> {
    let d = phi.d();
    assert_eq!(amp.d(), d);
    assert_eq!(alpha.vars(), d);
    assert_eq!(x.len(), d);
    assert_eq!(xi.len(), d);
    let order = alpha.degree();
    let point: Vec<f64> = x.iter().chain(xi.iter()).copied().collect();
    let keep: Vec<usize> = (0..d).collect();

    let phi_full = phi.jet(&point, order)?;
    let phi_y = phi_full.project(&keep);
    let mut psi = phi_y.add_scalar(-phi_y.value());
    for i in 0..d {
        let slope = phi_full.partial(&MultiIndex::unit(2 * d, i));
        let monom = crate::jet::Jet::variable(d, order, i, 0.0).scale(slope);
        psi = psi.sub(&monom);
    }
    let amp_y = amp.jet(&point, order)?.project(&keep);
    let envelope = psi.scale(Complex64::new(0.0, 1.0)).exp().mul(&amp_y);
    Ok(envelope.partial(alpha) * neg_i_pow(order))
}

// Mixed expansion terms ---------------------------------------------------

/// One term of the mixed composition expansion:
/// `(i^|alpha| / alpha!) (D^alpha_xi p)(x, phi'_x(x, xi))` times the
/// diagonal envelope derivative of the amplitude. The class records the
/// gradient-substituted multiplier weight and the gain
/// `theta[-min(r, 1/2) |alpha|, -|alpha|/2]`.
pub fn expansion_term(
    p: &SymbolHandle,
    amp: &SymbolHandle,
    phi: &PhaseHandle,
    alpha: &MultiIndex,
) -> SymbolHandle {
    let d = phi.d();
    assert_eq!(p.d(), d);
    assert_eq!(amp.d(), d);
    let k = alpha.degree();
    let dxi = MultiIndex::zeros(d).concat(alpha);
    let p_der = p.fun().partial(&dxi).scale(neg_i_pow(k));
    let mut inners: Vec<FnHandle> = (0..d).map(|i| FnHandle::coordinate(2 * d, i)).collect();
    inners.extend(phi.grad_x());
    let p_on_gradient = p_der.compose_with(&inners);
    let fun = p_on_gradient
        .mul(&psi_factor(phi, amp, alpha))
        .scale(i_pow(k) / alpha.factorial());

    let substituted = gradient_substitution(&p.class().weight, phi, GradientSlot::FrequencyByGradX);
    let gain = WeightHandle::theta(
        d,
        -amp.class().r.min(0.5) * k as f64,
        -(k as f64) / 2.0,
    );
    let weight = amp.class().weight.mul(&substituted).mul(&gain);
    let r = amp.class().r.min(p.class().r).min(1.0);
    let rho = amp.class().rho.min(1.0);
    SymbolHandle::new(
        format!("term[{}]({};{})", alpha_label(alpha), p.name(), amp.name()),
        d,
        fun,
        SgClass::new(weight, r, rho),
    )
}

fn expansion_terms(
    p: &SymbolHandle,
    amp: &SymbolHandle,
    phi: &PhaseHandle,
    m: usize,
) -> Vec<SymbolHandle> {
    MultiIndex::enumerate(phi.d(), m - 1)
        .iter()
        .map(|alpha| expansion_term(p, amp, phi, alpha))
        .collect()
}

fn sum_terms(terms: &[SymbolHandle], class: SgClass, name: String) -> SymbolHandle {
    let mut acc = terms[0].clone().with_class(class.clone());
    for t in &terms[1..] {
        acc = acc.add(t, class.clone());
    }
    acc.with_name(name)
}

/// Adjoint symbol of an ordinary quantization:
/// `q ~ sum_alpha (i^|alpha| / alpha!) D^alpha_x D^alpha_xi conj(p)`, so
/// that quantizing `q` approximates the adjoint of quantizing `p`.
pub fn kn_adjoint_symbol(p: &SymbolHandle, m: usize) -> Result<SymbolHandle, CalculusError> {
    order_gate(m)?;
    let d = p.d();
    let conj = p.fun().conj();
    let mut acc: Option<FnHandle> = None;
    for alpha in MultiIndex::enumerate(d, m - 1) {
        let k = alpha.degree();
        let full = alpha.concat(&alpha);
        let term = conj
            .partial(&full)
            .scale(neg_i_pow(k) / alpha.factorial());
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term),
        });
    }
    Ok(SymbolHandle::new(
        format!("adj({})", p.name()),
        d,
        acc.unwrap(),
        p.class().clone(),
    ))
}

// Mixed compositions ------------------------------------------------------

/// Which mixed composition is expanded. `Pdo` stands for the ordinary
/// quantization, `Fio1`/`Fio2` for the type I / type II phase-carrying
/// operators; the first named factor acts last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedMode {
    /// multiplier first from the left: `Op(p) . Op_phi(a)`
    PdoFio1,
    /// `Op_phi(a) . Op(p)`
    Fio1Pdo,
    /// `Op*_phi(b) . Op(p)`
    Fio2Pdo,
    /// `Op(p) . Op*_phi(b)`
    PdoFio2,
}

/// Expanded composition: the summed symbol, the individual terms, and the
/// operator kind under which the symbol reproduces the composition.
#[derive(Debug, Clone)]
pub struct CompositionResult {
    pub symbol: SymbolHandle,
    pub terms: Vec<SymbolHandle>,
    pub phase: PhaseHandle,
    /// Realization kind backed by the adjoint identities.
    pub kind: OperatorKind,
    /// Second candidate realization where the collapsing side is
    /// ambiguous; compare both against the direct composition with
    /// [`resolve_type_ii_reading`].
    pub alternate_kind: Option<OperatorKind>,
}

impl CompositionResult {
    pub fn realize(&self) -> Result<SgOperator, crate::error::OperatorError> {
        self.realize_as(self.kind)
    }

    pub fn realize_as(
        &self,
        kind: OperatorKind,
    ) -> Result<SgOperator, crate::error::OperatorError> {
        match kind {
            OperatorKind::KohnNirenberg => Ok(SgOperator::kohn_nirenberg(self.symbol.clone())),
            OperatorKind::Weyl => Ok(SgOperator::weyl(self.symbol.clone())),
            OperatorKind::FioTypeI => {
                SgOperator::fio_type_i(self.symbol.clone(), self.phase.clone())
            }
            OperatorKind::FioTypeII => {
                SgOperator::fio_type_ii(self.symbol.clone(), self.phase.clone())
            }
        }
    }
}

/// Expands a multiplier against a phase-carrying operator. The multiplier
/// needs unit decay rate in the differentiated slot (frequency for the
/// type-I-side modes, position for the transposed ones); the type II
/// modes first pass the multiplier through [`kn_adjoint_symbol`].
pub fn compose_mixed(
    mode: MixedMode,
    p: &SymbolHandle,
    amp: &SymbolHandle,
    phi: &PhaseHandle,
    m: usize,
) -> Result<CompositionResult, CalculusError> {
    order_gate(m)?;
    let d = phi.d();
    assert_eq!(p.d(), d);
    assert_eq!(amp.d(), d);
    phase_gate(phi)?;
    match mode {
        MixedMode::PdoFio1 | MixedMode::Fio2Pdo => {
            rate_gate("frequency decay rate of the multiplier", p.class().rho)?
        }
        MixedMode::Fio1Pdo | MixedMode::PdoFio2 => {
            rate_gate("position decay rate of the multiplier", p.class().r)?
        }
    }

    let (terms, weight, r0, rho0, kind, alternate) = match mode {
        MixedMode::PdoFio1 => {
            let terms = expansion_terms(p, amp, phi, m);
            let weight = amp.class().weight.mul(&gradient_substitution(
                &p.class().weight,
                phi,
                GradientSlot::FrequencyByGradX,
            ));
            let r0 = amp.class().r.min(p.class().r).min(1.0);
            let rho0 = amp.class().rho.min(1.0);
            (terms, weight, r0, rho0, OperatorKind::FioTypeI, None)
        }
        MixedMode::Fio1Pdo => {
            let (pt, at, ft) = (p.transpose(), amp.transpose(), phi.transpose());
            let terms: Vec<SymbolHandle> = expansion_terms(&pt, &at, &ft, m)
                .iter()
                .map(|t| t.transpose())
                .collect();
            let weight = amp.class().weight.mul(&gradient_substitution(
                &p.class().weight,
                phi,
                GradientSlot::PositionByGradXi,
            ));
            let r0 = amp.class().r.min(1.0);
            let rho0 = amp.class().rho.min(p.class().rho).min(1.0);
            (terms, weight, r0, rho0, OperatorKind::FioTypeI, None)
        }
        MixedMode::Fio2Pdo => {
            let q = kn_adjoint_symbol(p, m)?;
            let terms = expansion_terms(&q, amp, phi, m);
            let weight = amp.class().weight.mul(&gradient_substitution(
                &p.class().weight,
                phi,
                GradientSlot::FrequencyByGradX,
            ));
            let r0 = amp.class().r.min(p.class().r).min(1.0);
            let rho0 = amp.class().rho.min(1.0);
            (
                terms,
                weight,
                r0,
                rho0,
                OperatorKind::FioTypeII,
                Some(OperatorKind::FioTypeI),
            )
        }
        MixedMode::PdoFio2 => {
            let q = kn_adjoint_symbol(p, m)?;
            let (qt, at, ft) = (q.transpose(), amp.transpose(), phi.transpose());
            let terms: Vec<SymbolHandle> = expansion_terms(&qt, &at, &ft, m)
                .iter()
                .map(|t| t.transpose())
                .collect();
            let weight = amp.class().weight.mul(&gradient_substitution(
                &p.class().weight,
                phi,
                GradientSlot::PositionByGradXi,
            ));
            let r0 = amp.class().r.min(1.0);
            let rho0 = amp.class().rho.min(p.class().rho).min(1.0);
            (
                terms,
                weight,
                r0,
                rho0,
                OperatorKind::FioTypeII,
                Some(OperatorKind::FioTypeI),
            )
        }
    };
    let class = SgClass::new(weight, r0, rho0);
    let symbol = sum_terms(
        &terms,
        class,
        format!("compose[{mode:?}]({};{})", p.name(), amp.name()),
    );
    Ok(CompositionResult {
        symbol,
        terms,
        phase: phi.clone(),
        kind,
        alternate_kind: alternate,
    })
}

/// Operator-level comparison of the two candidate realizations of a
/// type II mixed composition against the directly composed applications.
#[derive(Debug, Clone)]
pub struct ReadingReport {
    pub type_i_defect: f64,
    pub type_ii_defect: f64,
    pub preferred: OperatorKind,
}

/// Applies both realizations of a type II mixed composition to `u` and
/// reports the relative defects against the direct two-operator
/// application.
pub fn resolve_type_ii_reading(
    mode: MixedMode,
    p: &SymbolHandle,
    amp: &SymbolHandle,
    phi: &PhaseHandle,
    m: usize,
    u: &GridFunction,
) -> Result<ReadingReport, CalculusError> {
    if !matches!(mode, MixedMode::Fio2Pdo | MixedMode::PdoFio2) {
        return Err(CalculusError::HypothesisFailed {
            probe: "mode".into(),
            detail: "reading comparison applies to the type II mixed modes only".into(),
        });
    }
    let comp = compose_mixed(mode, p, amp, phi, m)?;
    let pdo = SgOperator::kohn_nirenberg(p.clone());
    let fio2 = SgOperator::fio_type_ii(amp.clone(), phi.clone()).map_err(CalculusError::from)?;
    let direct = match mode {
        MixedMode::Fio2Pdo => fio2.apply(&pdo.apply(u)?.output)?.output,
        _ => pdo.apply(&fio2.apply(u)?.output)?.output,
    };
    let as_type_i = comp.realize_as(OperatorKind::FioTypeI)?.apply(u)?.output;
    let as_type_ii = comp.realize_as(OperatorKind::FioTypeII)?.apply(u)?.output;
    let type_i_defect = direct.relative_distance(&as_type_i)?;
    let type_ii_defect = direct.relative_distance(&as_type_ii)?;
    let preferred = if type_ii_defect <= type_i_defect {
        OperatorKind::FioTypeII
    } else {
        OperatorKind::FioTypeI
    };
    Ok(ReadingReport {
        type_i_defect,
        type_ii_defect,
        preferred,
    })
}

// Type I / type II pairs --------------------------------------------------

/// Order of a shared-phase pair composition; the named factor acts last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FioPairOrder {
    /// `Op_phi(a) . Op*_phi(b)`: collapses through the frequency
    /// substitution, needs unit frequency rates.
    TypeIOuter,
    /// `Op*_phi(b) . Op_phi(a)`: collapses through the position
    /// substitution, needs unit position rates.
    TypeIIOuter,
}

/// Collapses a type I / type II pair with the shared phase `phi` into an
/// ordinary quantized symbol. `k_cutoff` scales the relative-diagonal
/// cutoff inserted before the substitution; the expansion keeps
/// `|alpha| < m`.
pub fn compose_fio_pair(
    order: FioPairOrder,
    a: &SymbolHandle,
    b: &SymbolHandle,
    phi: &PhaseHandle,
    m: usize,
    k_cutoff: f64,
) -> Result<CompositionResult, CalculusError> {
    order_gate(m)?;
    let d = phi.d();
    assert_eq!(a.d(), d);
    assert_eq!(b.d(), d);
    if !(k_cutoff.is_finite() && k_cutoff > 0.0) {
        return Err(CalculusError::HypothesisFailed {
            probe: "cutoff".into(),
            detail: format!("cutoff scale must be positive and finite, got {k_cutoff}"),
        });
    }
    phase_gate(phi)?;
    match order {
        FioPairOrder::TypeIOuter => {
            rate_gate("frequency decay rate of the type I factor", a.class().rho)?;
            rate_gate("frequency decay rate of the type II factor", b.class().rho)?;
        }
        FioPairOrder::TypeIIOuter => {
            rate_gate("position decay rate of the type I factor", a.class().r)?;
            rate_gate("position decay rate of the type II factor", b.class().r)?;
        }
    }

    let n = 3 * d;
    let coords = |range: std::ops::Range<usize>| -> Vec<FnHandle> {
        range.map(|i| FnHandle::coordinate(n, i)).collect()
    };

    // Substituted integrand and the diagonal/derivative bookkeeping per
    // order: in both cases the substituted profile lives on three blocks
    // and the terms differentiate one outer block against the
    // substituted one before restricting to the diagonal.
    let (substituted, block_a, block_b, diag_map) = match order {
        FioPairOrder::TypeIOuter => {
            // profile c0(x, y, zeta) = a(x, zeta) conj(b)(y, zeta) chi(x, y)
            let map_a: Vec<usize> = (0..d).chain(2 * d..3 * d).collect();
            let map_b: Vec<usize> = (d..2 * d).chain(2 * d..3 * d).collect();
            let map_chi: Vec<usize> = (0..2 * d).collect();
            let c0 = a
                .fun()
                .reindex(n, &map_a)
                .mul(&b.fun().conj().reindex(n, &map_b))
                .mul(&diagonal_cutoff(d, k_cutoff).reindex(n, &map_chi));
            // zeta is replaced by the solution of the averaged position
            // gradient matching the outgoing frequency.
            let averaged = averaged_grad_x(phi, AVERAGING_NODES);
            let imap = ImplicitMap::new(averaged, (2 * d..3 * d).collect());
            let jac_axes: Vec<usize> = (2 * d..3 * d).collect();
            let jac = imap.jacobian_abs_det(&jac_axes);
            let mut inners = coords(0..2 * d);
            inners.extend(imap.components());
            let s = c0.compose_with(&inners).mul(&jac);
            let diag: Vec<usize> = (0..d).chain(0..d).chain(d..2 * d).collect();
            (s, d, 2 * d, diag)
        }
        FioPairOrder::TypeIIOuter => {
            // profile c0(w, xi, eta) = a(w, xi) conj(b)(w, eta) chi(xi, eta)
            let map_a: Vec<usize> = (0..d).chain(d..2 * d).collect();
            let map_b: Vec<usize> = (0..d).chain(2 * d..3 * d).collect();
            let map_chi: Vec<usize> = (d..2 * d).chain(2 * d..3 * d).collect();
            let c0 = a
                .fun()
                .reindex(n, &map_a)
                .mul(&b.fun().conj().reindex(n, &map_b))
                .mul(&diagonal_cutoff(d, k_cutoff).reindex(n, &map_chi));
            // w is replaced by the solution of the averaged frequency
            // gradient matching the outgoing position.
            let averaged = averaged_grad_xi(phi, AVERAGING_NODES);
            let imap = ImplicitMap::new(averaged, (0..d).collect());
            let jac_axes: Vec<usize> = (0..d).collect();
            let jac = imap.jacobian_abs_det(&jac_axes);
            let mut inners = imap.components();
            inners.extend(coords(d..3 * d));
            let s = c0.compose_with(&inners).mul(&jac);
            let diag: Vec<usize> = (0..d).chain(d..2 * d).chain(d..2 * d).collect();
            (s, 0, 2 * d, diag)
        }
    };

    // Output class: the factor weights ride along the inverse gradient
    // substitution generated by the phase.
    let (weight, r0, rho0) = match order {
        FioPairOrder::TypeIOuter => {
            let inverse = gradient_inverse(phi, GradientInverse::FrequencyFromGradX);
            let mut inners: Vec<FnHandle> =
                (0..d).map(|i| FnHandle::coordinate(2 * d, i)).collect();
            inners.extend(inverse.components());
            let wfun = a
                .class()
                .weight
                .fun()
                .mul(b.class().weight.fun())
                .compose_with(&inners);
            let w = WeightHandle::new(
                format!("pair({},{})", a.class().weight.name(), b.class().weight.name()),
                d,
                wfun,
            );
            (w, a.class().r.min(b.class().r).min(1.0), 1.0)
        }
        FioPairOrder::TypeIIOuter => {
            let inverse = gradient_inverse(phi, GradientInverse::PositionFromGradXi);
            let mut inners = inverse.components();
            inners.extend((d..2 * d).map(|i| FnHandle::coordinate(2 * d, i)));
            let wfun = a
                .class()
                .weight
                .fun()
                .mul(b.class().weight.fun())
                .compose_with(&inners);
            let w = WeightHandle::new(
                format!("pair({},{})", a.class().weight.name(), b.class().weight.name()),
                d,
                wfun,
            );
            (w, 1.0, a.class().rho.min(b.class().rho).min(1.0))
        }
    };

    let mut terms = Vec::new();
    for alpha in MultiIndex::enumerate(d, m - 1) {
        let k = alpha.degree();
        let mut exponents = vec![0u8; n];
        for i in 0..d {
            exponents[block_a + i] += alpha.0[i];
            exponents[block_b + i] += alpha.0[i];
        }
        let full = MultiIndex(exponents);
        let fun = substituted
            .partial(&full)
            .reindex(2 * d, &diag_map)
            .scale(neg_i_pow(k) / alpha.factorial());
        let gain = WeightHandle::theta(d, -(k as f64), -(k as f64));
        terms.push(SymbolHandle::new(
            format!("pair_term[{}]({};{})", alpha_label(&alpha), a.name(), b.name()),
            d,
            fun,
            SgClass::new(weight.mul(&gain), r0, rho0),
        ));
    }
    let class = SgClass::new(weight, r0, rho0);
    let symbol = sum_terms(
        &terms,
        class,
        format!("pair[{order:?}]({};{})", a.name(), b.name()),
    );
    Ok(CompositionResult {
        symbol,
        terms,
        phase: phi.clone(),
        kind: OperatorKind::KohnNirenberg,
        alternate_kind: None,
    })
}

// Parametrix --------------------------------------------------------------

/// Type II parametrix specification for an elliptic type I operator:
/// the refined symbol, the unrefined leading symbol, and the composition
/// defects `sym(Op*_phi(b_k) . Op_phi(a)) - 1` observed at each step.
#[derive(Debug, Clone)]
pub struct ParametrixResult {
    pub symbol: SymbolHandle,
    pub leading: SymbolHandle,
    pub phase: PhaseHandle,
    pub defects: Vec<SymbolHandle>,
}

impl ParametrixResult {
    pub fn realize(&self) -> Result<SgOperator, crate::error::OperatorError> {
        SgOperator::fio_type_ii(self.symbol.clone(), self.phase.clone())
    }
}

/// Builds a left parametrix of `Op_phi(a)` as a type II operator.
///
/// The leading symbol divides the mixed-Hessian density by the conjugate
/// symbol; each refinement measures the pair-composition defect at order
/// `m` and subtracts it back through the leading symbol, with the defect
/// read along the frequency gradient of the phase. `omega` is the weight
/// against which ellipticity of `a` is probed.
pub fn parametrix(
    a: &SymbolHandle,
    phi: &PhaseHandle,
    omega: &WeightHandle,
    m: usize,
    refinements: usize,
) -> Result<ParametrixResult, CalculusError> {
    order_gate(m)?;
    let d = phi.d();
    assert_eq!(a.d(), d);
    assert_eq!(omega.d(), d);
    phase_gate(phi)?;
    rate_gate("position decay rate of the symbol", a.class().r)?;
    rate_gate("frequency decay rate of the symbol", a.class().rho)?;

    let probes = ProbeSet::standard(d, 0xe11, 24, 30.0);
    let gauged = a.with_class(SgClass::new(omega.clone(), a.class().r, a.class().rho));
    let report = ellipticity_probe(&gauged, &probes, ELLIPTICITY_CAP)?;
    if !report.pass {
        return Err(CalculusError::NotElliptic {
            ratio: report.min_ratio,
            point: report.worst_point,
        });
    }

    let b_class = SgClass::new(omega.recip(), 1.0, 1.0);
    let leading_fun = phi
        .mixed_hessian_abs_det()
        .mul(&a.fun().conj().recip());
    let leading = SymbolHandle::new(
        format!("parametrix0({})", a.name()),
        d,
        leading_fun,
        b_class.clone(),
    );

    let mut current = leading.clone();
    let mut defects = Vec::with_capacity(refinements + 1);
    for step in 0..=refinements {
        let comp = compose_fio_pair(FioPairOrder::TypeIIOuter, a, &current, phi, m, 1.0)?;
        let defect_fun = comp.symbol.fun().add_scalar(Complex64::new(-1.0, 0.0));
        defects.push(SymbolHandle::new(
            format!("parametrix_defect{step}({})", a.name()),
            d,
            defect_fun.clone(),
            comp.symbol.class().clone(),
        ));
        if step < refinements {
            // Pull the defect back to the type II side along the
            // frequency gradient and subtract it through the leading
            // symbol.
            let mut inners = phi.grad_xi();
            inners.extend((d..2 * d).map(|i| FnHandle::coordinate(2 * d, i)));
            let pulled = defect_fun.compose_with(&inners).conj();
            let next = current.fun().sub(&leading.fun().mul(&pulled));
            current = SymbolHandle::new(
                format!("parametrix{}({})", step + 1, a.name()),
                d,
                next,
                b_class.clone(),
            );
        }
    }
    Ok(ParametrixResult {
        symbol: current,
        leading,
        phase: phi.clone(),
        defects,
    })
}

// Conjugation -------------------------------------------------------------

/// Which conjugation formula transports the multiplier symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgorovVariant {
    /// Leading symbol of `Op_phi(a) . Op(p) . Op*_phi(a)`: the multiplier
    /// on the transformed variables times `|a|^2` over the mixed-Hessian
    /// density.
    SandwichAdjoint,
    /// Leading symbol of the conjugation through an invertible pair:
    /// the multiplier on the transformed variables alone.
    Conjugation,
}

/// Transports a multiplier symbol along the canonical transformation of
/// the phase: the position slot moves to the frequency gradient and the
/// frequency slot to the solution `eta(x, xi)` of the position-gradient
/// equation.
pub fn egorov_symbol(
    p: &SymbolHandle,
    a: &SymbolHandle,
    phi: &PhaseHandle,
    variant: EgorovVariant,
) -> Result<SymbolHandle, CalculusError> {
    let d = phi.d();
    assert_eq!(p.d(), d);
    assert_eq!(a.d(), d);
    phase_gate(phi)?;

    let eta = gradient_inverse(phi, GradientInverse::FrequencyFromGradX).components();
    let mut x_eta: Vec<FnHandle> = (0..d).map(|i| FnHandle::coordinate(2 * d, i)).collect();
    x_eta.extend(eta.iter().cloned());
    let mut outer: Vec<FnHandle> = (0..d)
        .map(|i| phi.grad_xi_component(i).compose_with(&x_eta))
        .collect();
    outer.extend(eta.iter().cloned());
    let transported = p.fun().compose_with(&outer);
    let transported_weight = p.class().weight.fun().compose_with(&outer);

    let (fun, weight_fun, name) = match variant {
        EgorovVariant::Conjugation => (
            transported,
            transported_weight,
            format!("egorov_conj({})[{}]", p.name(), phi.name()),
        ),
        EgorovVariant::SandwichAdjoint => {
            let a_sub = a.fun().compose_with(&x_eta);
            let density = phi.mixed_hessian_abs_det().compose_with(&x_eta);
            let fun = transported
                .mul(&a_sub.mul(&a_sub.conj()))
                .mul(&density.recip());
            let wa = a.class().weight.fun().compose_with(&x_eta);
            let weight_fun = transported_weight.mul(&wa).mul(&wa);
            (
                fun,
                weight_fun,
                format!("egorov_sandwich({};{})[{}]", p.name(), a.name(), phi.name()),
            )
        }
    };
    let weight = WeightHandle::new(format!("transported({})", p.class().weight.name()), d, weight_fun);
    let r = p.class().r.min(a.class().r).min(1.0);
    let rho = p.class().rho.min(a.class().rho).min(1.0);
    Ok(SymbolHandle::new(
        name,
        d,
        fun,
        SgClass::new(weight, r, rho),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::presets;
    use approx::assert_relative_eq;

    fn params() -> presets::Params {
        presets::Params::empty()
    }

    fn sym(name: &str) -> SymbolHandle {
        presets::symbol(1, name, &params(), "t").unwrap()
    }

    fn phase(name: &str, eps: Option<f64>) -> PhaseHandle {
        let p = match eps {
            Some(e) => presets::Params::scalar("eps", e),
            None => params(),
        };
        presets::phase(1, name, &p, "t").unwrap()
    }

    fn cdist(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm()
    }

    const POINTS: [[f64; 2]; 5] = [
        [0.7, -1.3],
        [-2.1, 0.4],
        [3.3, 2.2],
        [0.0, 0.0],
        [-1.0, -4.0],
    ];

    #[test]
    fn zero_order_envelope_reproduces_the_amplitude() {
        let phi = phase("perturbed", Some(0.3));
        let a = sym("gaussian");
        let f = psi_factor(&phi, &a, &MultiIndex::zeros(1));
        for p in POINTS {
            let got = f.value(&p).unwrap();
            let want = a.value(&p).unwrap();
            assert!(cdist(got, want) < 1e-13, "at {p:?}: {got} vs {want}");
        }
    }

    #[test]
    fn envelope_derivatives_match_the_curvature_oracle() {
        // psi vanishes to second order on the diagonal, so the first
        // derivative dies and the second sees exactly the position
        // curvature of the phase.
        let eps = 0.4;
        let phi = phase("perturbed", Some(eps));
        let one = sym("one");
        let first = psi_derivative(&phi, &one, &MultiIndex::unit(1, 0), &[0.7], &[-1.3]).unwrap();
        assert!(first.norm() < 1e-13, "first-order term: {first}");
        for (x, xi) in [(0.7, -1.3), (-2.0, 0.5), (1.4, 3.0)] {
            let alpha = MultiIndex(vec![2]);
            let got = psi_derivative(&phi, &one, &alpha, &[x], &[xi]).unwrap();
            let bxi = (1.0 + xi * xi).sqrt();
            let bx = (1.0 + x * x).sqrt();
            let want = Complex64::new(0.0, -eps * bxi / (bx * bx * bx));
            assert!(cdist(got, want) < 1e-12, "at ({x},{xi}): {got} vs {want}");
        }
    }

    #[test]
    fn envelope_routes_agree() {
        // Handle route (partial + diagonal reindex) against the jet
        // projection route.
        let phi = phase("perturbed", Some(0.25));
        let a = sym("elliptic_base");
        for k in 1..=3u8 {
            let alpha = MultiIndex(vec![k]);
            let handle = psi_factor(&phi, &a, &alpha);
            for p in [[0.7, -1.3], [-2.1, 0.4], [1.1, 2.0]] {
                let via_handle = handle.value(&p).unwrap();
                let via_jets = psi_derivative(&phi, &a, &alpha, &p[..1], &p[1..]).unwrap();
                assert!(
                    cdist(via_handle, via_jets) < 1e-11 * (1.0 + via_jets.norm()),
                    "alpha={k} at {p:?}: {via_handle} vs {via_jets}"
                );
            }
        }
    }

    #[test]
    fn identity_phase_terms_reduce_to_multiplier_calculus() {
        // With the trivial phase the envelope loses its oscillation and
        // each term collapses to the classical product of a frequency
        // derivative of p with a position derivative of the amplitude.
        let phi = phase("identity", None);
        let p = sym("elliptic_base");
        let a = sym("gaussian");
        for k in 0..=2u8 {
            let alpha = MultiIndex(vec![k]);
            let term = expansion_term(&p, &a, &phi, &alpha);
            let dxi = MultiIndex(vec![0, k]);
            let dx = MultiIndex(vec![k, 0]);
            let classical = p
                .fun()
                .partial(&dxi)
                .mul(&a.fun().partial(&dx))
                .scale(neg_i_pow(k as usize) / alpha.factorial());
            for q in POINTS {
                let got = term.value(&q).unwrap();
                let want = classical.value(&q).unwrap();
                assert!(cdist(got, want) < 1e-12, "k={k} at {q:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn frequency_multiplier_composition_terminates_and_matches() {
        // p = xi: the expansion ends after two terms and the summed
        // symbol is phi'_x a + D_x a in closed form.
        let phi = phase("perturbed", Some(0.2));
        let p = sym("xi1");
        let a = sym("gaussian");
        let comp = compose_mixed(MixedMode::PdoFio1, &p, &a, &phi, 2).unwrap();
        let expected = phi.grad_x()[0].mul(a.fun()).add(
            &a.fun()
                .partial_axis(0)
                .scale(Complex64::new(0.0, -1.0)),
        );
        for q in POINTS {
            let got = comp.symbol.value(&q).unwrap();
            let want = expected.value(&q).unwrap();
            assert!(cdist(got, want) < 1e-12, "at {q:?}: {got} vs {want}");
        }
        // The dropped order vanishes identically.
        let tail = expansion_term(&p, &a, &phi, &MultiIndex(vec![2]));
        for q in POINTS {
            assert!(tail.value(&q).unwrap().norm() < 1e-15);
        }
        // Operator level: quantize and compare against the two-step
        // application.  The two-step route differentiates the sampled
        // intermediate, whose spectrum the phase factor broadens, so
        // the grid carries extra frequency headroom.
        let grid = Grid::new(1, 128, 9.0).unwrap();
        let u = presets::test_input(&grid, "gaussian", &params(), 0, "t").unwrap();
        let two_step = SgOperator::kohn_nirenberg(p.clone())
            .apply(
                &SgOperator::fio_type_i(a.clone(), phi.clone())
                    .unwrap()
                    .apply(&u)
                    .unwrap()
                    .output,
            )
            .unwrap()
            .output;
        let one_step = comp.realize().unwrap().apply(&u).unwrap().output;
        assert!(two_step.relative_distance(&one_step).unwrap() < 1e-8);
    }

    #[test]
    fn adjoint_symbol_closed_form_and_discrete_adjointness() {
        let p = sym("xxi");
        let q = kn_adjoint_symbol(&p, 2).unwrap();
        for pt in POINTS {
            let want = Complex64::new(pt[0] * pt[1], -1.0);
            let got = q.value(&pt).unwrap();
            assert!(cdist(got, want) < 1e-14, "at {pt:?}: {got} vs {want}");
        }
        let grid = Grid::new(1, 64, 9.0).unwrap();
        let u = presets::test_input(
            &grid,
            "gaussian",
            &presets::Params::empty().with_vector("center", vec![0.3]),
            0,
            "t",
        )
        .unwrap();
        let v = presets::test_input(
            &grid,
            "modulated_gaussian",
            &presets::Params::empty()
                .with_vector("center", vec![-0.3])
                .with_vector("freq", vec![2.0]),
            0,
            "t",
        )
        .unwrap();
        let pu = SgOperator::kohn_nirenberg(p).apply(&u).unwrap().output;
        let qv = SgOperator::kohn_nirenberg(q).apply(&v).unwrap().output;
        let lhs = pu.inner_product(&v).unwrap();
        let rhs = u.inner_product(&qv).unwrap();
        assert!(
            (lhs - rhs).norm() < 1e-12 * lhs.norm(),
            "adjoint defect: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn transposed_mixed_composition_is_exact_for_a_frequency_multiplier() {
        // Op_phi(a) . Op(xi) applies the frequency multiplier inside the
        // quadrature, so the composed symbol is exactly xi a(x, xi).
        let phi = phase("perturbed", Some(0.2));
        let p = sym("xi1");
        let a = sym("gaussian");
        let comp = compose_mixed(MixedMode::Fio1Pdo, &p, &a, &phi, 3).unwrap();
        for q in POINTS {
            let got = comp.symbol.value(&q).unwrap();
            let want = Complex64::new(q[1], 0.0) * a.value(&q).unwrap();
            assert!(cdist(got, want) < 1e-12, "at {q:?}: {got} vs {want}");
        }
        let grid = Grid::new(1, 64, 9.0).unwrap();
        let u = presets::test_input(&grid, "gaussian", &params(), 0, "t").unwrap();
        let fio = SgOperator::fio_type_i(a.clone(), phi.clone()).unwrap();
        let two_step = fio
            .apply(&SgOperator::kohn_nirenberg(p.clone()).apply(&u).unwrap().output)
            .unwrap()
            .output;
        let one_step = comp.realize().unwrap().apply(&u).unwrap().output;
        assert!(two_step.relative_distance(&one_step).unwrap() < 1e-10);
    }

    #[test]
    fn type_ii_composition_reading_is_resolved_by_the_direct_operators() {
        // For p = xi the inner expansion terminates, so the correct
        // reading reproduces the direct composition to quadrature
        // accuracy while the literal type I reading misses by orders.
        let phi = phase("perturbed", Some(0.2));
        let p = sym("xi1");
        let b = sym("gaussian");
        let grid = Grid::new(1, 64, 9.0).unwrap();
        let u = presets::test_input(&grid, "gaussian", &params(), 0, "t").unwrap();
        let report = resolve_type_ii_reading(MixedMode::Fio2Pdo, &p, &b, &phi, 2, &u).unwrap();
        assert!(
            report.type_ii_defect < 1e-8,
            "type II defect: {:e}",
            report.type_ii_defect
        );
        assert!(
            report.type_i_defect > 1e3 * report.type_ii_defect,
            "defects: I {:e} vs II {:e}",
            report.type_i_defect,
            report.type_ii_defect
        );
        assert_eq!(report.preferred, OperatorKind::FioTypeII);
    }

    #[test]
    fn identity_phase_pair_composition_is_a_pointwise_product() {
        let phi = phase("identity", None);
        let a = sym("gaussian");
        let b = sym("elliptic_base");
        for order in [FioPairOrder::TypeIOuter, FioPairOrder::TypeIIOuter] {
            let comp = compose_fio_pair(order, &a, &b, &phi, 1, 1.0).unwrap();
            for q in POINTS {
                let got = comp.symbol.value(&q).unwrap();
                let want = a.value(&q).unwrap() * b.value(&q).unwrap().conj();
                assert!(
                    cdist(got, want) < 1e-12,
                    "{order:?} at {q:?}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn pair_composition_tracks_the_direct_operators() {
        // Every expansion term carries one factor of the phase
        // perturbation, so the remainder decays in symbol order, not
        // in powers of eps, and its size on a fixed grid is linear in
        // eps.  A small eps keeps that floor below the tolerance
        // while the frequency change of variables stays active.
        let a = sym("gaussian");
        let b = sym("xi1");
        let grid = Grid::new(1, 48, 9.0).unwrap();
        let u = presets::test_input(&grid, "gaussian", &params(), 0, "t").unwrap();

        let phi = phase("perturbed", Some(1e-3));
        let fio1 = SgOperator::fio_type_i(a.clone(), phi.clone()).unwrap();
        let fio2 = SgOperator::fio_type_ii(b.clone(), phi.clone()).unwrap();
        let comp_i = compose_fio_pair(FioPairOrder::TypeIOuter, &a, &b, &phi, 3, 1.0).unwrap();
        let two_i = fio1.apply(&fio2.apply(&u).unwrap().output).unwrap().output;
        let one_i = comp_i.realize().unwrap().apply(&u).unwrap().output;
        let defect_i = two_i.relative_distance(&one_i).unwrap();
        assert!(defect_i < 1e-3, "type I outer defect: {defect_i:e}");

        let comp_ii = compose_fio_pair(FioPairOrder::TypeIIOuter, &a, &b, &phi, 3, 1.0).unwrap();
        let two_ii = fio2.apply(&fio1.apply(&u).unwrap().output).unwrap().output;
        let one_ii = comp_ii.realize().unwrap().apply(&u).unwrap().output;
        let defect_ii = two_ii.relative_distance(&one_ii).unwrap();
        assert!(defect_ii < 1e-3, "type II outer defect: {defect_ii:e}");

        // A hundred times the perturbation lands the same truncation
        // a hundred times farther out: the remainder is first order
        // in the perturbation.
        let phi_big = phase("perturbed", Some(0.1));
        let fio1_big = SgOperator::fio_type_i(a.clone(), phi_big.clone()).unwrap();
        let fio2_big = SgOperator::fio_type_ii(b.clone(), phi_big.clone()).unwrap();
        let comp_big =
            compose_fio_pair(FioPairOrder::TypeIOuter, &a, &b, &phi_big, 3, 1.0).unwrap();
        let two_big = fio1_big
            .apply(&fio2_big.apply(&u).unwrap().output)
            .unwrap()
            .output;
        let one_big = comp_big.realize().unwrap().apply(&u).unwrap().output;
        let defect_big = two_big.relative_distance(&one_big).unwrap();
        assert!(defect_big < 1e-1, "large perturbation defect: {defect_big:e}");
        assert!(
            defect_big > 20.0 * defect_i,
            "remainder should scale with the perturbation: {defect_big:e} vs {defect_i:e}"
        );

        // With the type II factor outside, the one-term truncation
        // misses a first-order derivative term outright; the next
        // term captures it.
        let short = compose_fio_pair(FioPairOrder::TypeIIOuter, &a, &b, &phi_big, 1, 1.0).unwrap();
        let long = compose_fio_pair(FioPairOrder::TypeIIOuter, &a, &b, &phi_big, 3, 1.0).unwrap();
        let two = fio2_big
            .apply(&fio1_big.apply(&u).unwrap().output)
            .unwrap()
            .output;
        let d_short = two
            .relative_distance(&short.realize().unwrap().apply(&u).unwrap().output)
            .unwrap();
        let d_long = two
            .relative_distance(&long.realize().unwrap().apply(&u).unwrap().output)
            .unwrap();
        assert!(
            d_long < 0.1 * d_short,
            "more terms should help: {d_long:e} vs {d_short:e}"
        );
    }

    #[test]
    fn parametrix_of_the_trivial_operator_is_exact() {
        let phi = phase("identity", None);
        let a = sym("one");
        let result = parametrix(&a, &phi, &WeightHandle::one(1), 2, 1).unwrap();
        assert_eq!(result.defects.len(), 2);
        for q in POINTS {
            assert!(cdist(result.symbol.value(&q).unwrap(), Complex64::new(1.0, 0.0)) < 1e-13);
            for defect in &result.defects {
                assert!(defect.value(&q).unwrap().norm() < 1e-13);
            }
        }
    }

    #[test]
    fn parametrix_leading_symbol_inverts_the_elliptic_symbol() {
        let phi = phase("identity", None);
        let a = sym("elliptic_base");
        let result = parametrix(&a, &phi, &WeightHandle::one(1), 2, 2).unwrap();
        assert_eq!(result.defects.len(), 3);
        for q in POINTS {
            // leading = 1 / conj(a) and the leading product is exactly 1
            let lead = result.leading.value(&q).unwrap();
            let inv = a.value(&q).unwrap().conj().finv();
            assert!(cdist(lead, inv) < 1e-12);
            let product = a.value(&q).unwrap() * lead.conj();
            assert!(cdist(product, Complex64::new(1.0, 0.0)) < 1e-12);
        }
        // Refinement shrinks the defect away from the origin.
        let far = [12.0, 12.0];
        let d0 = result.defects[0].value(&far).unwrap().norm();
        let d1 = result.defects[1].value(&far).unwrap().norm();
        assert!(
            d1 < 0.5 * d0,
            "defect did not shrink: {d0:e} -> {d1:e}"
        );
    }

    #[test]
    fn conjugation_symbols_collapse_for_the_identity_phase() {
        let phi = phase("identity", None);
        let p = sym("elliptic_base");
        let a = sym("gaussian");
        let sandwich = egorov_symbol(&p, &a, &phi, EgorovVariant::SandwichAdjoint).unwrap();
        let conj = egorov_symbol(&p, &a, &phi, EgorovVariant::Conjugation).unwrap();
        for q in POINTS {
            let pv = p.value(&q).unwrap();
            let av = a.value(&q).unwrap();
            assert!(cdist(sandwich.value(&q).unwrap(), pv * av.norm_sqr()) < 1e-12);
            assert!(cdist(conj.value(&q).unwrap(), pv) < 1e-12);
        }
    }

    #[test]
    fn conjugation_symbol_matches_manual_substitution() {
        let phi = phase("perturbed", Some(0.3));
        let p = sym("elliptic_base");
        let a = sym("gaussian");
        let sandwich = egorov_symbol(&p, &a, &phi, EgorovVariant::SandwichAdjoint).unwrap();
        let (x, xi) = (0.8, -1.1);
        let eta = crate::phases::invert_gradient(
            &phi,
            GradientInverse::FrequencyFromGradX,
            &[x],
            &[xi],
        )
        .unwrap()[0];
        let (_, gxi) = phi.gradient(&[x, eta]).unwrap();
        let det = phi.mixed_hessian_abs_det().value(&[x, eta]).unwrap().re;
        let want = p.value(&[gxi[0], eta]).unwrap()
            * a.value(&[x, eta]).unwrap().norm_sqr()
            / det;
        let got = sandwich.value(&[x, xi]).unwrap();
        assert_relative_eq!(got.re, want.re, max_relative = 1e-10);
        assert_relative_eq!(got.im, want.im, epsilon = 1e-10);
    }

    #[test]
    fn transport_phase_conjugation_shifts_the_position() {
        // phi = <x, xi> + <xi>: the gradient flow moves x by
        // xi / <xi>, so conjugation carries p(x, xi) to
        // p(x + xi / <xi>, xi).
        let phi = presets::phase(1, "transport", &presets::Params::scalar("t", 1.0), "t").unwrap();
        let p = sym("gaussian");
        let a = sym("one");
        let got = egorov_symbol(&p, &a, &phi, EgorovVariant::Conjugation).unwrap();
        for q in POINTS {
            let shifted = [q[0] + q[1] / (1.0 + q[1] * q[1]).sqrt(), q[1]];
            let want = p.value(&shifted).unwrap();
            assert!(cdist(got.value(&q).unwrap(), want) < 1e-10, "at {q:?}");
        }
    }

    #[test]
    fn hypothesis_gates_reject_bad_inputs() {
        let phi = phase("identity", None);
        let a = sym("gaussian");
        let p_flat = sym("oscillatory"); // class declares no derivative decay
        let err = compose_mixed(MixedMode::PdoFio1, &p_flat, &a, &phi, 2).unwrap_err();
        assert!(matches!(err, CalculusError::HypothesisFailed { .. }), "{err}");

        let p = sym("xi1");
        let err = compose_mixed(MixedMode::PdoFio1, &p, &a, &phi, 9).unwrap_err();
        assert!(matches!(err, CalculusError::OrderTooLarge { m: 9, .. }), "{err}");

        let b_flat = sym("gauss_mod");
        let err = compose_fio_pair(FioPairOrder::TypeIOuter, &a, &b_flat, &phi, 2, 1.0).unwrap_err();
        assert!(matches!(err, CalculusError::HypothesisFailed { .. }), "{err}");

        let err = compose_fio_pair(FioPairOrder::TypeIOuter, &a, &a, &phi, 2, 0.0).unwrap_err();
        assert!(matches!(err, CalculusError::HypothesisFailed { .. }), "{err}");

        let vanishing = sym("gaussian"); // decays, so it cannot dominate the unit weight
        let err = parametrix(&vanishing, &phi, &WeightHandle::one(1), 2, 1).unwrap_err();
        assert!(matches!(err, CalculusError::NotElliptic { .. }), "{err}");
    }
}
