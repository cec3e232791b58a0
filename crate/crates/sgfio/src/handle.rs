//! Function handles: closures over `R^n` that can report both point values
//! and truncated Taylor jets, plus the combinator algebra connecting them.
//!
//! Every analytic object in the crate (symbol, amplitude, phase function,
//! weight) wraps a [`FnHandle`]. Combinators (sums, products, derivatives,
//! compositions, variable reindexing) produce new handles whose two
//! evaluation paths stay consistent: `value(p)` always equals
//! `jet(p, 0).value()`, and the jet path is exact truncated Taylor
//! arithmetic rather than finite differencing.

use crate::error::EvalError;
use crate::jet::{Jet, MultiIndex};
use num_complex::Complex64;
use std::sync::Arc;

/// Largest jet order a leaf will serve. Derivative combinators raise the
/// requested order internally, so the cap guards runaway index tables.
pub const ORDER_CAP: usize = 16;

/// A smooth function of `dim_in` real variables with complex values,
/// evaluable pointwise and as a truncated Taylor jet at a point.
pub trait JetFn: Send + Sync {
    fn dim_in(&self) -> usize;
    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError>;
    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError>;
}

fn check_dim(f: &dyn JetFn, p: &[f64]) -> Result<(), EvalError> {
    if p.len() != f.dim_in() {
        return Err(EvalError::DimensionMismatch {
            expect: f.dim_in(),
            got: p.len(),
        });
    }
    Ok(())
}

fn check_order(order: usize) -> Result<(), EvalError> {
    if order > ORDER_CAP {
        return Err(EvalError::OrderCapExceeded {
            requested: order,
            cap: ORDER_CAP,
        });
    }
    Ok(())
}

/// Cloneable handle around a [`JetFn`] carrying the combinator methods.
#[derive(Clone)]
pub struct FnHandle {
    f: Arc<dyn JetFn>,
}

impl std::fmt::Debug for FnHandle {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fm, "FnHandle(dim_in={})", self.f.dim_in())
    }
}

impl JetFn for FnHandle {
    fn dim_in(&self) -> usize {
        self.f.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        self.f.value(p)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        self.f.jet(p, order)
    }
}

// Leaves ------------------------------------------------------------------

struct Constant {
    dim: usize,
    c: Complex64,
}

impl JetFn for Constant {
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        Ok(self.c)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        check_order(order)?;
        Ok(Jet::constant(self.dim, order, self.c))
    }
}

struct Coordinate {
    dim: usize,
    axis: usize,
}

impl JetFn for Coordinate {
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        Ok(Complex64::new(p[self.axis], 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        check_order(order)?;
        Ok(Jet::variable(self.dim, order, self.axis, p[self.axis]))
    }
}

/// Japanese bracket of a coordinate block: `(1 + sum of squares)^(1/2)`.
struct BracketBlock {
    dim: usize,
    start: usize,
    len: usize,
}

impl BracketBlock {
    fn sq(&self, p: &[f64]) -> f64 {
        p[self.start..self.start + self.len]
            .iter()
            .map(|x| x * x)
            .sum()
    }
}

impl JetFn for BracketBlock {
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        Ok(Complex64::new((1.0 + self.sq(p)).sqrt(), 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        check_order(order)?;
        let vars = Jet::variables(order, p);
        let mut s = Jet::constant(self.dim, order, Complex64::new(1.0, 0.0));
        for i in self.start..self.start + self.len {
            s = s.add(&vars[i].mul(&vars[i]));
        }
        Ok(s.sqrt())
    }
}

/// Bilinear pairing of two equal-length blocks: `sum p[a+i] p[b+i]`.
struct PairingBlock {
    dim: usize,
    a_start: usize,
    b_start: usize,
    len: usize,
}

impl JetFn for PairingBlock {
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        let mut s = 0.0;
        for i in 0..self.len {
            s += p[self.a_start + i] * p[self.b_start + i];
        }
        Ok(Complex64::new(s, 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        check_order(order)?;
        let vars = Jet::variables(order, p);
        let mut s = Jet::zero(self.dim, order);
        for i in 0..self.len {
            s = s.add(&vars[self.a_start + i].mul(&vars[self.b_start + i]));
        }
        Ok(s)
    }
}

type JetBuilder = dyn Fn(&[Jet]) -> Result<Jet, EvalError> + Send + Sync;
type ValueFn = dyn Fn(&[f64]) -> Result<Complex64, EvalError> + Send + Sync;

/// Leaf defined by a jet builder acting on variable jets, optionally with a
/// dedicated fast scalar path for quadrature loops.
struct SmoothClosure {
    dim: usize,
    builder: Box<JetBuilder>,
    value: Option<Box<ValueFn>>,
}

impl JetFn for SmoothClosure {
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        match &self.value {
            Some(v) => v(p),
            None => Ok((self.builder)(&Jet::variables(0, p))?.value()),
        }
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        check_order(order)?;
        (self.builder)(&Jet::variables(order, p))
    }
}

// Combinators -------------------------------------------------------------

struct Add {
    a: FnHandle,
    b: FnHandle,
}

impl JetFn for Add {
    fn dim_in(&self) -> usize {
        self.a.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(self.a.value(p)? + self.b.value(p)?)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        Ok(self.a.jet(p, order)?.add(&self.b.jet(p, order)?))
    }
}

struct Mul {
    a: FnHandle,
    b: FnHandle,
}

impl JetFn for Mul {
    fn dim_in(&self) -> usize {
        self.a.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(self.a.value(p)? * self.b.value(p)?)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        Ok(self.a.jet(p, order)?.mul(&self.b.jet(p, order)?))
    }
}

struct Affine {
    inner: FnHandle,
    scale: Complex64,
    shift: Complex64,
}

impl JetFn for Affine {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(self.inner.value(p)? * self.scale + self.shift)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        Ok(self
            .inner
            .jet(p, order)?
            .scale(self.scale)
            .add_scalar(self.shift))
    }
}

struct Conj {
    inner: FnHandle,
}

impl JetFn for Conj {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(self.inner.value(p)?.conj())
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        Ok(self.inner.jet(p, order)?.conj())
    }
}

struct Recip {
    inner: FnHandle,
}

impl JetFn for Recip {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        let v = self.inner.value(p)?;
        if v.norm() == 0.0 {
            return Err(EvalError::NonFinite { point: p.to_vec() });
        }
        Ok(v.finv())
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let j = self.inner.jet(p, order)?;
        if j.value().norm() == 0.0 {
            return Err(EvalError::NonFinite { point: p.to_vec() });
        }
        Ok(j.recip())
    }
}

struct Exp {
    inner: FnHandle,
}

impl JetFn for Exp {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        Ok(self.inner.value(p)?.exp())
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        Ok(self.inner.jet(p, order)?.exp())
    }
}

/// Real power of a positive real-valued handle.
struct Powf {
    inner: FnHandle,
    m: f64,
}

impl JetFn for Powf {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        let v = self.inner.value(p)?;
        if v.re <= 0.0 || v.im.abs() > 1e-9 * v.re.abs().max(1.0) {
            return Err(EvalError::NonPositiveWeight {
                point: p.to_vec(),
                value: v.re,
            });
        }
        Ok(Complex64::new(v.re.powf(self.m), 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let j = self.inner.jet(p, order)?;
        let v = j.value();
        if v.re <= 0.0 || v.im.abs() > 1e-9 * v.re.abs().max(1.0) {
            return Err(EvalError::NonPositiveWeight {
                point: p.to_vec(),
                value: v.re,
            });
        }
        Ok(j.powf(self.m))
    }
}

/// Absolute value of a real-valued handle bounded away from zero; jets are
/// the inner jets times the sign at the base point.
struct AbsReal {
    inner: FnHandle,
}

impl JetFn for AbsReal {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        let v = self.inner.value(p)?;
        if v.re == 0.0 {
            return Err(EvalError::NonFinite { point: p.to_vec() });
        }
        Ok(Complex64::new(v.re.abs(), 0.0))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let j = self.inner.jet(p, order)?;
        let v = j.value();
        if v.re == 0.0 {
            return Err(EvalError::NonFinite { point: p.to_vec() });
        }
        Ok(j.scale(Complex64::new(v.re.signum(), 0.0)))
    }
}

/// Iterated partial derivative; `alpha` lives in the handle's variables.
struct Partial {
    inner: FnHandle,
    alpha: MultiIndex,
}

impl JetFn for Partial {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        let k = self.alpha.degree();
        Ok(self.inner.jet(p, k)?.partial(&self.alpha))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let k = self.alpha.degree();
        Ok(self.inner.jet(p, order + k)?.derive_multi(&self.alpha))
    }
}

/// Sum of pure second partials over a contiguous axis block.
struct LaplacianBlock {
    inner: FnHandle,
    start: usize,
    len: usize,
}

impl JetFn for LaplacianBlock {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        let j = self.inner.jet(p, 2)?;
        let mut s = Complex64::default();
        for i in self.start..self.start + self.len {
            let mut alpha = MultiIndex::zeros(self.dim_in());
            alpha.0[i] = 2;
            s += j.partial(&alpha);
        }
        Ok(s)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let j = self.inner.jet(p, order + 2)?;
        let mut out = Jet::zero(self.dim_in(), order);
        for i in self.start..self.start + self.len {
            out = out.add(&j.derive(i).derive(i));
        }
        Ok(out)
    }
}

/// Composition with a real map: `outer(inner_1(p), ..., inner_k(p))`.
struct Compose {
    outer: FnHandle,
    inners: Vec<FnHandle>,
}

impl JetFn for Compose {
    fn dim_in(&self) -> usize {
        self.inners[0].dim_in()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        let mut q = Vec::with_capacity(self.inners.len());
        for g in &self.inners {
            let v = g.value(p)?;
            debug_assert!(v.im.abs() <= 1e-9 * v.re.abs().max(1.0));
            q.push(v.re);
        }
        self.outer.value(&q)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        let mut inner_jets = Vec::with_capacity(self.inners.len());
        let mut base = Vec::with_capacity(self.inners.len());
        for g in &self.inners {
            let j = g.jet(p, order)?;
            let v = j.value();
            debug_assert!(v.im.abs() <= 1e-9 * v.re.abs().max(1.0));
            base.push(v.re);
            inner_jets.push(j);
        }
        let outer_jet = self.outer.jet(&base, order)?;
        Ok(outer_jet.compose(&inner_jets))
    }
}

/// Variable reindexing `g(p) = f(p[slot_map[0]], ..., p[slot_map[k-1]])`.
/// Repeated slots realize diagonal restrictions; unused outer slots make the
/// result constant along them.
struct Reindex {
    inner: FnHandle,
    outer_dim: usize,
    slot_map: Vec<usize>,
}

impl JetFn for Reindex {
    fn dim_in(&self) -> usize {
        self.outer_dim
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        let q: Vec<f64> = self.slot_map.iter().map(|&s| p[s]).collect();
        self.inner.value(&q)
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        let q: Vec<f64> = self.slot_map.iter().map(|&s| p[s]).collect();
        Ok(self
            .inner
            .jet(&q, order)?
            .merge_variables(self.outer_dim, &self.slot_map))
    }
}

/// Partial evaluation: freezes listed axes at fixed values.
struct FixAxes {
    inner: FnHandle,
    frozen: Vec<(usize, f64)>,
    keep: Vec<usize>,
}

impl FixAxes {
    fn scatter(&self, p: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.inner.dim_in()];
        for &(axis, v) in &self.frozen {
            full[axis] = v;
        }
        for (j, &axis) in self.keep.iter().enumerate() {
            full[axis] = p[j];
        }
        full
    }
}

impl JetFn for FixAxes {
    fn dim_in(&self) -> usize {
        self.keep.len()
    }

    fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        check_dim(self, p)?;
        self.inner.value(&self.scatter(p))
    }

    fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        check_dim(self, p)?;
        Ok(self.inner.jet(&self.scatter(p), order)?.project(&self.keep))
    }
}

impl FnHandle {
    pub fn from_jet_fn(f: Arc<dyn JetFn>) -> Self {
        FnHandle { f }
    }

    // Inherent mirrors of the trait methods, so call sites do not need the
    // trait in scope.
    pub fn dim_in(&self) -> usize {
        self.f.dim_in()
    }

    pub fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        self.f.value(p)
    }

    pub fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        self.f.jet(p, order)
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        FnHandle {
            f: Arc::new(Constant { dim, c }),
        }
    }

    pub fn coordinate(dim: usize, axis: usize) -> Self {
        assert!(axis < dim);
        FnHandle {
            f: Arc::new(Coordinate { dim, axis }),
        }
    }

    /// `(1 + |p[start..start+len]|^2)^(1/2)`.
    pub fn bracket_block(dim: usize, start: usize, len: usize) -> Self {
        assert!(start + len <= dim);
        FnHandle {
            f: Arc::new(BracketBlock { dim, start, len }),
        }
    }

    /// `<p[a..a+len], p[b..b+len]>`.
    pub fn pairing_block(dim: usize, a_start: usize, b_start: usize, len: usize) -> Self {
        assert!(a_start + len <= dim && b_start + len <= dim);
        FnHandle {
            f: Arc::new(PairingBlock {
                dim,
                a_start,
                b_start,
                len,
            }),
        }
    }

    /// Leaf from a jet builder; the scalar path runs the builder at order 0.
    pub fn smooth(
        dim: usize,
        builder: impl Fn(&[Jet]) -> Result<Jet, EvalError> + Send + Sync + 'static,
    ) -> Self {
        FnHandle {
            f: Arc::new(SmoothClosure {
                dim,
                builder: Box::new(builder),
                value: None,
            }),
        }
    }

    /// Leaf with a dedicated scalar path for quadrature loops. The caller
    /// promises both paths agree; tests compare them on probe points.
    pub fn smooth_with_value(
        dim: usize,
        value: impl Fn(&[f64]) -> Result<Complex64, EvalError> + Send + Sync + 'static,
        builder: impl Fn(&[Jet]) -> Result<Jet, EvalError> + Send + Sync + 'static,
    ) -> Self {
        FnHandle {
            f: Arc::new(SmoothClosure {
                dim,
                builder: Box::new(builder),
                value: Some(Box::new(value)),
            }),
        }
    }

    pub fn add(&self, other: &FnHandle) -> FnHandle {
        assert_eq!(self.dim_in(), other.dim_in());
        FnHandle {
            f: Arc::new(Add {
                a: self.clone(),
                b: other.clone(),
            }),
        }
    }

    pub fn sub(&self, other: &FnHandle) -> FnHandle {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &FnHandle) -> FnHandle {
        assert_eq!(self.dim_in(), other.dim_in());
        FnHandle {
            f: Arc::new(Mul {
                a: self.clone(),
                b: other.clone(),
            }),
        }
    }

    pub fn scale(&self, s: Complex64) -> FnHandle {
        FnHandle {
            f: Arc::new(Affine {
                inner: self.clone(),
                scale: s,
                shift: Complex64::default(),
            }),
        }
    }

    pub fn add_scalar(&self, shift: Complex64) -> FnHandle {
        FnHandle {
            f: Arc::new(Affine {
                inner: self.clone(),
                scale: Complex64::new(1.0, 0.0),
                shift,
            }),
        }
    }

    pub fn conj(&self) -> FnHandle {
        FnHandle {
            f: Arc::new(Conj {
                inner: self.clone(),
            }),
        }
    }

    pub fn recip(&self) -> FnHandle {
        FnHandle {
            f: Arc::new(Recip {
                inner: self.clone(),
            }),
        }
    }

    pub fn exp(&self) -> FnHandle {
        FnHandle {
            f: Arc::new(Exp {
                inner: self.clone(),
            }),
        }
    }

    pub fn powf(&self, m: f64) -> FnHandle {
        FnHandle {
            f: Arc::new(Powf {
                inner: self.clone(),
                m,
            }),
        }
    }

    pub fn abs_real(&self) -> FnHandle {
        FnHandle {
            f: Arc::new(AbsReal {
                inner: self.clone(),
            }),
        }
    }

    /// `d^alpha` in the handle's own variables (plain partials, no `-i`).
    pub fn partial(&self, alpha: &MultiIndex) -> FnHandle {
        assert_eq!(alpha.0.len(), self.dim_in());
        FnHandle {
            f: Arc::new(Partial {
                inner: self.clone(),
                alpha: alpha.clone(),
            }),
        }
    }

    pub fn partial_axis(&self, axis: usize) -> FnHandle {
        self.partial(&MultiIndex::unit(self.dim_in(), axis))
    }

    pub fn laplacian_block(&self, start: usize, len: usize) -> FnHandle {
        assert!(start + len <= self.dim_in());
        FnHandle {
            f: Arc::new(LaplacianBlock {
                inner: self.clone(),
                start,
                len,
            }),
        }
    }

    /// `self(inners[0](p), ..., inners[k-1](p))`; the inner handles must be
    /// real-valued and share one input dimension.
    pub fn compose_with(&self, inners: &[FnHandle]) -> FnHandle {
        assert_eq!(inners.len(), self.dim_in());
        assert!(!inners.is_empty());
        let d0 = inners[0].dim_in();
        assert!(inners.iter().all(|g| g.dim_in() == d0));
        FnHandle {
            f: Arc::new(Compose {
                outer: self.clone(),
                inners: inners.to_vec(),
            }),
        }
    }

    /// `p -> self(p[slot_map[0]], ..., p[slot_map[k-1]])` on `outer_dim`
    /// variables.
    pub fn reindex(&self, outer_dim: usize, slot_map: &[usize]) -> FnHandle {
        assert_eq!(slot_map.len(), self.dim_in());
        assert!(slot_map.iter().all(|&s| s < outer_dim));
        FnHandle {
            f: Arc::new(Reindex {
                inner: self.clone(),
                outer_dim,
                slot_map: slot_map.to_vec(),
            }),
        }
    }

    /// Swaps the two halves of an even-dimensional argument list (position
    /// and frequency blocks).
    pub fn swap_halves(&self) -> FnHandle {
        let n = self.dim_in();
        assert_eq!(n % 2, 0);
        let d = n / 2;
        let map: Vec<usize> = (0..n).map(|i| (i + d) % n).collect();
        self.reindex(n, &map)
    }

    /// Freezes the listed axes at the given values.
    pub fn fix_axes(&self, frozen: &[(usize, f64)]) -> FnHandle {
        let mut seen = vec![false; self.dim_in()];
        for &(axis, _) in frozen {
            assert!(axis < self.dim_in() && !seen[axis]);
            seen[axis] = true;
        }
        let keep: Vec<usize> = (0..self.dim_in()).filter(|&i| !seen[i]).collect();
        assert!(!keep.is_empty());
        FnHandle {
            f: Arc::new(FixAxes {
                inner: self.clone(),
                frozen: frozen.to_vec(),
                keep,
            }),
        }
    }

    /// Determinant of a square matrix of handles (closed formulas, `n <= 3`).
    pub fn det(entries: &[Vec<FnHandle>]) -> FnHandle {
        let n = entries.len();
        assert!((1..=3).contains(&n));
        assert!(entries.iter().all(|row| row.len() == n));
        match n {
            1 => entries[0][0].clone(),
            2 => entries[0][0]
                .mul(&entries[1][1])
                .sub(&entries[0][1].mul(&entries[1][0])),
            _ => {
                let minor = |r0: usize, r1: usize, c0: usize, c1: usize| {
                    entries[r0][c0]
                        .mul(&entries[r1][c1])
                        .sub(&entries[r0][c1].mul(&entries[r1][c0]))
                };
                let t0 = entries[0][0].mul(&minor(1, 2, 1, 2));
                let t1 = entries[0][1].mul(&minor(1, 2, 0, 2));
                let t2 = entries[0][2].mul(&minor(1, 2, 0, 1));
                t0.sub(&t1).add(&t2)
            }
        }
    }
}

// Typed handles -----------------------------------------------------------

/// Positive real-valued function of `(x, xi)` used as an order function.
#[derive(Clone, Debug)]
pub struct WeightHandle {
    name: String,
    d: usize,
    fun: FnHandle,
}

impl WeightHandle {
    pub fn new(name: impl Into<String>, d: usize, fun: FnHandle) -> Self {
        assert_eq!(fun.dim_in(), 2 * d);
        WeightHandle {
            name: name.into(),
            d,
            fun,
        }
    }

    /// The product weight `<x>^m <xi>^mu`.
    pub fn theta(d: usize, m: f64, mu: f64) -> Self {
        let bx = FnHandle::bracket_block(2 * d, 0, d);
        let bxi = FnHandle::bracket_block(2 * d, d, d);
        let fun = match (m, mu) {
            (0.0, 0.0) => FnHandle::constant(2 * d, Complex64::new(1.0, 0.0)),
            (m, 0.0) => bx.powf(m),
            (0.0, mu) => bxi.powf(mu),
            (m, mu) => bx.powf(m).mul(&bxi.powf(mu)),
        };
        WeightHandle::new(format!("theta[{m},{mu}]"), d, fun)
    }

    pub fn one(d: usize) -> Self {
        WeightHandle::theta(d, 0.0, 0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn fun(&self) -> &FnHandle {
        &self.fun
    }

    /// Positive value at a packed `(x, xi)` point.
    pub fn value(&self, p: &[f64]) -> Result<f64, EvalError> {
        let v = self.fun.value(p)?;
        if !(v.re.is_finite() && v.re > 0.0) {
            return Err(EvalError::NonPositiveWeight {
                point: p.to_vec(),
                value: v.re,
            });
        }
        Ok(v.re)
    }

    pub fn mul(&self, other: &WeightHandle) -> WeightHandle {
        assert_eq!(self.d, other.d);
        WeightHandle {
            name: format!("{}*{}", self.name, other.name),
            d: self.d,
            fun: self.fun.mul(&other.fun),
        }
    }

    pub fn powf(&self, m: f64) -> WeightHandle {
        WeightHandle {
            name: format!("({})^{m}", self.name),
            d: self.d,
            fun: self.fun.powf(m),
        }
    }

    pub fn recip(&self) -> WeightHandle {
        self.powf(-1.0)
    }

    /// Swaps the position and frequency slots.
    pub fn transpose(&self) -> WeightHandle {
        WeightHandle {
            name: format!("t({})", self.name),
            d: self.d,
            fun: self.fun.swap_halves(),
        }
    }
}

/// Symbol class metadata: the order weight and the decay gains `r` (in `x`)
/// and `rho` (in `xi`) per derivative.
#[derive(Clone, Debug)]
pub struct SgClass {
    pub weight: WeightHandle,
    pub r: f64,
    pub rho: f64,
}

impl SgClass {
    pub fn new(weight: WeightHandle, r: f64, rho: f64) -> Self {
        SgClass { weight, r, rho }
    }

    pub fn describe(&self) -> String {
        format!("SG({}; r={}, rho={})", self.weight.name(), self.r, self.rho)
    }

    /// Class of a derivative `d^alpha_x d^beta_xi a`: the weight picks up
    /// `theta[-r |alpha|, -rho |beta|]`.
    pub fn derivative(&self, ax: usize, bxi: usize) -> SgClass {
        let shift = WeightHandle::theta(
            self.weight.d(),
            -self.r * ax as f64,
            -self.rho * bxi as f64,
        );
        SgClass {
            weight: self.weight.mul(&shift),
            r: self.r,
            rho: self.rho,
        }
    }

    /// Class of a product of two symbols: weights multiply, decay rates
    /// take the minimum.
    pub fn product(&self, other: &SgClass) -> SgClass {
        SgClass {
            weight: self.weight.mul(&other.weight),
            r: self.r.min(other.r),
            rho: self.rho.min(other.rho),
        }
    }
}

/// Symbol `a(x, xi)` on `R^d x R^d` with class metadata.
#[derive(Clone, Debug)]
pub struct SymbolHandle {
    name: String,
    d: usize,
    fun: FnHandle,
    class: SgClass,
}

impl SymbolHandle {
    pub fn new(name: impl Into<String>, d: usize, fun: FnHandle, class: SgClass) -> Self {
        assert_eq!(fun.dim_in(), 2 * d);
        assert_eq!(class.weight.d(), d);
        SymbolHandle {
            name: name.into(),
            d,
            fun,
            class,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn fun(&self) -> &FnHandle {
        &self.fun
    }

    pub fn class(&self) -> &SgClass {
        &self.class
    }

    /// Value at a packed `(x, xi)` point of length `2 d`.
    pub fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        self.fun.value(p)
    }

    pub fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        self.fun.jet(p, order)
    }

    pub fn conj(&self) -> SymbolHandle {
        SymbolHandle {
            name: format!("conj({})", self.name),
            d: self.d,
            fun: self.fun.conj(),
            class: self.class.clone(),
        }
    }

    /// `a(xi, x)` with the class slots swapped accordingly.
    pub fn transpose(&self) -> SymbolHandle {
        SymbolHandle {
            name: format!("t({})", self.name),
            d: self.d,
            fun: self.fun.swap_halves(),
            class: SgClass {
                weight: self.class.weight.transpose(),
                r: self.class.rho,
                rho: self.class.r,
            },
        }
    }

    pub fn mul(&self, other: &SymbolHandle) -> SymbolHandle {
        assert_eq!(self.d, other.d);
        SymbolHandle {
            name: format!("{}*{}", self.name, other.name),
            d: self.d,
            fun: self.fun.mul(&other.fun),
            class: self.class.product(&other.class),
        }
    }

    pub fn add(&self, other: &SymbolHandle, class: SgClass) -> SymbolHandle {
        assert_eq!(self.d, other.d);
        SymbolHandle {
            name: format!("{}+{}", self.name, other.name),
            d: self.d,
            fun: self.fun.add(&other.fun),
            class,
        }
    }

    pub fn scale(&self, s: Complex64) -> SymbolHandle {
        SymbolHandle {
            name: format!("scaled({})", self.name),
            d: self.d,
            fun: self.fun.scale(s),
            class: self.class.clone(),
        }
    }

    pub fn with_class(&self, class: SgClass) -> SymbolHandle {
        SymbolHandle {
            name: self.name.clone(),
            d: self.d,
            fun: self.fun.clone(),
            class,
        }
    }

    pub fn with_name(&self, name: impl Into<String>) -> SymbolHandle {
        SymbolHandle {
            name: name.into(),
            d: self.d,
            fun: self.fun.clone(),
            class: self.class.clone(),
        }
    }
}

/// Region restriction for amplitudes supported near the spatial diagonal:
/// defined where `|y - x| <= k <x>`.
#[derive(Clone, Copy, Debug)]
pub struct DiagonalRegion {
    pub k: f64,
}

impl DiagonalRegion {
    pub fn contains(&self, x: &[f64], y: &[f64]) -> bool {
        let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        let bx2: f64 = 1.0 + x.iter().map(|a| a * a).sum::<f64>();
        dist2.sqrt() <= self.k * bx2.sqrt()
    }
}

/// Amplitude `c(x, y, xi)` on `R^(3d)`, possibly restricted near `y = x`.
#[derive(Clone, Debug)]
pub struct AmplitudeHandle {
    name: String,
    d: usize,
    fun: FnHandle,
    class: SgClass,
    region: Option<DiagonalRegion>,
}

impl AmplitudeHandle {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        fun: FnHandle,
        class: SgClass,
        region: Option<DiagonalRegion>,
    ) -> Self {
        assert_eq!(fun.dim_in(), 3 * d);
        AmplitudeHandle {
            name: name.into(),
            d,
            fun,
            class,
            region,
        }
    }

    /// Lifts a symbol read on the `(x, xi)` slots.
    pub fn from_symbol_on_x(a: &SymbolHandle) -> Self {
        let d = a.d();
        let map: Vec<usize> = (0..d).chain(2 * d..3 * d).collect();
        AmplitudeHandle {
            name: a.name().to_string(),
            d,
            fun: a.fun().reindex(3 * d, &map),
            class: a.class().clone(),
            region: None,
        }
    }

    /// Lifts a symbol read on the `(y, xi)` slots.
    pub fn from_symbol_on_y(a: &SymbolHandle) -> Self {
        let d = a.d();
        let map: Vec<usize> = (d..2 * d).chain(2 * d..3 * d).collect();
        AmplitudeHandle {
            name: format!("{}(y,.)", a.name()),
            d,
            fun: a.fun().reindex(3 * d, &map),
            class: a.class().clone(),
            region: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn fun(&self) -> &FnHandle {
        &self.fun
    }

    pub fn class(&self) -> &SgClass {
        &self.class
    }

    pub fn region(&self) -> Option<DiagonalRegion> {
        self.region
    }

    /// Value at a packed `(x, y, xi)` point; errors outside the region.
    pub fn value(&self, p: &[f64]) -> Result<Complex64, EvalError> {
        self.check_region(p)?;
        self.fun.value(p)
    }

    pub fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        self.check_region(p)?;
        self.fun.jet(p, order)
    }

    fn check_region(&self, p: &[f64]) -> Result<(), EvalError> {
        if let Some(region) = self.region {
            let d = self.d;
            if !region.contains(&p[..d], &p[d..2 * d]) {
                return Err(EvalError::OutsideCutoffRegion {
                    point: p.to_vec(),
                    k: region.k,
                });
            }
        }
        Ok(())
    }

    /// Restriction to the spatial diagonal `y = x`, as a symbol.
    pub fn on_diagonal(&self, name: impl Into<String>, class: SgClass) -> SymbolHandle {
        let d = self.d;
        let map: Vec<usize> = (0..d).chain(0..d).chain(d..2 * d).collect();
        SymbolHandle::new(name, d, self.fun.reindex(2 * d, &map), class)
    }
}

/// Real-valued phase function `phi(x, xi)` on `R^d x R^d`.
#[derive(Clone, Debug)]
pub struct PhaseHandle {
    name: String,
    d: usize,
    fun: FnHandle,
}

impl PhaseHandle {
    pub fn new(name: impl Into<String>, d: usize, fun: FnHandle) -> Self {
        assert_eq!(fun.dim_in(), 2 * d);
        PhaseHandle {
            name: name.into(),
            d,
            fun,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn fun(&self) -> &FnHandle {
        &self.fun
    }

    /// Real value at a packed `(x, xi)` point.
    pub fn value(&self, p: &[f64]) -> Result<f64, EvalError> {
        let v = self.fun.value(p)?;
        debug_assert!(v.im.abs() <= 1e-9 * v.re.abs().max(1.0));
        Ok(v.re)
    }

    pub fn jet(&self, p: &[f64], order: usize) -> Result<Jet, EvalError> {
        self.fun.jet(p, order)
    }

    /// `d phi / d x_i`.
    pub fn grad_x_component(&self, i: usize) -> FnHandle {
        assert!(i < self.d);
        self.fun.partial_axis(i)
    }

    /// `d phi / d xi_i`.
    pub fn grad_xi_component(&self, i: usize) -> FnHandle {
        assert!(i < self.d);
        self.fun.partial_axis(self.d + i)
    }

    pub fn grad_x(&self) -> Vec<FnHandle> {
        (0..self.d).map(|i| self.grad_x_component(i)).collect()
    }

    pub fn grad_xi(&self) -> Vec<FnHandle> {
        (0..self.d).map(|i| self.grad_xi_component(i)).collect()
    }

    /// Gradient values at a point: `(phi_x, phi_xi)` stacked.
    pub fn gradient(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let j = self.fun.jet(p, 1)?;
        let mut gx = Vec::with_capacity(self.d);
        let mut gxi = Vec::with_capacity(self.d);
        for i in 0..self.d {
            gx.push(j.partial(&MultiIndex::unit(2 * self.d, i)).re);
        }
        for i in 0..self.d {
            gxi.push(j.partial(&MultiIndex::unit(2 * self.d, self.d + i)).re);
        }
        Ok((gx, gxi))
    }

    /// Signed determinant of the mixed Hessian `d^2 phi / dx_i dxi_j`.
    pub fn mixed_hessian_det(&self) -> FnHandle {
        let d = self.d;
        let entries: Vec<Vec<FnHandle>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut alpha = MultiIndex::zeros(2 * d);
                        alpha.0[i] += 1;
                        alpha.0[d + j] += 1;
                        self.fun.partial(&alpha)
                    })
                    .collect()
            })
            .collect();
        FnHandle::det(&entries)
    }

    /// `|det phi''_{x xi}|`; valid while the determinant stays away from 0.
    pub fn mixed_hessian_abs_det(&self) -> FnHandle {
        self.mixed_hessian_det().abs_real()
    }

    /// The phase `(x, xi) -> phi(xi, x)`.
    pub fn transpose(&self) -> PhaseHandle {
        PhaseHandle {
            name: format!("t({})", self.name),
            d: self.d,
            fun: self.fun.swap_halves(),
        }
    }

    pub fn scale(&self, s: f64) -> PhaseHandle {
        PhaseHandle {
            name: format!("{}*{s}", self.name),
            d: self.d,
            fun: self.fun.scale(Complex64::new(s, 0.0)),
        }
    }
}
