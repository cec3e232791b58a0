//! Truncated multivariate Taylor expansions ("jets") over `Complex64`.
//!
//! A [`Jet`] stores the coefficients `c_alpha = (1/alpha!) d^alpha f(p)` of a
//! smooth function around a real base point `p`, for every multi-index with
//! `|alpha| <= order`. All derivative extraction in the crate goes through
//! exact jet arithmetic; finite differences appear only in tests as an
//! independent cross-check.
//!
//! Coefficient storage is dense, indexed by the graded-lexicographic
//! enumeration of multi-indices (degree ascending, ties broken by
//! lexicographically descending exponent tuples). The enumeration for a given
//! `(vars, order)` pair is computed once and shared through an
//! [`IndexTable`].

use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Exponent vector of a mixed partial derivative.
///
/// `MultiIndex(vec![a, b])` stands for `d_x^a d_y^b` on a two-variable
/// function; the entry order follows the order in which the function's
/// variables are declared.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn zeros(vars: usize) -> Self {
        MultiIndex(vec![0; vars])
    }

    pub fn unit(vars: usize, i: usize) -> Self {
        let mut v = vec![0; vars];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn vars(&self) -> usize {
        self.0.len()
    }

    /// Total order `|alpha|`.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// `alpha!` as a float; exact for the orders used here (well below 2^53).
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e as u64).product::<u64>() as f64)
            .product()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.vars(), other.vars());
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    /// Concatenates exponent blocks, e.g. to form an index over `(x, xi)`
    /// from separate `x` and `xi` blocks.
    pub fn concat(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        MultiIndex(v)
    }

    /// All multi-indices over `vars` variables with `|alpha| <= max_degree`,
    /// each exactly once, in graded-lexicographic order.
    pub fn enumerate(vars: usize, max_degree: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for deg in 0..=max_degree {
            let mut current = vec![0u8; vars];
            push_degree(&mut out, &mut current, 0, deg);
        }
        out
    }
}

fn push_degree(out: &mut Vec<MultiIndex>, current: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == current.len() {
        current[pos] = remaining as u8;
        out.push(MultiIndex(current.clone()));
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v as u8;
        push_degree(out, current, pos + 1, remaining - v);
    }
}

/// Shared enumeration and product layout for all jets of a fixed
/// `(vars, order)` signature.
pub struct IndexTable {
    vars: usize,
    order: usize,
    indices: Vec<MultiIndex>,
    rank: HashMap<MultiIndex, usize>,
    /// Flattened `(left, right, product)` coefficient triples, built lazily
    /// for small tables; `None` means products look ranks up per pair.
    products: OnceLock<Option<Vec<(u32, u32, u32)>>>,
}

impl IndexTable {
    fn new(vars: usize, order: usize) -> Self {
        let indices = MultiIndex::enumerate(vars, order);
        let rank = indices
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        IndexTable {
            vars,
            order,
            indices,
            rank,
            products: OnceLock::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn rank_of(&self, m: &MultiIndex) -> Option<usize> {
        self.rank.get(m).copied()
    }

    fn product_triples(&self) -> Option<&Vec<(u32, u32, u32)>> {
        self.products
            .get_or_init(|| {
                if self.len() > 1200 {
                    return None;
                }
                let mut triples = Vec::new();
                for (i, a) in self.indices.iter().enumerate() {
                    let da = a.degree();
                    for (j, b) in self.indices.iter().enumerate() {
                        if da + b.degree() > self.order {
                            continue;
                        }
                        let k = self.rank[&a.add(b)];
                        triples.push((i as u32, j as u32, k as u32));
                    }
                }
                Some(triples)
            })
            .as_ref()
    }
}

fn table_cache() -> &'static Mutex<HashMap<(usize, usize), Arc<IndexTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<IndexTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Returns the shared table for `(vars, order)`, building it on first use.
pub fn index_table(vars: usize, order: usize) -> Arc<IndexTable> {
    let mut cache = table_cache().lock().expect("index table cache poisoned");
    cache
        .entry((vars, order))
        .or_insert_with(|| Arc::new(IndexTable::new(vars, order)))
        .clone()
}

/// Truncated Taylor expansion of a function of `vars` real variables.
#[derive(Clone)]
pub struct Jet {
    table: Arc<IndexTable>,
    coeffs: Vec<Complex64>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet")
            .field("vars", &self.vars())
            .field("order", &self.order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn zero(vars: usize, order: usize) -> Self {
        let table = index_table(vars, order);
        let coeffs = vec![Complex64::default(); table.len()];
        Jet { table, coeffs }
    }

    pub fn constant(vars: usize, order: usize, value: Complex64) -> Self {
        let mut jet = Jet::zero(vars, order);
        jet.coeffs[0] = value;
        jet
    }

    /// The coordinate function `x_i`, expanded at `value`.
    pub fn variable(vars: usize, order: usize, i: usize, value: f64) -> Self {
        let mut jet = Jet::constant(vars, order, Complex64::new(value, 0.0));
        if order >= 1 {
            // Positions 1..=vars hold the degree-one block; graded-lex lists
            // e_0 first, then e_1, ...
            let pos = jet
                .table
                .rank_of(&MultiIndex::unit(vars, i))
                .expect("unit index in table");
            jet.coeffs[pos] = Complex64::new(1.0, 0.0);
        }
        jet
    }

    /// Coordinate jets for every variable at the point `p`.
    pub fn variables(order: usize, p: &[f64]) -> Vec<Jet> {
        (0..p.len())
            .map(|i| Jet::variable(p.len(), order, i, p[i]))
            .collect()
    }

    pub fn vars(&self) -> usize {
        self.table.vars()
    }

    pub fn order(&self) -> usize {
        self.table.order()
    }

    pub fn table(&self) -> &Arc<IndexTable> {
        &self.table
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Value of the underlying function at the base point.
    pub fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn coeff(&self, m: &MultiIndex) -> Complex64 {
        match self.table.rank_of(m) {
            Some(i) => self.coeffs[i],
            None => panic!(
                "multi-index {:?} outside jet signature ({} vars, order {})",
                m.0,
                self.vars(),
                self.order()
            ),
        }
    }

    /// `d^alpha f` at the base point, i.e. `alpha! * c_alpha`.
    pub fn partial(&self, m: &MultiIndex) -> Complex64 {
        self.coeff(m) * m.factorial()
    }

    /// Re-expands into a table of different order, truncating or
    /// zero-padding coefficients as needed.
    pub fn with_order(&self, order: usize) -> Jet {
        if order == self.order() {
            return self.clone();
        }
        let mut out = Jet::zero(self.vars(), order);
        for (i, m) in self.table.indices().iter().enumerate() {
            if m.degree() <= order {
                let k = out.table.rank_of(m).expect("index present after re-rank");
                out.coeffs[k] = self.coeffs[i];
            }
        }
        out
    }

    fn assert_same_signature(&self, other: &Jet) {
        assert_eq!(self.vars(), other.vars(), "jet variable count mismatch");
        assert_eq!(self.order(), other.order(), "jet order mismatch");
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.assert_same_signature(other);
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
        out
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.assert_same_signature(other);
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c -= o;
        }
        out
    }

    pub fn neg(&self) -> Jet {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c *= s;
        }
        out
    }

    pub fn add_scalar(&self, s: Complex64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Truncated product.
    pub fn mul(&self, other: &Jet) -> Jet {
        self.assert_same_signature(other);
        let mut out = Jet::zero(self.vars(), self.order());
        if let Some(triples) = self.table.product_triples() {
            for &(i, j, k) in triples {
                let a = self.coeffs[i as usize];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let b = other.coeffs[j as usize];
                if b.re == 0.0 && b.im == 0.0 {
                    continue;
                }
                out.coeffs[k as usize] += a * b;
            }
            return out;
        }
        let order = self.order();
        for (i, a) in self.table.indices().iter().enumerate() {
            let ca = self.coeffs[i];
            if ca.re == 0.0 && ca.im == 0.0 {
                continue;
            }
            let da = a.degree();
            for (j, b) in self.table.indices().iter().enumerate() {
                if da + b.degree() > order {
                    continue;
                }
                let cb = other.coeffs[j];
                if cb.re == 0.0 && cb.im == 0.0 {
                    continue;
                }
                let k = self.table.rank_of(&a.add(b)).expect("product index");
                out.coeffs[k] += ca * cb;
            }
        }
        out
    }

    /// Derivative jet `d f / d x_i`, one order lower.
    pub fn derive(&self, i: usize) -> Jet {
        assert!(self.order() >= 1, "cannot derive an order-zero jet");
        assert!(i < self.vars(), "derivative variable out of range");
        let mut out = Jet::zero(self.vars(), self.order() - 1);
        for (k, m) in out.table.indices().iter().enumerate() {
            let mut up = m.clone();
            up.0[i] += 1;
            let src = self.table.rank_of(&up).expect("shifted index present");
            out.coeffs[k] = self.coeffs[src] * (up.0[i] as f64);
        }
        out
    }

    /// Iterated derivative `d^alpha f`, `|alpha|` orders lower.
    pub fn derive_multi(&self, alpha: &MultiIndex) -> Jet {
        assert_eq!(alpha.vars(), self.vars());
        let mut jet = self.clone();
        for (i, &e) in alpha.0.iter().enumerate() {
            for _ in 0..e {
                jet = jet.derive(i);
            }
        }
        jet
    }

    /// Substitutes `inners` (jets sharing one signature) into `self`, whose
    /// base point must be the tuple of the inner values. The result is the
    /// jet of the composite at the inners' base point.
    pub fn compose(&self, inners: &[Jet]) -> Jet {
        assert_eq!(
            inners.len(),
            self.vars(),
            "composition needs one inner jet per outer variable"
        );
        let vars = inners[0].vars();
        let order = inners[0].order();
        for inner in inners {
            assert_eq!(inner.vars(), vars, "inner jets share one signature");
            assert_eq!(inner.order(), order, "inner jets share one signature");
        }
        // Nilpotent parts and their powers up to the truncation order.
        let one = Jet::constant(vars, order, Complex64::new(1.0, 0.0));
        let powers: Vec<Vec<Jet>> = inners
            .iter()
            .map(|inner| {
                let mut nil = inner.clone();
                nil.coeffs[0] = Complex64::default();
                let mut pows = vec![one.clone()];
                for k in 1..=order {
                    let next = pows[k - 1].mul(&nil);
                    pows.push(next);
                }
                pows
            })
            .collect();
        let mut out = Jet::zero(vars, order);
        for (i, beta) in self.table.indices().iter().enumerate() {
            let c = self.coeffs[i];
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            if beta.degree() > order {
                continue;
            }
            let mut term = Jet::constant(vars, order, c);
            for (v, &e) in beta.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&powers[v][e as usize]);
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Applies a univariate analytic map with derivatives `derivs[k] =
    /// f^(k)(value)` at the jet's value, via Horner evaluation in the
    /// nilpotent part.
    pub fn apply_univariate(&self, derivs: &[Complex64]) -> Jet {
        let order = self.order();
        assert!(derivs.len() > order, "need derivatives through the order");
        let mut nil = self.clone();
        nil.coeffs[0] = Complex64::default();
        let mut fact = 1.0;
        let coeffs: Vec<Complex64> = derivs[..=order]
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                if k > 0 {
                    fact *= k as f64;
                }
                d / fact
            })
            .collect();
        let mut acc = Jet::constant(self.vars(), order, coeffs[order]);
        for k in (0..order).rev() {
            acc = acc.mul(&nil).add_scalar(coeffs[k]);
        }
        acc
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let derivs = vec![e; self.order() + 1];
        self.apply_univariate(&derivs)
    }

    /// Reciprocal; the value must stay away from zero.
    pub fn recip(&self) -> Jet {
        let v = self.value();
        assert!(v.norm() > 0.0, "reciprocal of a zero-valued jet");
        let mut derivs = Vec::with_capacity(self.order() + 1);
        let mut cur = v.finv();
        let inv = cur;
        derivs.push(cur);
        for k in 1..=self.order() {
            cur = cur * inv * (-(k as f64));
            derivs.push(cur);
        }
        self.apply_univariate(&derivs)
    }

    /// Real power `u^m` for jets with positive real value (weights,
    /// Japanese-bracket factors). The imaginary part of the value must
    /// vanish.
    pub fn powf(&self, m: f64) -> Jet {
        let v = self.value();
        assert!(
            v.im == 0.0 && v.re > 0.0,
            "real power needs a positive real base, got {v}"
        );
        let x = v.re;
        let mut derivs = Vec::with_capacity(self.order() + 1);
        let mut factor = 1.0;
        for k in 0..=self.order() {
            derivs.push(Complex64::new(factor * x.powf(m - k as f64), 0.0));
            factor *= m - k as f64;
        }
        self.apply_univariate(&derivs)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    /// Coefficient-wise conjugate; equals the jet of the conjugated function
    /// because all variables are real.
    pub fn conj(&self) -> Jet {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c = c.conj();
        }
        out
    }

    /// Checks that every coefficient has vanishing imaginary part (within
    /// `tol`), as expected for jets of real-valued functions.
    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.im.abs() <= tol)
    }

    /// Re-homes the jet into a larger variable space: source variable `i`
    /// becomes target variable `var_map[i]`. Pure coefficient relocation.
    pub fn embed(&self, target_vars: usize, var_map: &[usize]) -> Jet {
        assert_eq!(var_map.len(), self.vars());
        assert!(var_map.iter().all(|&t| t < target_vars));
        let mut out = Jet::zero(target_vars, self.order());
        for (i, m) in self.table.indices().iter().enumerate() {
            let c = self.coeffs[i];
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let mut tm = vec![0u8; target_vars];
            for (src, &e) in m.0.iter().enumerate() {
                tm[var_map[src]] += e;
            }
            let k = out
                .table
                .rank_of(&MultiIndex(tm))
                .expect("embedded index present");
            out.coeffs[k] += c;
        }
        out
    }

    /// Identifies variables: source variable `i` maps onto target variable
    /// `merge_map[i]`, summing coefficients of monomials that collide. This
    /// is exact substitution of equal variables (e.g. the diagonal `y = x`).
    pub fn merge_variables(&self, target_vars: usize, merge_map: &[usize]) -> Jet {
        self.embed(target_vars, merge_map)
    }

    /// Restricts to the variables in `keep` (in that order) by freezing all
    /// others at the base point: only monomials supported on `keep` survive.
    pub fn project(&self, keep: &[usize]) -> Jet {
        assert!(keep.iter().all(|&v| v < self.vars()));
        let mut slot = vec![usize::MAX; self.vars()];
        for (j, &v) in keep.iter().enumerate() {
            assert_eq!(slot[v], usize::MAX, "duplicate kept variable");
            slot[v] = j;
        }
        let mut out = Jet::zero(keep.len(), self.order());
        'coeff: for (i, m) in self.table.indices().iter().enumerate() {
            let c = self.coeffs[i];
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let mut tm = vec![0u8; keep.len()];
            for (src, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    if slot[src] == usize::MAX {
                        continue 'coeff;
                    }
                    tm[slot[src]] = e;
                }
            }
            let k = out
                .table
                .rank_of(&MultiIndex(tm))
                .expect("projected index present");
            out.coeffs[k] = c;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn enumeration_is_graded_lex_and_complete() {
        let idx = MultiIndex::enumerate(2, 2);
        let raw: Vec<Vec<u8>> = idx.iter().map(|m| m.0.clone()).collect();
        assert_eq!(
            raw,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        // Three variables, order 4: count must be C(4+3, 3).
        assert_eq!(MultiIndex::enumerate(3, 4).len(), 35);
        let all = MultiIndex::enumerate(3, 4);
        let unique: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), all.len());
    }

    #[test]
    fn product_matches_polynomial_expansion() {
        // (1 + x)^2 * (2 + y) around (0, 0).
        let x = Jet::variable(2, 3, 0, 0.0);
        let y = Jet::variable(2, 3, 1, 0.0);
        let p = x.add_scalar(c(1.0));
        let q = y.add_scalar(c(2.0));
        let prod = p.mul(&p).mul(&q);
        // = 2 + y + 4x + 2xy + 2x^2 + x^2 y
        assert_eq!(prod.coeff(&MultiIndex(vec![0, 0])), c(2.0));
        assert_eq!(prod.coeff(&MultiIndex(vec![0, 1])), c(1.0));
        assert_eq!(prod.coeff(&MultiIndex(vec![1, 0])), c(4.0));
        assert_eq!(prod.coeff(&MultiIndex(vec![1, 1])), c(2.0));
        assert_eq!(prod.coeff(&MultiIndex(vec![2, 0])), c(2.0));
        assert_eq!(prod.coeff(&MultiIndex(vec![2, 1])), c(1.0));
        assert_eq!(prod.coeff(&MultiIndex(vec![3, 0])), c(0.0));
    }

    #[test]
    fn exp_jet_matches_closed_form() {
        // f(x) = exp(2x) at x = 0.5: d^k f = 2^k exp(1).
        let x = Jet::variable(1, 5, 0, 0.5);
        let f = x.scale(c(2.0)).exp();
        let e1 = 1.0f64.exp();
        for k in 0..=5u8 {
            let got = f.partial(&MultiIndex(vec![k]));
            assert_relative_eq!(got.re, 2.0f64.powi(k as i32) * e1, max_relative = 1e-13);
            assert!(got.im.abs() < 1e-14);
        }
    }

    #[test]
    fn powf_matches_japanese_bracket_derivatives() {
        // <x> = (1 + x^2)^(1/2); d<x>/dx = x/<x>; at x = 1 this is 1/sqrt(2).
        let x = Jet::variable(1, 4, 0, 1.0);
        let bracket = x.mul(&x).add_scalar(c(1.0)).sqrt();
        assert_relative_eq!(bracket.value().re, 2.0f64.sqrt(), max_relative = 1e-15);
        let d1 = bracket.partial(&MultiIndex(vec![1]));
        assert_relative_eq!(d1.re, 1.0 / 2.0f64.sqrt(), max_relative = 1e-14);
        // d2 <x> = 1/<x>^3.
        let d2 = bracket.partial(&MultiIndex(vec![2]));
        assert_relative_eq!(d2.re, 2.0f64.sqrt().powi(-3), max_relative = 1e-13);
    }

    #[test]
    fn recip_times_original_is_one() {
        let x = Jet::variable(2, 4, 0, 0.7);
        let y = Jet::variable(2, 4, 1, -0.3);
        let f = x.mul(&x).add(&y.exp()).add_scalar(c(1.2));
        let prod = f.recip().mul(&f);
        for (k, m) in prod.table().indices().iter().enumerate() {
            let expect = if m.degree() == 0 { 1.0 } else { 0.0 };
            assert_relative_eq!(prod.coeffs()[k].re, expect, epsilon = 1e-13);
            assert!(prod.coeffs()[k].im.abs() < 1e-13);
        }
    }

    #[test]
    fn compose_matches_direct_expansion() {
        // h(x, y) = exp(x * y) at (0.4, -0.2), built two ways: direct jet
        // arithmetic, and composition of the outer exp with the inner
        // product's jet.
        let p = [0.4, -0.2];
        let vars = Jet::variables(4, &p);
        let inner = vars[0].mul(&vars[1]);
        let direct = inner.exp();

        let u = Jet::variable(1, 4, 0, inner.value().re);
        let outer = u.exp();
        // Outer is univariate; composition plugs the inner jet into it.
        let composed = outer.compose(std::slice::from_ref(&inner));
        for (a, b) in direct.coeffs().iter().zip(composed.coeffs()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-13);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn derive_commutes_with_arithmetic() {
        let x = Jet::variable(2, 5, 0, 0.3);
        let y = Jet::variable(2, 5, 1, 0.9);
        let f = x.mul(&y).exp().mul(&y.add_scalar(c(2.0)));
        let g = f.derive(0);
        // d/dx [e^{xy} (y+2)] = y e^{xy} (y+2)
        let expect = x.mul(&y).exp().mul(&y.add_scalar(c(2.0))).mul(&y);
        for (m_idx, m) in g.table().indices().iter().enumerate() {
            let want = expect.coeff(m);
            assert_relative_eq!(g.coeffs()[m_idx].re, want.re, epsilon = 1e-12);
        }
    }

    #[test]
    fn embed_and_merge_relocate_coefficients() {
        // f(x) = x^2 embedded as a function of (x, y), then restricted to
        // the diagonal x = y of g(x, y) = x * y.
        let x = Jet::variable(1, 2, 0, 2.0);
        let f = x.mul(&x);
        let f2 = f.embed(2, &[0]);
        assert_eq!(f2.coeff(&MultiIndex(vec![2, 0])), c(1.0));
        assert_eq!(f2.coeff(&MultiIndex(vec![0, 2])), c(0.0));

        let xs = Jet::variables(2, &[2.0, 2.0]);
        let g = xs[0].mul(&xs[1]);
        let diag = g.merge_variables(1, &[0, 0]);
        // x * y restricted to y = x is x^2: value 4, slope 4, curvature 2.
        assert_eq!(diag.value(), c(4.0));
        assert_eq!(diag.partial(&MultiIndex(vec![1])), c(4.0));
        assert_eq!(diag.partial(&MultiIndex(vec![2])), c(2.0));
    }

    #[test]
    fn central_differences_cross_check() {
        // f(x, y) = <x>^1.5 * exp(-y^2/2) checked against iterated central
        // differences for every |alpha| <= 3.
        let f = |x: f64, y: f64| (1.0 + x * x).powf(0.75) * (-y * y / 2.0).exp();
        let p = [1.3, -0.6];
        let vars = Jet::variables(3, &p);
        let bracket = vars[0].mul(&vars[0]).add_scalar(c(1.0)).powf(0.75);
        let gauss = vars[1].mul(&vars[1]).scale(c(-0.5)).exp();
        let jet = bracket.mul(&gauss);

        let fd = |ax: u8, ay: u8| {
            // Iterated central differences, one application per derivative
            // order in each variable. The step balances truncation against
            // cancellation, so it grows with the total order.
            let h = match ax + ay {
                0 | 1 => 1e-5,
                2 => 1e-4,
                _ => 1e-3,
            };
            let mut values: Vec<((f64, f64), f64)> = vec![((p[0], p[1]), 1.0)];
            for _ in 0..ax {
                values = values
                    .into_iter()
                    .flat_map(|((x, y), w)| {
                        vec![((x + h, y), w / (2.0 * h)), ((x - h, y), -w / (2.0 * h))]
                    })
                    .collect();
            }
            for _ in 0..ay {
                values = values
                    .into_iter()
                    .flat_map(|((x, y), w)| {
                        vec![((x, y + h), w / (2.0 * h)), ((x, y - h), -w / (2.0 * h))]
                    })
                    .collect();
            }
            values.into_iter().map(|((x, y), w)| w * f(x, y)).sum::<f64>()
        };

        for m in MultiIndex::enumerate(2, 3) {
            let exact = jet.partial(&m).re;
            let approx = fd(m.0[0], m.0[1]);
            assert_relative_eq!(exact, approx, max_relative = 1e-4, epsilon = 1e-7);
        }
    }
}
