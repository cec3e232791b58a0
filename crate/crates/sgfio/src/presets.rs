//! Named, parameterized presets for symbols, phases, weights, and test
//! inputs. The command line tool and the experiment configs address objects
//! through this registry, so every entry is constructible from a name plus
//! a flat parameter map.

use crate::error::{ConfigViolation, GridError};
use crate::grid::{test_function, Grid, GridFunction, TestFunction};
use crate::handle::{FnHandle, PhaseHandle, SgClass, SymbolHandle, WeightHandle};
use crate::jet::Jet;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SYMBOL_PRESETS: &[&str] = &[
    "one",
    "theta",
    "x1",
    "xi1",
    "xxi",
    "oscillatory",
    "gaussian",
    "gauss_mod",
    "elliptic_base",
    "gaussian_kernel",
    "decay_xi",
];

pub const PHASE_PRESETS: &[&str] = &["identity", "transport", "perturbed"];

pub const WEIGHT_PRESETS: &[&str] = &["one", "theta"];

pub const TEST_FUNCTION_PRESETS: &[&str] =
    &["gaussian", "hermite", "modulated_gaussian", "random"];

/// Scalar or vector parameter value, as found in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// Flat named-parameter map for preset construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Params(pub BTreeMap<String, ParamValue>);

impl Params {
    pub fn empty() -> Self {
        Params::default()
    }

    pub fn scalar(key: &str, v: f64) -> Self {
        let mut m = BTreeMap::new();
        m.insert(key.to_string(), ParamValue::Scalar(v));
        Params(m)
    }

    pub fn with_scalar(mut self, key: &str, v: f64) -> Self {
        self.0.insert(key.to_string(), ParamValue::Scalar(v));
        self
    }

    pub fn with_vector(mut self, key: &str, v: Vec<f64>) -> Self {
        self.0.insert(key.to_string(), ParamValue::Vector(v));
        self
    }

    fn get_scalar(&self, path: &str, key: &str) -> Result<f64, ConfigViolation> {
        match self.0.get(key) {
            Some(ParamValue::Scalar(v)) if v.is_finite() => Ok(*v),
            Some(ParamValue::Scalar(v)) => Err(violation(
                format!("{path}.{key}"),
                format!("parameter must be finite, got {v}"),
            )),
            Some(ParamValue::Vector(_)) => Err(violation(
                format!("{path}.{key}"),
                "expected a scalar, found a vector".to_string(),
            )),
            None => Err(violation(
                format!("{path}.{key}"),
                "missing required parameter".to_string(),
            )),
        }
    }

    fn opt_scalar(&self, path: &str, key: &str, default: f64) -> Result<f64, ConfigViolation> {
        if self.0.contains_key(key) {
            self.get_scalar(path, key)
        } else {
            Ok(default)
        }
    }

    fn get_vector(&self, path: &str, key: &str, len: usize) -> Result<Vec<f64>, ConfigViolation> {
        match self.0.get(key) {
            Some(ParamValue::Vector(v)) if v.len() == len => {
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(violation(
                        format!("{path}.{key}"),
                        format!("vector entries must be finite, got {bad}"),
                    ));
                }
                Ok(v.clone())
            }
            Some(ParamValue::Vector(v)) => Err(violation(
                format!("{path}.{key}"),
                format!("expected {len} entries, got {}", v.len()),
            )),
            Some(ParamValue::Scalar(v)) if len == 1 && v.is_finite() => Ok(vec![*v]),
            Some(ParamValue::Scalar(_)) => Err(violation(
                format!("{path}.{key}"),
                "expected a vector, found a scalar".to_string(),
            )),
            None => Err(violation(
                format!("{path}.{key}"),
                "missing required parameter".to_string(),
            )),
        }
    }

    fn opt_vector(
        &self,
        path: &str,
        key: &str,
        len: usize,
        default: f64,
    ) -> Result<Vec<f64>, ConfigViolation> {
        if self.0.contains_key(key) {
            self.get_vector(path, key, len)
        } else {
            Ok(vec![default; len])
        }
    }

    fn reject_unknown(&self, path: &str, known: &[&str]) -> Result<(), ConfigViolation> {
        for key in self.0.keys() {
            if !known.contains(&key.as_str()) {
                return Err(ConfigViolation {
                    path: format!("{path}.{key}"),
                    message: "unknown parameter".to_string(),
                    suggestion: closest_name(key, known),
                });
            }
        }
        Ok(())
    }
}

fn violation(path: String, message: String) -> ConfigViolation {
    ConfigViolation {
        path,
        message,
        suggestion: None,
    }
}

/// Closest known identifier under normalized edit distance, if any is near.
pub fn closest_name(got: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::normalized_levenshtein(got, k), *k))
        .filter(|(score, _)| *score >= 0.4)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.to_string())
}

fn unknown_name(path: &str, got: &str, known: &[&str]) -> ConfigViolation {
    ConfigViolation {
        path: path.to_string(),
        message: format!("unknown preset `{got}`"),
        suggestion: closest_name(got, known),
    }
}

fn check_dim(path: &str, d: usize) -> Result<(), ConfigViolation> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(violation(
            format!("{path}.d"),
            format!("dimension must be 1, 2, or 3, got {d}"),
        ))
    }
}

// Symbol presets ----------------------------------------------------------

fn sum_of_squares(vars: &[Jet], from: usize, len: usize) -> Jet {
    let mut s = Jet::zero(vars[0].vars(), vars[0].order());
    for v in &vars[from..from + len] {
        s = s.add(&v.mul(v));
    }
    s
}

/// `exp(-|x|^2 - |xi|^2)` on `R^(2d)`.
fn gaussian_fun(d: usize) -> FnHandle {
    FnHandle::smooth_with_value(
        2 * d,
        |p| {
            let q: f64 = p.iter().map(|x| x * x).sum();
            Ok(Complex64::new((-q).exp(), 0.0))
        },
        move |vars| {
            Ok(sum_of_squares(vars, 0, 2 * d)
                .scale(Complex64::new(-1.0, 0.0))
                .exp())
        },
    )
}

/// `exp(-(|x|^2 + |xi|^2)/2) exp(i <x, xi> / 2)`.
fn gauss_mod_fun(d: usize) -> FnHandle {
    FnHandle::smooth_with_value(
        2 * d,
        move |p| {
            let q: f64 = p.iter().map(|x| x * x).sum();
            let dot: f64 = (0..d).map(|i| p[i] * p[d + i]).sum();
            Ok(Complex64::from_polar((-q / 2.0).exp(), dot / 2.0))
        },
        move |vars| {
            let q = sum_of_squares(vars, 0, 2 * d).scale(Complex64::new(-0.5, 0.0));
            let mut dot = Jet::zero(vars[0].vars(), vars[0].order());
            for i in 0..d {
                dot = dot.add(&vars[i].mul(&vars[d + i]));
            }
            Ok(q.add(&dot.scale(Complex64::new(0.0, 0.5))).exp())
        },
    )
}

/// `sqrt(pi) exp(-x^2 - xi^2/4) exp(-i x xi)` in one dimension; its
/// quantization with the trivial phase has the kernel `exp(-x^2 - y^2)`.
fn gaussian_kernel_fun() -> FnHandle {
    let sp = std::f64::consts::PI.sqrt();
    FnHandle::smooth_with_value(
        2,
        move |p| {
            let (x, xi) = (p[0], p[1]);
            Ok(Complex64::from_polar(
                sp * (-x * x - xi * xi / 4.0).exp(),
                -x * xi,
            ))
        },
        move |vars| {
            let x = &vars[0];
            let xi = &vars[1];
            let re = x
                .mul(x)
                .add(&xi.mul(xi).scale(Complex64::new(0.25, 0.0)))
                .scale(Complex64::new(-1.0, 0.0));
            let im = x.mul(xi).scale(Complex64::new(0.0, -1.0));
            Ok(re.add(&im).exp().scale(Complex64::new(sp, 0.0)))
        },
    )
}

/// Builds a symbol preset in dimension `d`. The `path` labels error reports.
pub fn symbol(d: usize, name: &str, params: &Params, path: &str) -> Result<SymbolHandle, ConfigViolation> {
    check_dim(path, d)?;
    let order_zero = SgClass::new(WeightHandle::one(d), 1.0, 1.0);
    match name {
        "one" => {
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new(
                "one",
                d,
                FnHandle::constant(2 * d, Complex64::new(1.0, 0.0)),
                order_zero,
            ))
        }
        "theta" => {
            params.reject_unknown(path, &["m", "mu"])?;
            let m = params.get_scalar(path, "m")?;
            let mu = params.get_scalar(path, "mu")?;
            let w = WeightHandle::theta(d, m, mu);
            Ok(SymbolHandle::new(
                w.name().to_string(),
                d,
                w.fun().clone(),
                SgClass::new(w, 1.0, 1.0),
            ))
        }
        "x1" => {
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new(
                "x1",
                d,
                FnHandle::coordinate(2 * d, 0),
                SgClass::new(WeightHandle::theta(d, 1.0, 0.0), 1.0, 1.0),
            ))
        }
        "xi1" => {
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new(
                "xi1",
                d,
                FnHandle::coordinate(2 * d, d),
                SgClass::new(WeightHandle::theta(d, 0.0, 1.0), 1.0, 1.0),
            ))
        }
        "xxi" => {
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new(
                "xxi",
                d,
                FnHandle::pairing_block(2 * d, 0, d, d),
                SgClass::new(WeightHandle::theta(d, 1.0, 1.0), 1.0, 1.0),
            ))
        }
        "oscillatory" => {
            // exp(i <x, xi>) is bounded but gains no decay from
            // derivatives; the class tag records that honestly.
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new(
                "oscillatory",
                d,
                FnHandle::pairing_block(2 * d, 0, d, d)
                    .scale(Complex64::new(0.0, 1.0))
                    .exp(),
                SgClass::new(WeightHandle::one(d), 0.0, 0.0),
            ))
        }
        "gaussian" => {
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new("gaussian", d, gaussian_fun(d), order_zero))
        }
        "gauss_mod" => {
            params.reject_unknown(path, &[])?;
            Ok(SymbolHandle::new(
                "gauss_mod",
                d,
                gauss_mod_fun(d),
                SgClass::new(WeightHandle::one(d), 0.0, 0.0),
            ))
        }
        "elliptic_base" => {
            // 2 + <x, xi> / (<x> <xi>) takes values in [1, 3].
            params.reject_unknown(path, &[])?;
            let pairing = FnHandle::pairing_block(2 * d, 0, d, d);
            let bx = FnHandle::bracket_block(2 * d, 0, d);
            let bxi = FnHandle::bracket_block(2 * d, d, d);
            let fun = pairing
                .mul(&bx.mul(&bxi).recip())
                .add_scalar(Complex64::new(2.0, 0.0));
            Ok(SymbolHandle::new("elliptic_base", d, fun, order_zero))
        }
        "gaussian_kernel" => {
            params.reject_unknown(path, &[])?;
            if d != 1 {
                return Err(violation(
                    format!("{path}.d"),
                    "gaussian_kernel is defined in dimension 1 only".to_string(),
                ));
            }
            Ok(SymbolHandle::new(
                "gaussian_kernel",
                1,
                gaussian_kernel_fun(),
                SgClass::new(WeightHandle::one(1), 0.0, 0.0),
            ))
        }
        "decay_xi" => {
            params.reject_unknown(path, &[])?;
            let fun = FnHandle::smooth_with_value(
                2 * d,
                move |p| {
                    let q: f64 = p[d..].iter().map(|x| x * x).sum();
                    Ok(Complex64::new((-q).exp(), 0.0))
                },
                move |vars| {
                    Ok(sum_of_squares(vars, d, d)
                        .scale(Complex64::new(-1.0, 0.0))
                        .exp())
                },
            );
            Ok(SymbolHandle::new("decay_xi", d, fun, order_zero))
        }
        other => Err(unknown_name(path, other, SYMBOL_PRESETS)),
    }
}

// Phase presets -----------------------------------------------------------

/// Builds a phase preset in dimension `d`.
pub fn phase(d: usize, name: &str, params: &Params, path: &str) -> Result<PhaseHandle, ConfigViolation> {
    check_dim(path, d)?;
    let pairing = FnHandle::pairing_block(2 * d, 0, d, d);
    match name {
        "identity" => {
            params.reject_unknown(path, &[])?;
            Ok(PhaseHandle::new("identity", d, pairing))
        }
        "transport" => {
            // <x, xi> + t <xi>: free transport for time t.
            params.reject_unknown(path, &["t"])?;
            let t = params.get_scalar(path, "t")?;
            let bxi = FnHandle::bracket_block(2 * d, d, d);
            Ok(PhaseHandle::new(
                format!("transport[{t}]"),
                d,
                pairing.add(&bxi.scale(Complex64::new(t, 0.0))),
            ))
        }
        "perturbed" => {
            // <x, xi> + eps <x> <xi>; admissible for 0 <= eps < 1 and
            // degenerate exactly at eps = 1.
            params.reject_unknown(path, &["eps"])?;
            let eps = params.get_scalar(path, "eps")?;
            if !(0.0..=1.0).contains(&eps) {
                return Err(violation(
                    format!("{path}.eps"),
                    format!("eps must lie in [0, 1], got {eps}"),
                ));
            }
            let bx = FnHandle::bracket_block(2 * d, 0, d);
            let bxi = FnHandle::bracket_block(2 * d, d, d);
            Ok(PhaseHandle::new(
                format!("perturbed[{eps}]"),
                d,
                pairing.add(&bx.mul(&bxi).scale(Complex64::new(eps, 0.0))),
            ))
        }
        other => Err(unknown_name(path, other, PHASE_PRESETS)),
    }
}

// Weight presets ----------------------------------------------------------

/// Builds a weight preset in dimension `d`.
pub fn weight(d: usize, name: &str, params: &Params, path: &str) -> Result<WeightHandle, ConfigViolation> {
    check_dim(path, d)?;
    match name {
        "one" => {
            params.reject_unknown(path, &[])?;
            Ok(WeightHandle::one(d))
        }
        "theta" => {
            params.reject_unknown(path, &["m", "mu"])?;
            let m = params.get_scalar(path, "m")?;
            let mu = params.get_scalar(path, "mu")?;
            Ok(WeightHandle::theta(d, m, mu))
        }
        other => Err(unknown_name(path, other, WEIGHT_PRESETS)),
    }
}

// Test inputs -------------------------------------------------------------

/// Builds a named test input on `grid`, already normalized and margin
/// checked. The seed only matters for the `random` preset.
pub fn test_input(
    grid: &Grid,
    name: &str,
    params: &Params,
    seed: u64,
    path: &str,
) -> Result<GridFunction, ConfigViolation> {
    let d = grid.dim();
    let spec = match name {
        "gaussian" => {
            params.reject_unknown(path, &["width", "center"])?;
            TestFunction::Gaussian {
                width: params.opt_scalar(path, "width", 1.0)?,
                center: params.opt_vector(path, "center", d, 0.0)?,
            }
        }
        "hermite" => {
            params.reject_unknown(path, &["width", "n"])?;
            let n = params.opt_vector(path, "n", d, 0.0)?;
            let mut indices = Vec::with_capacity(d);
            for (axis, v) in n.iter().enumerate() {
                if *v < 0.0 || v.fract() != 0.0 || *v > 12.0 {
                    return Err(violation(
                        format!("{path}.n[{axis}]"),
                        format!("Hermite index must be an integer in 0..=12, got {v}"),
                    ));
                }
                indices.push(*v as usize);
            }
            TestFunction::Hermite {
                width: params.opt_scalar(path, "width", 1.0)?,
                indices,
            }
        }
        "modulated_gaussian" => {
            params.reject_unknown(path, &["width", "center", "freq"])?;
            TestFunction::ModulatedGaussian {
                width: params.opt_scalar(path, "width", 1.0)?,
                center: params.opt_vector(path, "center", d, 0.0)?,
                freq: params.opt_vector(path, "freq", d, 0.0)?,
            }
        }
        "random" => {
            params.reject_unknown(path, &[])?;
            return random_test_input(grid, seed).map_err(|e| {
                violation(path.to_string(), format!("random input construction: {e}"))
            });
        }
        other => return Err(unknown_name(path, other, TEST_FUNCTION_PRESETS)),
    };
    test_function(grid, &spec)
        .map_err(|e| violation(path.to_string(), format!("test input construction: {e}")))
}

/// Seeded random Schwartz-type input: a superposition of three modulated
/// Gaussian packets with parameters drawn from grid-safe ranges.
pub fn random_test_input(grid: &Grid, seed: u64) -> Result<GridFunction, GridError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let l = grid.half_width();
    let freq_cap = (0.4 * grid.nyquist()).min(6.0);
    // A packet of width w centered at |c| reaches the boundary at relative
    // size exp(-(l - |c|)^2 / (2 w^2)); the ranges keep that below the
    // truncation margin of `test_function`.
    let center_cap = 0.1 * l;
    let width_cap = 0.1 * l;
    let width_floor = (0.5f64).min(0.5 * width_cap);
    let mut acc = GridFunction::zeros(grid.clone());
    for _ in 0..3 {
        let width = rng.gen_range(width_floor..width_cap);
        let center: Vec<f64> = (0..d)
            .map(|_| rng.gen_range(-center_cap..center_cap))
            .collect();
        let freq: Vec<f64> = (0..d).map(|_| rng.gen_range(-freq_cap..freq_cap)).collect();
        let coeff = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let packet = test_function(
            grid,
            &TestFunction::ModulatedGaussian {
                width,
                center,
                freq,
            },
        )?;
        acc.add_scaled(&packet, coeff).expect("same grid");
    }
    let n = acc.norm();
    assert!(n > 0.0, "random superposition collapsed to zero");
    acc.scale(Complex64::new(1.0 / n, 0.0));
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn registry_names_resolve() {
        for name in SYMBOL_PRESETS {
            let params = match *name {
                "theta" => Params::empty().with_scalar("m", 1.0).with_scalar("mu", -1.0),
                _ => Params::empty(),
            };
            let d = if *name == "gaussian_kernel" { 1 } else { 2 };
            symbol(d, name, &params, "symbol").unwrap();
        }
        for name in PHASE_PRESETS {
            let params = match *name {
                "transport" => Params::scalar("t", 0.5),
                "perturbed" => Params::scalar("eps", 0.25),
                _ => Params::empty(),
            };
            phase(2, name, &params, "phase").unwrap();
        }
        for name in WEIGHT_PRESETS {
            let params = match *name {
                "theta" => Params::empty().with_scalar("m", 2.0).with_scalar("mu", 0.0),
                _ => Params::empty(),
            };
            weight(1, name, &params, "weight").unwrap();
        }
    }

    #[test]
    fn unknown_names_get_suggestions() {
        let err = symbol(1, "gausian", &Params::empty(), "symbol").unwrap_err();
        assert_eq!(err.suggestion.as_deref(), Some("gaussian"));
        let err = phase(1, "identty", &Params::empty(), "phase").unwrap_err();
        assert_eq!(err.suggestion.as_deref(), Some("identity"));
        let err = symbol(
            1,
            "theta",
            &Params::empty().with_scalar("m", 1.0).with_scalar("nu", 0.0),
            "symbol",
        )
        .unwrap_err();
        assert_eq!(err.suggestion.as_deref(), Some("mu"));
    }

    #[test]
    fn elliptic_base_stays_in_its_band() {
        let a = symbol(2, "elliptic_base", &Params::empty(), "symbol").unwrap();
        for p in [
            [0.0, 0.0, 0.0, 0.0],
            [3.0, -1.0, 2.0, 5.0],
            [-8.0, 0.5, -8.0, 0.5],
            [10.0, 0.0, -10.0, 0.0],
        ] {
            let v = a.value(&p).unwrap();
            assert!(v.im.abs() < 1e-12);
            assert!((1.0..=3.0).contains(&v.re), "value {} out of band", v.re);
        }
    }

    #[test]
    fn perturbed_phase_determinant_band() {
        // det phi''_{x xi} = 1 + eps <x, xi> / (<x> <xi>) stays in
        // [1 - eps, 1 + eps] for d = 1.
        let eps = 0.3;
        let phi = phase(1, "perturbed", &Params::scalar("eps", eps), "phase").unwrap();
        let det = phi.mixed_hessian_det();
        for p in [[0.0, 0.0], [5.0, 5.0], [-4.0, 4.0], [2.0, -7.0]] {
            let v = det.value(&p).unwrap().re;
            assert!(v >= 1.0 - eps - 1e-12 && v <= 1.0 + eps + 1e-12);
        }
        assert!(phase(1, "perturbed", &Params::scalar("eps", 1.5), "phase").is_err());
    }

    #[test]
    fn transport_phase_gradients() {
        // phi = x xi + t <xi>: phi_x = xi, phi_xi = x + t xi / <xi>.
        let t = 2.0;
        let phi = phase(1, "transport", &Params::scalar("t", t), "phase").unwrap();
        let (gx, gxi) = phi.gradient(&[1.5, -0.5]).unwrap();
        assert_relative_eq!(gx[0], -0.5, max_relative = 1e-13);
        let bxi = (1.0 + 0.25f64).sqrt();
        assert_relative_eq!(gxi[0], 1.5 + t * (-0.5) / bxi, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_kernel_value_paths_agree() {
        let a = symbol(1, "gaussian_kernel", &Params::empty(), "symbol").unwrap();
        for p in [[0.3, -1.0], [1.2, 2.0], [0.0, 0.0]] {
            let fast = a.value(&p).unwrap();
            let slow = a.jet(&p, 0).unwrap().value();
            assert!((fast - slow).norm() < 1e-13);
        }
    }

    #[test]
    fn random_input_is_deterministic_and_normalized() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        let f1 = random_test_input(&grid, 7).unwrap();
        let f2 = random_test_input(&grid, 7).unwrap();
        let g = random_test_input(&grid, 8).unwrap();
        assert_relative_eq!(f1.norm(), 1.0, epsilon = 1e-12);
        for (a, b) in f1.values().iter().zip(f2.values()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert!(f1.relative_distance(&g).unwrap() > 1e-3);
    }

    #[test]
    fn test_input_presets_resolve() {
        let grid = Grid::new(1, 128, 10.0).unwrap();
        for name in TEST_FUNCTION_PRESETS {
            let params = match *name {
                "hermite" => Params::empty().with_vector("n", vec![2.0]),
                "modulated_gaussian" => Params::empty().with_vector("freq", vec![3.0]),
                _ => Params::empty(),
            };
            let f = test_input(&grid, name, &params, 11, "input").unwrap();
            assert_relative_eq!(f.norm(), 1.0, epsilon = 1e-10);
        }
    }
}
