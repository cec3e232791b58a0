//! Uniform tensor grids on centered boxes and the unitary discrete Fourier
//! transform connecting a grid to its frequency dual.
//!
//! A grid covers the half-open box `[-L, L)^d` with `N` points per axis
//! (spacing `2L/N`). Its dual carries the frequencies `pi k / L` for
//! `k = -N/2 .. N/2 - 1`, which again form a centered uniform grid with
//! half-width equal to the Nyquist frequency `pi N / (2L)`; taking the dual
//! twice returns the original grid exactly. The transform pair uses the
//! unitary normalization `(2 pi)^(-d/2) integral f(x) exp(-i<x, xi>) dx`,
//! approximated by the rectangle rule, which the FFT evaluates exactly on
//! the grid.

use crate::error::GridError;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::io::{Read, Write};
use std::sync::Arc;

/// Uniform centered grid on `[-half_width, half_width)^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::BadDimension(dim));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return Err(GridError::BadPointCount(points_per_axis));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GridError::BadHalfWidth(half_width));
        }
        Ok(Grid {
            dim,
            points_per_axis,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// Largest resolvable frequency, `pi N / (2 L)`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.points_per_axis as f64 / (2.0 * self.half_width)
    }

    /// Frequency-side grid; `dual(dual(g)) == g` exactly.
    pub fn dual(&self) -> Grid {
        Grid {
            dim: self.dim,
            points_per_axis: self.points_per_axis,
            half_width: self.nyquist(),
        }
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index `j` along one axis: `-L + j * spacing`.
    pub fn axis_coordinate(&self, j: usize) -> f64 {
        -self.half_width + self.spacing() * j as f64
    }

    /// Writes the point for a flat row-major index into `out[..dim]`.
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let n = self.points_per_axis;
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = self.axis_coordinate(rest % n);
            rest /= n;
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut buf = vec![0.0; self.dim];
        (0..self.len())
            .map(|i| {
                self.point(i, &mut buf);
                buf.clone()
            })
            .collect()
    }

    /// Flat indices whose per-axis index touches the box boundary (first or
    /// last point on any axis). Used by quadrature tail guards.
    pub fn is_boundary_index(&self, flat: usize) -> bool {
        let n = self.points_per_axis;
        let mut rest = flat;
        for _ in 0..self.dim {
            let j = rest % n;
            if j == 0 || j == n - 1 {
                return true;
            }
            rest /= n;
        }
        false
    }
}

/// Complex samples over a [`Grid`], stored row-major.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        let gf = GridFunction { grid, values };
        gf.check_finite()?;
        Ok(gf)
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![Complex64::default(); n],
        }
    }

    /// Samples a pointwise closure over the grid.
    pub fn sample(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(grid.len());
        let mut p = vec![0.0; grid.dim()];
        for i in 0..grid.len() {
            grid.point(i, &mut p);
            values.push(f(&p));
        }
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        for (i, v) in self.values.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(GridError::NonFinite { index: i });
            }
        }
        Ok(())
    }

    /// Rectangle-rule `L^2(R^d)` pairing `sum f conj(g) spacing^d`.
    pub fn inner_product(&self, other: &GridFunction) -> Result<Complex64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch(
                "inner product needs matching grids".into(),
            ));
        }
        let w = self.grid.spacing().powi(self.grid.dim() as i32);
        let mut acc = Complex64::default();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b.conj();
        }
        Ok(acc * w)
    }

    pub fn norm(&self) -> f64 {
        let w = self.grid.spacing().powi(self.grid.dim() as i32);
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (s * w).sqrt()
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in self.values.iter_mut() {
            *v *= s;
        }
    }

    pub fn add_scaled(&mut self, other: &GridFunction, s: Complex64) -> Result<(), GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch("add needs matching grids".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    /// Relative `L^2` distance `|f - g| / max(|f|, |g|)`; zero when both are
    /// zero.
    pub fn relative_distance(&self, other: &GridFunction) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch(
                "distance needs matching grids".into(),
            ));
        }
        let mut diff = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            diff += (a - b).norm_sqr();
        }
        let w = self.grid.spacing().powi(self.grid.dim() as i32);
        let denom = self.norm().max(other.norm());
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok((diff * w).sqrt() / denom)
    }
}

/// Direction of the unitary transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    Forward,
    Inverse,
}

/// Unitary Fourier transform of a grid function, returned on the dual grid.
///
/// Forward: `F f(xi_k) = (2 pi)^(-d/2) spacing^d sum_j f(x_j) exp(-i x_j xi_k)`.
/// Inverse is the adjoint; `fourier(fourier(f, Fwd), Inv)` returns `f` up to
/// rounding.
pub fn fourier(f: &GridFunction, direction: TransformDirection) -> Result<GridFunction, GridError> {
    f.check_finite()?;
    let grid = f.grid().clone();
    let n = grid.points_per_axis();
    let d = grid.dim();
    let half = n / 2;

    // Move samples to FFT layout: the sign factor (-1)^k realizes the
    // centered coordinates, and the index rotation maps the monotone
    // frequency order onto the FFT bin order (see the transform law in the
    // module docs).
    let mut data = f.values().to_vec();

    let mut planner = FftPlanner::<f64>::new();
    let fft = match direction {
        TransformDirection::Forward => planner.plan_fft_forward(n),
        TransformDirection::Inverse => planner.plan_fft_inverse(n),
    };

    match direction {
        TransformDirection::Forward => {
            apply_fft_all_axes(&mut data, n, d, fft);
            let mut out = vec![Complex64::default(); data.len()];
            reorder_after_forward(&data, &mut out, n, d, half);
            let scale = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0)
                * grid.spacing().powi(d as i32);
            for v in out.iter_mut() {
                *v *= scale;
            }
            GridFunction::new(grid.dual(), out)
        }
        TransformDirection::Inverse => {
            let mut staged = vec![Complex64::default(); data.len()];
            reorder_before_inverse(&data, &mut staged, n, d, half);
            apply_fft_all_axes(&mut staged, n, d, fft);
            let scale = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0)
                * grid.spacing().powi(d as i32);
            for v in staged.iter_mut() {
                *v *= scale;
            }
            GridFunction::new(grid.dual(), staged)
        }
    }
}

fn apply_fft_all_axes(data: &mut [Complex64], n: usize, d: usize, fft: Arc<dyn rustfft::Fft<f64>>) {
    let mut scratch = vec![Complex64::default(); n];
    let total = data.len();
    for axis in 0..d {
        // Row-major: the last axis is contiguous with stride 1; axis `a`
        // has stride n^(d-1-a).
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for base in (0..total).step_by(block) {
            for offset in 0..stride {
                for j in 0..n {
                    scratch[j] = data[base + offset + j * stride];
                }
                fft.process(&mut scratch);
                for j in 0..n {
                    data[base + offset + j * stride] = scratch[j];
                }
            }
        }
    }
}

/// After a forward FFT of samples indexed by spatial position, bin `m` holds
/// `sum_j f_j exp(-2 pi i j m / N)`. The continuum value at frequency index
/// `k = s - N/2` (storage slot `s`) is `(-1)^k` times bin `(k mod N)`.
fn reorder_after_forward(src: &[Complex64], dst: &mut [Complex64], n: usize, d: usize, half: usize) {
    let mut src_idx = vec![0usize; d];
    for (flat, v) in dst.iter_mut().enumerate() {
        let mut rest = flat;
        let mut sign = 1.0;
        for axis in (0..d).rev() {
            let s = rest % n;
            rest /= n;
            let k = s as isize - half as isize;
            if k.rem_euclid(2) == 1 {
                sign = -sign;
            }
            src_idx[axis] = k.rem_euclid(n as isize) as usize;
        }
        let mut sflat = 0usize;
        for axis in 0..d {
            sflat = sflat * n + src_idx[axis];
        }
        *v = src[sflat] * sign;
    }
}

/// Inverse staging: storage slot `s` (frequency `k = s - N/2`) contributes
/// `(-1)^k f_s` to FFT bin `(k mod N)`; the unnormalized inverse FFT then
/// produces the spatial samples.
fn reorder_before_inverse(src: &[Complex64], dst: &mut [Complex64], n: usize, d: usize, half: usize) {
    let mut dst_idx = vec![0usize; d];
    for (flat, v) in src.iter().enumerate() {
        let mut rest = flat;
        let mut sign = 1.0;
        for axis in (0..d).rev() {
            let s = rest % n;
            rest /= n;
            let k = s as isize - half as isize;
            if k.rem_euclid(2) == 1 {
                sign = -sign;
            }
            dst_idx[axis] = k.rem_euclid(n as isize) as usize;
        }
        let mut dflat = 0usize;
        for axis in 0..d {
            dflat = dflat * n + dst_idx[axis];
        }
        dst[dflat] = v * sign;
    }
}

/// Named smooth test inputs with decay and aliasing margins enforced at
/// construction.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// `exp(-|x - center|^2 / (2 width^2))`, then normalized.
    Gaussian { width: f64, center: Vec<f64> },
    /// Product of univariate Hermite functions with per-axis indices.
    Hermite { width: f64, indices: Vec<usize> },
    /// Gaussian envelope carrying an `exp(i <x, freq>)` modulation.
    ModulatedGaussian {
        width: f64,
        center: Vec<f64>,
        freq: Vec<f64>,
    },
}

/// Fraction of the Nyquist frequency a modulation may use.
pub const MODULATION_NYQUIST_FRACTION: f64 = 0.8;
/// Maximum allowed boundary magnitude relative to the peak sample.
pub const BOUNDARY_DECAY_LIMIT: f64 = 1e-14;
/// Post-normalization tolerance on the unit norm.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Physicists' Hermite polynomial `H_n` by recurrence.
fn hermite_poly(n: usize, x: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = next;
    }
    h1
}

impl TestFunction {
    fn profile(&self, p: &[f64]) -> Complex64 {
        match self {
            TestFunction::Gaussian { width, center } => {
                let q: f64 = p
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                Complex64::new((-q / (2.0 * width * width)).exp(), 0.0)
            }
            TestFunction::Hermite { width, indices } => {
                let mut v = 1.0;
                for (x, &n) in p.iter().zip(indices) {
                    let t = x / width;
                    v *= hermite_poly(n, t) * (-t * t / 2.0).exp();
                }
                Complex64::new(v, 0.0)
            }
            TestFunction::ModulatedGaussian {
                width,
                center,
                freq,
            } => {
                let q: f64 = p
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                let phase: f64 = p.iter().zip(freq).map(|(x, f)| x * f).sum();
                Complex64::from_polar((-q / (2.0 * width * width)).exp(), phase)
            }
        }
    }

    fn check_dims(&self, dim: usize) -> Result<(), GridError> {
        let ok = match self {
            TestFunction::Gaussian { center, .. } => center.len() == dim,
            TestFunction::Hermite { indices, .. } => indices.len() == dim,
            TestFunction::ModulatedGaussian { center, freq, .. } => {
                center.len() == dim && freq.len() == dim
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GridError::GridMismatch(
                "test function parameter vectors must match the grid dimension".into(),
            ))
        }
    }
}

/// Samples a [`TestFunction`], enforces its margins, and normalizes to unit
/// `L^2` norm.
pub fn test_function(grid: &Grid, spec: &TestFunction) -> Result<GridFunction, GridError> {
    spec.check_dims(grid.dim())?;
    if let TestFunction::ModulatedGaussian { freq, .. } = spec {
        let limit = MODULATION_NYQUIST_FRACTION * grid.nyquist();
        for (axis, &f) in freq.iter().enumerate() {
            if f.abs() >= limit {
                return Err(GridError::MarginViolated {
                    margin: "aliasing",
                    detail: format!(
                        "modulation frequency on axis {axis} must stay below \
                         {MODULATION_NYQUIST_FRACTION} of Nyquist"
                    ),
                    limit,
                    got: f.abs(),
                });
            }
        }
    }
    let mut gf = GridFunction::sample(grid.clone(), |p| spec.profile(p))?;
    let peak = gf
        .values()
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Err(GridError::MarginViolated {
            margin: "truncation",
            detail: "test function vanishes on the whole grid".into(),
            limit: 0.0,
            got: 0.0,
        });
    }
    let mut boundary = 0.0f64;
    for i in 0..grid.len() {
        if grid.is_boundary_index(i) {
            boundary = boundary.max(gf.values()[i].norm());
        }
    }
    if boundary > BOUNDARY_DECAY_LIMIT * peak {
        return Err(GridError::MarginViolated {
            margin: "truncation",
            detail: "boundary samples are not negligible; enlarge the box or \
                     shrink the width"
                .into(),
            limit: BOUNDARY_DECAY_LIMIT,
            got: boundary / peak,
        });
    }
    let norm = gf.norm();
    gf.scale(Complex64::new(1.0 / norm, 0.0));
    debug_assert!((gf.norm() - 1.0).abs() < NORMALIZATION_TOL);
    Ok(gf)
}

/// Serialization header: dimension (u32 LE), points per axis (u32 LE),
/// half-width (f64 LE), followed by `(re, im)` f64 LE pairs row-major.
pub fn write_binary(f: &GridFunction, mut w: impl Write) -> Result<(), GridError> {
    w.write_all(&(f.grid().dim() as u32).to_le_bytes())?;
    w.write_all(&(f.grid().points_per_axis() as u32).to_le_bytes())?;
    w.write_all(&f.grid().half_width().to_le_bytes())?;
    for v in f.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<GridFunction, GridError> {
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut u32buf)
        .map_err(|e| GridError::BadSerialization(format!("header: {e}")))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)
        .map_err(|e| GridError::BadSerialization(format!("header: {e}")))?;
    let n = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut f64buf)
        .map_err(|e| GridError::BadSerialization(format!("header: {e}")))?;
    let half_width = f64::from_le_bytes(f64buf);
    let grid = Grid::new(dim, n, half_width)?;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        r.read_exact(&mut f64buf)
            .map_err(|e| GridError::BadSerialization(format!("sample {i}: {e}")))?;
        let re = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)
            .map_err(|e| GridError::BadSerialization(format!("sample {i}: {e}")))?;
        let im = f64::from_le_bytes(f64buf);
        values.push(Complex64::new(re, im));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(GridError::BadSerialization(
            "trailing bytes after samples".into(),
        ));
    }
    GridFunction::new(grid, values)
}

/// CSV export with per-axis indices, coordinates, and the complex sample.
/// Decimal separator `.`, field separator `,`, header mandatory.
pub fn write_csv(f: &GridFunction, mut w: impl Write) -> Result<(), GridError> {
    let d = f.grid().dim();
    let mut header = Vec::new();
    for axis in 0..d {
        header.push(format!("i{axis}"));
    }
    for axis in 0..d {
        header.push(format!("x{axis}"));
    }
    header.push("re".into());
    header.push("im".into());
    writeln!(w, "{}", header.join(","))?;
    let n = f.grid().points_per_axis();
    let mut p = vec![0.0; d];
    for flat in 0..f.grid().len() {
        f.grid().point(flat, &mut p);
        let mut fields = Vec::with_capacity(2 * d + 2);
        let mut rest = flat;
        let mut idx = vec![0usize; d];
        for axis in (0..d).rev() {
            idx[axis] = rest % n;
            rest /= n;
        }
        for axis in 0..d {
            fields.push(idx[axis].to_string());
        }
        for axis in 0..d {
            fields.push(format!("{:.17e}", p[axis]));
        }
        let v = f.values()[flat];
        fields.push(format!("{:.17e}", v.re));
        fields.push(format!("{:.17e}", v.im));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
