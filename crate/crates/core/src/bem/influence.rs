use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Material;
use crate::error::{Error, Result};

/// Antiderivative of `1/sqrt(X² + Y²)` over a rectangle, with the terms that
/// cancel in the four-corner difference dropped.
fn corner_term(x: f64, y: f64) -> f64 {
    let a = if x == 0.0 { 0.0 } else { x * (y / x.abs()).asinh() };
    let b = if y == 0.0 { 0.0 } else { y * (x / y.abs()).asinh() };
    a + b
}

/// Smallest 2·3·5-smooth integer `>= n`.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .unwrap()
}

/// Surface compliance of the half-space on an `n × n` grid.
///
/// `coefficient(di, dj)` is the vertical displacement at a cell centre due to
/// unit uniform pressure on a square cell of side `g` offset by `(di, dj)`
/// cells. The operator is translation invariant, so products with the
/// `n² × n²` matrix are evaluated as a zero-padded FFT convolution.
pub struct InfluenceOperator {
    n: usize,
    spacing: f64,
    material: Material,
    /// Coefficients for nonnegative offsets, `kernel[|di| * n + |dj|]`.
    kernel: Vec<f64>,
    padded: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Scratch buffers for [`InfluenceOperator::apply`].
pub struct ConvolutionWorkspace {
    grid: Vec<Complex64>,
    column: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for InfluenceOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InfluenceOperator")
            .field("n", &self.n)
            .field("spacing", &self.spacing)
            .field("material", &self.material)
            .field("padded", &self.padded)
            .finish()
    }
}

impl InfluenceOperator {
    pub fn new(n: usize, spacing: f64, material: Material) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("influence operator needs n >= 2, got {n}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {spacing}")));
        }
        material.validate()?;

        let mut kernel = vec![0.0; n * n];
        for di in 0..n {
            for dj in di..n {
                let c = Self::single_coefficient(di, dj, spacing, material);
                kernel[di * n + dj] = c;
                kernel[dj * n + di] = c;
            }
        }

        let padded = smooth_size(2 * n - 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);
        let mut op = Self { n, spacing, material, kernel, padded, spectrum: Vec::new(), forward, inverse };

        let m = padded;
        let mut grid = vec![Complex64::new(0.0, 0.0); m * m];
        let wrap = |d: isize| d.rem_euclid(m as isize) as usize;
        for di in -(n as isize - 1)..n as isize {
            for dj in -(n as isize - 1)..n as isize {
                grid[wrap(di) * m + wrap(dj)] = Complex64::new(op.coefficient(di, dj), 0.0);
            }
        }
        let mut ws = op.workspace();
        op.fft2(&mut grid, &mut ws, true, m);
        let scale = 1.0 / (m * m) as f64;
        grid.iter_mut().for_each(|c| *c *= scale);
        op.spectrum = grid;
        Ok(op)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn material(&self) -> Material {
        self.material
    }

    /// Compliance between cells offset by `(di, dj)`.
    pub fn coefficient(&self, di: isize, dj: isize) -> f64 {
        let (a, b) = (di.unsigned_abs(), dj.unsigned_abs());
        if a < self.n && b < self.n {
            self.kernel[a * self.n + b]
        } else {
            Self::single_coefficient(a, b, self.spacing, self.material)
        }
    }

    fn single_coefficient(di: usize, dj: usize, spacing: f64, material: Material) -> f64 {
        let prefactor = 1.0 / (std::f64::consts::PI * material.composite_modulus());
        let h = 0.5 * spacing;
        let (x, y) = (di as f64 * spacing, dj as f64 * spacing);
        prefactor
            * (corner_term(x + h, y + h) - corner_term(x + h, y - h) - corner_term(x - h, y + h)
                + corner_term(x - h, y - h))
    }

    /// Coefficient for an arbitrary offset, without the grid-size window.
    pub fn coefficient_at(spacing: f64, material: Material, di: isize, dj: isize) -> f64 {
        Self::single_coefficient(di.unsigned_abs(), dj.unsigned_abs(), spacing, material)
    }

    pub fn workspace(&self) -> ConvolutionWorkspace {
        let m = self.padded;
        let scratch_len = self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        ConvolutionWorkspace {
            grid: vec![Complex64::new(0.0, 0.0); m * m],
            column: vec![Complex64::new(0.0, 0.0); m],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// 2D FFT of the first `rows` rows (the rest are known to be zero on the
    /// forward pass, or not needed on the inverse pass).
    fn fft2(&self, grid: &mut [Complex64], ws: &mut ConvolutionWorkspace, forward: bool, rows: usize) {
        let m = self.padded;
        let plan = if forward { &self.forward } else { &self.inverse };
        if forward {
            for row in grid.chunks_exact_mut(m).take(rows) {
                plan.process_with_scratch(row, &mut ws.scratch);
            }
        }
        for j in 0..m {
            for i in 0..m {
                ws.column[i] = grid[i * m + j];
            }
            plan.process_with_scratch(&mut ws.column, &mut ws.scratch);
            for i in 0..m {
                grid[i * m + j] = ws.column[i];
            }
        }
        if !forward {
            for row in grid.chunks_exact_mut(m).take(rows) {
                plan.process_with_scratch(row, &mut ws.scratch);
            }
        }
    }

    /// `out = H p` for row-major `n × n` fields.
    pub fn apply(&self, p: &[f64], out: &mut [f64], ws: &mut ConvolutionWorkspace) {
        let (n, m) = (self.n, self.padded);
        assert_eq!(p.len(), n * n);
        assert_eq!(out.len(), n * n);
        ws.grid.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for i in 0..n {
            for j in 0..n {
                ws.grid[i * m + j] = Complex64::new(p[i * n + j], 0.0);
            }
        }
        let mut grid = std::mem::take(&mut ws.grid);
        self.fft2(&mut grid, ws, true, n);
        for (c, s) in grid.iter_mut().zip(&self.spectrum) {
            *c *= s;
        }
        self.fft2(&mut grid, ws, false, n);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = grid[i * m + j].re;
            }
        }
        ws.grid = grid;
    }

    /// `out = H p` by direct summation, `O(n⁴)`.
    pub fn apply_direct(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        let v = p[k * n + l];
                        if v != 0.0 {
                            acc += self.coefficient(i as isize - k as isize, j as isize - l as isize) * v;
                        }
                    }
                }
                out[i * n + j] = acc;
            }
        }
    }

    /// The explicit `n² × n²` influence matrix. Only sensible for small grids.
    pub fn assemble_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let size = n * n;
        DMatrix::from_fn(size, size, |r, c| {
            let (i, j) = (r / n, r % n);
            let (k, l) = (c / n, c % n);
            self.coefficient(i as isize - k as isize, j as isize - l as isize)
        })
    }
}
