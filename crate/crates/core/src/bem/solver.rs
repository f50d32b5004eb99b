use std::io::Write;
use std::time::Instant;

use super::{ConvolutionWorkspace, InfluenceOperator, LoadCase, Material};
use crate::error::{Error, Result};
use crate::surface::HeightField;

/// Effective contact area in percent of the nominal area: `100 n_c g² / L²`.
///
/// With `g = L/(n-1)` full contact of all `n²` nodes gives slightly more than 100 %.
pub fn effective_area(contact_count: usize, spacing: f64, scan_length: f64) -> f64 {
    100.0 * contact_count as f64 * spacing * spacing / (scan_length * scan_length)
}

/// Nodal interference `z - (max z - Δ)`; positive where the undeformed
/// surfaces overlap.
pub fn interference(field: &HeightField, load: LoadCase) -> Vec<f64> {
    let datum = field.max() - load.delta;
    field.heights().iter().map(|&z| z - datum).collect()
}

/// Starting guess for the set of nodes in contact.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialActiveSet {
    Empty,
    /// Every node with positive interference.
    Interference,
    /// Explicit row-major mask.
    Mask(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance; feasibility and complementarity are measured against `tol · Δ`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub initial: InitialActiveSet,
    /// Iteration cap of each inner conjugate gradient solve.
    pub max_cg_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 100, initial: InitialActiveSet::Interference, max_cg_iterations: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactSolution {
    pub n: usize,
    pub spacing: f64,
    pub scan_length: f64,
    pub delta: f64,
    /// Nodal pressures, row-major.
    pub pressures: Vec<f64>,
    /// Gaps `w = H p - ū`, row-major.
    pub gaps: Vec<f64>,
    pub contact_mask: Vec<bool>,
    pub contact_count: usize,
    /// Effective contact area (%).
    pub effective_area: f64,
    pub total_force: f64,
    /// Active-set sweeps performed.
    pub iterations: usize,
    /// `|pᵀw| / (‖p‖₂ Δ)`.
    pub complementarity_residual: f64,
    pub elapsed_s: f64,
}

impl ContactSolution {
    /// Force carried by each grid point, `p g²`.
    pub fn nodal_forces(&self) -> Vec<f64> {
        let a = self.spacing * self.spacing;
        self.pressures.iter().map(|p| p * a).collect()
    }

    /// Per-node CSV followed by a `# summary` line.
    pub fn write_csv(&self, field: &HeightField, mut w: impl Write) -> Result<()> {
        let n = self.n;
        let g = self.spacing;
        let mut buf = String::from("i,j,x_um,y_um,z_um,pressure,gap,in_contact\n");
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                buf.push_str(&format!(
                    "{i},{j},{},{},{},{},{},{}\n",
                    j as f64 * g,
                    i as f64 * g,
                    field.get(i, j),
                    self.pressures[k],
                    self.gaps[k],
                    u8::from(self.contact_mask[k])
                ));
            }
        }
        buf.push_str(&format!(
            "# summary n_c={},A_e_percent={},total_force={},iterations={},residual={}\n",
            self.contact_count, self.effective_area, self.total_force, self.iterations, self.complementarity_residual
        ));
        w.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Solve with default options and the given tolerance.
pub fn solve_contact(field: &HeightField, load: LoadCase, material: Material, tol: f64) -> Result<ContactSolution> {
    solve_contact_with(field, load, material, &SolverOptions { tol, ..SolverOptions::default() })
}

/// Solve the discrete contact LCP `w = H p - ū, p ≥ 0, w ≥ 0, pᵀw = 0`.
///
/// Block active-set iteration: the pressures on the working set solve
/// `H_AA p_A = ū_A` by matrix-free conjugate gradients; working-set members
/// whose pressure would turn negative are removed with a feasibility-keeping
/// step, and all nodes with negative gap are added in one sweep. When a
/// block addition is entirely rejected the sweep falls back to adding the
/// single most violated node, which guarantees progress.
pub fn solve_contact_with(
    field: &HeightField,
    load: LoadCase,
    material: Material,
    opts: &SolverOptions,
) -> Result<ContactSolution> {
    if !(load.delta > 0.0) {
        return Err(Error::InvalidLoad(format!("far-field displacement must be positive, got {}", load.delta)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let op = InfluenceOperator::new(field.n(), field.spacing(), material)?;
    let ubar = interference(field, load);
    let start = Instant::now();
    let mut sol = ActiveSetSolver::new(&op, &ubar, load.delta, opts).run()?;
    sol.scan_length = field.scan_length();
    sol.effective_area = effective_area(sol.contact_count, field.spacing(), field.scan_length());
    sol.elapsed_s = start.elapsed().as_secs_f64();
    Ok(sol)
}

struct ActiveSetSolver<'a> {
    op: &'a InfluenceOperator,
    ubar: &'a [f64],
    delta: f64,
    opts: &'a SolverOptions,
    ws: ConvolutionWorkspace,
    full: Vec<f64>,
    product: Vec<f64>,
}

impl<'a> ActiveSetSolver<'a> {
    fn new(op: &'a InfluenceOperator, ubar: &'a [f64], delta: f64, opts: &'a SolverOptions) -> Self {
        let size = ubar.len();
        Self { op, ubar, delta, opts, ws: op.workspace(), full: vec![0.0; size], product: vec![0.0; size] }
    }

    /// `H_AA x` for `x` indexed like `active`.
    fn apply_active(&mut self, active: &[usize], x: &[f64], out: &mut [f64]) {
        self.full.iter_mut().for_each(|v| *v = 0.0);
        for (&k, &v) in active.iter().zip(x) {
            self.full[k] = v;
        }
        self.op.apply(&self.full, &mut self.product, &mut self.ws);
        for (o, &k) in out.iter_mut().zip(active) {
            *o = self.product[k];
        }
    }

    /// Conjugate gradients for `H_AA x = ū_A`, warm-started from `x`.
    /// Stops on the true residual norm reaching `target`.
    fn solve_active(&mut self, active: &[usize], x: &mut [f64], target: f64) -> f64 {
        let m = active.len();
        let b: Vec<f64> = active.iter().map(|&k| self.ubar[k]).collect();
        let mut hx = vec![0.0; m];
        let mut r = vec![0.0; m];
        let mut d = vec![0.0; m];
        let mut hd = vec![0.0; m];
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        // Restart on the true residual to shed recurrence drift.
        for _restart in 0..8 {
            self.apply_active(active, x, &mut hx);
            for i in 0..m {
                r[i] = b[i] - hx[i];
            }
            let mut rr: f64 = r.iter().map(|v| v * v).sum();
            residual = rr.sqrt();
            if residual <= target || iterations >= self.opts.max_cg_iterations {
                break;
            }
            d.copy_from_slice(&r);
            while iterations < self.opts.max_cg_iterations {
                iterations += 1;
                self.apply_active(active, &d, &mut hd);
                let dhd: f64 = d.iter().zip(&hd).map(|(a, b)| a * b).sum();
                if !(dhd > 0.0) {
                    break;
                }
                let step = rr / dhd;
                for i in 0..m {
                    x[i] += step * d[i];
                    r[i] -= step * hd[i];
                }
                let rr_new: f64 = r.iter().map(|v| v * v).sum();
                if rr_new.sqrt() <= 0.5 * target {
                    break;
                }
                let beta = rr_new / rr;
                rr = rr_new;
                for i in 0..m {
                    d[i] = r[i] + beta * d[i];
                }
            }
        }
        residual
    }

    fn run(mut self) -> Result<ContactSolution> {
        let size = self.ubar.len();
        let tol_abs = self.opts.tol * self.delta;
        // Nodes without interference can never touch: H has positive entries,
        // so their gap is at least -ū > 0 for any admissible pressure.
        let candidate: Vec<bool> = self.ubar.iter().map(|&u| u > 0.0).collect();
        let mut in_set = match &self.opts.initial {
            InitialActiveSet::Empty => vec![false; size],
            InitialActiveSet::Interference => candidate.clone(),
            InitialActiveSet::Mask(m) => {
                if m.len() != size {
                    return Err(Error::DimensionMismatch { expected: size, got: m.len() });
                }
                m.iter().zip(&candidate).map(|(&a, &c)| a && c).collect()
            }
        };
        let mut p = vec![0.0; size];
        let mut gaps = vec![0.0; size];
        let cg_target = 1e-3 * tol_abs;
        let mut last_residual = f64::INFINITY;
        let mut single_add = false;

        for sweep in 1..=self.opts.max_sweeps {
            let added_before: Vec<usize> = (0..size).filter(|&k| in_set[k] && p[k] == 0.0).collect();

            // Inner loop: bring the working set to a strictly positive solution.
            loop {
                let active: Vec<usize> = (0..size).filter(|&k| in_set[k]).collect();
                if active.is_empty() {
                    break;
                }
                let mut z: Vec<f64> = active.iter().map(|&k| p[k]).collect();
                self.solve_active(&active, &mut z, cg_target);

                let fresh_negative: Vec<usize> =
                    active.iter().zip(&z).filter(|&(&k, &zi)| p[k] == 0.0 && zi <= 0.0).map(|(&k, _)| k).collect();
                if !fresh_negative.is_empty() {
                    for k in fresh_negative {
                        in_set[k] = false;
                    }
                    continue;
                }
                let mut alpha = 1.0f64;
                let mut blocking = None;
                for (&k, &zi) in active.iter().zip(&z) {
                    if zi <= 0.0 {
                        let a = p[k] / (p[k] - zi);
                        if a < alpha || blocking.is_none() {
                            alpha = alpha.min(a);
                            blocking = Some(k);
                        }
                    }
                }
                let Some(blocking) = blocking else {
                    for (&k, &zi) in active.iter().zip(&z) {
                        p[k] = zi;
                    }
                    break;
                };
                for (&k, &zi) in active.iter().zip(&z) {
                    p[k] += alpha * (zi - p[k]);
                }
                p[blocking] = 0.0;
                for &k in &active {
                    if p[k] <= 0.0 {
                        p[k] = 0.0;
                        in_set[k] = false;
                    }
                }
            }
            for k in 0..size {
                if !in_set[k] {
                    p[k] = 0.0;
                }
            }

            self.op.apply(&p, &mut gaps, &mut self.ws);
            for (w, u) in gaps.iter_mut().zip(self.ubar) {
                *w -= u;
            }
            let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let complementarity: f64 = p.iter().zip(&gaps).map(|(a, b)| a * b).sum::<f64>().abs();
            let relative = if p_norm > 0.0 { complementarity / (p_norm * self.delta) } else { 0.0 };
            last_residual = relative;

            let mut violators: Vec<(usize, f64)> =
                (0..size).filter(|&k| !in_set[k] && gaps[k] < -tol_abs).map(|k| (k, gaps[k])).collect();
            let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            if violators.is_empty() && min_gap >= -tol_abs && relative <= self.opts.tol {
                let contact_mask: Vec<bool> = p.iter().map(|&v| v > 0.0).collect();
                let contact_count = contact_mask.iter().filter(|&&c| c).count();
                let g = self.op.spacing();
                return Ok(ContactSolution {
                    n: self.op.n(),
                    spacing: g,
                    scan_length: g * (self.op.n() - 1) as f64,
                    delta: self.delta,
                    total_force: p.iter().sum::<f64>() * g * g,
                    pressures: p,
                    gaps,
                    contact_mask,
                    contact_count,
                    effective_area: 0.0,
                    iterations: sweep,
                    complementarity_residual: relative,
                    elapsed_s: 0.0,
                });
            }

            // Block addition made no progress last time: everything added was rejected.
            let rejected_all = !added_before.is_empty() && added_before.iter().all(|&k| !in_set[k]);
            single_add = single_add || (rejected_all && sweep > 1);
            if violators.is_empty() {
                // Feasible but residual too large on the working set; the next
                // sweep re-solves from the current iterate.
                continue;
            }
            if single_add {
                violators.sort_by(|a, b| a.1.total_cmp(&b.1));
                violators.truncate(1);
            }
            for (k, _) in violators {
                in_set[k] = true;
            }
        }
        Err(Error::SolverStall { sweeps: self.opts.max_sweeps, residual: last_residual })
    }
}
