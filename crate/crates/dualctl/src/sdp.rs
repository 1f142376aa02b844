//! Linear matrix inequalities and the conic-solver contract.
//!
//! Decision variables are scalars; matrix inequalities are affine
//! expressions F(x) = F₀ + Σ x_j F_j constrained to be positive semidefinite.
//! Each variable carries a nominal scale and each constraint is normalized by
//! its largest coefficient before being handed to the interior-point solver.
//! Every returned point is re-verified by an independent eigenvalue check.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_eig, Mat};

/// Affine matrix expression F₀ + Σ x_j F_j.
#[derive(Clone, Debug)]
pub struct AffMat {
    pub rows: usize,
    pub cols: usize,
    pub constant: Mat,
    pub terms: BTreeMap<usize, Mat>,
}

impl AffMat {
    /// Zero expression.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, constant: Mat::zeros(rows, cols), terms: BTreeMap::new() }
    }

    /// Constant expression.
    pub fn constant(m: Mat) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), constant: m, terms: BTreeMap::new() }
    }

    /// The single variable x_j placed at entry (r, c) of a rows × cols matrix.
    pub fn unit(var: usize, rows: usize, cols: usize, r: usize, c: usize) -> Self {
        let mut m = Mat::zeros(rows, cols);
        m[(r, c)] = 1.0;
        let mut e = Self::zeros(rows, cols);
        e.terms.insert(var, m);
        e
    }

    /// Scalar variable as a 1 × 1 expression.
    pub fn var(var: usize) -> Self {
        Self::unit(var, 1, 1, 0, 0)
    }

    /// x_j · M.
    pub fn var_times(var: usize, m: Mat) -> Self {
        let mut e = Self::zeros(m.nrows(), m.ncols());
        e.terms.insert(var, m);
        e
    }

    fn check(&self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "affine shape mismatch");
    }

    /// Sum.
    pub fn add(&self, other: &Self) -> Self {
        self.check(other);
        let mut out = self.clone();
        out.constant += &other.constant;
        for (k, m) in &other.terms {
            out.terms.entry(*k).and_modify(|e| *e += m).or_insert_with(|| m.clone());
        }
        out
    }

    /// Difference.
    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Adds a constant matrix.
    pub fn add_const(&self, m: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    /// Scalar multiple.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * s,
            terms: self.terms.iter().map(|(k, m)| (*k, m * s)).collect(),
        }
    }

    /// M · F(x).
    pub fn lmul(&self, m: &Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: self.cols,
            constant: m * &self.constant,
            terms: self.terms.iter().map(|(k, f)| (*k, m * f)).collect(),
        }
    }

    /// F(x) · M.
    pub fn rmul(&self, m: &Mat) -> Self {
        Self {
            rows: self.rows,
            cols: m.ncols(),
            constant: &self.constant * m,
            terms: self.terms.iter().map(|(k, f)| (*k, f * m)).collect(),
        }
    }

    /// Transpose.
    pub fn t(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(k, f)| (*k, f.transpose())).collect(),
        }
    }

    /// A scalar expression times a constant matrix.
    pub fn scalar_times(&self, m: &Mat) -> Self {
        assert_eq!((self.rows, self.cols), (1, 1), "scalar expression expected");
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m * self.constant[(0, 0)],
            terms: self.terms.iter().map(|(k, f)| (*k, m * f[(0, 0)])).collect(),
        }
    }

    /// Entry (r, c) as a 1 × 1 expression.
    pub fn entry(&self, r: usize, c: usize) -> Self {
        Self {
            rows: 1,
            cols: 1,
            constant: Mat::from_element(1, 1, self.constant[(r, c)]),
            terms: self.terms.iter().map(|(k, f)| (*k, Mat::from_element(1, 1, f[(r, c)]))).collect(),
        }
    }

    /// Block matrix from a grid of expressions; `None` is a zero block.
    pub fn blocks(grid: &[Vec<Option<AffMat>>], row_dims: &[usize], col_dims: &[usize]) -> Self {
        let rows: usize = row_dims.iter().sum();
        let cols: usize = col_dims.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, cell) in row.iter().enumerate() {
                if let Some(e) = cell {
                    assert_eq!((e.rows, e.cols), (row_dims[bi], col_dims[bj]), "block ({bi},{bj}) shape");
                    out.constant.view_mut((r0, c0), (e.rows, e.cols)).copy_from(&e.constant);
                    for (k, f) in &e.terms {
                        let slot = out.terms.entry(*k).or_insert_with(|| Mat::zeros(rows, cols));
                        slot.view_mut((r0, c0), (e.rows, e.cols)).copy_from(f);
                    }
                }
                c0 += col_dims[bj];
            }
            r0 += row_dims[bi];
        }
        out
    }

    /// Symmetric block matrix from its lower triangle (row i, column j ≤ i).
    pub fn sym_blocks(lower: &[Vec<Option<AffMat>>], dims: &[usize]) -> Self {
        let n = dims.len();
        let grid: Vec<Vec<Option<AffMat>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if j <= i { lower[i][j].clone() } else { lower[j][i].as_ref().map(|e| e.t()) })
                    .collect()
            })
            .collect();
        Self::blocks(&grid, dims, dims)
    }

    /// Evaluates at a numeric point.
    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (k, f) in &self.terms {
            m += f * x[*k];
        }
        m
    }

    /// Magnitude of the summed entries at x, used for relative margins.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(max_abs(&self.constant), |s, (k, f)| s + x[*k].abs() * max_abs(f))
    }
}

/// Variable metadata.
#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub scale: f64,
}

/// F(x) − margin·I ⪰ 0.
#[derive(Clone, Debug)]
pub struct Lmi {
    pub name: String,
    pub expr: AffMat,
    pub margin: f64,
}

/// Solver outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Solved point with its verification record.
#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub worst_margin: f64,
    pub detail: String,
}

impl Solution {
    /// Value of a scalar expression.
    pub fn value(&self, e: &AffMat) -> f64 {
        e.eval(&self.x)[(0, 0)]
    }
}

/// Solver tolerances.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub feasibility: f64,
    pub gap: f64,
    pub verify: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feasibility: 1e-8, gap: 1e-8, verify: 1e-6, max_iter: 400 }
    }
}

/// Semidefinite program: minimize cᵀx subject to LMIs.
#[derive(Clone, Debug, Default)]
pub struct Problem {
    pub vars: Vec<VarInfo>,
    pub objective: BTreeMap<usize, f64>,
    pub lmis: Vec<Lmi>,
}

impl Problem {
    /// Empty problem.
    pub fn new() -> Self {
        Self::default()
    }

    /// New scalar variable with a nominal magnitude.
    pub fn scalar(&mut self, name: &str, scale: f64) -> usize {
        self.vars.push(VarInfo { name: name.to_string(), scale: if scale > 0.0 { scale } else { 1.0 } });
        self.vars.len() - 1
    }

    /// New rows × cols matrix variable.
    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize, scale: f64) -> AffMat {
        let mut e = AffMat::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                let v = self.scalar(&format!("{name}[{r},{c}]"), scale);
                e = e.add(&AffMat::unit(v, rows, cols, r, c));
            }
        }
        e
    }

    /// New symmetric n × n matrix variable.
    pub fn symmetric(&mut self, name: &str, n: usize, scale: f64) -> AffMat {
        let mut e = AffMat::zeros(n, n);
        for c in 0..n {
            for r in 0..=c {
                let v = self.scalar(&format!("{name}[{r},{c}]"), scale);
                let mut m = Mat::zeros(n, n);
                m[(r, c)] = 1.0;
                m[(c, r)] = 1.0;
                e = e.add(&AffMat::var_times(v, m));
            }
        }
        e
    }

    /// Adds c·x_j to the objective.
    pub fn minimize(&mut self, var: usize, c: f64) {
        *self.objective.entry(var).or_insert(0.0) += c;
    }

    /// F(x) ⪰ margin·I.
    pub fn psd(&mut self, name: &str, expr: AffMat, margin: f64) {
        assert_eq!(expr.rows, expr.cols, "LMI must be square");
        self.lmis.push(Lmi { name: name.to_string(), expr, margin });
    }

    /// F(x) ⪯ −margin·I.
    pub fn nsd(&mut self, name: &str, expr: AffMat, margin: f64) {
        self.psd(name, expr.scale(-1.0), margin);
    }

    /// Scalar inequality e(x) ≥ 0.
    pub fn nonneg(&mut self, name: &str, expr: AffMat) {
        self.psd(name, expr, 0.0);
    }

    /// Solves with default tolerances.
    pub fn solve(&self) -> Result<Solution> {
        self.solve_with(&Tolerances::default())
    }

    /// Solves and independently re-verifies the returned point.
    pub fn solve_with(&self, tol: &Tolerances) -> Result<Solution> {
        let nv = self.vars.len();
        if nv == 0 {
            return Err(Error::InvalidArgument("problem has no variables".into()));
        }
        let scales: Vec<f64> = self.vars.iter().map(|v| v.scale).collect();

        let mut lin: Vec<&Lmi> = Vec::new();
        let mut mats: Vec<&Lmi> = Vec::new();
        for l in &self.lmis {
            if l.expr.rows == 1 {
                lin.push(l);
            } else {
                mats.push(l);
            }
        }
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let block_scale = |l: &Lmi| -> f64 {
            let s = l.expr.terms.iter().fold(max_abs(&l.expr.constant), |s, (k, f)| s.max(scales[*k] * max_abs(f)));
            if s > 0.0 {
                s
            } else {
                1.0
            }
        };
        if !lin.is_empty() {
            for l in &lin {
                let rho = block_scale(l);
                let row = b.len();
                b.push((l.expr.constant[(0, 0)] - l.margin) / rho);
                for (k, f) in &l.expr.terms {
                    if f[(0, 0)] != 0.0 {
                        trip.push((row, *k, -scales[*k] * f[(0, 0)] / rho));
                    }
                }
            }
            cones.push(SupportedConeT::NonnegativeConeT(lin.len()));
        }
        for l in &mats {
            let d = l.expr.rows;
            let dg = self.congruence(l);
            let base = b.len();
            let r2 = std::f64::consts::SQRT_2;
            let idx = |i: usize, j: usize| base + j * (j + 1) / 2 + i;
            for j in 0..d {
                for i in 0..=j {
                    let w = if i == j { 1.0 } else { r2 } * dg[i] * dg[j];
                    let mut c = l.expr.constant[(i, j)];
                    if i == j {
                        c -= l.margin;
                    }
                    b.push(w * c);
                }
            }
            for (k, f) in &l.expr.terms {
                for j in 0..d {
                    for i in 0..=j {
                        let v = f[(i, j)];
                        if v != 0.0 {
                            let w = if i == j { 1.0 } else { r2 } * dg[i] * dg[j];
                            trip.push((idx(i, j), *k, -w * scales[*k] * v));
                        }
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(d));
        }
        let m = b.len();
        let a = csc_from_triplets(m, nv, trip);
        let mut q = vec![0.0; nv];
        for (k, c) in &self.objective {
            q[*k] = c * scales[*k];
        }
        let qs = q.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let qs = if qs > 0.0 { qs } else { 1.0 };
        q.iter_mut().for_each(|v| *v /= qs);
        let p = CscMatrix::<f64>::zeros((nv, nv));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(tol.max_iter)
            .tol_feas(tol.feasibility)
            .tol_gap_abs(tol.gap)
            .tol_gap_rel(tol.gap)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let x: Vec<f64> = sol.x.iter().zip(&scales).map(|(y, s)| y * s).collect();
        let objective = self.objective.iter().map(|(k, c)| c * x[*k]).sum();
        let (worst, worst_name) = self.verify(&x);
        let mut status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Status::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
            _ => Status::NumericalFailure,
        };
        if status == Status::Optimal && worst < -tol.verify {
            status = Status::NumericalFailure;
        }
        Ok(Solution {
            status,
            x,
            objective,
            iterations: sol.iterations,
            worst_margin: worst,
            detail: format!("{:?}; worst constraint {worst_name}", sol.status),
        })
    }

    /// Diagonal congruence d with d_i = 1/√r_i, r_i the largest scaled
    /// coefficient in row i; every entry of D F D is then at most one in
    /// magnitude for variables at their nominal scale.
    fn congruence(&self, l: &Lmi) -> Vec<f64> {
        let n = l.expr.rows;
        let mut r = vec![0.0_f64; n];
        let mut absorb = |m: &Mat, s: f64| {
            for i in 0..n {
                for j in 0..n {
                    r[i] = r[i].max(s * m[(i, j)].abs());
                }
            }
        };
        absorb(&l.expr.constant, 1.0);
        for (k, f) in &l.expr.terms {
            absorb(f, self.vars[*k].scale);
        }
        r.iter().map(|&v| if v > 0.0 { 1.0 / v.max(l.margin).sqrt() } else { 1.0 }).collect()
    }

    /// Worst eigenvalue margin over all constraints at x, measured after the
    /// same diagonal congruence the solver sees (scale invariant).
    pub fn verify(&self, x: &[f64]) -> (f64, String) {
        let mut worst = f64::INFINITY;
        let mut name = String::new();
        for l in &self.lmis {
            let mut f = l.expr.eval(x);
            for i in 0..f.nrows() {
                f[(i, i)] -= l.margin;
            }
            let r = if f.nrows() == 1 {
                f[(0, 0)] / l.expr.magnitude(x).max(l.margin).max(1e-300)
            } else {
                let dg = self.congruence(l);
                let g = Mat::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] * dg[i] * dg[j]);
                min_eig(&g) / max_abs(&g).max(1.0)
            };
            if r < worst {
                worst = r;
                name = l.name.clone();
            }
        }
        (worst, name)
    }
}

fn csc_from_triplets(m: usize, n: usize, mut trip: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    trip.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(trip.len());
    let mut nzval = Vec::with_capacity(trip.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in trip {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
        last = Some((r, c));
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_minimum() {
        let mut p = Problem::new();
        let t = p.scalar("t", 1.0);
        let e = AffMat::var_times(t, Mat::identity(2, 2)).add_const(&Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        p.psd("lmi", e, 0.0);
        p.minimize(t, 1.0);
        let s = p.solve().unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[t] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = Problem::new();
        let t = p.scalar("t", 1.0);
        p.nonneg("lo", AffMat::var(t).add_const(&Mat::from_element(1, 1, -2.0)));
        p.nonneg("hi", AffMat::var(t).scale(-1.0).add_const(&Mat::from_element(1, 1, 1.0)));
        p.minimize(t, 1.0);
        assert_eq!(p.solve().unwrap().status, Status::Infeasible);
    }

    #[test]
    fn symmetric_variable_blocks() {
        let mut p = Problem::new();
        let x = p.symmetric("X", 2, 1.0);
        let e = AffMat::sym_blocks(&[vec![Some(x.clone())], vec![Some(x.clone()), Some(x)]], &[2, 2]);
        assert_eq!(e.rows, 4);
        let v = vec![1.0, 2.0, 3.0];
        let m = e.eval(&v);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(3, 2)], 2.0);
        assert_eq!(m[(2, 0)], 1.0);
    }
}

/// Log-spaced grid of n points in [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Minimizes a scalar objective over a log grid of a positive multiplier, then
/// refines once on a finer log grid between the neighbours of the best point.
/// `f` returns `None` when the inner problem is infeasible.
pub fn line_search_log<F>(lo: f64, hi: f64, n: usize, refine: usize, mut f: F) -> Result<Option<(f64, f64)>>
where
    F: FnMut(f64) -> Result<Option<f64>>,
{
    let grid = log_grid(lo, hi, n);
    let mut best: Option<(usize, f64)> = None;
    for (i, &lam) in grid.iter().enumerate() {
        if let Some(v) = f(lam)? {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    let Some((bi, bv)) = best else { return Ok(None) };
    let mut out = (grid[bi], bv);
    if refine > 0 && grid.len() > 1 {
        let a = grid[bi.saturating_sub(1)];
        let b = grid[(bi + 1).min(grid.len() - 1)];
        for lam in log_grid(a, b, refine + 2) {
            if let Some(v) = f(lam)? {
                if v < out.1 {
                    out = (lam, v);
                }
            }
        }
    }
    Ok(Some(out))
}
