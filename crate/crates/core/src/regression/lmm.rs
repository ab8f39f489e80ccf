//! Linear mixed models with crossed grouping factors and diagonal random
//! effects, fit by REML.
//!
//! The random-effect covariance is `sigma^2 * diag(gamma)`; the optimizer works
//! on `phi = ln(gamma)` with `beta` and `sigma^2` profiled out. Each evaluation
//! factors
//!
//! ```text
//! [ L'Z'ZL + I   L'Z'X   L'Z'y ]
//! [ X'ZL         X'X     X'y   ]
//! [ y'ZL         y'X     y'y   ]
//! ```
//!
//! with `L = diag(sqrt(gamma))`. The grouping factor with the most columns is
//! eliminated level by level (its block is block-diagonal); the remaining
//! columns are handled as one dense Schur complement.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const PHI_MIN: f64 = -40.0;
const PHI_MAX: f64 = 20.0;
const MAX_STEP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingFactor {
    pub name: String,
    pub levels: Vec<String>,
    /// Level index of every observation.
    pub index: Vec<usize>,
}

impl GroupingFactor {
    /// Levels are sorted so the layout does not depend on row order.
    pub fn from_labels<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let mut levels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let index = labels
            .iter()
            .map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap())
            .collect();
        GroupingFactor {
            name: name.to_string(),
            levels,
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomTerm {
    pub name: String,
    /// Per-observation covariate; `None` is a random intercept.
    pub values: Option<Vec<f64>>,
}

impl RandomTerm {
    pub fn intercept() -> Self {
        RandomTerm {
            name: "(Intercept)".into(),
            values: None,
        }
    }

    pub fn slope(name: &str, values: Vec<f64>) -> Self {
        RandomTerm {
            name: name.to_string(),
            values: Some(values),
        }
    }

    fn value(&self, row: usize) -> f64 {
        self.values.as_ref().map_or(1.0, |v| v[row])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffects {
    pub factor: GroupingFactor,
    pub terms: Vec<RandomTerm>,
}

#[derive(Debug, Clone)]
pub struct LmmProblem {
    pub y: Vec<f64>,
    /// n x p fixed-effect design, intercept included by the caller.
    pub x: DMatrix<f64>,
    pub fixed_names: Vec<String>,
    pub random: Vec<RandomEffects>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmOptions {
    pub max_iter: usize,
    /// Converged once an accepted step changes the criterion by less than this, relatively.
    pub rel_tol: f64,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions {
            max_iter: 500,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffect {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponent {
    pub group: String,
    pub term: String,
    pub variance: f64,
}

/// Conditional modes of one grouping factor, `modes[level][term]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModes {
    pub group: String,
    pub terms: Vec<String>,
    pub levels: Vec<String>,
    pub modes: Vec<Vec<f64>>,
}

impl GroupModes {
    pub fn level(&self, level: &str) -> Option<&[f64]> {
        let i = self.levels.binary_search_by(|l| l.as_str().cmp(level)).ok()?;
        Some(&self.modes[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub fixed: Vec<FixedEffect>,
    /// Covariance of the fixed-effect estimates, row-major p x p.
    pub vcov: Vec<Vec<f64>>,
    pub components: Vec<VarianceComponent>,
    pub residual_variance: f64,
    pub modes: Vec<GroupModes>,
    /// Maximum-likelihood log-likelihood evaluated at the REML estimates.
    pub log_likelihood: f64,
    /// REML deviance (-2 x restricted log-likelihood) at the optimum.
    pub reml_criterion: f64,
    pub converged: bool,
    pub iterations: usize,
    pub criterion_trace: Vec<f64>,
    pub n_obs: usize,
}

impl LmmFit {
    pub fn coefficient(&self, name: &str) -> Option<&FixedEffect> {
        self.fixed.iter().find(|f| f.name == name)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.fixed.iter().map(|f| f.estimate).collect()
    }

    pub fn group(&self, name: &str) -> Option<&GroupModes> {
        self.modes.iter().find(|g| g.group == name)
    }

    /// Standard error of `w . beta`.
    pub fn linear_combination_se(&self, w: &[f64]) -> f64 {
        let mut v = 0.0;
        for (i, wi) in w.iter().enumerate() {
            for (j, wj) in w.iter().enumerate() {
                v += wi * wj * self.vcov[i][j];
            }
        }
        v.max(0.0).sqrt()
    }
}

/// Two-sided normal p-value for a Wald statistic.
pub fn wald_p_value(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { 1.0 } else { 0.0 };
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    (2.0 * n.cdf(-z.abs())).clamp(0.0, 1.0)
}

pub fn fit_lmm(problem: &LmmProblem, opts: &LmmOptions) -> Result<LmmFit> {
    let n = problem.y.len();
    let p = problem.x.ncols();
    validate(problem)?;
    if n <= p {
        return Err(Error::Data(format!("{n} observations cannot identify {p} fixed effects")));
    }
    let ols_rss = check_design(problem)?;
    let yy: f64 = problem.y.iter().map(|v| v * v).sum();
    if ols_rss <= 1e-24 * yy.max(f64::MIN_POSITIVE) {
        return Ok(perfect_fit(problem));
    }

    let state = Reml::new(problem);
    let nc = state.comps.len();
    let mut phi = vec![0.0; nc];
    let mut free = vec![true; nc];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = state.optimize(&mut phi, &free, &mut trace, &mut iterations, opts)?;

    // Variances at the boundary: a component whose removal does not worsen the
    // criterion is fixed at exactly zero and the rest re-optimized.
    loop {
        let current = *trace.last().unwrap();
        let mut snapped = false;
        for k in 0..nc {
            if !free[k] {
                continue;
            }
            free[k] = false;
            let f = state.factor(&state.theta(&phi, &free))?;
            let crit = state.criterion(&f);
            if crit <= current + 1e-12 * current.abs().max(1.0) {
                trace.push(crit);
                snapped = true;
                break;
            }
            free[k] = true;
        }
        if !snapped {
            break;
        }
        if free.iter().any(|&f| f) {
            converged = state.optimize(&mut phi, &free, &mut trace, &mut iterations, opts)?;
        }
    }

    if !converged {
        return Err(Error::Numerical(format!(
            "REML optimizer did not converge within {} iterations",
            opts.max_iter
        )));
    }
    state.finish(problem, &phi, &free, trace, iterations, converged)
}

fn validate(problem: &LmmProblem) -> Result<()> {
    let n = problem.y.len();
    if problem.x.nrows() != n {
        return Err(Error::Data(format!(
            "design has {} rows but response has {n}",
            problem.x.nrows()
        )));
    }
    if problem.fixed_names.len() != problem.x.ncols() {
        return Err(Error::Data("fixed-effect names do not match design columns".into()));
    }
    if problem.y.iter().any(|v| !v.is_finite()) || problem.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in response or design".into()));
    }
    for re in &problem.random {
        if re.factor.index.len() != n {
            return Err(Error::Data(format!("grouping factor {} has the wrong length", re.factor.name)));
        }
        if re.factor.levels.len() < 2 {
            return Err(Error::Data(format!(
                "grouping factor {} needs at least 2 levels, found {}",
                re.factor.name,
                re.factor.levels.len()
            )));
        }
        if re.terms.is_empty() {
            return Err(Error::Data(format!("grouping factor {} has no terms", re.factor.name)));
        }
        for t in &re.terms {
            if let Some(v) = &t.values {
                if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Data(format!("random term {}|{} is malformed", t.name, re.factor.name)));
                }
            }
        }
    }
    Ok(())
}

/// Pivoted-free Cholesky of X'X that names the first column lying in the span
/// of earlier ones. Returns the OLS residual sum of squares.
fn check_design(problem: &LmmProblem) -> Result<f64> {
    let x = &problem.x;
    let p = x.ncols();
    let gram = x.transpose() * x;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 1e-10 * gram[(j, j)]) || gram[(j, j)] == 0.0 {
            return Err(collinear(problem, j));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..p {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let y = DVector::from_column_slice(&problem.y);
    let xty = x.transpose() * &y;
    let z = l.solve_lower_triangular(&xty).unwrap();
    Ok((y.dot(&y) - z.dot(&z)).max(0.0))
}

fn collinear(problem: &LmmProblem, j: usize) -> Error {
    let x = &problem.x;
    let cj = x.column(j);
    let nj = cj.norm();
    let with = (0..j)
        .map(|i| {
            let ci = x.column(i);
            let cos = if nj == 0.0 || ci.norm() == 0.0 {
                0.0
            } else {
                (ci.dot(&cj) / (ci.norm() * nj)).abs()
            };
            (i, cos)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| problem.fixed_names[i].clone())
        .unwrap_or_else(|| "the zero vector".into());
    Error::Collinear {
        column: problem.fixed_names[j].clone(),
        with,
    }
}

fn perfect_fit(problem: &LmmProblem) -> LmmFit {
    let x = &problem.x;
    let y = DVector::from_column_slice(&problem.y);
    let beta = (x.transpose() * x).cholesky().unwrap().solve(&(x.transpose() * &y));
    let p = x.ncols();
    LmmFit {
        fixed: problem
            .fixed_names
            .iter()
            .zip(beta.iter())
            .map(|(name, &b)| FixedEffect {
                name: name.clone(),
                estimate: b,
                std_error: 0.0,
                z_value: f64::INFINITY,
                p_value: 0.0,
            })
            .collect(),
        vcov: vec![vec![0.0; p]; p],
        components: problem
            .random
            .iter()
            .flat_map(|re| {
                re.terms.iter().map(|t| VarianceComponent {
                    group: re.factor.name.clone(),
                    term: t.name.clone(),
                    variance: 0.0,
                })
            })
            .collect(),
        residual_variance: 0.0,
        modes: problem
            .random
            .iter()
            .map(|re| GroupModes {
                group: re.factor.name.clone(),
                terms: re.terms.iter().map(|t| t.name.clone()).collect(),
                levels: re.factor.levels.clone(),
                modes: vec![vec![0.0; re.terms.len()]; re.factor.levels.len()],
            })
            .collect(),
        log_likelihood: f64::INFINITY,
        reml_criterion: f64::NEG_INFINITY,
        converged: true,
        iterations: 0,
        criterion_trace: Vec::new(),
        n_obs: problem.y.len(),
    }
}

/// Precomputed cross products and column layout.
struct Reml {
    n: usize,
    p: usize,
    /// (factor, term) of every variance component.
    comps: Vec<(usize, usize)>,
    /// Columns per component (= levels of its factor).
    comp_cols: Vec<usize>,
    /// Factor eliminated level by level, if any.
    f0: Option<usize>,
    /// Component of each term of `f0`.
    comp0: Vec<usize>,
    /// Component of each dense random-effect column.
    dense_comp: Vec<usize>,
    /// First dense column of each factor other than `f0`.
    offsets: Vec<usize>,
    q_o: usize,
    d: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    dense: DMatrix<f64>,
}

struct Factorization {
    l0: Vec<DMatrix<f64>>,
    w: Vec<DMatrix<f64>>,
    lg: DMatrix<f64>,
    logdet_re: f64,
    logdet_x: f64,
    r2: f64,
}

struct Solution {
    /// Spherical modes of the dense random columns followed by beta.
    v: DVector<f64>,
    /// Spherical modes of each `f0` level.
    u0: Vec<DVector<f64>>,
}

impl Reml {
    fn new(problem: &LmmProblem) -> Self {
        let n = problem.y.len();
        let p = problem.x.ncols();
        let random = &problem.random;
        let mut comps = Vec::new();
        let mut comp_cols = Vec::new();
        for (r, re) in random.iter().enumerate() {
            for t in 0..re.terms.len() {
                comps.push((r, t));
                comp_cols.push(re.factor.levels.len());
            }
        }
        let f0 = (0..random.len()).max_by_key(|&r| (random[r].factor.levels.len() * random[r].terms.len(), usize::MAX - r));
        let comp_index = |r: usize, t: usize| comps.iter().position(|&c| c == (r, t)).unwrap();
        let comp0: Vec<usize> = match f0 {
            Some(r) => (0..random[r].terms.len()).map(|t| comp_index(r, t)).collect(),
            None => Vec::new(),
        };
        let m0 = comp0.len();
        let mut offsets = vec![0; random.len()];
        let mut dense_comp = Vec::new();
        for (r, re) in random.iter().enumerate() {
            if Some(r) == f0 {
                continue;
            }
            offsets[r] = dense_comp.len();
            for _ in 0..re.factor.levels.len() {
                for t in 0..re.terms.len() {
                    dense_comp.push(comp_index(r, t));
                }
            }
        }
        let q_o = dense_comp.len();
        let d = q_o + p + 1;
        let levels0 = f0.map_or(0, |r| random[r].factor.levels.len());
        let mut a = vec![DMatrix::zeros(m0, m0); levels0];
        let mut b = vec![DMatrix::zeros(m0, d); levels0];
        let mut dense = DMatrix::<f64>::zeros(d, d);

        let mut idx = Vec::with_capacity(d);
        let mut val = Vec::with_capacity(d);
        let mut z0 = vec![0.0; m0];
        for i in 0..n {
            idx.clear();
            val.clear();
            for (r, re) in random.iter().enumerate() {
                if Some(r) == f0 {
                    continue;
                }
                let base = offsets[r] + re.factor.index[i] * re.terms.len();
                for (t, term) in re.terms.iter().enumerate() {
                    idx.push(base + t);
                    val.push(term.value(i));
                }
            }
            for j in 0..p {
                idx.push(q_o + j);
                val.push(problem.x[(i, j)]);
            }
            idx.push(d - 1);
            val.push(problem.y[i]);

            for (ka, (&ia, &va)) in idx.iter().zip(&val).enumerate() {
                for (&ib, &vb) in idx[ka..].iter().zip(&val[ka..]) {
                    dense[(ia, ib)] += va * vb;
                }
            }
            if let Some(r) = f0 {
                let re = &random[r];
                let l = re.factor.index[i];
                for (t, term) in re.terms.iter().enumerate() {
                    z0[t] = term.value(i);
                }
                for s in 0..m0 {
                    for t in 0..m0 {
                        a[l][(s, t)] += z0[s] * z0[t];
                    }
                    for (&ib, &vb) in idx.iter().zip(&val) {
                        b[l][(s, ib)] += z0[s] * vb;
                    }
                }
            }
        }
        for ia in 0..d {
            for ib in 0..ia {
                dense[(ia, ib)] = dense[(ib, ia)];
            }
        }
        Reml {
            n,
            p,
            comps,
            comp_cols,
            f0,
            comp0,
            dense_comp,
            offsets,
            q_o,
            d,
            a,
            b,
            dense,
        }
    }

    fn theta(&self, phi: &[f64], free: &[bool]) -> Vec<f64> {
        phi.iter()
            .zip(free)
            .map(|(&f, &on)| if on { (0.5 * f).exp() } else { 0.0 })
            .collect()
    }

    fn factor(&self, theta: &[f64]) -> Result<Factorization> {
        let d = self.d;
        let s: Vec<f64> = (0..d)
            .map(|j| if j < self.q_o { theta[self.dense_comp[j]] } else { 1.0 })
            .collect();
        let t0: Vec<f64> = self.comp0.iter().map(|&k| theta[k]).collect();
        let m0 = t0.len();

        let mut g = DMatrix::from_fn(d, d, |i, j| self.dense[(i, j)] * s[i] * s[j]);
        for j in 0..self.q_o {
            g[(j, j)] += 1.0;
        }
        let mut logdet_re = 0.0;
        let mut l0 = Vec::with_capacity(self.a.len());
        let mut ws = Vec::with_capacity(self.a.len());
        for (a, b) in self.a.iter().zip(&self.b) {
            let c = DMatrix::from_fn(m0, m0, |i, j| t0[i] * a[(i, j)] * t0[j] + if i == j { 1.0 } else { 0.0 });
            let l = Cholesky::new(c)
                .ok_or_else(|| Error::Numerical("random-effect block is not positive definite".into()))?
                .unpack();
            let e = DMatrix::from_fn(m0, d, |i, j| t0[i] * b[(i, j)] * s[j]);
            let w = l.solve_lower_triangular(&e).unwrap();
            g.gemm_tr(-1.0, &w, &w, 1.0);
            logdet_re += 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            l0.push(l);
            ws.push(w);
        }
        let lg = Cholesky::new(g)
            .ok_or_else(|| Error::Numerical("penalized normal equations are not positive definite".into()))?
            .unpack();
        let diag = lg.diagonal();
        logdet_re += 2.0 * diag.iter().take(self.q_o).map(|v| v.ln()).sum::<f64>();
        let logdet_x = 2.0 * diag.iter().skip(self.q_o).take(self.p).map(|v| v.ln()).sum::<f64>();
        let r = diag[d - 1];
        Ok(Factorization {
            l0,
            w: ws,
            lg,
            logdet_re,
            logdet_x,
            r2: r * r,
        })
    }

    fn criterion(&self, f: &Factorization) -> f64 {
        let dof = (self.n - self.p) as f64;
        f.logdet_re + f.logdet_x + dof * (1.0 + LN_2PI + (f.r2 / dof).ln())
    }

    fn ml_log_likelihood(&self, f: &Factorization) -> f64 {
        let n = self.n as f64;
        -0.5 * (f.logdet_re + n * (1.0 + LN_2PI + (f.r2 / n).ln()))
    }

    fn l11(&self, f: &Factorization) -> DMatrix<f64> {
        f.lg.view((0, 0), (self.d - 1, self.d - 1)).clone_owned()
    }

    fn solve(&self, f: &Factorization, l11: &DMatrix<f64>) -> Solution {
        let d = self.d;
        let last = DVector::from_iterator(d - 1, (0..d - 1).map(|j| f.lg[(d - 1, j)]));
        let v = l11.tr_solve_lower_triangular(&last).unwrap();
        let u0 = f
            .l0
            .iter()
            .zip(&f.w)
            .map(|(l, w)| {
                let rhs = w.column(d - 1) - w.columns(0, d - 1) * &v;
                l.tr_solve_lower_triangular(&rhs).unwrap()
            })
            .collect();
        Solution { v, u0 }
    }

    /// Derivative of the criterion with respect to each `phi`.
    fn gradient(&self, f: &Factorization, l11: &DMatrix<f64>, sol: &Solution) -> Vec<f64> {
        let d1 = self.d - 1;
        let dof = (self.n - self.p) as f64;
        let linv = l11.solve_lower_triangular(&DMatrix::identity(d1, d1)).unwrap();
        let mut minv_diag = vec![0.0; self.comps.len()];
        let mut u2 = vec![0.0; self.comps.len()];
        for j in 0..self.q_o {
            let k = self.dense_comp[j];
            minv_diag[k] += linv.column(j).norm_squared();
            u2[k] += sol.v[j] * sol.v[j];
        }
        let linv_t = linv.transpose();
        for ((l, w), u) in f.l0.iter().zip(&f.w).zip(&sol.u0) {
            let m0 = l.nrows();
            let y = l.solve_lower_triangular(&DMatrix::identity(m0, m0)).unwrap().transpose();
            let yv = &y * (w.columns(0, d1) * &linv_t);
            for t in 0..m0 {
                let k = self.comp0[t];
                minv_diag[k] += y.row(t).norm_squared() + yv.row(t).norm_squared();
                u2[k] += u[t] * u[t];
            }
        }
        (0..self.comps.len())
            .map(|k| self.comp_cols[k] as f64 - minv_diag[k] - dof * u2[k] / f.r2)
            .collect()
    }

    fn eval(&self, phi: &[f64], free: &[bool]) -> Result<(f64, Vec<f64>)> {
        let f = self.factor(&self.theta(phi, free))?;
        let l11 = self.l11(&f);
        let sol = self.solve(&f, &l11);
        let g = self.gradient(&f, &l11, &sol);
        let crit = self.criterion(&f);
        if !crit.is_finite() {
            return Err(Error::Numerical("REML criterion is not finite".into()));
        }
        Ok((crit, g))
    }

    /// BFGS with backtracking over the free components. Returns whether the
    /// convergence test was met.
    fn optimize(
        &self,
        phi: &mut [f64],
        free: &[bool],
        trace: &mut Vec<f64>,
        iterations: &mut usize,
        opts: &LmmOptions,
    ) -> Result<bool> {
        let act: Vec<usize> = (0..phi.len()).filter(|&k| free[k]).collect();
        let m = act.len();
        let (mut fx, g_full) = self.eval(phi, free)?;
        trace.push(fx);
        if m == 0 {
            return Ok(true);
        }
        let pick = |g: &[f64]| DVector::from_iterator(m, act.iter().map(|&k| g[k]));
        let mut g = pick(&g_full);
        let mut h = DMatrix::<f64>::identity(m, m);
        let mut fresh = true;
        while *iterations < opts.max_iter {
            let mut dir = -(&h * &g);
            if dir.dot(&g) >= 0.0 {
                h = DMatrix::identity(m, m);
                fresh = true;
                dir = -g.clone();
            }
            let big = dir.amax();
            if big > MAX_STEP {
                dir *= MAX_STEP / big;
            }
            let slope = dir.dot(&g);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = phi.to_vec();
                for (a, &k) in act.iter().enumerate() {
                    trial[k] = (phi[k] + t * dir[a]).clamp(PHI_MIN, PHI_MAX);
                }
                if let Ok((ft, gt)) = self.eval(&trial, free) {
                    if ft <= fx + 1e-4 * t * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((trial, ft, gt)) = accepted else {
                if fresh {
                    // No decrease along steepest descent: stationary to working precision.
                    return Ok(true);
                }
                h = DMatrix::identity(m, m);
                fresh = true;
                continue;
            };
            *iterations += 1;
            let g_new = pick(&gt);
            let s = DVector::from_iterator(m, act.iter().map(|&k| trial[k] - phi[k]));
            let yk = &g_new - &g;
            let sy = s.dot(&yk);
            if sy > 1e-12 * s.norm() * yk.norm() {
                let rho = 1.0 / sy;
                let hy = &h * &yk;
                let yhy = yk.dot(&hy);
                h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
                fresh = false;
            }
            let rel = (fx - ft).abs() / ft.abs().max(1.0);
            phi.copy_from_slice(&trial);
            fx = ft;
            g = g_new;
            trace.push(fx);
            if rel < opts.rel_tol && g.amax() < 1e-2 {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn finish(
        &self,
        problem: &LmmProblem,
        phi: &[f64],
        free: &[bool],
        criterion_trace: Vec<f64>,
        iterations: usize,
        converged: bool,
    ) -> Result<LmmFit> {
        let theta = self.theta(phi, free);
        let f = self.factor(&theta)?;
        let l11 = self.l11(&f);
        let sol = self.solve(&f, &l11);
        let dof = (self.n - self.p) as f64;
        let sigma2 = f.r2 / dof;

        let d1 = self.d - 1;
        let linv = l11.solve_lower_triangular(&DMatrix::identity(d1, d1)).unwrap();
        let lx = linv.columns(self.q_o, self.p);
        let cov = (lx.transpose() * lx) * sigma2;
        let fixed = problem
            .fixed_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let estimate = sol.v[self.q_o + j];
                let std_error = cov[(j, j)].max(0.0).sqrt();
                let z_value = estimate / std_error;
                FixedEffect {
                    name: name.clone(),
                    estimate,
                    std_error,
                    z_value,
                    p_value: wald_p_value(z_value),
                }
            })
            .collect();
        let components = self
            .comps
            .iter()
            .zip(&theta)
            .map(|(&(r, t), th)| VarianceComponent {
                group: problem.random[r].factor.name.clone(),
                term: problem.random[r].terms[t].name.clone(),
                variance: th * th * sigma2,
            })
            .collect();
        let modes = problem
            .random
            .iter()
            .enumerate()
            .map(|(r, re)| {
                let m = re.terms.len();
                let modes = (0..re.factor.levels.len())
                    .map(|l| {
                        (0..m)
                            .map(|t| {
                                if Some(r) == self.f0 {
                                    theta[self.comp0[t]] * sol.u0[l][t]
                                } else {
                                    let j = self.offsets[r] + l * m + t;
                                    theta[self.dense_comp[j]] * sol.v[j]
                                }
                            })
                            .collect()
                    })
                    .collect();
                GroupModes {
                    group: re.factor.name.clone(),
                    terms: re.terms.iter().map(|t| t.name.clone()).collect(),
                    levels: re.factor.levels.clone(),
                    modes,
                }
            })
            .collect();
        Ok(LmmFit {
            fixed,
            vcov: (0..self.p).map(|i| (0..self.p).map(|j| cov[(i, j)]).collect()).collect(),
            components,
            residual_variance: sigma2,
            modes,
            log_likelihood: self.ml_log_likelihood(&f),
            reml_criterion: self.criterion(&f),
            converged,
            iterations,
            criterion_trace,
            n_obs: self.n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn labels(prefix: &str, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|i| format!("{prefix}{i:03}")).collect()
    }

    /// Balanced crossed design: `np` participants x `ni` items x `nt` tokens.
    fn crossed(np: usize, ni: usize, nt: usize, seed: u64, sd_p: f64, sd_i: f64, sd_slope: f64) -> LmmProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { rng.sample(StandardNormal) };
        let item_x: Vec<Vec<f64>> = (0..ni).map(|_| (0..nt).map(|_| g()).collect()).collect();
        let pe: Vec<f64> = (0..np).map(|_| sd_p * g()).collect();
        let ie: Vec<f64> = (0..ni).map(|_| sd_i * g()).collect();
        let se: Vec<f64> = (0..ni).map(|_| sd_slope * g()).collect();
        let (mut y, mut xs, mut pi, mut ii) = (vec![], vec![], vec![], vec![]);
        for p in 0..np {
            for i in 0..ni {
                for t in 0..nt {
                    let x = item_x[i][t];
                    y.push(300.0 + 20.0 * x + pe[p] + ie[i] + se[i] * x + 10.0 * g());
                    xs.push(x);
                    pi.push(p);
                    ii.push(i);
                }
            }
        }
        let n = y.len();
        LmmProblem {
            x: DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { xs[r] }),
            y,
            fixed_names: vec!["(Intercept)".into(), "x".into()],
            random: vec![
                RandomEffects {
                    factor: GroupingFactor::from_labels("item", &labels("i", &ii)),
                    terms: vec![RandomTerm::intercept(), RandomTerm::slope("x", xs.clone())],
                },
                RandomEffects {
                    factor: GroupingFactor::from_labels("participant", &labels("p", &pi)),
                    terms: vec![RandomTerm::intercept()],
                },
            ],
        }
    }

    /// Dense reference: REML deviance by explicit V = sigma^2 (Z G Z' + I).
    fn dense_reml(problem: &LmmProblem, gamma: &[f64]) -> f64 {
        let n = problem.y.len();
        let p = problem.x.ncols();
        let mut v = DMatrix::<f64>::identity(n, n);
        let mut k = 0;
        for re in &problem.random {
            for t in &re.terms {
                for a in 0..n {
                    for b in 0..n {
                        if re.factor.index[a] == re.factor.index[b] {
                            v[(a, b)] += gamma[k] * t.value(a) * t.value(b);
                        }
                    }
                }
                k += 1;
            }
        }
        let vinv = v.clone().try_inverse().unwrap();
        let x = &problem.x;
        let y = DVector::from_column_slice(&problem.y);
        let xtvx = x.transpose() * &vinv * x;
        let beta = xtvx.clone().try_inverse().unwrap() * (x.transpose() * &vinv * &y);
        let r = &y - x * beta;
        let dof = (n - p) as f64;
        let s2 = (r.transpose() * &vinv * &r)[(0, 0)] / dof;
        v.determinant().ln() + xtvx.determinant().ln() + dof * (1.0 + LN_2PI + s2.ln())
    }

    #[test]
    fn criterion_matches_dense_formula() {
        let prob = crossed(5, 4, 2, 3, 20.0, 15.0, 5.0);
        let reml = Reml::new(&prob);
        let gamma = [1.7, 0.3, 0.9];
        let theta: Vec<f64> = gamma.iter().map(|g: &f64| g.sqrt()).collect();
        let f = reml.factor(&theta).unwrap();
        let got = reml.criterion(&f);
        let want = dense_reml(&prob, &gamma);
        assert!((got - want).abs() < 1e-8 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prob = crossed(6, 5, 3, 8, 20.0, 15.0, 5.0);
        let reml = Reml::new(&prob);
        let phi = [0.4, -1.1, 0.2];
        let free = [true; 3];
        let (_, g) = reml.eval(&phi, &free).unwrap();
        for k in 0..3 {
            let h = 1e-5;
            let mut a = phi;
            let mut b = phi;
            a[k] += h;
            b[k] -= h;
            let fd = (reml.eval(&a, &free).unwrap().0 - reml.eval(&b, &free).unwrap().0) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "component {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn constant_response_is_a_perfect_fit() {
        let mut prob = crossed(4, 3, 2, 1, 1.0, 1.0, 0.0);
        prob.x = DMatrix::from_element(prob.y.len(), 1, 1.0);
        prob.fixed_names = vec!["(Intercept)".into()];
        prob.y = vec![412.5; prob.y.len()];
        let fit = fit_lmm(&prob, &LmmOptions::default()).unwrap();
        assert!((fit.fixed[0].estimate - 412.5).abs() < 1e-12);
        assert_eq!(fit.residual_variance, 0.0);
        assert!(fit.components.iter().all(|c| c.variance == 0.0));
    }

    #[test]
    fn collinear_columns_are_named() {
        let mut prob = crossed(4, 3, 2, 1, 1.0, 1.0, 0.0);
        let n = prob.y.len();
        let x = prob.x.clone();
        prob.x = DMatrix::from_fn(n, 3, |r, c| if c < 2 { x[(r, c)] } else { 3.0 * x[(r, 1)] });
        prob.fixed_names.push("x_copy".into());
        match fit_lmm(&prob, &LmmOptions::default()) {
            Err(Error::Collinear { column, with }) => {
                assert_eq!(column, "x_copy");
                assert_eq!(with, "x");
            }
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn single_level_factor_is_rejected() {
        let mut prob = crossed(3, 3, 2, 1, 1.0, 1.0, 0.0);
        prob.random[1].factor = GroupingFactor::from_labels("participant", &vec!["p"; prob.y.len()]);
        assert!(matches!(fit_lmm(&prob, &LmmOptions::default()), Err(Error::Data(_))));
    }

    #[test]
    fn recovers_variance_components() {
        let prob = crossed(40, 30, 4, 11, 30.0, 20.0, 6.0);
        let fit = fit_lmm(&prob, &LmmOptions::default()).unwrap();
        assert!(fit.converged);
        let x = fit.coefficient("x").unwrap();
        assert!((x.estimate - 20.0).abs() < 3.0 * x.std_error);
        let var = |g: &str, t: &str| {
            fit.components
                .iter()
                .find(|c| c.group == g && c.term == t)
                .unwrap()
                .variance
        };
        assert!((var("participant", "(Intercept)").sqrt() - 30.0).abs() < 10.0);
        assert!((var("item", "(Intercept)").sqrt() - 20.0).abs() < 8.0);
        assert!((var("item", "x").sqrt() - 6.0).abs() < 3.0);
        assert!((fit.residual_variance.sqrt() - 10.0).abs() < 0.5);
        for w in fit.criterion_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn wald_p_values() {
        assert_eq!(wald_p_value(0.0), 1.0);
        assert!((wald_p_value(1.959_963_984_540_054) - 0.05).abs() < 1e-9);
        assert_eq!(wald_p_value(f64::INFINITY), 0.0);
    }
}
