//! Derivative-free minimizers: Nelder-Mead, Powell's direction-set method
//! and COBYLA (linear-interpolation trust region, used here without
//! constraints).
//!
//! Every optimizer logs one trace point per objective evaluation and stops
//! before exceeding `max_evals`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "nelder-mead")]
    NelderMead,
    #[serde(rename = "powell")]
    Powell,
    #[serde(rename = "cobyla")]
    Cobyla,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::NelderMead, Method::Powell, Method::Cobyla];

    pub fn name(self) -> &'static str {
        match self {
            Method::NelderMead => "nelder-mead",
            Method::Powell => "powell",
            Method::Cobyla => "cobyla",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nelder-mead" | "neldermead" | "nm" => Ok(Method::NelderMead),
            "powell" => Ok(Method::Powell),
            "cobyla" => Ok(Method::Cobyla),
            _ => Err(Error::Validation(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Objective-value tolerance: simplex spread for Nelder-Mead, decrease
    /// per sweep for Powell, final trust radius for COBYLA.
    pub ftol: f64,
    pub max_evals: usize,
    /// Initial simplex edge, line-search step or trust radius, in radians.
    pub initial_step: f64,
    /// Seed for the random initial point when the caller asks for one.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Cobyla,
            ftol: 0.01,
            max_evals: 300,
            initial_step: 0.3,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        OptimizerConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ftol > 0.0 && self.ftol.is_finite()) {
            return Err(Error::OutOfRange {
                name: "ftol",
                value: self.ftol,
                range: "(0, inf)",
            });
        }
        if self.max_evals == 0 {
            return Err(Error::Validation("max_evals must be at least 1".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::OutOfRange {
                name: "initial_step",
                value: self.initial_step,
                range: "(0, inf)",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub theta: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    pub n_evals: usize,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
}

impl OptResult {
    fn from_trace(trace: Vec<TracePoint>, converged: bool) -> OptResult {
        let best = trace
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
            .map(|(_, p)| p.clone())
            .expect("at least one evaluation");
        OptResult {
            best_theta: best.theta,
            best_value: best.value,
            n_evals: trace.len(),
            trace,
            converged,
        }
    }

    /// Running minimum of the trace values.
    pub fn running_min(&self) -> Vec<f64> {
        self.trace
            .iter()
            .scan(f64::INFINITY, |m, p| {
                *m = m.min(p.value);
                Some(*m)
            })
            .collect()
    }
}

/// Objective with an evaluation counter.
pub struct ObjectiveFn<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> ObjectiveFn<F> {
    pub fn new(f: F) -> Self {
        ObjectiveFn { f, evals: 0 }
    }

    pub fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        (self.f)(x)
    }

    pub fn evals(&self) -> usize {
        self.evals
    }
}

/// Marker for a spent evaluation budget.
struct Exhausted;

struct Tracker<'a, F> {
    obj: &'a mut ObjectiveFn<F>,
    trace: Vec<TracePoint>,
    max_evals: usize,
}

impl<'a, F: FnMut(&[f64]) -> f64> Tracker<'a, F> {
    fn new(obj: &'a mut ObjectiveFn<F>, max_evals: usize) -> Self {
        Tracker {
            obj,
            trace: Vec::new(),
            max_evals,
        }
    }

    fn eval(&mut self, x: &[f64]) -> std::result::Result<f64, Exhausted> {
        if self.trace.len() >= self.max_evals {
            return Err(Exhausted);
        }
        let value = self.obj.call(x);
        self.trace.push(TracePoint {
            theta: x.to_vec(),
            value,
        });
        Ok(value)
    }

    fn finish(self, converged: std::result::Result<bool, Exhausted>) -> OptResult {
        OptResult::from_trace(self.trace, converged.unwrap_or(false))
    }
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(
    f: &mut ObjectiveFn<F>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptResult> {
    cfg.validate()?;
    if theta0.is_empty() || theta0.iter().any(|t| !t.is_finite()) {
        return Err(Error::Validation("initial point must be finite and nonempty".into()));
    }
    Ok(match cfg.method {
        Method::NelderMead => nelder_mead(f, theta0, cfg),
        Method::Powell => powell(f, theta0, cfg),
        Method::Cobyla => cobyla(f, theta0, cfg),
    })
}

/// `|f(x) - min| < 0.01`, the success criterion of the optimizer benchmark.
pub fn is_success(result: &OptResult, e0: f64) -> bool {
    (result.best_value - e0).abs() < SUCCESS_TOL
}

pub const SUCCESS_TOL: f64 = 0.01;

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

// ---------------------------------------------------------------------------
// Nelder-Mead

const NM_REFLECT: f64 = 1.0;
const NM_EXPAND: f64 = 2.0;
const NM_CONTRACT: f64 = 0.5;
const NM_SHRINK: f64 = 0.5;

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut ObjectiveFn<F>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> OptResult {
    let mut t = Tracker::new(f, cfg.max_evals);
    let status = nelder_mead_loop(&mut t, theta0, cfg);
    t.finish(status)
}

fn nelder_mead_loop<F: FnMut(&[f64]) -> f64>(
    t: &mut Tracker<'_, F>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> std::result::Result<bool, Exhausted> {
    let n = theta0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((theta0.to_vec(), t.eval(theta0)?));
    for i in 0..n {
        let mut x = theta0.to_vec();
        x[i] += cfg.initial_step;
        let fx = t.eval(&x)?;
        simplex.push((x, fx));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 < cfg.ftol {
            return Ok(true);
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = toward(NM_REFLECT);
        let fr = t.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = toward(NM_REFLECT * NM_EXPAND);
            let fe = t.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let accepted = if fr < simplex[n].1 {
            let xc = toward(NM_REFLECT * NM_CONTRACT);
            let fc = t.eval(&xc)?;
            (fc <= fr).then_some((xc, fc))
        } else {
            let xcc = toward(-NM_CONTRACT);
            let fcc = t.eval(&xcc)?;
            (fcc < simplex[n].1).then_some((xcc, fcc))
        };
        match accepted {
            Some(v) => simplex[n] = v,
            None => {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| b + NM_SHRINK * (v - b))
                        .collect();
                    let fx = t.eval(&x)?;
                    *vertex = (x, fx);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Powell

const GOLDEN: f64 = 1.618_033_988_749_895;
const GROW_LIMIT: f64 = 110.0;
const BRENT_CGOLD: f64 = 0.381_966_0;
const BRENT_MAX_ITER: usize = 500;
/// Relative tolerance of the Brent line minimization, in units of the step
/// parameter along the current direction.
const POWELL_LINE_TOL: f64 = 0.2;

pub fn powell<F: FnMut(&[f64]) -> f64>(
    f: &mut ObjectiveFn<F>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> OptResult {
    let mut t = Tracker::new(f, cfg.max_evals);
    let status = powell_loop(&mut t, theta0, cfg);
    t.finish(status)
}

fn powell_loop<F: FnMut(&[f64]) -> f64>(
    t: &mut Tracker<'_, F>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> std::result::Result<bool, Exhausted> {
    let n = theta0.len();
    let mut directions: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = cfg.initial_step;
            d
        })
        .collect();
    let mut x = theta0.to_vec();
    let mut fval = t.eval(&x)?;
    let mut x_start = x.clone();

    loop {
        let f_start = fval;
        let mut biggest_drop = 0.0;
        let mut big_index = 0;
        for (i, d) in directions.iter_mut().enumerate() {
            let before = fval;
            let (alpha, f_new) = line_minimize(t, &x, d, fval)?;
            x = axpy(alpha, d, &x);
            fval = f_new;
            if before - fval > biggest_drop {
                biggest_drop = before - fval;
                big_index = i;
            }
        }
        if f_start - fval < cfg.ftol {
            return Ok(true);
        }

        let new_dir: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let x_extrap: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| 2.0 * a - b).collect();
        x_start = x.clone();
        let f_extrap = t.eval(&x_extrap)?;
        if f_start > f_extrap {
            let a = f_start - fval - biggest_drop;
            let b = f_start - f_extrap;
            let crit = 2.0 * (f_start + f_extrap - 2.0 * fval) * a * a - biggest_drop * b * b;
            if crit < 0.0 {
                let (alpha, f_new) = line_minimize(t, &x, &new_dir, fval)?;
                x = axpy(alpha, &new_dir, &x);
                fval = f_new;
                if new_dir.iter().any(|&v| v != 0.0) {
                    directions[big_index] = directions[n - 1].clone();
                    directions[n - 1] = new_dir;
                }
            }
        }
    }
}

/// Minimizes `f(x + alpha d)` over `alpha`, starting from `alpha = 0` whose
/// value `f0` is already known. Returns the best `(alpha, value)` seen.
fn line_minimize<F: FnMut(&[f64]) -> f64>(
    t: &mut Tracker<'_, F>,
    x: &[f64],
    d: &[f64],
    f0: f64,
) -> std::result::Result<(f64, f64), Exhausted> {
    if d.iter().all(|&v| v == 0.0) {
        return Ok((0.0, f0));
    }
    let mut phi = |alpha: f64| t.eval(&axpy(alpha, d, x));
    let bracket = bracket_minimum(&mut phi, f0)?;
    let (alpha, value) = brent(&mut phi, bracket, POWELL_LINE_TOL)?;
    // never step uphill from the known point
    Ok(if value <= f0 { (alpha, value) } else { (0.0, f0) })
}

/// Three abscissae `a, b, c` with `f(b) <= f(a), f(c)`, grown from
/// `(0, 1)` by golden-ratio steps with parabolic extrapolation.
fn bracket_minimum<P: FnMut(f64) -> std::result::Result<f64, Exhausted>>(
    phi: &mut P,
    f0: f64,
) -> std::result::Result<[(f64, f64); 3], Exhausted> {
    let (mut xa, mut fa) = (0.0, f0);
    let mut xb = 1.0;
    let mut fb = phi(xb)?;
    if fa < fb {
        std::mem::swap(&mut xa, &mut xb);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut xc = xb + GOLDEN * (xb - xa);
    let mut fc = phi(xc)?;
    let mut iter = 0;
    while fc < fb {
        let tmp1 = (xb - xa) * (fb - fc);
        let tmp2 = (xb - xc) * (fb - fa);
        let val = tmp2 - tmp1;
        let denom = if val.abs() < 1e-21 { 2e-21 } else { 2.0 * val };
        let mut w = xb - ((xb - xc) * tmp2 - (xb - xa) * tmp1) / denom;
        let wlim = xb + GROW_LIMIT * (xc - xb);
        iter += 1;
        if iter > 1000 {
            break;
        }
        let fw;
        if (w - xc) * (xb - w) > 0.0 {
            let fw1 = phi(w)?;
            if fw1 < fc {
                return Ok(order3((xb, fb), (w, fw1), (xc, fc)));
            } else if fw1 > fb {
                return Ok(order3((xa, fa), (xb, fb), (w, fw1)));
            }
            w = xc + GOLDEN * (xc - xb);
            fw = phi(w)?;
        } else if (w - wlim) * (wlim - xc) >= 0.0 {
            w = wlim;
            fw = phi(w)?;
        } else if (w - wlim) * (xc - w) > 0.0 {
            let fw1 = phi(w)?;
            if fw1 < fc {
                xb = xc;
                xc = w;
                w = xc + GOLDEN * (xc - xb);
                fb = fc;
                fc = fw1;
                fw = phi(w)?;
            } else {
                fw = fw1;
            }
        } else {
            w = xc + GOLDEN * (xc - xb);
            fw = phi(w)?;
        }
        xa = xb;
        xb = xc;
        xc = w;
        fa = fb;
        fb = fc;
        fc = fw;
    }
    Ok(order3((xa, fa), (xb, fb), (xc, fc)))
}

fn order3(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> [(f64, f64); 3] {
    if a.0 <= c.0 {
        [a, b, c]
    } else {
        [c, b, a]
    }
}

/// Brent's parabolic/golden-section minimization inside a bracket.
fn brent<P: FnMut(f64) -> std::result::Result<f64, Exhausted>>(
    phi: &mut P,
    bracket: [(f64, f64); 3],
    tol: f64,
) -> std::result::Result<(f64, f64), Exhausted> {
    let [(xa, _), (xb, fb), (xc, _)] = bracket;
    let (mut a, mut b) = if xa < xc { (xa, xc) } else { (xc, xa) };
    let (mut x, mut w, mut v) = (xb, xb, xb);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let mut deltax: f64 = 0.0;
    let mut rat: f64 = 0.0;
    for _ in 0..BRENT_MAX_ITER {
        let tol1 = tol * x.abs() + 1e-11;
        let tol2 = 2.0 * tol1;
        let xmid = 0.5 * (a + b);
        if (x - xmid).abs() < tol2 - 0.5 * (b - a) {
            break;
        }
        if deltax.abs() <= tol1 {
            deltax = if x >= xmid { a - x } else { b - x };
            rat = BRENT_CGOLD * deltax;
        } else {
            let tmp1 = (x - w) * (fx - fv);
            let mut tmp2 = (x - v) * (fx - fw);
            let mut p = (x - v) * tmp2 - (x - w) * tmp1;
            tmp2 = 2.0 * (tmp2 - tmp1);
            if tmp2 > 0.0 {
                p = -p;
            }
            tmp2 = tmp2.abs();
            let dx_temp = deltax;
            deltax = rat;
            if p > tmp2 * (a - x) && p < tmp2 * (b - x) && p.abs() < (0.5 * tmp2 * dx_temp).abs() {
                rat = p / tmp2;
                let u = x + rat;
                if (u - a) < tol2 || (b - u) < tol2 {
                    rat = if xmid - x >= 0.0 { tol1 } else { -tol1 };
                }
            } else {
                deltax = if x >= xmid { a - x } else { b - x };
                rat = BRENT_CGOLD * deltax;
            }
        }
        let u = if rat.abs() < tol1 {
            if rat >= 0.0 {
                x + tol1
            } else {
                x - tol1
            }
        } else {
            x + rat
        };
        let fu = phi(u)?;
        if fu > fx {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        } else {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        }
    }
    Ok((x, fx))
}

// ---------------------------------------------------------------------------
// COBYLA

/// Simplex acceptability: vertices must be at least `ALPHA * rho` from the
/// opposite face and at most `BETA * rho` from the pivot.
const COBYLA_ALPHA: f64 = 0.25;
const COBYLA_BETA: f64 = 2.1;
/// Length of a geometry-improving step relative to `rho`.
const COBYLA_GAMMA: f64 = 0.5;
const COBYLA_DELTA: f64 = 1.1;
/// Final trust radius in radians per unit of `ftol`.
pub const COBYLA_RHO_END_PER_FTOL: f64 = 0.1;

/// Unconstrained COBYLA. The trust radius starts at `initial_step` and
/// halves down to `ftol`.
pub fn cobyla<F: FnMut(&[f64]) -> f64>(
    f: &mut ObjectiveFn<F>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> OptResult {
    let mut t = Tracker::new(f, cfg.max_evals);
    let rho_end = (cfg.ftol * COBYLA_RHO_END_PER_FTOL).min(cfg.initial_step);
    let status = cobyla_loop(&mut t, theta0, cfg.initial_step, rho_end);
    t.finish(status)
}

/// Simplex stored as a pivot (best vertex) plus the displacements of the
/// other `n` vertices, with the inverse of the displacement matrix.
struct CobylaSimplex {
    pivot: Vec<f64>,
    f_pivot: f64,
    /// `disp[j]` is vertex `j` minus the pivot.
    disp: Vec<Vec<f64>>,
    f: Vec<f64>,
    /// Rows of the inverse: `inv[j] . disp[k] = delta_jk`.
    inv: Vec<Vec<f64>>,
}

impl CobylaSimplex {
    fn refresh_inverse(&mut self) {
        self.inv = invert_rows(&self.disp);
    }

    /// Moves the lowest vertex into pivot position.
    fn pivot_on_best(&mut self) {
        let best = (0..self.f.len())
            .filter(|&j| self.f[j] < self.f_pivot)
            .min_by(|&i, &j| self.f[i].total_cmp(&self.f[j]));
        let Some(best) = best else { return };
        let shift = self.disp[best].clone();
        for (p, s) in self.pivot.iter_mut().zip(&shift) {
            *p += s;
        }
        for d in self.disp.iter_mut() {
            for (di, s) in d.iter_mut().zip(&shift) {
                *di -= s;
            }
        }
        self.disp[best] = shift.iter().map(|s| -s).collect();
        std::mem::swap(&mut self.f[best], &mut self.f_pivot);
        self.refresh_inverse();
    }

    /// Gradient of the linear interpolant through the vertices.
    fn gradient(&self) -> Vec<f64> {
        let n = self.pivot.len();
        let mut g = vec![0.0; n];
        for (j, row) in self.inv.iter().enumerate() {
            let df = self.f[j] - self.f_pivot;
            for (gi, r) in g.iter_mut().zip(row) {
                *gi += df * r;
            }
        }
        g
    }
}

/// Inverse of the matrix whose columns are `cols`, returned by rows.
fn invert_rows(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cols.len();
    // a[i][j] = cols[j][i], augmented with identity
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| cols[j][i]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = a[r][col];
                if factor != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= factor * a[col][c];
                    }
                }
            }
        }
    }
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

fn cobyla_loop<F: FnMut(&[f64]) -> f64>(
    t: &mut Tracker<'_, F>,
    theta0: &[f64],
    rho_begin: f64,
    rho_end: f64,
) -> std::result::Result<bool, Exhausted> {
    let n = theta0.len();
    let mut rho = rho_begin;

    // Initial simplex along the coordinate axes; whenever a new vertex beats
    // the pivot the two swap roles.
    let mut s = CobylaSimplex {
        pivot: theta0.to_vec(),
        f_pivot: t.eval(theta0)?,
        disp: (0..n)
            .map(|j| (0..n).map(|i| if i == j { rho } else { 0.0 }).collect())
            .collect(),
        f: vec![0.0; n],
        inv: Vec::new(),
    };
    for j in 0..n {
        let mut x = s.pivot.clone();
        x[j] += rho;
        let fx = t.eval(&x)?;
        if s.f_pivot <= fx {
            s.f[j] = fx;
        } else {
            s.pivot[j] += rho;
            s.f[j] = s.f_pivot;
            s.f_pivot = fx;
            for k in 0..=j {
                s.disp[k][j] = -rho;
            }
        }
    }
    s.refresh_inverse();

    // `trust_next` mirrors the reference implementation's branch flag: after
    // a trust-region step the next pass goes straight to another one.
    let mut trust_next = true;
    loop {
        s.pivot_on_best();
        let g = s.gradient();

        let par_sig = COBYLA_ALPHA * rho;
        let par_eta = COBYLA_BETA * rho;
        let vsig: Vec<f64> = s.inv.iter().map(|r| 1.0 / norm(r)).collect();
        let veta: Vec<f64> = s.disp.iter().map(|d| norm(d)).collect();
        let acceptable = (0..n).all(|j| vsig[j] >= par_sig && veta[j] <= par_eta);

        if !trust_next && !acceptable {
            // Replace the worst-shaped vertex by a step along its row of the
            // inverse, signed to decrease the linear model.
            let far = (0..n)
                .filter(|&j| veta[j] > par_eta)
                .max_by(|&i, &j| veta[i].total_cmp(&veta[j]));
            let drop = far.unwrap_or_else(|| {
                (0..n)
                    .filter(|&j| vsig[j] < par_sig)
                    .min_by(|&i, &j| vsig[i].total_cmp(&vsig[j]))
                    .expect("unacceptable simplex has a flat vertex")
            });
            let scale = COBYLA_GAMMA * rho * vsig[drop];
            let mut dx: Vec<f64> = s.inv[drop].iter().map(|v| scale * v).collect();
            if dot(&g, &dx) > 0.0 {
                dx.iter_mut().for_each(|v| *v = -*v);
            }
            let x = axpy(1.0, &dx, &s.pivot);
            let fx = t.eval(&x)?;
            s.disp[drop] = dx;
            s.f[drop] = fx;
            s.refresh_inverse();
            trust_next = true;
            continue;
        }

        let gnorm = norm(&g);
        let mut improved = false;
        if gnorm > 0.0 {
            let dx: Vec<f64> = g.iter().map(|v| -rho * v / gnorm).collect();
            let predicted = rho * gnorm;
            let x = axpy(1.0, &dx, &s.pivot);
            let fx = t.eval(&x)?;
            trust_next = true;
            let actual = s.f_pivot - fx;

            let mut ratio = if actual <= 0.0 { 1.0 } else { 0.0 };
            let mut drop = None;
            let mut sigbar = vec![0.0; n];
            for j in 0..n {
                let c = dot(&s.inv[j], &dx).abs();
                if c > ratio {
                    drop = Some(j);
                    ratio = c;
                }
                sigbar[j] = c * vsig[j];
            }
            let mut edge_max = COBYLA_DELTA * rho;
            let mut far = None;
            for j in 0..n {
                if sigbar[j] >= par_sig || sigbar[j] >= vsig[j] {
                    let dist = if actual > 0.0 {
                        norm(&dx.iter().zip(&s.disp[j]).map(|(a, b)| a - b).collect::<Vec<_>>())
                    } else {
                        veta[j]
                    };
                    if dist > edge_max {
                        far = Some(j);
                        edge_max = dist;
                    }
                }
            }
            if far.is_some() {
                drop = far;
            }
            if let Some(j) = drop {
                s.disp[j] = dx;
                s.f[j] = fx;
                s.refresh_inverse();
                improved = actual > 0.0 && actual >= 0.1 * predicted;
            }
        } else {
            trust_next = true;
        }
        if improved {
            continue;
        }

        if !acceptable {
            trust_next = false;
            continue;
        }
        if rho > rho_end {
            rho *= 0.5;
            if rho <= 1.5 * rho_end {
                rho = rho_end;
            }
            continue;
        }
        return Ok(true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 1.0).powi(2)).sum()
    }

    fn run(method: Method, f: impl FnMut(&[f64]) -> f64, x0: &[f64], ftol: f64, max_evals: usize) -> OptResult {
        let cfg = OptimizerConfig {
            method,
            ftol,
            max_evals,
            ..Default::default()
        };
        minimize(&mut ObjectiveFn::new(f), x0, &cfg).unwrap()
    }

    #[test]
    fn counter_increments_once_per_call() {
        let mut obj = ObjectiveFn::new(|x: &[f64]| x[0]);
        obj.call(&[1.0]);
        obj.call(&[2.0]);
        assert_eq!(obj.evals(), 2);
        let cfg = OptimizerConfig::default();
        let r = minimize(&mut obj, &[0.5, 0.5], &cfg).unwrap();
        assert_eq!(obj.evals(), 2 + r.n_evals);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let r = run(Method::NelderMead, quadratic, &[0.0; 6], 1e-12, 20_000);
        assert!(r.best_value < 1e-6, "{}", r.best_value);
        assert!(r.converged);
    }

    #[test]
    fn nelder_mead_constant_stops_after_first_simplex() {
        let r = run(Method::NelderMead, |_| 3.0, &[0.0; 6], 0.01, 300);
        assert!(r.converged);
        assert_eq!(r.n_evals, 7);
    }

    #[test]
    fn powell_quadratic() {
        let r = run(Method::Powell, quadratic, &[0.0; 6], 1e-10, 20_000);
        assert!(r.best_value < 1e-6, "{}", r.best_value);
        assert!(r.converged);
    }

    #[test]
    fn powell_abs_sum() {
        let r = run(
            Method::Powell,
            |x| x.iter().map(|v| v.abs()).sum(),
            &[0.7, -0.4, 1.1, 0.2, -0.9, 0.5],
            0.01,
            5000,
        );
        assert!(r.best_value < 0.01, "{}", r.best_value);
    }

    #[test]
    fn cobyla_quadratic() {
        let r = run(Method::Cobyla, quadratic, &[0.0; 6], 1e-4, 5000);
        assert!(r.best_value < 1e-4, "{}", r.best_value);
        assert!(r.converged);
    }

    #[test]
    fn cobyla_rosenbrock_embedded() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = OptimizerConfig {
            method: Method::Cobyla,
            ftol: 1e-4,
            max_evals: 300,
            initial_step: 2.0,
            seed: 0,
        };
        let mut x0 = [0.0; 6];
        x0[0] = -1.2;
        x0[1] = 1.0;
        let r = minimize(&mut ObjectiveFn::new(rosen), &x0, &cfg).unwrap();
        assert!(r.best_value < 1e-2, "{}", r.best_value);
        assert!(r.n_evals <= 300);
    }

    #[test]
    fn budget_is_respected() {
        for m in Method::ALL {
            let r = run(m, quadratic, &[0.0; 6], 1e-14, 37);
            assert!(r.n_evals <= 37);
            assert!(!r.converged);
            let r = run(m, quadratic, &[0.0; 6], 0.01, 1);
            assert_eq!(r.n_evals, 1);
        }
    }

    #[test]
    fn trace_invariants() {
        for m in Method::ALL {
            let r = run(m, |x| (x[0] - 0.3).powi(2) + x[1].sin(), &[1.0, 2.0, 0.5], 1e-3, 500);
            assert_eq!(r.n_evals, r.trace.len());
            let rm = r.running_min();
            assert!(rm.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*rm.last().unwrap(), r.best_value);
            let min = r.trace.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
            assert_eq!(min, r.best_value);
        }
    }

    #[test]
    fn deterministic_traces() {
        for m in Method::ALL {
            let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (2.0 * x[1]).cos() + x[2].powi(4);
            let a = run(m, f, &[1.0, 2.0, 0.5], 1e-3, 500);
            let b = run(m, f, &[1.0, 2.0, 0.5], 1e-3, 500);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::default();
        cfg.ftol = 0.0;
        assert!(cfg.validate().is_err());
        cfg.ftol = 0.01;
        cfg.max_evals = 0;
        assert!(cfg.validate().is_err());
        let mut obj = ObjectiveFn::new(quadratic);
        assert!(minimize(&mut obj, &[], &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn success_criterion() {
        let r = OptResult::from_trace(
            vec![TracePoint {
                theta: vec![0.0],
                value: -1.0,
            }],
            true,
        );
        assert!(is_success(&r, -1.0));
        assert!(!is_success(&r, -1.02));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lbfgs".parse::<Method>().is_err());
    }
}
