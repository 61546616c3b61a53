use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};

use super::{FitFlag, FitResult};
use crate::error::{Error, Result};

/// One free parameter: name, starting value and box bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub init: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Param {
    pub fn new(name: impl Into<String>, init: f64) -> Self {
        Self { name: name.into(), init, lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn bounded(name: impl Into<String>, init: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), init, lo, hi }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualScale {
    #[default]
    Linear,
    /// Residuals ln(model) − ln(data); data and model must be positive.
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsqOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest cosine between the residual
    /// vector and a Jacobian column (the scaled gradient).
    pub gtol: f64,
    /// Relative parameter step below which iteration stops.
    pub xtol: f64,
    pub scale: ResidualScale,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { max_iter: 200, gtol: 1e-8, xtol: 1e-13, scale: ResidualScale::Linear }
    }
}

impl LsqOptions {
    pub fn log() -> Self {
        Self { scale: ResidualScale::Log, ..Self::default() }
    }
}

/// Cosine test applied to the final point to decide `converged`.
const FINAL_GTOL: f64 = 1e-5;

struct Problem<'a, F> {
    model: F,
    x: &'a [f64],
    y: &'a [f64],
    sigma: Option<&'a [f64]>,
    scale: ResidualScale,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Magnitude scale for difference steps, from the starting point.
    typ: Vec<f64>,
    /// Residual norm treated as exact agreement.
    floor: f64,
}

impl<F: Fn(f64, &[f64]) -> f64> Problem<'_, F> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).enumerate().map(|(i, (&x, &y))| {
                let m = (self.model)(x, p);
                let r = match self.scale {
                    ResidualScale::Linear => m - y,
                    ResidualScale::Log => {
                        if m > 0.0 {
                            m.ln() - y.ln()
                        } else {
                            f64::INFINITY
                        }
                    }
                };
                match self.sigma {
                    Some(s) => r / s[i],
                    None => r,
                }
            }),
        )
    }

    fn jacobian(&self, p: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
        let n = self.x.len();
        let mut jac = DMatrix::zeros(n, p.len());
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-3 * self.typ[j]);
            let up = (p[j] + h).min(self.hi[j]);
            let dn = (p[j] - h).max(self.lo[j]);
            q[j] = up;
            let rp = if up > p[j] { Some(self.residuals(&q)) } else { None };
            q[j] = dn;
            let rm = if dn < p[j] { Some(self.residuals(&q)) } else { None };
            q[j] = p[j];
            let col = match (rp, rm) {
                (Some(a), Some(b)) => (a - b) / (up - dn),
                (Some(a), None) => (a - r0) / (up - p[j]),
                (None, Some(b)) => (r0 - b) / (p[j] - dn),
                (None, None) => DVector::zeros(n),
            };
            jac.set_column(j, &col);
        }
        jac
    }

    /// Largest cosine between the residual and a Jacobian column, ignoring
    /// components that push against an active bound. Residuals below the
    /// round-off floor count at the floor's size.
    fn gradient_cosine(&self, p: &[f64], jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
        let rn = r.norm().max(self.floor);
        if rn == 0.0 {
            return 0.0;
        }
        let g = jac.transpose() * r;
        (0..p.len())
            .filter(|&j| !((p[j] <= self.lo[j] && g[j] > 0.0) || (p[j] >= self.hi[j] && g[j] < 0.0)))
            .map(|j| {
                let cn = jac.column(j).norm();
                if cn == 0.0 {
                    0.0
                } else {
                    (g[j] / (cn * rn)).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Damped least squares (Levenberg–Marquardt with Marquardt's diagonal
/// scaling) on `y ≈ model(x, p)`, with an optional per-point σ and box
/// bounds enforced by projection.
///
/// The Jacobian is taken by central differences. Uncertainties come from the
/// covariance s²·(JᵀJ)⁻¹ and are omitted when J is rank deficient.
pub fn least_squares<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    params: &[Param],
    opts: &LsqOptions,
) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let k = params.len();
    if y.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::InvalidInput("x, y and sigma must have equal length".into()));
    }
    if k == 0 || n < k {
        return Err(Error::InvalidInput(format!("need at least as many points ({n}) as parameters ({k})")));
    }
    if sigma.is_some_and(|s| s.iter().any(|v| !(*v > 0.0))) {
        return Err(Error::InvalidInput("sigma must be positive".into()));
    }
    if opts.scale == ResidualScale::Log && y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("log-scale fit needs positive data".into()));
    }
    for p in params {
        if !(p.lo <= p.init && p.init <= p.hi) || !p.init.is_finite() {
            return Err(Error::InvalidInput(format!("initial `{}` = {} outside [{}, {}]", p.name, p.init, p.lo, p.hi)));
        }
    }

    let prob = Problem {
        model,
        x,
        y,
        sigma,
        scale: opts.scale,
        lo: params.iter().map(|p| p.lo).collect(),
        hi: params.iter().map(|p| p.hi).collect(),
        typ: params.iter().map(|p| if p.init != 0.0 { p.init.abs() } else { 1.0 }).collect(),
        floor: 1e-9
            * match opts.scale {
                ResidualScale::Log => (n as f64).sqrt(),
                ResidualScale::Linear => y
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / sigma.map_or(1.0, |s| s[i])).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            },
    };
    let mut p: Vec<f64> = params.iter().map(|p| p.init).collect();
    let mut r = prob.residuals(&p);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::InvalidInput("model is not finite at the initial point".into()));
    }
    let mut history = vec![cost.sqrt()];
    let mut lambda = 1e-3;
    let mut iter = 0;
    let mut jac = prob.jacobian(&p, &r);

    while iter < opts.max_iter {
        iter += 1;
        if cost == 0.0 || prob.gradient_cosine(&p, &jac, &r) < opts.gtol {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let diag: Vec<f64> = (0..k).map(|j| jtj[(j, j)].max(1e-300)).collect();
        let mut accepted = false;
        let mut small_step = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for (j, d) in diag.iter().enumerate() {
                a[(j, j)] += lambda * d;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial: Vec<f64> = (0..k).map(|j| (p[j] + delta[j]).clamp(prob.lo[j], prob.hi[j])).collect();
            let rt = prob.residuals(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (0..k)
                    .map(|j| (trial[j] - p[j]).abs() / p[j].abs().max(1e-300))
                    .fold(0.0, f64::max);
                small_step = rel < opts.xtol;
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                history.push(cost.sqrt());
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
        jac = prob.jacobian(&p, &r);
        if small_step {
            break;
        }
    }

    let cosine = prob.gradient_cosine(&p, &jac, &r);
    let converged = cost == 0.0 || cosine < FINAL_GTOL.max(opts.gtol);
    let mut flags = Vec::new();
    if !converged {
        flags.push(FitFlag::NotConverged);
    }

    // Covariance from the SVD of J.
    let svd = jac.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let full_rank = smax > 0.0 && svd.singular_values.iter().all(|&s| s > 1e-10 * smax);
    // An exactly determined problem has no residual degrees of freedom.
    let stderr = if full_rank && n > k {
        let vt = svd.v_t.as_ref().expect("requested V");
        let s2 = cost / (n - k) as f64;
        let mut se = IndexMap::new();
        for (j, prm) in params.iter().enumerate() {
            let var: f64 = (0..k).map(|i| (vt[(i, j)] / svd.singular_values[i]).powi(2)).sum();
            se.insert(prm.name.clone(), (var * s2).sqrt());
        }
        Some(se)
    } else {
        if !full_rank {
            flags.push(FitFlag::RankDeficient);
        }
        None
    };

    Ok(FitResult {
        params: params.iter().zip(&p).map(|(prm, v)| (prm.name.clone(), *v)).collect(),
        stderr,
        residual_norm: cost.sqrt(),
        converged,
        n_iter: iter,
        flags,
        history,
    })
}
