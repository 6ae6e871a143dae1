//! Minimizer oracle, tracking series `α, β, δ` and the trace-level
//! inequality checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::RunTrace;
use crate::linalg::{check_len, symmetric_extremes};
use crate::model::{BoxSet, OutputMap};
use crate::objective::{EpochConstants, QuadraticEpoch};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSolution {
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
    pub j_star: f64,
    /// `‖x − Π[x − ∇h(x)]‖` at exit.
    pub residual: f64,
    pub iterations: usize,
}

impl MinimizerSolution {
    /// Slack applied to every comparison against `J*`.
    pub fn eps_oracle(&self) -> f64 {
        1e-9 * (1.0 + self.j_star.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 1_000_000,
        }
    }
}

/// `h(x) = f(x) + g(Cx)` as `½xᵀHx + bᵀx + const`.
struct Reduced {
    h: DMatrix<f64>,
    b: DVector<f64>,
    h_norm: f64,
}

impl Reduced {
    fn new(epoch: &QuadraticEpoch, map: &OutputMap) -> Self {
        let c = map.matrix();
        let pc = epoch.p_mat() * c;
        let mut h = epoch.q_mat() + c.transpose() * &pc;
        h = (&h + h.transpose()) * 0.5;
        let b = epoch.q_vec() - c.tr_mul(&(epoch.p_mat() * epoch.theta()));
        let h_norm = symmetric_extremes(&h).1;
        Self { h, b, h_norm }
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.b
    }

    fn residual(&self, set: &BoxSet, x: &DVector<f64>) -> (f64, f64) {
        let g = self.grad(x);
        let mut r = 0.0;
        for j in 0..x.len() {
            let p = (x[j] - g[j]).clamp(set.lower()[j], set.upper()[j]);
            r += (x[j] - p) * (x[j] - p);
        }
        (r.sqrt(), g.norm())
    }

    /// Stopping threshold: the relative tolerance plus a floor for the
    /// rounding error of evaluating `Hx + b` itself.
    fn threshold(&self, tol: f64, x: &DVector<f64>, grad_norm: f64) -> f64 {
        let rounding = 64.0 * f64::EPSILON * (x.len() as f64).sqrt() * (self.h_norm * x.norm() + self.b.norm());
        tol * (1.0 + grad_norm) + rounding
    }

    /// One primal active-set Newton step: coordinates at a bound whose
    /// gradient pushes outward are frozen, the rest solve the reduced system.
    fn polish(&self, set: &BoxSet, x: &DVector<f64>) -> Option<DVector<f64>> {
        let g = self.grad(x);
        let n = x.len();
        let free: Vec<usize> = (0..n)
            .filter(|&j| {
                let at_lo = x[j] <= set.lower()[j] && g[j] > 0.0;
                let at_hi = x[j] >= set.upper()[j] && g[j] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        if free.is_empty() {
            return None;
        }
        let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| self.h[(free[a], free[b])]);
        let mut rhs = DVector::from_fn(free.len(), |a, _| -self.b[free[a]]);
        for (a, &fa) in free.iter().enumerate() {
            for j in (0..n).filter(|j| !free.contains(j)) {
                rhs[a] -= self.h[(fa, j)] * x[j];
            }
        }
        let z = hff.cholesky()?.solve(&rhs);
        let mut out = x.clone();
        for (a, &fa) in free.iter().enumerate() {
            out[fa] = z[a].clamp(set.lower()[fa], set.upper()[fa]);
        }
        Some(out)
    }
}

/// Minimizer of `f(x) + g(Cx)` over the box with default tolerances.
pub fn solve_minimizer(epoch: &QuadraticEpoch, map: &OutputMap, set: &BoxSet) -> Result<MinimizerSolution> {
    solve_minimizer_with(epoch, map, set, &OracleOptions::default())
}

/// Accelerated projected gradient with adaptive restart and step
/// `1/λ_max(Q + CᵀPC)`, interleaved with active-set polishing. Stops once
/// `‖x − Π[x − ∇h(x)]‖ ≤ tol·(1 + ‖∇h(x)‖)` up to evaluation rounding.
pub fn solve_minimizer_with(
    epoch: &QuadraticEpoch,
    map: &OutputMap,
    set: &BoxSet,
    opts: &OracleOptions,
) -> Result<MinimizerSolution> {
    check_len("oracle box", epoch.n(), set.dim())?;
    check_len("oracle output map", epoch.m(), map.matrix().nrows())?;
    let red = Reduced::new(epoch, map);
    let step = 1.0 / red.h_norm;
    let mut x = set.project(&DVector::zeros(epoch.n()))?;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = (f64::INFINITY, x.clone());
    let finish = |x: DVector<f64>, residual: f64, iterations: usize| -> Result<MinimizerSolution> {
        let y_star = map.apply(&x);
        let j_star = epoch.eval_j(&x, &y_star)?;
        Ok(MinimizerSolution {
            x_star: x,
            y_star,
            j_star,
            residual,
            iterations,
        })
    };
    for it in 0..opts.max_iterations {
        if it % 50 == 0 {
            let mut cand = x.clone();
            for _ in 0..(2 * epoch.n() + 2) {
                let (r, gn) = red.residual(set, &cand);
                if r < best.0 {
                    best = (r, cand.clone());
                }
                if r <= red.threshold(opts.tolerance, &cand, gn) {
                    return finish(cand, r, it);
                }
                match red.polish(set, &cand) {
                    Some(next) if next != cand => cand = next,
                    _ => break,
                }
            }
        }
        let g = red.grad(&y);
        let x_next = set.project(&(&y - g * step))?;
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("minimizer iterate".into()));
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let dir = &x_next - &x;
        // Restart momentum when it points uphill.
        if red.grad(&y).dot(&dir) > 0.0 {
            t = 1.0;
            y = x_next.clone();
        } else {
            y = &x_next + dir * ((t - 1.0) / t_next);
            t = t_next;
        }
        x = x_next;
    }
    let (r, gn) = red.residual(set, &x);
    if r <= red.threshold(opts.tolerance, &x, gn) {
        return finish(x, r, opts.max_iterations);
    }
    Err(Error::OracleNotConverged {
        iterations: opts.max_iterations,
        residual: best.0.min(r),
    })
}

/// Exhaustive grid search over a box of dimension at most 3, used as an
/// independent reference for the oracle.
pub fn grid_minimizer(epoch: &QuadraticEpoch, map: &OutputMap, set: &BoxSet, resolution: f64) -> Result<DVector<f64>> {
    let n = set.dim();
    if n == 0 || n > 3 {
        return Err(Error::InvalidLayout(format!("grid oracle supports 1 to 3 inputs, got {n}")));
    }
    let counts: Vec<usize> = (0..n)
        .map(|j| ((set.upper()[j] - set.lower()[j]) / resolution).round() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    let mut best = (f64::INFINITY, DVector::zeros(n));
    let mut x = DVector::zeros(n);
    for flat in 0..total {
        let mut rem = flat;
        for j in 0..n {
            let idx = rem % counts[j];
            rem /= counts[j];
            x[j] = (set.lower()[j] + idx as f64 * resolution).min(set.upper()[j]);
        }
        let v = epoch.eval_j(&x, &map.apply(&x))?;
        if v < best.0 {
            best = (v, x.clone());
        }
    }
    Ok(best.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    /// `α(k)` for `k = 0..=horizon`, scored against the epoch owning `k`.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub norm_s: Vec<f64>,
    pub norm_q: Vec<f64>,
    pub eta: Vec<usize>,
    pub b: usize,
}

impl MetricSeries {
    /// `α(η_{ℓ−1} + 1)` scored against epoch `ℓ`, i.e. the first state
    /// after the objective changes.
    pub fn alpha_after_change(&self, ell: usize) -> f64 {
        let start = if ell == 0 { 0 } else { self.eta[ell - 1] };
        self.alpha[start + 1]
    }

    pub fn alpha_at_eta(&self, ell: usize) -> f64 {
        self.alpha[self.eta[ell]]
    }
}

/// Trailing sums over `{k − B, …, k − 1}` with zero before tick 0.
pub fn window_sums(values: &[f64], b: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    for k in 0..=values.len() {
        let lo = k.saturating_sub(b);
        out.push(values[lo..k].iter().fold(0.0, |a, v| a + v));
    }
    out
}

pub fn compute_series(trace: &RunTrace, map: &OutputMap) -> Result<MetricSeries> {
    let mut alpha = Vec::with_capacity(trace.x.len());
    for (k, x) in trace.x.iter().enumerate() {
        let rec = &trace.epochs[trace.epoch_of_state(k)];
        alpha.push(rec.epoch.eval_j(x, &map.apply(x))? - rec.solution.j_star);
    }
    let s2: Vec<f64> = trace.s.iter().map(|s| s.norm_squared()).collect();
    let q2: Vec<f64> = trace.q.iter().map(|q| q.norm_squared()).collect();
    Ok(MetricSeries {
        alpha,
        beta: window_sums(&s2, trace.b),
        delta: window_sums(&q2, trace.b),
        norm_s: s2.iter().map(|v| v.sqrt()).collect(),
        norm_q: q2.iter().map(|v| v.sqrt()).collect(),
        eta: trace.etas(),
        b: trace.b,
    })
}

/// Outcome of one inequality checked across a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub evaluated: usize,
    pub violations: usize,
    /// Smallest `rhs + slack − lhs` seen; negative means violated.
    pub worst_margin: f64,
    pub worst_tick: Option<usize>,
}

impl InequalityCheck {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            evaluated: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_tick: None,
        }
    }

    /// Records `lhs ≤ rhs + slack` at tick `k`.
    pub fn record(&mut self, k: usize, lhs: f64, rhs: f64, slack: f64) {
        let margin = rhs + slack - lhs;
        self.evaluated += 1;
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.worst_tick = Some(k);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<InequalityCheck>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(InequalityCheck::passed)
    }

    pub fn get(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {} evaluated={} violations={} worst_margin={:e} worst_tick={}\n",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.evaluated,
                c.violations,
                c.worst_margin,
                c.worst_tick.map_or("-".to_string(), |k| k.to_string())
            ));
        }
        out
    }
}

/// Replays every trace-level inequality:
///
/// * `out_of_date`: `‖x^i(k) − x(k)‖ ≤ Σ_{τ=k−B}^{k−1} ‖s(τ)‖`
/// * `measurement`: `‖y^i(k) − y(k)‖ ≤ N‖C‖ Σ_{τ=k−B}^{k−1} ‖s(τ)‖`
/// * `descent`: `s_iᵀ∇_{x_i}J ≤ −‖s_i‖²/γ` at every compute event
/// * `q_bound`: `δ(k) ≤ B²m‖C‖² β(k)`
/// * `q_step`: `‖q(k)‖² ≤ Bm‖C‖² β(k)`
/// * `q_bound_2b`: `δ(k) ≤ B²m‖C‖² Σ_{τ=k−2B}^{k−1} ‖s(τ)‖²`, the sum of
///   `q_step` over the window
/// * `beta_cap`: `β(k) ≤ B·diam(𝒳)²`
/// * `alpha_cap`: `α(0), α(B) ≤ L_J(1 + ‖C‖)·diam(𝒳)` (epoch-0 constants)
/// * `alpha_nonnegative`, `feasible` and `step_consistency` sanity checks.
pub fn check_lemma_invariants(
    trace: &RunTrace,
    series: &MetricSeries,
    set: &BoxSet,
    constants: Option<&EpochConstants>,
) -> CheckReport {
    let b = trace.b;
    let agents = trace.layout.agents();
    let m = trace.layout.m() as f64;
    let norm_c = trace.norm_c;
    let diam = set.diameter();
    let horizon = trace.horizon;
    let sum_s: Vec<f64> = {
        let w: Vec<f64> = series.norm_s.clone();
        (0..horizon)
            .map(|k| w[k.saturating_sub(b)..k].iter().fold(0.0, |a, v| a + v))
            .collect()
    };
    let round = |scale: f64| 1e-12 * (1.0 + scale);

    let mut out_of_date = InequalityCheck::new("out_of_date");
    let mut measurement = InequalityCheck::new("measurement");
    for k in 0..horizon {
        let xs = trace.x[k].norm();
        for dev in &trace.deviations[k] {
            out_of_date.record(k, dev[0], sum_s[k], round(xs));
            measurement.record(k, dev[1], agents as f64 * norm_c * sum_s[k], round(norm_c * xs));
        }
    }

    let mut descent = InequalityCheck::new("descent");
    for c in &trace.computes {
        let rhs = -c.norm_s_sq / c.gamma;
        descent.record(c.tick, c.dot_sg, rhs, 1e-9 * (1.0 + c.dot_sg.abs() + rhs.abs()));
    }

    let mut q_bound = InequalityCheck::new("q_bound");
    let mut q_step = InequalityCheck::new("q_step");
    let mut q_bound_2b = InequalityCheck::new("q_bound_2b");
    let mut beta_cap = InequalityCheck::new("beta_cap");
    let factor = (b * b) as f64 * m * norm_c * norm_c;
    let s2: Vec<f64> = series.norm_s.iter().map(|v| v * v).collect();
    let beta_2b = window_sums(&s2, 2 * b);
    for k in 0..=horizon {
        q_bound.record(k, series.delta[k], factor * series.beta[k], round(0.0) * series.delta[k]);
        q_bound_2b.record(k, series.delta[k], factor * beta_2b[k], round(0.0) * series.delta[k]);
        if k < horizon {
            let q2 = series.norm_q[k] * series.norm_q[k];
            q_step.record(k, q2, b as f64 * m * norm_c * norm_c * series.beta[k], round(0.0) * q2);
        }
        beta_cap.record(k, series.beta[k], b as f64 * diam * diam, 0.0);
    }

    let mut alpha_nonneg = InequalityCheck::new("alpha_nonnegative");
    for k in 0..=horizon {
        let eps = trace.epochs[trace.epoch_of_state(k)].solution.eps_oracle();
        alpha_nonneg.record(k, 0.0, series.alpha[k], eps);
    }

    let mut feasible = InequalityCheck::new("feasible");
    let mut consistency = InequalityCheck::new("step_consistency");
    for k in 0..=horizon {
        let x = &trace.x[k];
        let worst = (0..x.len())
            .map(|j| (set.lower()[j] - x[j]).max(x[j] - set.upper()[j]))
            .fold(f64::NEG_INFINITY, f64::max);
        feasible.record(k, worst, 0.0, 0.0);
        if k < horizon {
            let err = (&trace.x[k] + &trace.s[k] - &trace.x[k + 1]).amax();
            consistency.record(k, err, 0.0, 4.0 * f64::EPSILON * (1.0 + x.amax()));
        }
    }

    let mut checks = vec![out_of_date, measurement, descent, q_bound, q_step, q_bound_2b, beta_cap];
    if let Some(ec) = constants {
        let mut cap = InequalityCheck::new("alpha_cap");
        let rhs = ec.l_j * (1.0 + norm_c) * diam;
        for k in [0, b].into_iter().filter(|k| *k <= horizon) {
            let eps = trace.epochs[trace.epoch_of_state(k)].solution.eps_oracle();
            cap.record(k, series.alpha[k], rhs, eps);
        }
        checks.push(cap);
    }
    checks.extend([alpha_nonneg, feasible, consistency]);
    CheckReport { checks }
}
