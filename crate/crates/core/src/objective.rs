//! Time-varying quadratic objectives `J(x, y; t) = f(x; t) + g(y; t)` and the
//! per-epoch constants consumed by [`crate::theory`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{check_len, symmetric_extremes, validate_spd};
use crate::model::{BlockLayout, BoxSet, OutputMap};
use crate::rng::{substream, Purpose};
use crate::{Error, Result};

/// One epoch's objective:
/// `f(x) = ½xᵀQx + qᵀx` and `g(y) = ½(y − θ)ᵀP(y − θ)`, plus a constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEpoch {
    t: f64,
    q_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
    p_mat: DMatrix<f64>,
    theta: DVector<f64>,
    offset: f64,
}

impl QuadraticEpoch {
    pub fn new(
        t: f64,
        q_mat: DMatrix<f64>,
        q_vec: DVector<f64>,
        p_mat: DMatrix<f64>,
        theta: DVector<f64>,
        offset: f64,
    ) -> Result<Self> {
        validate_spd(&q_mat, "Q")?;
        validate_spd(&p_mat, "P")?;
        check_len("q", q_mat.nrows(), q_vec.len())?;
        check_len("theta", p_mat.nrows(), theta.len())?;
        if !t.is_finite() || !offset.is_finite() {
            return Err(Error::NonFinite("epoch time stamp or offset".into()));
        }
        if q_vec.iter().chain(theta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("q or theta".into()));
        }
        Ok(Self {
            t,
            q_mat,
            q_vec,
            p_mat,
            theta,
            offset,
        })
    }

    /// Builds the epoch from a linear output cost `½yᵀPy + pᵀy`, rewritten
    /// as `½(y − θ)ᵀP(y − θ) − ½pᵀP⁻¹p` with `θ = −P⁻¹p`.
    pub fn from_linear_output(
        t: f64,
        q_mat: DMatrix<f64>,
        q_vec: DVector<f64>,
        p_mat: DMatrix<f64>,
        p_vec: DVector<f64>,
    ) -> Result<Self> {
        validate_spd(&p_mat, "P")?;
        check_len("p", p_mat.nrows(), p_vec.len())?;
        let chol = p_mat
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                matrix: "P",
                min_eigenvalue: symmetric_extremes(&p_mat).0,
            })?;
        let theta = -chol.solve(&p_vec);
        let offset = 0.5 * p_vec.dot(&theta);
        Self::new(t, q_mat, q_vec, p_mat, theta, offset)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Same objective stamped with another time.
    pub fn at_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn n(&self) -> usize {
        self.q_vec.len()
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn q_mat(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn q_vec(&self) -> &DVector<f64> {
        &self.q_vec
    }

    pub fn p_mat(&self) -> &DMatrix<f64> {
        &self.p_mat
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn eval_f(&self, x: &DVector<f64>) -> Result<f64> {
        check_len("eval_f", self.n(), x.len())?;
        Ok(0.5 * x.dot(&(&self.q_mat * x)) + self.q_vec.dot(x))
    }

    pub fn eval_g(&self, y: &DVector<f64>) -> Result<f64> {
        check_len("eval_g", self.m(), y.len())?;
        let r = y - &self.theta;
        Ok(0.5 * r.dot(&(&self.p_mat * &r)))
    }

    /// `J(x, y) = f(x) + g(y) + offset`.
    pub fn eval_j(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(self.eval_f(x)? + self.eval_g(y)? + self.offset)
    }

    pub fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q_mat * x + &self.q_vec
    }

    pub fn grad_g(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.p_mat * (y - &self.theta)
    }

    /// `∇_x J(x, y) = ∇f(x) + Cᵀ∇g(y)`.
    pub fn grad_x(&self, map: &OutputMap, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.grad_f(x) + map.matrix().tr_mul(&self.grad_g(y))
    }

    /// Block `i` of `∇f(x) + Cᵀ∇g(y)` written to `out`.
    ///
    /// The sums are accumulated in a fixed order so that a run is bitwise
    /// reproducible and matches a plain scalar loop when `N = n = m = 1`.
    pub fn grad_block_into(
        &self,
        map: &OutputMap,
        layout: &BlockLayout,
        i: usize,
        x_local: &[f64],
        y_local: &[f64],
        out: &mut [f64],
    ) {
        let n = self.n();
        let m = self.m();
        let range = layout.input_range(i);
        let c = map.matrix();
        let mut pr = vec![0.0; m];
        for (r, pr_r) in pr.iter_mut().enumerate() {
            let mut acc = 0.0;
            for col in 0..m {
                acc += self.p_mat[(r, col)] * (y_local[col] - self.theta[col]);
            }
            *pr_r = acc;
        }
        for (o, row) in out.iter_mut().zip(range) {
            let mut fx = 0.0;
            for col in 0..n {
                fx += self.q_mat[(row, col)] * x_local[col];
            }
            let mut gy = 0.0;
            for (r, pr_r) in pr.iter().enumerate() {
                gy += c[(r, row)] * pr_r;
            }
            *o = (fx + self.q_vec[row]) + gy;
        }
    }
}

/// `J(x, y; t)` for the given epoch.
pub fn eval_j(epoch: &QuadraticEpoch, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    epoch.eval_j(x, y)
}

/// Agent `i`'s block of `∇_{x_i} f(x^i) + C_iᵀ∇g(y^i)` at its local copies.
pub fn grad_block(
    epoch: &QuadraticEpoch,
    map: &OutputMap,
    layout: &BlockLayout,
    i: usize,
    x_local: &DVector<f64>,
    y_local: &DVector<f64>,
) -> Result<DVector<f64>> {
    layout.check_agent(i)?;
    check_len("grad_block x_local", epoch.n(), x_local.len())?;
    check_len("grad_block y_local", epoch.m(), y_local.len())?;
    check_len("grad_block layout", layout.n(), epoch.n())?;
    let mut out = DVector::zeros(layout.input_dims()[i]);
    epoch.grad_block_into(map, layout, i, x_local.as_slice(), y_local.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Read-only state handed to an epoch generator at an epoch boundary.
pub struct BoundaryView<'a> {
    pub ell: usize,
    pub tick: usize,
    pub x_true: &'a DVector<f64>,
    /// Agents' local input copies `x^i` at the boundary.
    pub local_x: &'a [DVector<f64>],
    /// Agents' local output copies `y^i` at the boundary.
    pub local_y: &'a [DVector<f64>],
}

pub type EpochGenerator = Arc<dyn Fn(&BoundaryView<'_>) -> Result<QuadraticEpoch> + Send + Sync>;

#[derive(Clone)]
pub enum EpochSource {
    Fixed(Arc<QuadraticEpoch>),
    Generator(EpochGenerator),
}

impl fmt::Debug for EpochSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpochSource::Fixed(e) => f.debug_tuple("Fixed").field(&e.t()).finish(),
            EpochSource::Generator(_) => f.write_str("Generator"),
        }
    }
}

/// The ordered epochs together with their lengths `κ_ℓ = r_ℓ B`.
#[derive(Clone, Debug)]
pub struct EpochSchedule {
    sources: Vec<EpochSource>,
    r: Vec<usize>,
    b: usize,
    boundaries: Vec<usize>,
}

impl EpochSchedule {
    /// `r[ℓ]` is the number of `B`-windows in epoch `ℓ`.
    pub fn new(sources: Vec<EpochSource>, r: Vec<usize>, b: usize) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidEpochs("no epochs".into()));
        }
        if b == 0 {
            return Err(Error::InvalidEpochs("B must be positive".into()));
        }
        if r.len() != sources.len() {
            return Err(Error::InvalidEpochs(format!(
                "{} epochs but {} window counts",
                sources.len(),
                r.len()
            )));
        }
        if let Some(ell) = r.iter().position(|r| *r == 0) {
            return Err(Error::InvalidEpochs(format!("epoch {ell} has r = 0")));
        }
        let mut acc = 0;
        let boundaries = r
            .iter()
            .map(|r| {
                acc += r * b;
                acc
            })
            .collect();
        Ok(Self {
            sources,
            r,
            b,
            boundaries,
        })
    }

    /// Builds from epoch lengths `κ_ℓ`, each of which must be a positive
    /// multiple of `B`.
    pub fn from_kappa(sources: Vec<EpochSource>, kappa: Vec<usize>, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidEpochs("B must be positive".into()));
        }
        let r = kappa
            .iter()
            .enumerate()
            .map(|(ell, k)| {
                if *k < b || k % b != 0 {
                    Err(Error::InvalidEpochs(format!(
                        "epoch {ell}: kappa = {k} is not a positive multiple of B = {b}"
                    )))
                } else {
                    Ok(k / b)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sources, r, b)
    }

    pub fn fixed(epochs: Vec<QuadraticEpoch>, r: Vec<usize>, b: usize) -> Result<Self> {
        Self::new(epochs.into_iter().map(|e| EpochSource::Fixed(Arc::new(e))).collect(), r, b)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn r(&self) -> &[usize] {
        &self.r
    }

    pub fn kappa(&self, ell: usize) -> usize {
        self.r[ell] * self.b
    }

    pub fn source(&self, ell: usize) -> &EpochSource {
        &self.sources[ell]
    }

    /// `η_ℓ`, the tick at which epoch `ℓ` ends.
    pub fn eta(&self, ell: usize) -> usize {
        self.boundaries[ell]
    }

    /// First tick of epoch `ℓ`, i.e. `η_{ℓ−1}` with `η_{−1} = 0`.
    pub fn start(&self, ell: usize) -> usize {
        if ell == 0 {
            0
        } else {
            self.boundaries[ell - 1]
        }
    }

    pub fn horizon(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    /// Epoch whose objective is active while executing tick `k`.
    pub fn epoch_of_tick(&self, k: usize) -> usize {
        self.boundaries.partition_point(|eta| *eta <= k).min(self.len() - 1)
    }

    /// Epoch against which the state at tick `k` is scored: `k = 0` belongs
    /// to epoch 0 and `k ∈ (η_{ℓ−1}, η_ℓ]` to epoch `ℓ`.
    pub fn epoch_of_state(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.epoch_of_tick(k - 1)
        }
    }
}

/// Problem constants of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochConstants {
    pub l_x: f64,
    pub l_y: f64,
    pub l: f64,
    pub l_j: f64,
    pub m_x: f64,
    pub m_y: f64,
    pub p_strong: f64,
    pub sigma: f64,
    pub l_t: f64,
    pub delta: f64,
    pub lambda_eb: f64,
}

impl EpochConstants {
    /// `Δ·L_t`, the bound on the change of `J` between consecutive epochs.
    pub fn delta_lt(&self) -> f64 {
        self.delta * self.l_t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsOptions {
    /// Error-bound constant; estimated when absent.
    pub lambda_eb: Option<f64>,
    pub lt_samples: usize,
    /// Box corners are added to the `L_t` sample when `n` is at most this.
    pub lt_corner_max_dim: usize,
    pub eb_samples: usize,
    pub eb_safety: f64,
    pub seed: u64,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        Self {
            lambda_eb: None,
            lt_samples: 1000,
            lt_corner_max_dim: 10,
            eb_samples: 10_000,
            eb_safety: 2.0,
            seed: 0,
        }
    }
}

/// Previous epoch and its minimizer.
pub struct PreviousEpoch<'a> {
    pub epoch: &'a QuadraticEpoch,
    pub x_star: &'a DVector<f64>,
}

/// Interval image of `A·[lo, hi]` followed by a shift, as `(lo, hi)` rows.
fn interval_image(a: &DMatrix<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut out_lo = DVector::zeros(a.nrows());
    let mut out_hi = DVector::zeros(a.nrows());
    for r in 0..a.nrows() {
        let (mut l, mut h) = (0.0, 0.0);
        for c in 0..a.ncols() {
            let v = a[(r, c)];
            if v >= 0.0 {
                l += v * lo[c];
                h += v * hi[c];
            } else {
                l += v * hi[c];
                h += v * lo[c];
            }
        }
        out_lo[r] = l;
        out_hi[r] = h;
    }
    (out_lo, out_hi)
}

fn interval_sup_norm(lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    lo.iter()
        .zip(hi.iter())
        .map(|(l, h)| l.abs().max(h.abs()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Interval-arithmetic upper bounds `(M_x, M_y)` on `‖∇f‖` over `𝒳` and
/// `‖∇g‖` over `C𝒳`.
pub fn gradient_bounds(epoch: &QuadraticEpoch, set: &BoxSet, map: &OutputMap) -> (f64, f64) {
    let (flo, fhi) = interval_image(epoch.q_mat(), set.lower(), set.upper());
    let m_x = interval_sup_norm(&(flo + epoch.q_vec()), &(fhi + epoch.q_vec()));
    let (ylo, yhi) = interval_image(map.matrix(), set.lower(), set.upper());
    let (glo, ghi) = interval_image(epoch.p_mat(), &(ylo - epoch.theta()), &(yhi - epoch.theta()));
    (m_x, interval_sup_norm(&glo, &ghi))
}

/// Sampled `sup |J(x, y; t_ℓ) − J(x, y; t_{ℓ−1})|` over `𝒳 × C𝒳`.
pub fn sampled_change(
    epoch: &QuadraticEpoch,
    prev: &QuadraticEpoch,
    set: &BoxSet,
    map: &OutputMap,
    opts: &ConstantsOptions,
) -> Result<f64> {
    let n = set.dim();
    let mut rng = substream(opts.seed, 0, Purpose::TemporalSamples);
    let mut worst: f64 = 0.0;
    let mut probe = |x: &DVector<f64>, y: &DVector<f64>| -> Result<()> {
        let d = (epoch.eval_j(x, y)? - prev.eval_j(x, y)?).abs();
        worst = worst.max(d);
        Ok(())
    };
    for _ in 0..opts.lt_samples {
        let u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        probe(&set.lerp(&u), &map.apply(&set.lerp(&w)))?;
    }
    if n <= opts.lt_corner_max_dim {
        for mask in 0u64..(1u64 << n) {
            let u: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
            let x = set.lerp(&u);
            probe(&x, &map.apply(&x))?;
        }
    }
    Ok(worst)
}

/// Empirical error-bound constant: `safety · max ‖x − x*‖ / ‖x − Π[x − ∇_xJ(x, Cx)]‖`
/// over seeded samples of `𝒳`.
pub fn estimate_lambda_eb(
    epoch: &QuadraticEpoch,
    set: &BoxSet,
    map: &OutputMap,
    x_star: &DVector<f64>,
    opts: &ConstantsOptions,
) -> Result<f64> {
    let n = set.dim();
    let mut rng = substream(opts.seed, 0, Purpose::ErrorBoundSamples);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.eb_samples {
        let u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let x = set.lerp(&u);
        let g = epoch.grad_x(map, &x, &map.apply(&x));
        let residual = (&x - set.project(&(&x - g))?).norm();
        let dist = (&x - x_star).norm();
        if residual > 0.0 {
            worst = worst.max(dist / residual);
        }
    }
    Ok(opts.eb_safety * worst)
}

/// Problem constants for `epoch`; `prev` supplies the preceding epoch and
/// its minimizer for the temporal terms.
pub fn epoch_constants(
    epoch: &QuadraticEpoch,
    x_star: &DVector<f64>,
    prev: Option<PreviousEpoch<'_>>,
    set: &BoxSet,
    map: &OutputMap,
    opts: &ConstantsOptions,
) -> Result<EpochConstants> {
    check_len("epoch_constants n", set.dim(), epoch.n())?;
    check_len("epoch_constants m", map.matrix().nrows(), epoch.m())?;
    let (q_min, l_x) = validate_spd(epoch.q_mat(), "Q")?;
    let (p_min, l_y) = validate_spd(epoch.p_mat(), "P")?;
    let norm_c = map.norm();
    let l = (l_x * l_x + norm_c * norm_c * l_y * l_y).sqrt();
    let (m_x, m_y) = gradient_bounds(epoch, set, map);
    let (sigma, delta, l_t) = match prev {
        None => (0.0, 0.0, 0.0),
        Some(p) => {
            let sigma = (x_star - p.x_star).norm();
            let delta = (epoch.t() - p.epoch.t()).abs();
            let l_t = if delta > 0.0 {
                sampled_change(epoch, p.epoch, set, map, opts)? / delta
            } else {
                0.0
            };
            (sigma, delta, l_t)
        }
    };
    let lambda_eb = match opts.lambda_eb {
        Some(v) => v,
        None => estimate_lambda_eb(epoch, set, map, x_star, opts)?,
    };
    let out = EpochConstants {
        l_x,
        l_y,
        l,
        l_j: (m_x * m_x + m_y * m_y).sqrt(),
        m_x,
        m_y,
        p_strong: q_min.min(p_min),
        sigma,
        l_t,
        delta,
        lambda_eb,
    };
    let all = [
        out.l_x, out.l_y, out.l, out.l_j, out.m_x, out.m_y, out.p_strong, out.sigma, out.l_t, out.delta,
        out.lambda_eb,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("epoch constants".into()));
    }
    debug_assert!(out.l >= l_x.max(norm_c * l_y));
    Ok(out)
}
