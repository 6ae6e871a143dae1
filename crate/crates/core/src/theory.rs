//! The bound-constant ladder: `D, E, F, G`, the step cap `γ_max`, the rate
//! `ρ = 1 − γc`, the bound sequences `a, b, d`, the asymptotic constant `V`
//! and the operation counts `r_min`.

use serde::{Deserialize, Serialize};

use crate::engine::RunTrace;
use crate::metrics::{CheckReport, InequalityCheck, MetricSeries};
use crate::objective::EpochConstants;
use crate::{Error, Result};

/// Network-level quantities entering every constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderDims {
    pub b: usize,
    pub agents: usize,
    pub m: usize,
    pub norm_c: f64,
    pub diam: f64,
}

/// `(D, E)` from raw inputs.
pub fn de_raw(gamma: f64, b: f64, n: f64, l_x: f64, l_y: f64, norm_c: f64) -> (f64, f64) {
    let c2 = norm_c * norm_c;
    let d = (2.0 - gamma * ((1.0 + b) * l_x + (1.0 + b * n) * c2 * l_y)) / 2.0;
    let e = n * b * (l_x + l_y * n * c2) / 2.0;
    (d, e)
}

pub fn constants_de(ec: &EpochConstants, gamma: f64, b: usize, agents: usize, norm_c: f64) -> (f64, f64) {
    de_raw(gamma, b as f64, agents as f64, ec.l_x, ec.l_y, norm_c)
}

/// Raw inputs of `F` and `G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FgParams {
    pub b: f64,
    pub n: f64,
    pub m: f64,
    pub norm_c: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub l: f64,
    pub lambda: f64,
}

/// One addend `coef · (1 + λ²)^weighted · Π base^pow` with bases ordered
/// `B, ‖C‖, L, L_x, L_y, N, m, λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub label: &'static str,
    pub coef: f64,
    pub weighted: bool,
    pub pow: [u8; 8],
}

impl Term {
    pub fn eval(&self, p: &FgParams) -> f64 {
        let bases = [p.b, p.norm_c, p.l, p.l_x, p.l_y, p.n, p.m, p.lambda];
        let mut v = self.coef;
        for (base, e) in bases.iter().zip(self.pow) {
            v *= base.powi(e as i32);
        }
        if self.weighted {
            v *= 1.0 + p.lambda * p.lambda;
        }
        v
    }
}

/// Addends of `F`, in the printed order; `F = ½ Σ`.
pub const F_TERMS: &[Term] = &[
    Term { label: "(1+lam^2) 36 B^3 C^6 L^2 Ly^2 N^2 m", coef: 36.0, weighted: true, pow: [3, 6, 2, 0, 2, 2, 1, 0] },
    Term { label: "(1+lam^2) 72 B^3 C^4 L^2 Lx Ly N^2 m", coef: 72.0, weighted: true, pow: [3, 4, 2, 1, 1, 2, 1, 0] },
    Term { label: "(1+lam^2) 36 B L^2 Lx^2 N^2", coef: 36.0, weighted: true, pow: [1, 0, 2, 2, 0, 2, 0, 0] },
    Term { label: "(1+lam^2) 36 B^3 C^2 L^2 Lx^2 N^2 m", coef: 36.0, weighted: true, pow: [3, 2, 2, 2, 0, 2, 1, 0] },
    Term { label: "(1+lam^2) 36 B C^4 L^2 Ly^2 N^2", coef: 36.0, weighted: true, pow: [1, 4, 2, 0, 2, 2, 0, 0] },
    Term { label: "(1+lam^2) 18 C^2 Lx Ly N", coef: 18.0, weighted: true, pow: [0, 2, 0, 1, 1, 1, 0, 0] },
    Term { label: "(1+lam^2) 72 B C^2 L^2 Lx Ly N^2", coef: 72.0, weighted: true, pow: [1, 2, 2, 1, 1, 2, 0, 0] },
    Term { label: "(1+lam^2) 9 C^4 Ly^2 N", coef: 9.0, weighted: true, pow: [0, 4, 0, 0, 2, 1, 0, 0] },
    Term { label: "3 B^2 C^6 L^2 Ly^2 N^2 m", coef: 3.0, weighted: false, pow: [2, 6, 2, 0, 2, 2, 1, 0] },
    Term { label: "72 B^3 C^4 L^2 Ly N^2 m", coef: 72.0, weighted: false, pow: [3, 4, 2, 0, 1, 2, 1, 0] },
    Term { label: "6 B^2 C^4 L^2 Lx Ly N^2 m", coef: 6.0, weighted: false, pow: [2, 4, 2, 1, 1, 2, 1, 0] },
    Term { label: "6 B^2 C^4 L^2 Ly N^2 m", coef: 6.0, weighted: false, pow: [2, 4, 2, 0, 1, 2, 1, 0] },
    Term { label: "3 C^4 L^2 Ly^2 N^2", coef: 3.0, weighted: false, pow: [0, 4, 2, 0, 2, 2, 0, 0] },
    Term { label: "3 B^2 C^4 Ly^2 N m", coef: 3.0, weighted: false, pow: [2, 4, 0, 0, 2, 1, 1, 0] },
    Term { label: "96 B^3 C^2 L^2 N^2 m", coef: 96.0, weighted: false, pow: [3, 2, 2, 0, 0, 2, 1, 0] },
    Term { label: "72 B^3 C^2 L^2 Lx N^2 m", coef: 72.0, weighted: false, pow: [3, 2, 2, 1, 0, 2, 1, 0] },
    Term { label: "72 B C^2 L^2 Ly N^2", coef: 72.0, weighted: false, pow: [1, 2, 2, 0, 1, 2, 0, 0] },
    Term { label: "60 B^3 C^2 L^2 N^2 m lam^2", coef: 60.0, weighted: false, pow: [3, 2, 2, 0, 0, 2, 1, 2] },
    Term { label: "18 C^2 Ly N", coef: 18.0, weighted: false, pow: [0, 2, 0, 0, 1, 1, 0, 0] },
    Term { label: "8 B^2 C^2 L^2 N^2 m", coef: 8.0, weighted: false, pow: [2, 2, 2, 0, 0, 2, 1, 0] },
    Term { label: "6 B^2 C^2 L^2 Lx N^2 m", coef: 6.0, weighted: false, pow: [2, 2, 2, 1, 0, 2, 1, 0] },
    Term { label: "6 C^2 L^2 Lx Ly N^2", coef: 6.0, weighted: false, pow: [0, 2, 2, 1, 1, 2, 0, 0] },
    Term { label: "6 C^2 L^2 Ly N^2", coef: 6.0, weighted: false, pow: [0, 2, 2, 0, 1, 2, 0, 0] },
    Term { label: "3 B^2 C^2 L^2 Lx^2 N^2 m", coef: 3.0, weighted: false, pow: [2, 2, 2, 2, 0, 2, 1, 0] },
    Term { label: "3 L^2 Lx^2 N^2", coef: 3.0, weighted: false, pow: [0, 0, 2, 2, 0, 2, 0, 0] },
    Term { label: "96 B L^2 N^2", coef: 96.0, weighted: false, pow: [1, 0, 2, 0, 0, 2, 0, 0] },
    Term { label: "6 L^2 Lx N^2", coef: 6.0, weighted: false, pow: [0, 0, 2, 1, 0, 2, 0, 0] },
    Term { label: "8 L^2 N^2", coef: 8.0, weighted: false, pow: [0, 0, 2, 0, 0, 2, 0, 0] },
    Term { label: "60 B L^2 N^2 lam^2", coef: 60.0, weighted: false, pow: [1, 0, 2, 0, 0, 2, 0, 2] },
    Term { label: "72 B L^2 Lx N^2", coef: 72.0, weighted: false, pow: [1, 0, 2, 1, 0, 2, 0, 0] },
    Term { label: "12 Lx^2 N", coef: 12.0, weighted: false, pow: [0, 0, 0, 2, 0, 1, 0, 0] },
    Term { label: "9 Lx^2 N lam^2", coef: 9.0, weighted: false, pow: [0, 0, 0, 2, 0, 1, 0, 2] },
    Term { label: "18 Lx N", coef: 18.0, weighted: false, pow: [0, 0, 0, 1, 0, 1, 0, 0] },
    Term { label: "15 N lam^2", coef: 15.0, weighted: false, pow: [0, 0, 0, 0, 0, 1, 0, 2] },
    Term { label: "24 N", coef: 24.0, weighted: false, pow: [0, 0, 0, 0, 0, 1, 0, 0] },
    Term { label: "2", coef: 2.0, weighted: false, pow: [0, 0, 0, 0, 0, 0, 0, 0] },
];

/// Addends of `G`, in the printed order; `G = (N/2) Σ`.
pub const G_TERMS: &[Term] = &[
    Term { label: "(1+lam^2) 72 B^3 C^4 L^2 Lx Ly N m", coef: 72.0, weighted: true, pow: [3, 4, 2, 1, 1, 1, 1, 0] },
    Term { label: "(1+lam^2) 72 B C^2 L^2 Lx Ly N", coef: 72.0, weighted: true, pow: [1, 2, 2, 1, 1, 1, 0, 0] },
    Term { label: "(1+lam^2) 36 B^3 C^6 L^2 Ly^2 N m", coef: 36.0, weighted: true, pow: [3, 6, 2, 0, 2, 1, 1, 0] },
    Term { label: "(1+lam^2) 36 B^3 C^2 L^2 Lx^2 N m", coef: 36.0, weighted: true, pow: [3, 2, 2, 2, 0, 1, 1, 0] },
    Term { label: "(1+lam^2) 36 B C^4 L^2 Ly^2 N", coef: 36.0, weighted: true, pow: [1, 4, 2, 0, 2, 1, 0, 0] },
    Term { label: "(1+lam^2) 36 B L^2 Lx^2 N", coef: 36.0, weighted: true, pow: [1, 0, 2, 2, 0, 1, 0, 0] },
    Term { label: "3 B^2 C^6 L^2 Ly^2 N m", coef: 3.0, weighted: false, pow: [2, 6, 2, 0, 2, 1, 1, 0] },
    Term { label: "72 B^3 C^4 L^2 Ly N m", coef: 72.0, weighted: false, pow: [3, 4, 2, 0, 1, 1, 1, 0] },
    Term { label: "6 B^2 C^4 L^2 Lx Ly N m", coef: 6.0, weighted: false, pow: [2, 4, 2, 1, 1, 1, 1, 0] },
    Term { label: "6 B^2 C^4 L^2 Ly N m", coef: 6.0, weighted: false, pow: [2, 4, 2, 0, 1, 1, 1, 0] },
    Term { label: "3 B^2 C^4 Ly^2 m", coef: 3.0, weighted: false, pow: [2, 4, 0, 0, 2, 0, 1, 0] },
    Term { label: "3 C^4 L^2 Ly^2 N", coef: 3.0, weighted: false, pow: [0, 4, 2, 0, 2, 1, 0, 0] },
    Term { label: "96 B^3 C^2 L^2 N m", coef: 96.0, weighted: false, pow: [3, 2, 2, 0, 0, 1, 1, 0] },
    Term { label: "72 B^3 C^2 L^2 Lx N m", coef: 72.0, weighted: false, pow: [3, 2, 2, 1, 0, 1, 1, 0] },
    Term { label: "72 B C^2 L^2 Ly N", coef: 72.0, weighted: false, pow: [1, 2, 2, 0, 1, 1, 0, 0] },
    Term { label: "60 B^3 C^2 L^2 N m lam^2", coef: 60.0, weighted: false, pow: [3, 2, 2, 0, 0, 1, 1, 2] },
    Term { label: "8 B^2 C^2 L^2 N m", coef: 8.0, weighted: false, pow: [2, 2, 2, 0, 0, 1, 1, 0] },
    Term { label: "6 B^2 C^2 L^2 Lx N m", coef: 6.0, weighted: false, pow: [2, 2, 2, 1, 0, 1, 1, 0] },
    Term { label: "6 C^2 L^2 Lx Ly N", coef: 6.0, weighted: false, pow: [0, 2, 2, 1, 1, 1, 0, 0] },
    Term { label: "6 C^2 L^2 Ly N", coef: 6.0, weighted: false, pow: [0, 2, 2, 0, 1, 1, 0, 0] },
    Term { label: "3 B^2 C^2 L^2 Lx^2 N m", coef: 3.0, weighted: false, pow: [2, 2, 2, 2, 0, 1, 1, 0] },
    Term { label: "B C^2 Ly N", coef: 1.0, weighted: false, pow: [1, 2, 0, 0, 1, 1, 0, 0] },
    Term { label: "96 B L^2 N", coef: 96.0, weighted: false, pow: [1, 0, 2, 0, 0, 1, 0, 0] },
    Term { label: "72 B L^2 Lx N", coef: 72.0, weighted: false, pow: [1, 0, 2, 1, 0, 1, 0, 0] },
    Term { label: "60 B L^2 N lam^2", coef: 60.0, weighted: false, pow: [1, 0, 2, 0, 0, 1, 0, 2] },
    Term { label: "8 L^2 N", coef: 8.0, weighted: false, pow: [0, 0, 2, 0, 0, 1, 0, 0] },
    Term { label: "6 L^2 Lx N", coef: 6.0, weighted: false, pow: [0, 0, 2, 1, 0, 1, 0, 0] },
    Term { label: "3 Lx^2", coef: 3.0, weighted: false, pow: [0, 0, 0, 2, 0, 0, 0, 0] },
    Term { label: "3 L^2 Lx^2 N", coef: 3.0, weighted: false, pow: [0, 0, 2, 2, 0, 1, 0, 0] },
    Term { label: "B Lx", coef: 1.0, weighted: false, pow: [1, 0, 0, 1, 0, 0, 0, 0] },
];

pub fn fg_raw(p: &FgParams) -> (f64, f64) {
    let f: f64 = F_TERMS.iter().map(|t| t.eval(p)).sum();
    let g: f64 = G_TERMS.iter().map(|t| t.eval(p)).sum();
    (0.5 * f, 0.5 * p.n * g)
}

pub fn fg_params(ec: &EpochConstants, b: usize, agents: usize, m: usize, norm_c: f64) -> FgParams {
    FgParams {
        b: b as f64,
        n: agents as f64,
        m: m as f64,
        norm_c,
        l_x: ec.l_x,
        l_y: ec.l_y,
        l: ec.l,
        lambda: ec.lambda_eb,
    }
}

pub fn constants_fg(ec: &EpochConstants, b: usize, agents: usize, m: usize, norm_c: f64) -> (f64, f64) {
    fg_raw(&fg_params(ec, b, agents, m, norm_c))
}

pub const GAMMA_TERM_NAMES: [&str; 8] = [
    "2/((3N+1)B Lx + (3N^2+1)B C^2 Ly)",
    "2/((1+B)Lx + (1+BN)C^2 Ly)",
    "D/E",
    "1/(G/F + E/D)",
    "1/(2c)",
    "D/(8F(G/F + E/D)c)",
    "root",
    "1/2",
];

const E_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMax {
    pub terms: [f64; 8],
    pub value: f64,
    /// Index into [`GAMMA_TERM_NAMES`] of the smallest term.
    pub binding: usize,
    /// The root term was evaluated at `E = 1e−12`.
    pub e_floored: bool,
    /// The root term's discriminant rounded below zero and was clamped.
    pub discriminant_clamped: bool,
}

/// All eight cap terms and their minimum.
///
/// The root term is evaluated in the algebraically equal form
/// `2D / (X + √(X² − 4DEc))`, `X = a/b + 2E + Dc`, which avoids the
/// cancellation of the printed form when `4DEc ≪ X²`.
#[allow(clippy::too_many_arguments)]
pub fn gamma_max(
    ec: &EpochConstants,
    d: f64,
    e: f64,
    f: f64,
    g: f64,
    a: f64,
    b: f64,
    c: f64,
    big_b: usize,
    agents: usize,
    norm_c: f64,
) -> Result<GammaMax> {
    let bb = big_b as f64;
    let n = agents as f64;
    let c2 = norm_c * norm_c;
    let e_floored = e < E_FLOOR;
    let e_root = if e_floored { E_FLOOR } else { e };
    let x = a / b + 2.0 * e_root + d * c;
    let disc = x * x - 4.0 * d * e_root * c;
    let discriminant_clamped = disc < 0.0;
    let root = 2.0 * d / (x + disc.max(0.0).sqrt());
    let terms = [
        2.0 / ((3.0 * n + 1.0) * bb * ec.l_x + (3.0 * n * n + 1.0) * bb * c2 * ec.l_y),
        2.0 / ((1.0 + bb) * ec.l_x + (1.0 + bb * n) * c2 * ec.l_y),
        d / e,
        1.0 / (g / f + e / d),
        1.0 / (2.0 * c),
        d / (8.0 * f * (g / f + e / d) * c),
        root,
        0.5,
    ];
    for (t, name) in terms.iter().zip(GAMMA_TERM_NAMES) {
        if t.is_nan() {
            return Err(Error::NonFinite(format!("gamma_max term `{name}`")));
        }
    }
    let (binding, value) = terms
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, t)| if t < acc.1 { (i, t) } else { acc });
    Ok(GammaMax {
        terms,
        value,
        binding,
        e_floored,
        discriminant_clamped,
    })
}

/// `8E(G/F + E/D)F`, shared by `a₀`, `b₀`, the recursion and `V`.
fn k_factor(d: f64, e: f64, f: f64, g: f64) -> f64 {
    8.0 * e * (g / f + e / d) * f
}

/// `a₀ = max{L_J(1 + ‖C‖)·diam, 8E(G/F + E/D)F/D · B·diam²}`.
pub fn a0(ec: &EpochConstants, d: f64, e: f64, f: f64, g: f64, dims: &LadderDims) -> f64 {
    let cap = ec.l_j * (1.0 + dims.norm_c) * dims.diam;
    let k = k_factor(d, e, f, g) / d * dims.b as f64 * dims.diam * dims.diam;
    cap.max(k)
}

/// `b₀ = D·a₀ / (8E(G/F + E/D)F)` as stated alongside the first-epoch rate.
pub fn b0_theorem(a0: f64, d: f64, e: f64, f: f64, g: f64) -> f64 {
    d * a0 / k_factor(d, e, f, g)
}

fn tail_term(ec: &EpochConstants, d: f64, e: f64, f: f64, g: f64, dims: &LadderDims) -> f64 {
    let bb = dims.b as f64;
    k_factor(d, e, f, g) * bb * bb * dims.diam * dims.diam * (ec.l_x + ec.l_y * dims.norm_c * dims.norm_c)
        / (2.0 * d)
}

/// The `a_ℓ` recursion exactly as printed, where the `σ` term and the
/// gradient-bound term are multiplied. `carry = a_{ℓ−1} ρ_{ℓ−1}^{r_{ℓ−1}−1}`.
pub fn a_recursion_as_printed(
    carry: f64,
    ec: &EpochConstants,
    d: f64,
    e: f64,
    f: f64,
    g: f64,
    dims: &LadderDims,
) -> f64 {
    carry
        + 2.0 * ec.delta_lt()
        + ec.l_j * ec.sigma * (1.0 + dims.norm_c) * (ec.m_x + ec.m_y * dims.norm_c) * dims.b as f64 * dims.diam
        + tail_term(ec, d, e, f, g, dims)
}

/// `V_ℓ` exactly as printed, where the `σ` term and the gradient-bound term
/// are added.
pub fn v_as_printed(ec: &EpochConstants, d: f64, e: f64, f: f64, g: f64, dims: &LadderDims) -> f64 {
    2.0 * ec.delta_lt()
        + ec.l_j * ec.sigma * (1.0 + dims.norm_c)
        + (ec.m_x + ec.m_y * dims.norm_c) * dims.b as f64 * dims.diam
        + tail_term(ec, d, e, f, g, dims)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTheory {
    pub ell: usize,
    pub gamma: f64,
    pub r: usize,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub c: f64,
    pub rho: f64,
    /// `1 − ρ = γc`, kept separately since `ρ` rounds to one for tiny steps.
    pub gap: f64,
    pub a: f64,
    /// `B·diam²`.
    pub b: f64,
    /// The alternative first-epoch `b₀`; `None` for later epochs.
    pub b0_theorem: Option<f64>,
    pub d_bound: f64,
    pub v: f64,
    pub gamma_max: GammaMax,
    /// `2/(B(L_x + L_y‖C‖²)) ≤ 1`.
    pub rate_hypothesis: bool,
}

impl EpochTheory {
    /// `ρ^{r−1}`.
    pub fn decay(&self) -> f64 {
        ((self.r as f64 - 1.0) * (-self.gap).ln_1p()).exp()
    }

    /// `a ρ^{r−1}`, carried into the next epoch's recursion.
    pub fn carry(&self) -> f64 {
        self.a * self.decay()
    }

    /// Cap used for `β`: the larger of the two `b₀` readings in epoch 0.
    pub fn beta_cap(&self) -> f64 {
        self.b0_theorem.map_or(self.b, |b0| {
            if b0.is_nan() {
                self.b
            } else {
                b0.max(self.b)
            }
        })
    }

    pub fn step_in_range(&self) -> bool {
        self.gamma > 0.0 && self.gamma < self.gamma_max.value
    }
}

/// Every constant of one epoch; `carry` is `None` for the first epoch and
/// `a_{ℓ−1} ρ_{ℓ−1}^{r_{ℓ−1}−1}` afterwards.
pub fn evaluate_epoch(
    ell: usize,
    ec: &EpochConstants,
    gamma: f64,
    r: usize,
    dims: &LadderDims,
    carry: Option<f64>,
) -> Result<EpochTheory> {
    if r == 0 {
        return Err(Error::InvalidEpochs(format!("epoch {ell} has r = 0")));
    }
    let (d, e) = constants_de(ec, gamma, dims.b, dims.agents, dims.norm_c);
    let (f, g) = constants_fg(ec, dims.b, dims.agents, dims.m, dims.norm_c);
    let c = d / (2.0 * f + 2.0 * d);
    let rho = 1.0 - gamma * c;
    let bb = dims.b as f64;
    let b = bb * dims.diam * dims.diam;
    let d_bound = bb * bb * dims.m as f64 * dims.norm_c * dims.norm_c * b;
    let (a, b0) = match carry {
        None => {
            let a = a0(ec, d, e, f, g, dims);
            (a, Some(b0_theorem(a, d, e, f, g)))
        }
        Some(cr) => (a_recursion_as_printed(cr, ec, d, e, f, g, dims), None),
    };
    let gm = gamma_max(ec, d, e, f, g, a, b, c, dims.b, dims.agents, dims.norm_c)?;
    Ok(EpochTheory {
        ell,
        gamma,
        r,
        d,
        e,
        f,
        g,
        c,
        rho,
        gap: gamma * c,
        a,
        b,
        b0_theorem: b0,
        d_bound,
        v: v_as_printed(ec, d, e, f, g, dims),
        gamma_max: gm,
        rate_hypothesis: 2.0 / (bb * (ec.l_x + ec.l_y * dims.norm_c * dims.norm_c)) <= 1.0,
    })
}

/// Largest step with `γ = fraction · g*`, where `g*` is the fixed point
/// `g* = γ_max(g*)` located by bisection. Fails if the result is not
/// strictly below its own cap.
pub fn auto_gamma(
    ec: &EpochConstants,
    r: usize,
    dims: &LadderDims,
    carry: Option<f64>,
    fraction: f64,
) -> Result<f64> {
    let cap_at = |g: f64| -> Result<f64> { Ok(evaluate_epoch(0, ec, g, r, dims, carry)?.gamma_max.value) };
    let mut hi = cap_at(0.0)?.min(0.5);
    let mut lo = 0.0;
    if !(hi > 0.0) {
        return Err(Error::NonFinite("gamma_max at zero step".into()));
    }
    if cap_at(hi)? >= hi {
        lo = hi;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let cap = cap_at(mid)?;
            if cap.is_nan() || cap < mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let gamma = fraction * lo;
    let th = evaluate_epoch(0, ec, gamma, r, dims, carry)?;
    if !th.step_in_range() {
        return Err(Error::StepOutOfRange {
            epoch: 0,
            gamma,
            term: GAMMA_TERM_NAMES[th.gamma_max.binding],
            cap: th.gamma_max.value,
        });
    }
    Ok(gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub epochs: Vec<EpochTheory>,
    /// `max{a₀, sup_ℓ V_ℓ}`.
    pub v_inf: f64,
    /// `sup_ℓ ρ_ℓ`.
    pub rho_inf: f64,
    /// `1 − ρ_∞`.
    pub gap_inf: f64,
}

/// Evaluates the ladder over all epochs, threading `a_ℓ ρ_ℓ^{r_ℓ−1}`.
pub fn ladder(constants: &[EpochConstants], gammas: &[f64], rs: &[usize], dims: &LadderDims) -> Result<TheoryConstants> {
    if constants.is_empty() || constants.len() != gammas.len() || constants.len() != rs.len() {
        return Err(Error::InvalidEpochs(format!(
            "{} constant sets, {} step sizes, {} window counts",
            constants.len(),
            gammas.len(),
            rs.len()
        )));
    }
    let mut epochs: Vec<EpochTheory> = Vec::with_capacity(constants.len());
    for (ell, ec) in constants.iter().enumerate() {
        let carry = epochs.last().map(EpochTheory::carry);
        epochs.push(evaluate_epoch(ell, ec, gammas[ell], rs[ell], dims, carry)?);
    }
    let a0 = epochs[0].a;
    let v_inf = epochs.iter().map(|e| e.v).fold(a0, f64::max);
    let gap_inf = epochs.iter().map(|e| e.gap).fold(f64::INFINITY, f64::min);
    Ok(TheoryConstants { epochs, v_inf, rho_inf: 1.0 - gap_inf, gap_inf })
}

fn require_in_range(tc: &TheoryConstants) -> Result<()> {
    for th in &tc.epochs {
        if !th.step_in_range() {
            return Err(Error::StepOutOfRange {
                epoch: th.ell,
                gamma: th.gamma,
                term: GAMMA_TERM_NAMES[th.gamma_max.binding],
                cap: th.gamma_max.value,
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTriple {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

/// `(a ρ^{r−1}, b ρ^{r−1}, d ρ^{r−1})` for every epoch.
pub fn rate_and_bounds(tc: &TheoryConstants) -> Result<Vec<BoundTriple>> {
    require_in_range(tc)?;
    Ok(tc
        .epochs
        .iter()
        .map(|th| BoundTriple {
            alpha: th.carry(),
            beta: th.beta_cap() * th.decay(),
            delta: th.d_bound * th.decay(),
        })
        .collect())
}

/// `V ρ / (1 − ρ)`.
pub fn asymptotic_value(v: f64, rho: f64) -> f64 {
    v * rho / (1.0 - rho)
}

/// `V_∞ ρ_∞ / (1 − ρ_∞)`; requires `r_ℓ ≥ 2` everywhere.
pub fn asymptotic_bound(tc: &TheoryConstants) -> Result<f64> {
    if let Some(th) = tc.epochs.iter().find(|th| th.r < 2) {
        return Err(Error::Hypothesis(format!(
            "the asymptotic bound needs r >= 2 in every epoch, epoch {} has r = {}",
            th.ell, th.r
        )));
    }
    if !(tc.gap_inf > 0.0 && tc.gap_inf < 1.0) {
        return Err(Error::Hypothesis(format!("1 - rho_inf = {} is not in (0, 1)", tc.gap_inf)));
    }
    Ok(tc.v_inf * (1.0 - tc.gap_inf) / tc.gap_inf)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RMinMode {
    Asymptotic,
    /// Finite horizon with `T + 1` epochs.
    Finite(u64),
}

/// Tolerance absorbing rounding when a ratio of logarithms lands on an integer.
const R_SLACK: f64 = 1e-12;

/// Smallest `r ≥ 2` guaranteeing `α(η_ℓ) ≤ φ` in every epoch.
pub fn r_min(phi: f64, mode: RMinMode, v: f64, rho: f64) -> Result<u64> {
    r_min_from_gap(phi, mode, v, 1.0 - rho)
}

/// [`r_min`] taking `1 − ρ`, exact for rates indistinguishable from one.
pub fn r_min_from_gap(phi: f64, mode: RMinMode, v: f64, gap: f64) -> Result<u64> {
    if !(phi > 0.0 && v > 0.0 && gap > 0.0 && gap < 1.0) {
        return Err(Error::Hypothesis(format!(
            "r_min needs phi > 0, V > 0 and rho in (0, 1); got phi = {phi}, V = {v}, 1 - rho = {gap}"
        )));
    }
    let ln_rho = (-gap).ln_1p();
    let asymptotic = {
        let rhs = 1.0 + (phi / (v + phi)).ln() / ln_rho;
        ((rhs - R_SLACK).ceil() as u64).max(2)
    };
    match mode {
        RMinMode::Asymptotic => Ok(asymptotic),
        RMinMode::Finite(t) => {
            for r in 2..=asymptotic {
                let tail = ((t + 2) as f64 * (r - 1) as f64 * ln_rho).exp();
                let rhs = 1.0 + ((v * tail + phi) / (v + phi)).ln() / ln_rho;
                if r as f64 >= rhs - R_SLACK {
                    return Ok(r);
                }
            }
            Ok(asymptotic)
        }
    }
}

/// Number of epochs skipped before the asymptotic bound is asserted.
pub const BURN_IN_EPOCHS: usize = 10;

/// Checks the per-epoch rate bounds at `η_ℓ = η_{ℓ−1} + r_ℓ B` and, for
/// runs with `r_ℓ ≥ 2` throughout, the asymptotic bound after the burn-in.
/// Refuses (errors) when any step size is outside `(0, γ_max)`.
pub fn check_bounds_on_trace(trace: &RunTrace, series: &MetricSeries, tc: &TheoryConstants) -> Result<CheckReport> {
    let bounds = rate_and_bounds(tc)?;
    if bounds.len() != trace.epochs.len() {
        return Err(Error::InvalidEpochs(format!(
            "{} epochs in the trace but {} in the constants",
            trace.epochs.len(),
            bounds.len()
        )));
    }
    let mut alpha = InequalityCheck::new("rate_alpha");
    let mut beta = InequalityCheck::new("rate_beta");
    let mut delta = InequalityCheck::new("rate_delta");
    for (ell, bt) in bounds.iter().enumerate() {
        let k = trace.epochs[ell].eta;
        let eps = trace.epochs[ell].solution.eps_oracle();
        alpha.record(k, series.alpha[k], bt.alpha, eps);
        beta.record(k, series.beta[k], bt.beta, 0.0);
        delta.record(k, series.delta[k], bt.delta, 0.0);
    }
    let mut checks = vec![alpha, beta, delta];
    if let Ok(limit) = asymptotic_bound(tc) {
        if trace.epochs.len() > BURN_IN_EPOCHS {
            let mut asym = InequalityCheck::new("asymptotic_alpha");
            for rec in &trace.epochs[BURN_IN_EPOCHS..] {
                asym.record(rec.eta, series.alpha[rec.eta], limit, rec.solution.eps_oracle());
            }
            checks.push(asym);
        }
    }
    Ok(CheckReport { checks })
}

/// One `name = value` line per constant, full precision.
pub fn constants_report(tc: &TheoryConstants, dims: &LadderDims) -> String {
    let mut out = format!(
        "B = {}\nN = {}\nm = {}\nnorm_C = {:e}\ndiam_X = {:e}\nV_inf = {:e}\nrho_inf = {:e}\n",
        dims.b, dims.agents, dims.m, dims.norm_c, dims.diam, tc.v_inf, tc.rho_inf
    );
    if let Ok(v) = asymptotic_bound(tc) {
        out.push_str(&format!("asymptotic_bound = {v:e}\n"));
    }
    for th in &tc.epochs {
        let p = format!("epoch.{}", th.ell);
        let mut line = |k: &str, v: String| out.push_str(&format!("{p}.{k} = {v}\n"));
        line("gamma", format!("{:e}", th.gamma));
        line("r", th.r.to_string());
        for (k, v) in [
            ("D", th.d),
            ("E", th.e),
            ("F", th.f),
            ("G", th.g),
            ("c", th.c),
            ("rho", th.rho),
            ("one_minus_rho", th.gap),
            ("a_recursion_as_printed", th.a),
            ("b", th.b),
            ("d", th.d_bound),
            ("V_as_printed", th.v),
            ("gamma_max", th.gamma_max.value),
        ] {
            line(k, format!("{v:e}"));
        }
        if let Some(b0) = th.b0_theorem {
            line("b0_alternative", format!("{b0:e}"));
        }
        for (name, v) in GAMMA_TERM_NAMES.iter().zip(th.gamma_max.terms) {
            line(&format!("gamma_max_term[{name}]"), format!("{v:e}"));
        }
        line("gamma_max_binding", GAMMA_TERM_NAMES[th.gamma_max.binding].to_string());
        line("gamma_max_e_floored", th.gamma_max.e_floored.to_string());
        line("rate_hypothesis_holds", th.rate_hypothesis.to_string());
    }
    out
}
