//! Turning a [`SimConfig`] into core objects.

use std::sync::Arc;

use asyncfo_core::engine::Problem;
use asyncfo_core::model::{BlockLayout, BoxSet, OutputMap};
use asyncfo_core::objective::{EpochSchedule, EpochSource, QuadraticEpoch};
use asyncfo_core::rng::{substream, Purpose};
use asyncfo_core::schedule::AsyncConfig;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{read_matrix_file, EpochSourceKind, MatrixSpec, OutputMapKind, SimConfig};
use crate::error::{Context, HarnessError, Result};
use crate::presets::aircraft;

pub struct Setup {
    pub problem: Problem,
    pub epochs: EpochSchedule,
    pub init: DVector<f64>,
    pub async_cfg: AsyncConfig,
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn normal_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `AᵀA + I` with `A` standard normal.
pub fn random_spd<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, dim, dim);
    let mut s = a.transpose() * &a + DMatrix::identity(dim, dim);
    // Exact symmetry regardless of summation order.
    for r in 0..dim {
        for c in 0..r {
            let v = 0.5 * (s[(r, c)] + s[(c, r)]);
            s[(r, c)] = v;
            s[(c, r)] = v;
        }
    }
    s
}

/// The output matrix used by random instances: entries `N(0, 1)/√n`.
pub fn random_output_matrix(seed: u64, m: usize, n: usize) -> DMatrix<f64> {
    let mut rng = substream(seed, 0, Purpose::Problem);
    normal_matrix(&mut rng, m, n) / (n as f64).sqrt()
}

/// Epoch `ell` of the random quadratic program family.
pub fn random_qp_epoch(seed: u64, ell: usize, n: usize, m: usize) -> asyncfo_core::Result<QuadraticEpoch> {
    let mut rng = substream(seed, ell as u64 + 1, Purpose::Problem);
    let q_mat = random_spd(&mut rng, n);
    let p_mat = random_spd(&mut rng, m);
    let q_vec = normal_vector(&mut rng, n);
    let p_vec = normal_vector(&mut rng, m);
    QuadraticEpoch::from_linear_output(ell as f64, q_mat, q_vec, p_mat, p_vec)
}

fn matrix(cfg: &SimConfig, spec: &MatrixSpec, what: &str) -> Result<DMatrix<f64>> {
    let rows = match spec {
        MatrixSpec::Rows(r) => r.clone(),
        MatrixSpec::File(f) => read_matrix_file(&cfg.resolve(f))?,
    };
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(HarnessError::Config(format!("`{what}` is empty or ragged")));
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

fn expand(v: &[f64], n: usize) -> DVector<f64> {
    if v.len() == 1 {
        DVector::from_element(n, v[0])
    } else {
        DVector::from_column_slice(v)
    }
}

pub fn build(cfg: &SimConfig) -> Result<Setup> {
    cfg.validate()?;
    let (n, m) = (cfg.n(), cfg.m());
    let layout = BlockLayout::new(cfg.input_dims.clone(), cfg.output_dims.clone()).context("layout")?;
    let set = BoxSet::new(expand(&cfg.lower, n), expand(&cfg.upper, n)).context("box")?;
    let c = match cfg.output_map {
        OutputMapKind::Explicit => matrix(cfg, cfg.c.as_ref().expect("validated"), "c")?,
        OutputMapKind::Random => random_output_matrix(cfg.seed, m, n),
        OutputMapKind::Aircraft => aircraft::output_matrix(cfg.agents()),
    };
    let map = OutputMap::new(c, &layout).context("output map")?;
    let problem = Problem::new(layout, set.clone(), map).context("problem")?;

    let sources = match cfg.epoch_source {
        EpochSourceKind::Explicit => cfg
            .epochs
            .iter()
            .enumerate()
            .map(|(ell, e)| {
                let q_mat = matrix(cfg, &e.q_mat, "q_mat")?;
                let p_mat = matrix(cfg, &e.p_mat, "p_mat")?;
                let q_vec = DVector::from_column_slice(&e.q_vec);
                let epoch = match (&e.theta, &e.p_vec) {
                    (Some(theta), None) => {
                        QuadraticEpoch::new(ell as f64, q_mat, q_vec, p_mat, DVector::from_column_slice(theta), 0.0)
                    }
                    (None, Some(p)) => {
                        QuadraticEpoch::from_linear_output(ell as f64, q_mat, q_vec, p_mat, DVector::from_column_slice(p))
                    }
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "epoch {ell} needs exactly one of `theta` and `p_vec`"
                        )))
                    }
                }
                .context(format!("epoch {ell}"))?;
                Ok(EpochSource::Fixed(Arc::new(epoch)))
            })
            .collect::<Result<Vec<_>>>()?,
        EpochSourceKind::RandomQp => (0..cfg.epoch_count)
            .map(|ell| {
                random_qp_epoch(cfg.seed, ell, n, m)
                    .map(|e| EpochSource::Fixed(Arc::new(e)))
                    .context(format!("random epoch {ell}"))
            })
            .collect::<Result<Vec<_>>>()?,
        EpochSourceKind::Aircraft => {
            let generator = aircraft::epoch_generator(cfg.agents());
            vec![EpochSource::Generator(generator); cfg.epoch_count]
        }
    };
    let epochs = EpochSchedule::from_kappa(sources, cfg.kappas(), cfg.b).context("epoch schedule")?;

    let init = match &cfg.init {
        Some(v) => DVector::from_column_slice(v),
        None => set.project(&DVector::zeros(n)).context("initial point")?,
    };
    if let Some((index, value)) = set.first_violation(&init) {
        return Err(HarnessError::Config(format!(
            "initial point leaves the box at coordinate {index} ({value})"
        )));
    }
    let async_cfg = AsyncConfig::uniform(
        cfg.agents(),
        cfg.b,
        cfg.p_update,
        cfg.p_measure,
        cfg.p_communicate,
        cfg.delay_max,
        cfg.seed,
    );
    async_cfg.validate(cfg.agents()).context("asynchrony")?;
    Ok(Setup {
        problem,
        epochs,
        init,
        async_cfg,
    })
}
