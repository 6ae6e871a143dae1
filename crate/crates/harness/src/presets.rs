//! Ready-made experiments.

use crate::config::{EpochSourceKind, OutputMapKind, SimConfig, StepKind};

/// Time-varying random quadratic program: ten agents with two inputs and one
/// output each, a fresh objective every 1000 ticks.
pub fn preset_qp(seed: u64) -> SimConfig {
    SimConfig {
        name: "qp".into(),
        input_dims: vec![2; 10],
        output_dims: vec![1; 10],
        lower: vec![-10.0],
        upper: vec![10.0],
        init: None,
        output_map: OutputMapKind::Random,
        c: None,
        epoch_source: EpochSourceKind::RandomQp,
        epochs: Vec::new(),
        epoch_count: 10,
        kappa: vec![1000],
        b: 5,
        p_update: 0.01,
        p_measure: 0.01,
        p_communicate: 0.01,
        delay_max: 4,
        step: StepKind::Constant,
        gamma: vec![0.001],
        gamma_fraction: 0.9,
        seed,
        lambda_eb: None,
        thin: 1,
        checks: true,
        out_dir: None,
        base_dir: None,
    }
}

/// Eight aircraft tracking a sinusoidal altitude profile with fixed
/// separations; 20 objectives of 500 ticks each.
pub fn preset_aircraft(seed: u64) -> SimConfig {
    let agents = aircraft::AGENTS;
    SimConfig {
        name: "aircraft".into(),
        input_dims: vec![5; agents],
        output_dims: vec![2; agents],
        lower: aircraft::X_MIN.repeat(agents),
        upper: aircraft::X_MAX.repeat(agents),
        init: Some(aircraft::TRIM.repeat(agents)),
        output_map: OutputMapKind::Aircraft,
        c: None,
        epoch_source: EpochSourceKind::Aircraft,
        epochs: Vec::new(),
        epoch_count: 20,
        kappa: vec![500],
        b: 50,
        p_update: 0.5,
        p_measure: 0.5,
        p_communicate: 0.5,
        delay_max: 49,
        step: StepKind::Constant,
        gamma: vec![aircraft::DEFAULT_GAMMA],
        gamma_fraction: 0.9,
        seed,
        lambda_eb: None,
        thin: 1,
        checks: true,
        out_dir: None,
        base_dir: None,
    }
}

pub mod aircraft {
    //! Linearised F-16XL longitudinal model. Each agent's state is
    //! `[v, ϑ, φ, φ̇, ξ]` (speed, angle of attack, pitch, pitch rate,
    //! altitude) and its outputs are `[v̇, ξ]`.

    use std::f64::consts::PI;
    use std::sync::Arc;

    use asyncfo_core::objective::{BoundaryView, EpochGenerator, QuadraticEpoch};
    use nalgebra::{DMatrix, DVector};

    pub const AGENTS: usize = 8;
    pub const STATE: usize = 5;
    pub const ALTITUDE: usize = 4;
    pub const C_ROWS: [[f64; STATE]; 2] = [[-0.0133, -7.3259, -3.17, -1.1965, 0.0001], [0.0, 0.0, 0.0, 0.0, 1.0]];
    pub const TRIM: [f64; STATE] = [500.0, 0.0, 0.0, 0.0, 15000.0];
    pub const X_MIN: [f64; STATE] = [443.7336, -13.0, -25.0, -60.0, 1000.0];
    pub const X_MAX: [f64; STATE] = [556.2664, 1.5, 25.0, 60.0, 40000.0];
    pub const Q_WEIGHT: f64 = 100.0;
    pub const R_WEIGHT: f64 = 1e6;
    pub const P_ACCEL: f64 = 1e3;
    pub const P_ALTITUDE: f64 = 5e4;
    pub const SEPARATION: f64 = 1500.0;
    pub const SAMPLE_TIME: f64 = 5.0;
    pub const ACCEL_GAIN: f64 = 0.1;
    /// Tuned by hand: `1e−6` diverges under `B = 50` against the `10⁶`
    /// separation weight; `5e−7` is the largest stable value tried.
    pub const DEFAULT_GAMMA: f64 = 2e-7;

    /// Desired altitude `15000 + 1500 sin(ℓ t_s π / 24)`.
    pub fn desired_altitude(ell: usize) -> f64 {
        15000.0 + 1500.0 * (ell as f64 * SAMPLE_TIME * PI / 24.0).sin()
    }

    /// Block-diagonal `C` with the same two rows for every aircraft.
    pub fn output_matrix(agents: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(2 * agents, STATE * agents);
        for i in 0..agents {
            for (r, row) in C_ROWS.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    c[(2 * i + r, STATE * i + j)] = *v;
                }
            }
        }
        c
    }

    /// `S` with `(Sx)_j = ξ_j − ξ_{j+1}`.
    pub fn separation_selector(agents: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(agents - 1, STATE * agents);
        for j in 0..agents - 1 {
            s[(j, STATE * j + ALTITUDE)] = 1.0;
            s[(j, STATE * (j + 1) + ALTITUDE)] = -1.0;
        }
        s
    }

    /// `(Q, q, constant)` of `½xᵀQx + qᵀx + c = ½·100‖x‖² + ½(Sx − ω)ᵀR(Sx − ω)`.
    pub fn input_cost(agents: usize) -> (DMatrix<f64>, DVector<f64>, f64) {
        let n = STATE * agents;
        let s = separation_selector(agents);
        let omega = DVector::from_element(agents - 1, SEPARATION);
        let q_mat = DMatrix::identity(n, n) * Q_WEIGHT + s.transpose() * &s * R_WEIGHT;
        let q_vec = -(s.transpose() * &omega) * R_WEIGHT;
        let constant = 0.5 * R_WEIGHT * omega.norm_squared();
        (q_mat, q_vec, constant)
    }

    pub fn output_weight(agents: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(2 * agents, 2 * agents);
        for i in 0..agents {
            p[(2 * i, 2 * i)] = P_ACCEL;
            p[(2 * i + 1, 2 * i + 1)] = P_ALTITUDE;
        }
        p
    }

    /// Acceleration target `(0.1/t_s)(Φ − mean altitude in the local copy)`.
    pub fn desired_acceleration(phi: f64, local_x: &DVector<f64>, agents: usize) -> f64 {
        let mean = (0..agents).map(|j| local_x[STATE * j + ALTITUDE]).sum::<f64>() / agents as f64;
        ACCEL_GAIN / SAMPLE_TIME * (phi - mean)
    }

    /// Output targets ordered like the outputs: `[Ψ_i, Φ]` per aircraft.
    pub fn targets(ell: usize, local_x: &[DVector<f64>]) -> DVector<f64> {
        let agents = local_x.len();
        let phi = desired_altitude(ell);
        let mut theta = DVector::zeros(2 * agents);
        for (i, x) in local_x.iter().enumerate() {
            theta[2 * i] = desired_acceleration(phi, x, agents);
            theta[2 * i + 1] = phi;
        }
        theta
    }

    pub fn epoch_generator(agents: usize) -> EpochGenerator {
        let (q_mat, q_vec, constant) = input_cost(agents);
        let p_mat = output_weight(agents);
        Arc::new(move |view: &BoundaryView<'_>| {
            QuadraticEpoch::new(
                view.ell as f64 * SAMPLE_TIME,
                q_mat.clone(),
                q_vec.clone(),
                p_mat.clone(),
                targets(view.ell, view.local_x),
                constant,
            )
        })
    }
}
