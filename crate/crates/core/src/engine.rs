//! Tick-level execution of the asynchronous block update law.
//!
//! Within tick `k` every agent first applies the messages delivered at `k`,
//! then computes (if `k ∈ 𝒦^i`), then measures (if `k ∈ ℳ^i`). A measurement
//! at tick `k` samples the network output `Cx(k)` from the start of the tick
//! and becomes part of the agent's local output copy from tick `k + 1` on.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::check_len;
use crate::metrics::{solve_minimizer, MinimizerSolution};
use crate::model::{BlockLayout, BlockProjector, BoxProjector, BoxSet, OutputMap};
use crate::objective::{BoundaryView, EpochSchedule, EpochSource, QuadraticEpoch};
use crate::schedule::EventSchedule;
use crate::{Error, Result};

/// Static problem data shared by every epoch.
#[derive(Clone)]
pub struct Problem {
    pub layout: BlockLayout,
    pub set: BoxSet,
    pub map: OutputMap,
    pub projector: Arc<dyn BlockProjector>,
}

impl Problem {
    pub fn new(layout: BlockLayout, set: BoxSet, map: OutputMap) -> Result<Self> {
        check_len("problem box", layout.n(), set.dim())?;
        check_len("problem output rows", layout.m(), map.matrix().nrows())?;
        let projector = BoxProjector::shared(set.clone(), layout.clone())?;
        Ok(Self {
            layout,
            set,
            map,
            projector,
        })
    }

    /// Replaces the per-block projector. The box is still used for
    /// feasibility checks and by the minimizer oracle.
    pub fn with_projector(mut self, projector: Arc<dyn BlockProjector>) -> Self {
        self.projector = projector;
        self
    }
}

/// What the step-size rule sees when an epoch starts.
pub struct EpochContext<'a> {
    pub ell: usize,
    pub start: usize,
    pub epoch: &'a QuadraticEpoch,
    pub solution: &'a MinimizerSolution,
    pub previous: Option<(&'a QuadraticEpoch, &'a MinimizerSolution)>,
}

pub type AutoStep<'s> = Box<dyn FnMut(&EpochContext<'_>) -> Result<f64> + Send + 's>;

pub enum StepRule<'s> {
    PerEpoch(Vec<f64>),
    Constant(f64),
    /// Called once at the start of every epoch.
    Auto(AutoStep<'s>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Record every agent's local copies every this many ticks.
    pub snapshot_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x_local: DVector<f64>,
    pub y_local: DVector<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickEvents {
    pub updates: u32,
    pub measures: u32,
    pub deliveries: u32,
}

/// Data of one compute event, enough to replay the descent inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComputeRecord {
    pub tick: usize,
    pub agent: usize,
    /// `s_i(k)ᵀ ∇_{x_i} J` at the agent's local copies.
    pub dot_sg: f64,
    pub norm_s_sq: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub ell: usize,
    pub start: usize,
    /// `η_ℓ`, one past the last tick executed under this epoch.
    pub eta: usize,
    pub epoch: QuadraticEpoch,
    pub solution: MinimizerSolution,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub layout: BlockLayout,
    pub b: usize,
    pub horizon: usize,
    pub norm_c: f64,
    /// `x(k)` for `k = 0..=horizon`.
    pub x: Vec<DVector<f64>>,
    /// `s(k) = x(k + 1) − x(k)`.
    pub s: Vec<DVector<f64>>,
    /// Change of the measured output blocks at tick `k`.
    pub q: Vec<DVector<f64>>,
    pub events: Vec<TickEvents>,
    pub epochs: Vec<EpochRecord>,
    pub computes: Vec<ComputeRecord>,
    /// `(‖x^i(k) − x(k)‖, ‖y^i(k) − Cx(k)‖)` per tick and agent, as seen
    /// by the agent when it computes.
    pub deviations: Vec<Vec<[f64; 2]>>,
    pub snapshots: Vec<(usize, Vec<AgentState>)>,
}

impl RunTrace {
    pub fn y(&self, map: &OutputMap, k: usize) -> DVector<f64> {
        map.apply(&self.x[k])
    }

    /// Epoch scoring the state at tick `k`: 0 for `k = 0`, otherwise the
    /// `ℓ` with `k ∈ (η_{ℓ−1}, η_ℓ]`.
    pub fn epoch_of_state(&self, k: usize) -> usize {
        if k == 0 {
            return 0;
        }
        self.epochs.partition_point(|e| e.eta < k).min(self.epochs.len() - 1)
    }

    pub fn etas(&self) -> Vec<usize> {
        self.epochs.iter().map(|e| e.eta).collect()
    }
}

fn gamma_for(steps: &mut StepRule<'_>, ctx: &EpochContext<'_>) -> Result<f64> {
    let gamma = match steps {
        StepRule::Constant(g) => *g,
        StepRule::PerEpoch(gs) => *gs.get(ctx.ell).ok_or_else(|| {
            Error::InvalidEpochs(format!("no step size given for epoch {}", ctx.ell))
        })?,
        StepRule::Auto(f) => f(ctx)?,
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::NonPositiveStep { epoch: ctx.ell, gamma });
    }
    Ok(gamma)
}

/// Runs the asynchronous algorithm over the whole epoch schedule.
///
/// Every agent starts from the same `init` and `y = C·init`. The epoch
/// minimizer is solved when the epoch starts; generated epochs see the
/// agents' copies at the start of their first tick.
pub fn run(
    problem: &Problem,
    schedule: &EventSchedule,
    epochs: &EpochSchedule,
    init: &DVector<f64>,
    mut steps: StepRule<'_>,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let layout = &problem.layout;
    let map = &problem.map;
    let agents = layout.agents();
    let (n, m) = (layout.n(), layout.m());
    check_len("initial point", n, init.len())?;
    if let Some((index, value)) = problem.set.first_violation(init) {
        return Err(Error::InfeasibleInit { index, value });
    }
    if schedule.agents() != agents {
        return Err(Error::InvalidAgent {
            index: schedule.agents(),
            agents,
        });
    }
    let horizon = epochs.horizon();
    if schedule.horizon() != horizon {
        return Err(Error::InvalidEpochs(format!(
            "schedule horizon {} differs from the epoch horizon {horizon}",
            schedule.horizon()
        )));
    }
    if schedule.b() != epochs.b() {
        return Err(Error::InvalidEpochs(format!(
            "schedule B = {} differs from epoch B = {}",
            schedule.b(),
            epochs.b()
        )));
    }

    let (compute_mask, measure_mask) = schedule.event_masks();
    let mut arrivals: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); horizon];
    for to in 0..agents {
        for from in (0..agents).filter(|f| *f != to) {
            for d in schedule.deliveries(from, to) {
                arrivals[d.receive].push((to, from, d.origin));
            }
        }
    }

    let y0 = map.apply(init);
    let mut local_x = vec![init.clone(); agents];
    let mut local_y = vec![y0.clone(); agents];
    let mut own_y = y0;
    let mut own_y_after: Vec<DVector<f64>> = Vec::with_capacity(horizon);

    let mut trace = RunTrace {
        layout: layout.clone(),
        b: epochs.b(),
        horizon,
        norm_c: map.norm(),
        x: Vec::with_capacity(horizon + 1),
        s: Vec::with_capacity(horizon),
        q: Vec::with_capacity(horizon),
        events: Vec::with_capacity(horizon),
        epochs: Vec::with_capacity(epochs.len()),
        computes: Vec::new(),
        deviations: Vec::with_capacity(horizon),
        snapshots: Vec::new(),
    };
    trace.x.push(init.clone());

    let mut current: Option<(QuadraticEpoch, f64)> = None;
    let mut next_epoch = 0;
    let mut pending: Vec<Option<DVector<f64>>> = vec![None; agents];
    let mut grad = vec![0.0; layout.input_dims().iter().copied().max().unwrap_or(0)];

    for k in 0..horizon {
        let x_k = trace.x[k].clone();
        if next_epoch < epochs.len() && k == epochs.start(next_epoch) {
            let ell = next_epoch;
            let epoch = match epochs.source(ell) {
                EpochSource::Fixed(e) => (**e).clone(),
                EpochSource::Generator(gen) => gen(&BoundaryView {
                    ell,
                    tick: k,
                    x_true: &x_k,
                    local_x: &local_x,
                    local_y: &local_y,
                })?,
            };
            check_len("epoch n", n, epoch.n())?;
            check_len("epoch m", m, epoch.m())?;
            let solution = solve_minimizer(&epoch, map, &problem.set)?;
            let previous = trace.epochs.last().map(|r| (&r.epoch, &r.solution));
            let gamma = gamma_for(
                &mut steps,
                &EpochContext {
                    ell,
                    start: k,
                    epoch: &epoch,
                    solution: &solution,
                    previous,
                },
            )?;
            trace.epochs.push(EpochRecord {
                ell,
                start: k,
                eta: epochs.eta(ell),
                epoch: epoch.clone(),
                solution,
                gamma,
            });
            current = Some((epoch, gamma));
            next_epoch += 1;
        }
        let (epoch, gamma) = current.as_ref().expect("epoch 0 starts at tick 0");
        let gamma = *gamma;
        let mut ev = TickEvents::default();

        for i in 0..agents {
            pending[i] = measure_mask[i][k].then(|| map.row_block(i) * &x_k);
        }

        for &(to, from, origin) in &arrivals[k] {
            let r = layout.input_range(from);
            local_x[to].as_mut_slice()[r.clone()].copy_from_slice(&trace.x[origin].as_slice()[r]);
            let ro = layout.output_range(from);
            let src: &[f64] = if origin < k {
                &own_y_after[origin].as_slice()[ro.clone()]
            } else if let Some(p) = &pending[from] {
                p.as_slice()
            } else {
                &own_y.as_slice()[ro.clone()]
            };
            let src = src.to_vec();
            local_y[to].as_mut_slice()[ro].copy_from_slice(&src);
            ev.deliveries += 1;
        }

        let y_k = map.apply(&x_k);
        trace.deviations.push(
            (0..agents)
                .map(|i| [(&local_x[i] - &x_k).norm(), (&local_y[i] - &y_k).norm()])
                .collect(),
        );
        if opts.snapshot_every.is_some_and(|e| e > 0 && k % e == 0) {
            trace.snapshots.push((
                k,
                (0..agents)
                    .map(|i| AgentState {
                        x_local: local_x[i].clone(),
                        y_local: local_y[i].clone(),
                    })
                    .collect(),
            ));
        }

        let mut x_next = x_k.clone();
        for i in 0..agents {
            if !compute_mask[i][k] {
                continue;
            }
            let r = layout.input_range(i);
            let g = &mut grad[..r.len()];
            epoch.grad_block_into(map, layout, i, local_x[i].as_slice(), local_y[i].as_slice(), g);
            let own = &mut local_x[i].as_mut_slice()[r.clone()];
            let old: Vec<f64> = own.to_vec();
            for (v, gj) in own.iter_mut().zip(g.iter()) {
                *v -= gamma * gj;
            }
            problem.projector.project_block(i, own);
            let mut dot = 0.0;
            let mut ns = 0.0;
            for ((new, o), gj) in own.iter().zip(&old).zip(g.iter()) {
                let sj = new - o;
                dot += sj * gj;
                ns += sj * sj;
            }
            x_next.as_mut_slice()[r].copy_from_slice(own);
            trace.computes.push(ComputeRecord {
                tick: k,
                agent: i,
                dot_sg: dot,
                norm_s_sq: ns,
                gamma,
            });
            ev.updates += 1;
        }

        let mut q_k = DVector::zeros(m);
        for i in 0..agents {
            if let Some(p) = pending[i].take() {
                let ro = layout.output_range(i);
                for (j, v) in ro.clone().zip(p.iter()) {
                    q_k[j] = v - own_y[j];
                    own_y[j] = *v;
                }
                local_y[i].as_mut_slice()[ro].copy_from_slice(p.as_slice());
                ev.measures += 1;
            }
        }
        own_y_after.push(own_y.clone());

        trace.s.push(&x_next - &x_k);
        trace.q.push(q_k);
        trace.events.push(ev);
        trace.x.push(x_next);
    }
    Ok(trace)
}
