//! Event schedules under partial asynchrony with delay bound `B`.
//!
//! A schedule lists, for every agent, the ticks at which it computes and
//! measures, and for every ordered pair `j → i` the messages delivered as
//! `(receive tick, origin tick)`. A message with origin `o` carries agent
//! `j`'s input block as it stood at the start of tick `o` and `j`'s own
//! output block as held after its tick-`o` measurement (if any).
//!
//! Text format, one record per line (`#` starts a comment):
//!
//! ```text
//! horizon 9
//! B 3
//! agents 2
//! compute 0 2
//! measure 1 5
//! deliver 0 1 4 3    # from to receive origin
//! ```

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::BlockLayout;
use crate::rng::{substream, Purpose};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsyncConfig {
    pub b: usize,
    pub p_update: Vec<f64>,
    pub p_measure: Vec<f64>,
    pub p_communicate: Vec<f64>,
    pub delay_max: usize,
    pub seed: u64,
}

impl AsyncConfig {
    /// Same probabilities for every agent.
    pub fn uniform(agents: usize, b: usize, p_update: f64, p_measure: f64, p_communicate: f64, delay_max: usize, seed: u64) -> Self {
        Self {
            b,
            p_update: vec![p_update; agents],
            p_measure: vec![p_measure; agents],
            p_communicate: vec![p_communicate; agents],
            delay_max,
            seed,
        }
    }

    pub fn validate(&self, agents: usize) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidAsyncConfig("B must be positive".into()));
        }
        if self.delay_max + 1 > self.b {
            return Err(Error::InvalidAsyncConfig(format!(
                "delay_max = {} exceeds B - 1 = {}",
                self.delay_max,
                self.b - 1
            )));
        }
        for (name, ps) in [
            ("p_update", &self.p_update),
            ("p_measure", &self.p_measure),
            ("p_communicate", &self.p_communicate),
        ] {
            if ps.len() != agents {
                return Err(Error::InvalidAsyncConfig(format!(
                    "{name} has {} entries for {agents} agents",
                    ps.len()
                )));
            }
            if let Some(i) = ps.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidAsyncConfig(format!("{name}[{i}] = {} is not in [0, 1]", ps[i])));
            }
        }
        Ok(())
    }
}

/// One message on the channel `from → to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub receive: usize,
    pub origin: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSchedule {
    horizon: usize,
    b: usize,
    compute: Vec<Vec<usize>>,
    measure: Vec<Vec<usize>>,
    /// `channels[to][from]`, sorted by receive tick.
    channels: Vec<Vec<Vec<Delivery>>>,
}

impl EventSchedule {
    /// Assembles a schedule from raw parts without checking the delay-bound
    /// invariants; use [`verify_schedule`] for that. Event lists are sorted
    /// and deduplicated, deliveries are sorted by receive tick.
    pub fn from_parts(
        horizon: usize,
        b: usize,
        mut compute: Vec<Vec<usize>>,
        mut measure: Vec<Vec<usize>>,
        mut channels: Vec<Vec<Vec<Delivery>>>,
    ) -> Result<Self> {
        let agents = compute.len();
        if agents == 0 || measure.len() != agents || channels.len() != agents {
            return Err(Error::InvalidLayout("schedule agent counts disagree".into()));
        }
        if b == 0 {
            return Err(Error::InvalidAsyncConfig("B must be positive".into()));
        }
        for list in compute.iter_mut().chain(measure.iter_mut()) {
            list.sort_unstable();
            list.dedup();
            if let Some(&t) = list.last() {
                if t >= horizon {
                    return Err(Error::InvalidTick { tick: t, horizon });
                }
            }
        }
        for row in channels.iter_mut() {
            if row.len() != agents {
                return Err(Error::InvalidLayout("schedule channel matrix is not square".into()));
            }
            for list in row.iter_mut() {
                list.sort_by_key(|d| d.receive);
            }
        }
        Ok(Self {
            horizon,
            b,
            compute,
            measure,
            channels,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn agents(&self) -> usize {
        self.compute.len()
    }

    /// `𝒦^i`, sorted.
    pub fn compute_ticks(&self, i: usize) -> &[usize] {
        &self.compute[i]
    }

    /// `ℳ^i`, sorted.
    pub fn measure_ticks(&self, i: usize) -> &[usize] {
        &self.measure[i]
    }

    /// Deliveries on `from → to`, sorted by receive tick.
    pub fn deliveries(&self, from: usize, to: usize) -> &[Delivery] {
        &self.channels[to][from]
    }

    pub fn delivery_count(&self) -> usize {
        self.channels.iter().flatten().map(Vec::len).sum()
    }

    fn check(&self, i: usize, j: usize, k: usize) -> Result<()> {
        for a in [i, j] {
            if a >= self.agents() {
                return Err(Error::InvalidAgent {
                    index: a,
                    agents: self.agents(),
                });
            }
        }
        if k >= self.horizon {
            return Err(Error::InvalidTick {
                tick: k,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn latest_at_or_before(ticks: &[usize], k: usize) -> Option<usize> {
        let idx = ticks.partition_point(|t| *t <= k);
        (idx > 0).then(|| ticks[idx - 1])
    }

    fn latest_delivery(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let list = self.deliveries(j, i);
        let idx = list.partition_point(|d| d.receive <= k);
        (idx > 0).then(|| list[idx - 1].origin)
    }

    /// `τ^i_j(k)`: origin of the newest value of block `j` held by agent `i`
    /// at tick `k`; `k` itself when `i = j` and 0 before any delivery.
    pub fn staleness_at(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        self.check(i, j, k)?;
        if i == j {
            return Ok(k);
        }
        Ok(self.latest_delivery(i, j, k).unwrap_or(0))
    }

    /// `μ^i_j(k)`: tick of the measurement behind agent `i`'s copy of output
    /// block `j`. For `i = j` the latest own measurement at or before `k`.
    pub fn measurement_staleness_at(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        self.check(i, j, k)?;
        if i == j {
            return Ok(Self::latest_at_or_before(&self.measure[i], k).unwrap_or(0));
        }
        Ok(self
            .latest_delivery(i, j, k)
            .and_then(|o| Self::latest_at_or_before(&self.measure[j], o))
            .unwrap_or(0))
    }

    /// Per-tick flags `[agent][tick]` for compute and measure events.
    pub fn event_masks(&self) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
        let mask = |lists: &Vec<Vec<usize>>| {
            lists
                .iter()
                .map(|ticks| {
                    let mut v = vec![false; self.horizon];
                    for t in ticks {
                        v[*t] = true;
                    }
                    v
                })
                .collect()
        };
        (mask(&self.compute), mask(&self.measure))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("horizon {}\nB {}\nagents {}\n", self.horizon, self.b, self.agents());
        for (i, ticks) in self.compute.iter().enumerate() {
            for t in ticks {
                out.push_str(&format!("compute {i} {t}\n"));
            }
        }
        for (i, ticks) in self.measure.iter().enumerate() {
            for t in ticks {
                out.push_str(&format!("measure {i} {t}\n"));
            }
        }
        for (to, row) in self.channels.iter().enumerate() {
            for (from, list) in row.iter().enumerate() {
                for d in list {
                    out.push_str(&format!("deliver {from} {to} {} {}\n", d.receive, d.origin));
                }
            }
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut horizon = None;
        let mut b = None;
        let mut agents: Option<usize> = None;
        let mut compute = Vec::new();
        let mut measure = Vec::new();
        let mut channels: Vec<Vec<Vec<Delivery>>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut words = body.split_whitespace();
            let kind = words.next().unwrap();
            let nums = words
                .map(|w| {
                    w.parse::<usize>().map_err(|e| Error::Parse {
                        line,
                        message: format!("`{w}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let want = |n: usize| -> Result<()> {
                if nums.len() == n {
                    Ok(())
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("`{kind}` expects {n} integers, found {}", nums.len()),
                    })
                }
            };
            let need_agents = || -> Result<usize> {
                agents.ok_or(Error::Parse {
                    line,
                    message: "`agents` must precede events".into(),
                })
            };
            let agent = |a: usize, count: usize| -> Result<usize> {
                if a < count {
                    Ok(a)
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("agent {a} out of range"),
                    })
                }
            };
            match kind {
                "horizon" => {
                    want(1)?;
                    horizon = Some(nums[0]);
                }
                "B" => {
                    want(1)?;
                    b = Some(nums[0]);
                }
                "agents" => {
                    want(1)?;
                    agents = Some(nums[0]);
                    compute = vec![Vec::new(); nums[0]];
                    measure = vec![Vec::new(); nums[0]];
                    channels = vec![vec![Vec::new(); nums[0]]; nums[0]];
                }
                "compute" | "measure" => {
                    want(2)?;
                    let a = agent(nums[0], need_agents()?)?;
                    if kind == "compute" {
                        compute[a].push(nums[1]);
                    } else {
                        measure[a].push(nums[1]);
                    }
                }
                "deliver" => {
                    want(4)?;
                    let count = need_agents()?;
                    let (from, to) = (agent(nums[0], count)?, agent(nums[1], count)?);
                    channels[to][from].push(Delivery {
                        receive: nums[2],
                        origin: nums[3],
                    });
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown record `{other}`"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::Parse {
            line: 0,
            message: format!("missing `{what}` header"),
        };
        let horizon = horizon.ok_or_else(|| missing("horizon"))?;
        let b = b.ok_or_else(|| missing("B"))?;
        agents.ok_or_else(|| missing("agents"))?;
        Self::from_parts(horizon, b, compute, measure, channels)
    }
}

/// Bernoulli events with lazy forcing: an event is forced at tick `k` when
/// none occurred in `{k − B + 1, …, k − 1}` and `k ≥ B − 1`.
fn draw_covering(p: f64, b: usize, horizon: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for k in 0..horizon {
        let hit = rng.random::<f64>() < p;
        let uncovered = k + 1 >= b && last.is_none_or(|l| k - l >= b);
        if hit || uncovered {
            out.push(k);
            last = Some(k);
        }
    }
    out
}

/// Draws a schedule satisfying partial asynchrony with bound `cfg.b`.
///
/// Random communications go to every other agent with independent delays in
/// `{0, …, delay_max}` over FIFO channels. A pass over each channel then
/// forces a zero-delay delivery at tick `k` whenever the held input or
/// output copy would otherwise be older than `B − 1` ticks, dropping any
/// later random deliveries it supersedes.
pub fn generate_schedule(cfg: &AsyncConfig, layout: &BlockLayout, horizon: usize) -> Result<EventSchedule> {
    let agents = layout.agents();
    cfg.validate(agents)?;
    let b = cfg.b;
    if horizon < b {
        return Err(Error::HorizonTooShort { horizon, b });
    }
    let compute: Vec<Vec<usize>> = (0..agents)
        .map(|i| draw_covering(cfg.p_update[i], b, horizon, &mut substream(cfg.seed, i as u64, Purpose::Update)))
        .collect();
    let measure: Vec<Vec<usize>> = (0..agents)
        .map(|i| draw_covering(cfg.p_measure[i], b, horizon, &mut substream(cfg.seed, i as u64, Purpose::Measure)))
        .collect();

    let mut channels = vec![vec![Vec::<Delivery>::new(); agents]; agents];
    for from in 0..agents {
        let mut comm = substream(cfg.seed, from as u64, Purpose::Communicate);
        let mut delay = substream(cfg.seed, from as u64, Purpose::Delay);
        let mut last_receive = vec![0usize; agents];
        for k in 0..horizon {
            if comm.random::<f64>() >= cfg.p_communicate[from] {
                continue;
            }
            for to in (0..agents).filter(|t| *t != from) {
                let d = delay.random_range(0..=cfg.delay_max);
                let receive = (k + d).max(last_receive[to]);
                last_receive[to] = receive;
                if receive < horizon {
                    channels[to][from].push(Delivery { receive, origin: k });
                }
            }
        }
    }

    for (to, row) in channels.iter_mut().enumerate() {
        for (from, list) in row.iter_mut().enumerate() {
            if from == to {
                continue;
            }
            *list = enforce_channel(list, &measure[from], b, horizon);
        }
    }
    EventSchedule::from_parts(horizon, b, compute, measure, channels)
}

fn enforce_channel(random: &[Delivery], sender_measure: &[usize], b: usize, horizon: usize) -> Vec<Delivery> {
    let mut out = Vec::with_capacity(random.len());
    let mut next = 0;
    let mut tau = 0usize;
    let mut mu = 0usize;
    let mut floor = 0usize;
    for k in 0..horizon {
        let mut received = false;
        while next < random.len() && random[next].receive == k {
            let d = random[next];
            next += 1;
            if d.origin < floor {
                continue;
            }
            out.push(d);
            tau = d.origin;
            received = true;
        }
        if received {
            mu = EventSchedule::latest_at_or_before(sender_measure, tau).unwrap_or(0);
        }
        if k - tau > b - 1 || k - mu > b - 1 {
            out.push(Delivery { receive: k, origin: k });
            tau = k;
            mu = EventSchedule::latest_at_or_before(sender_measure, k).unwrap_or(0);
            floor = k;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// No compute event in `{k, …, k + B − 1}`.
    ComputeCoverage { agent: usize, window_start: usize },
    /// No measure event in `{k, …, k + B − 1}`.
    MeasureCoverage { agent: usize, window_start: usize },
    /// `k − τ^i_j(k) > B − 1`.
    StaleInput { to: usize, from: usize, tick: usize, origin: usize },
    /// `k − μ^i_j(k) > B − 1`.
    StaleOutput { to: usize, from: usize, tick: usize, measured: usize },
    /// Payload origin after its receive tick.
    Causality { to: usize, from: usize, receive: usize, origin: usize },
    /// Payload origins decrease along a channel.
    Reordered { to: usize, from: usize, receive: usize, origin: usize },
    /// Event or receive tick at or beyond the horizon.
    OutOfHorizon { agent: usize, tick: usize },
    /// Delivery list entries out of receive order, or a self channel.
    MalformedChannel { to: usize, from: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Independent replay of every partial-asynchrony condition; an empty result
/// means the schedule is valid.
pub fn verify_schedule(s: &EventSchedule) -> Vec<Violation> {
    let agents = s.agents();
    let (h, b) = (s.horizon, s.b);
    let mut out = Vec::new();
    for i in 0..agents {
        for (ticks, compute) in [(&s.compute[i], true), (&s.measure[i], false)] {
            let mut has = vec![false; h];
            for &t in ticks.iter() {
                if t >= h {
                    out.push(Violation::OutOfHorizon { agent: i, tick: t });
                } else {
                    has[t] = true;
                }
            }
            if h >= b {
                for start in 0..=h - b {
                    if !has[start..start + b].iter().any(|x| *x) {
                        out.push(if compute {
                            Violation::ComputeCoverage { agent: i, window_start: start }
                        } else {
                            Violation::MeasureCoverage { agent: i, window_start: start }
                        });
                    }
                }
            }
        }
    }
    for to in 0..agents {
        for from in 0..agents {
            let list = &s.channels[to][from];
            if from == to {
                if !list.is_empty() {
                    out.push(Violation::MalformedChannel { to, from });
                }
                continue;
            }
            let mut prev_receive = 0;
            let mut prev_origin = 0;
            for d in list {
                if d.receive < prev_receive {
                    out.push(Violation::MalformedChannel { to, from });
                }
                if d.origin > d.receive {
                    out.push(Violation::Causality { to, from, receive: d.receive, origin: d.origin });
                }
                if d.origin < prev_origin {
                    out.push(Violation::Reordered { to, from, receive: d.receive, origin: d.origin });
                }
                if d.receive >= h {
                    out.push(Violation::OutOfHorizon { agent: to, tick: d.receive });
                }
                prev_receive = d.receive;
                prev_origin = prev_origin.max(d.origin);
            }
            // Forward replay of the held origins.
            let mut measured_by = vec![None; h];
            let mut last = None;
            let mut mi = 0;
            for (k, slot) in measured_by.iter_mut().enumerate() {
                while mi < s.measure[from].len() && s.measure[from][mi] <= k {
                    last = Some(s.measure[from][mi]);
                    mi += 1;
                }
                *slot = last;
            }
            let mut tau = 0usize;
            let mut have = false;
            let mut next = 0;
            for k in 0..h {
                while next < list.len() && list[next].receive <= k {
                    tau = list[next].origin;
                    have = true;
                    next += 1;
                }
                let mu = if have && tau < h { measured_by[tau].unwrap_or(0) } else { 0 };
                if k > tau + (b - 1) {
                    out.push(Violation::StaleInput { to, from, tick: k, origin: tau });
                }
                if k > mu + (b - 1) {
                    out.push(Violation::StaleOutput { to, from, tick: k, measured: mu });
                }
            }
        }
    }
    out
}
