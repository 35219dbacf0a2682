//! Closed-loop simulation of the switched system.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, CONTAINMENT_TOL};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::synthesis::{AgentSystem, GainLibrary, GainMatrix};
use crate::trajectory::{
    build_reference, closest_parameter, coeffs_from_control_points, eval, reference_state_at,
    ReferenceSystem,
};

/// Remaining parameter below which the reference counts as finished.
const REF_DONE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "euler" => Ok(Integrator::Euler),
            other => Err(Error::Domain(format!("unknown integrator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Seconds per unit of spline parameter.
    pub time_scale: f64,
    /// Per-segment time budget; `None` means ten times the time scale.
    pub max_segment_time: Option<f64>,
    /// Distance to the switching point that allows a handoff.
    pub switch_tol: f64,
    /// Distance to the final point that ends the run.
    pub final_tol: f64,
    /// Variance of the Gaussian added to each input, redrawn every step.
    pub noise_variance: f64,
    pub seed: u64,
    pub integrator: Integrator,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            time_scale: 1.0,
            max_segment_time: None,
            switch_tol: 1e-2,
            final_tol: 1e-3,
            noise_variance: 0.0,
            seed: 0,
            integrator: Integrator::Rk4,
        }
    }
}

impl SimConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.time_scale > 0.0) {
            return Err(Error::Domain("time scale must be positive".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::Domain("noise variance must be nonnegative".into()));
        }
        if !(self.switch_tol > 0.0 && self.final_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn segment_budget(&self) -> f64 {
        self.max_segment_time.unwrap_or(10.0 * self.time_scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    /// Index of the active cell in the environment.
    pub cell: usize,
    pub ref_t: f64,
    pub y_p: DVector<f64>,
    /// `b_i - a_i . x` for every face of the active cell.
    pub h: DVector<f64>,
    pub v: f64,
}

impl LogRecord {
    pub fn h_min(&self) -> f64 {
        self.h.min()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub cell_ids: Vec<String>,
    pub records: Vec<LogRecord>,
    pub switches: Vec<SwitchEvent>,
    /// Final point of the last segment of the chain.
    pub goal: DVector<f64>,
}

impl TrajectoryLog {
    pub fn initial_cell(&self) -> usize {
        self.records[0].cell
    }

    pub fn last(&self) -> &LogRecord {
        self.records.last().expect("log has the initial record")
    }

    pub fn min_h(&self) -> f64 {
        self.records
            .iter()
            .map(LogRecord::h_min)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_v(&self) -> f64 {
        self.records.iter().map(|r| r.v).fold(0.0, f64::max)
    }

    /// Output distance `|C x - p(1)|` at the end of the run, for output
    /// matrix `c`.
    pub fn final_error(&self, c: &DMatrix<f64>) -> f64 {
        (c * &self.last().x - &self.goal).norm()
    }

    pub fn to_csv(&self) -> String {
        let first = &self.records[0];
        let (d, du, dy) = (first.x.len(), first.u.len(), first.y_p.len());
        let mut out = String::from("t");
        for i in 1..=d {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=du {
            let _ = write!(out, ",u{i}");
        }
        out.push_str(",cell,ref_t");
        for i in 1..=dy {
            let _ = write!(out, ",yp{i}");
        }
        out.push_str(",hmin,V\n");
        for r in &self.records {
            let _ = write!(out, "{:.16e}", r.t);
            for v in r.x.iter().chain(r.u.iter()) {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = write!(out, ",{},{:.16e}", self.cell_ids[r.cell], r.ref_t);
            for v in r.y_p.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = writeln!(out, ",{:.16e},{:.16e}", r.h_min(), r.v);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Advance `(x, x_p)` by `dt` under `u = K_y C x + K_p x_p + noise`.
///
/// `a_p` is the time-scaled reference matrix; `None` holds `x_p` fixed. The
/// noise is constant over the step, the feedback is re-evaluated at every
/// integrator stage. Returns the new states and the input at the start of
/// the step.
#[allow(clippy::too_many_arguments)]
pub fn step(
    agent: &AgentSystem,
    gain: &GainMatrix,
    a_p: Option<&DMatrix<f64>>,
    x: &DVector<f64>,
    x_p: &DVector<f64>,
    dt: f64,
    noise: &DVector<f64>,
    integrator: Integrator,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let k_y = gain.k_y();
    let k_p = gain.k_p();
    let input = |x: &DVector<f64>, x_p: &DVector<f64>| &k_y * (&agent.c * x) + &k_p * x_p + noise;
    let field = |x: &DVector<f64>, x_p: &DVector<f64>| {
        let dx = &agent.a * x + &agent.b * input(x, x_p);
        let dp = match a_p {
            Some(a) => a * x_p,
            None => DVector::zeros(x_p.len()),
        };
        (dx, dp)
    };
    let u = input(x, x_p);
    let (x1, p1) = match integrator {
        Integrator::Euler => {
            let (dx, dp) = field(x, x_p);
            (x + dx * dt, x_p + dp * dt)
        }
        Integrator::Rk4 => {
            let (k1x, k1p) = field(x, x_p);
            let (k2x, k2p) = field(&(x + &k1x * (dt / 2.0)), &(x_p + &k1p * (dt / 2.0)));
            let (k3x, k3p) = field(&(x + &k2x * (dt / 2.0)), &(x_p + &k2p * (dt / 2.0)));
            let (k4x, k4p) = field(&(x + &k3x * dt), &(x_p + &k3p * dt));
            (
                x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0),
                x_p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0),
            )
        }
    };
    if x1.iter().chain(p1.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Integration { time: dt });
    }
    Ok((x1, p1, u))
}

struct Active<'a> {
    cell: usize,
    gain: &'a GainMatrix,
    reference: ReferenceSystem,
    x_p: DVector<f64>,
    ref_t: f64,
    entered: f64,
}

fn activate<'a>(
    env: &Environment,
    library: &'a GainLibrary,
    cell: usize,
    x: &DVector<f64>,
    t: f64,
    config: &SimConfig,
) -> Result<Active<'a>> {
    let c = &env.cells()[cell];
    let entry = library
        .gain_for(&c.id)
        .ok_or_else(|| Error::MissingGain(c.id.clone()))?;
    if (entry.time_scale - config.time_scale).abs() > 1e-12 * config.time_scale {
        return Err(Error::Domain(format!(
            "gain for cell {} was synthesized for time scale {}, simulation uses {}",
            c.id, entry.time_scale, config.time_scale
        )));
    }
    let reference = build_reference(&coeffs_from_control_points(&c.segment));
    let y = &library.agent.c * x;
    let ref_t = closest_parameter(&c.segment, &y)?;
    let x_p = reference_state_at(&reference, &c.segment, ref_t)?;
    Ok(Active {
        cell,
        gain: &entry.gain,
        reference: reference.time_scaled(config.time_scale),
        x_p,
        ref_t,
        entered: t,
    })
}

fn record(env: &Environment, agent: &AgentSystem, active: &Active, t: f64, x: &DVector<f64>, u: DVector<f64>) -> LogRecord {
    let poly = &env.cells()[active.cell].polytope;
    let y_p = active.reference.output(&active.x_p);
    let v = (&agent.c * x - &y_p).norm_squared();
    LogRecord {
        t,
        x: x.clone(),
        u,
        cell: active.cell,
        ref_t: active.ref_t,
        y_p,
        h: poly.slacks(x),
        v,
    }
}

/// Simulate from `x0` through the chain until the last segment is tracked
/// to its end point.
pub fn run(
    env: &Environment,
    library: &GainLibrary,
    x0: &DVector<f64>,
    config: &SimConfig,
) -> Result<TrajectoryLog> {
    config.check()?;
    let agent = &library.agent;
    if x0.len() != agent.states() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, agent has {} states",
            x0.len(),
            agent.states()
        )));
    }
    let start = env.locate(x0, CONTAINMENT_TOL)?.ok_or(Error::NoContainingCell)?;
    let order = env.chain_order()?;
    let last_cell = *order.last().expect("nonempty chain");
    let goal = eval(&env.cells()[last_cell].segment, 1.0, 0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.noise_variance.sqrt())
        .map_err(|e| Error::Domain(format!("noise distribution: {e}")))?;
    let du = agent.inputs();
    let no_noise = DVector::zeros(du);

    let mut t = 0.0;
    let mut x = x0.clone();
    let mut active = activate(env, library, start, &x, t, config)?;
    let mut records = Vec::new();
    let u0 = active.gain.k_y() * (&agent.c * &x) + active.gain.k_p() * &active.x_p;
    records.push(record(env, agent, &active, t, &x, u0));
    let mut switches = Vec::new();

    loop {
        let done = 1.0 - active.ref_t < REF_DONE_EPS;
        let y = &agent.c * &x;
        if done {
            let seg = &env.cells()[active.cell].segment;
            match env.successor_of(active.cell) {
                None => {
                    if (&y - &goal).norm() <= config.final_tol {
                        break;
                    }
                }
                Some(next) => {
                    let near = (&y - seg.last()).norm() <= config.switch_tol;
                    let inside = env.cells()[next].polytope.contains(&x, CONTAINMENT_TOL)?;
                    if near || inside {
                        switches.push(SwitchEvent {
                            t,
                            from: active.cell,
                            to: next,
                            x: x.clone(),
                        });
                        active = activate(env, library, next, &x, t, config)?;
                        continue;
                    }
                }
            }
        }
        if t - active.entered > config.segment_budget() {
            return Err(Error::Timeout {
                cell: env.cells()[active.cell].id.clone(),
                time: t,
                state: x.iter().copied().collect(),
            });
        }

        let remaining = (1.0 - active.ref_t) * config.time_scale;
        let (h, a_p) = if done {
            (config.dt, None)
        } else if remaining < config.dt {
            (remaining, Some(&active.reference.a_p))
        } else {
            (config.dt, Some(&active.reference.a_p))
        };
        let noise = if config.noise_variance > 0.0 {
            DVector::from_fn(du, |_, _| normal.sample(&mut rng))
        } else {
            no_noise.clone()
        };
        let (x1, p1, u) = step(agent, active.gain, a_p, &x, &active.x_p, h, &noise, config.integrator)
            .map_err(|_| Error::Integration { time: t })?;
        t += h;
        x = x1;
        active.x_p = p1;
        if !done {
            active.ref_t = if remaining < config.dt {
                1.0
            } else {
                (active.ref_t + h / config.time_scale).min(1.0)
            };
            if 1.0 - active.ref_t < REF_DONE_EPS {
                // Hold the exact end state, not the integrated one.
                let seg = &env.cells()[active.cell].segment;
                active.x_p = reference_state_at(&active.reference, seg, 1.0)?;
            }
        }
        records.push(record(env, agent, &active, t, &x, u));
    }

    Ok(TrajectoryLog {
        cell_ids: env.cells().iter().map(|c| c.id.clone()).collect(),
        records,
        switches,
        goal,
    })
}

/// Minimum over time of the smallest face slack, per active cell, in
/// environment order. Cells that were never active are omitted.
pub fn safety_margin(log: &TrajectoryLog, env: &Environment) -> Vec<(String, f64)> {
    let mut mins = vec![f64::INFINITY; env.cells().len()];
    for r in &log.records {
        mins[r.cell] = mins[r.cell].min(r.h_min());
    }
    env.cells()
        .iter()
        .zip(mins)
        .filter(|(_, m)| m.is_finite())
        .map(|(c, m)| (c.id.clone(), m))
        .collect()
}
