//! Primal-dual local-search solvers.
//!
//! Both solvers keep one supergradient line per agent, initialized at the
//! origin, and maintain that every item sits with an agent maximizing
//! `u[i][j]·s_i`. While some agent's dual value exceeds its primal value
//! by more than its curvature allowance, the solver first defects that
//! agent's improperly assigned items and only then lowers the agent's
//! slope: geometrically by `1/(1+ε)` in multiplicative mode, by the
//! absolute step `ε/m` in additive mode. Termination yields a verified
//! dual certificate within the curvature bound of the primal objective.

use crate::curvature::{add_curvature_with, mult_curvature_with, SearchParams};
use crate::dual::{price_product, DualMode, DualState};
use crate::error::{IcaError, Result};
use crate::instance::{Allocation, Instance};
use crate::report::{EventKind, SolveReport, TerminationReason, TraceEvent};

/// How the per-agent loop thresholds are chosen.
#[derive(Debug, Clone)]
pub enum TargetSpec {
    /// Compute curvature per agent from the instance's utilities.
    Auto,
    /// Caller-provided per-agent values.
    Explicit(Vec<f64>),
    /// One uniform value for every agent (the guessing wrapper).
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub epsilon: f64,
    /// Absolute tolerance used by certificate checks and the
    /// under-allocation instrumentation.
    pub tol: f64,
    /// Slope floor; an agent whose slope would fall below it is marked
    /// saturated instead.
    pub s_min: f64,
    /// Record a full event trace in the report.
    pub trace: bool,
    /// Iteration budget multiplier over the analytic ceiling.
    pub budget_factor: f64,
    /// Maximum guess for the guessing wrapper.
    pub guess_cap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: 0.01,
            tol: 1e-9,
            s_min: 1e-12,
            trace: false,
            budget_factor: 4.0,
            guess_cap: 10.0,
        }
    }
}

impl SolveOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SolveOptions {
            epsilon,
            ..Default::default()
        }
    }
}

/// Multiplicative solver: approximation `(1+ε)·max_i mu_i`.
pub fn solve_multiplicative(inst: &Instance, epsilon: f64, mu: TargetSpec) -> Result<SolveReport> {
    solve_multiplicative_opts(inst, mu, &SolveOptions::with_epsilon(epsilon))
}

pub fn solve_multiplicative_opts(
    inst: &Instance,
    mu: TargetSpec,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    validate_for_mult(inst)?;
    let (targets, clamped) = resolve_targets(inst, &mu, DualMode::Multiplicative, opts)?;
    let mut engine = Engine::new(inst, DualMode::Multiplicative, targets, clamped, opts);
    Ok(engine.run(false).0)
}

/// Additive solver: bound `Σ_i alpha_i + ε`.
pub fn solve_additive(inst: &Instance, epsilon: f64, alpha: TargetSpec) -> Result<SolveReport> {
    solve_additive_opts(inst, alpha, &SolveOptions::with_epsilon(epsilon))
}

pub fn solve_additive_opts(
    inst: &Instance,
    alpha: TargetSpec,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    inst.validate()?;
    let (targets, clamped) = resolve_targets(inst, &alpha, DualMode::Additive, opts)?;
    let mut engine = Engine::new(inst, DualMode::Additive, targets, clamped, opts);
    Ok(engine.run(false).0)
}

/// Multiplicative solver without curvature knowledge: start the uniform
/// guess at `1+ε` and raise it by `ε` whenever a defection leaves an agent
/// under-allocated past the guess, accepting the first clean run.
pub fn solve_multiplicative_guessing(inst: &Instance, epsilon: f64) -> Result<SolveReport> {
    solve_multiplicative_guessing_opts(inst, &SolveOptions::with_epsilon(epsilon))
}

pub fn solve_multiplicative_guessing_opts(
    inst: &Instance,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    validate_for_mult(inst)?;
    let mut guess = 1.0 + opts.epsilon;
    loop {
        if guess > opts.guess_cap {
            return Err(IcaError::GuessCap(format!(
                "no clean run below the guess cap {}",
                opts.guess_cap
            )));
        }
        let targets = vec![guess; inst.n()];
        let clamped = vec![false; inst.n()];
        let mut engine = Engine::new(inst, DualMode::Multiplicative, targets, clamped, opts);
        let (mut report, under_detected) = engine.run(true);
        if !under_detected && report.converged() {
            report.accepted_guess = Some(guess);
            return Ok(report);
        }
        if !under_detected {
            // budget blowouts and other internal failures are reported as-is
            report.accepted_guess = Some(guess);
            return Ok(report);
        }
        guess += opts.epsilon;
    }
}

fn validate_for_mult(inst: &Instance) -> Result<()> {
    inst.validate()?;
    for (i, agent) in inst.agents.iter().enumerate() {
        if agent.valuation.value(0.0) < 0.0 {
            return Err(IcaError::Domain(format!(
                "agent {i}: valuation is negative near 0; the multiplicative \
                 guarantee requires non-negative valuations"
            )));
        }
        if !(agent.valuation.slope_at_zero() > 0.0) {
            return Err(IcaError::Domain(format!(
                "agent {i}: initial slope must be positive for the multiplicative solver"
            )));
        }
    }
    Ok(())
}

fn resolve_targets(
    inst: &Instance,
    spec: &TargetSpec,
    mode: DualMode,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = inst.n();
    let raw = match spec {
        TargetSpec::Explicit(ts) => {
            if ts.len() != n {
                return Err(IcaError::InvalidInstance(format!(
                    "{} targets for {} agents",
                    ts.len(),
                    n
                )));
            }
            ts.clone()
        }
        TargetSpec::Uniform(t) => vec![*t; n],
        TargetSpec::Auto => {
            let mut ts = Vec::with_capacity(n);
            for i in 0..n {
                let w = inst.row_max(i);
                if w <= 0.0 {
                    // an agent that values nothing never violates anything
                    ts.push(match mode {
                        DualMode::Multiplicative => 1.0,
                        DualMode::Additive => 0.0,
                    });
                    continue;
                }
                let params = SearchParams {
                    z_max: Some(inst.row_sum(i)),
                    ..Default::default()
                };
                let report = match mode {
                    DualMode::Multiplicative => {
                        mult_curvature_with(&inst.agents[i].valuation, w, &params)?
                    }
                    DualMode::Additive => {
                        add_curvature_with(&inst.agents[i].valuation, w, &params)?
                    }
                };
                ts.push(report.value);
            }
            ts
        }
    };
    // agents with genuine curvature need headroom of at least 1+eps for
    // the geometric update count to stay bounded
    let mut clamped = vec![false; n];
    let targets = match mode {
        DualMode::Multiplicative => raw
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if *t > 1.0 && *t < 1.0 + opts.epsilon {
                    clamped[i] = true;
                    1.0 + opts.epsilon
                } else {
                    *t
                }
            })
            .collect(),
        DualMode::Additive => raw,
    };
    Ok((targets, clamped))
}

struct Engine<'a> {
    inst: &'a Instance,
    mode: DualMode,
    targets: Vec<f64>,
    clamped: Vec<bool>,
    opts: SolveOptions,
    state: DualState,
    owner: Vec<Option<usize>>,
    utils: Vec<f64>,
    saturated: Vec<bool>,
    slope_updates: Vec<u64>,
    reassignments: u64,
    under_events: u64,
    step: u64,
    trace: Vec<TraceEvent>,
    budget: u64,
    // price each item was last assigned at; never increases across its
    // consecutive defections because slopes only fall
    last_assign_price: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        inst: &'a Instance,
        mode: DualMode,
        targets: Vec<f64>,
        clamped: Vec<bool>,
        opts: &SolveOptions,
    ) -> Self {
        let n = inst.n();
        let state = DualState::init_at_zero(inst, mode, opts.epsilon);
        let budget = iteration_budget(inst, mode, &targets, opts);
        Engine {
            inst,
            mode,
            targets,
            clamped,
            opts: opts.clone(),
            state,
            owner: vec![None; inst.m],
            utils: vec![0.0; n],
            saturated: vec![false; n],
            slope_updates: vec![0; n],
            reassignments: 0,
            under_events: 0,
            step: 0,
            trace: Vec::new(),
            budget,
            last_assign_price: vec![f64::INFINITY; inst.m],
        }
    }

    fn recompute_utils(&mut self) {
        for u in self.utils.iter_mut() {
            *u = 0.0;
        }
        for (j, owner) in self.owner.iter().enumerate() {
            if let Some(i) = owner {
                self.utils[*i] += self.inst.utilities[*i][j];
            }
        }
    }

    fn emit(&mut self, event: EventKind, agent: usize, item: Option<usize>, slope: Option<f64>) {
        if self.opts.trace {
            self.trace.push(TraceEvent {
                t: self.step,
                event,
                agent,
                item,
                slope,
                bid: None,
            });
        }
        self.step += 1;
    }

    /// Strict loop-condition check for agent `i` at its current utility.
    fn violated(&self, i: usize) -> bool {
        if self.saturated[i] {
            return false;
        }
        let d = self.state.agent_dual_value(i, self.utils[i]);
        let v = self.inst.agents[i].valuation.value(self.utils[i]);
        match self.mode {
            DualMode::Multiplicative => {
                if v > 0.0 {
                    d > self.targets[i] * v
                } else {
                    // v(u)=0: the ratio is +inf whenever D > 0; an agent
                    // still anchored at zero has D = v(0) = 0 and passes
                    d > 0.0
                }
            }
            DualMode::Additive => d - v > self.targets[i],
        }
    }

    /// The improperly assigned item of agent `i` with the largest regret,
    /// ties to the lowest item index, plus its defection target.
    fn best_improper(&self, i: usize) -> Option<(usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for j in 0..self.inst.m {
            if self.owner[j] != Some(i) {
                continue;
            }
            let own = price_product(self.state.points[i].slope, self.inst.utilities[i][j]);
            let target = match self.state.best_agent(self.inst, j, Some(i)) {
                Some(k) => k,
                None => continue,
            };
            if target == i {
                continue;
            }
            let max = price_product(
                self.state.points[target].slope,
                self.inst.utilities[target][j],
            );
            if !(max > own) {
                continue; // owner attains the maximum: properly assigned
            }
            let regret = if max.is_infinite() {
                f64::INFINITY
            } else {
                max - own
            };
            match best {
                None => best = Some((regret, j, target)),
                Some((r, _, _)) if regret > r => best = Some((regret, j, target)),
                _ => {}
            }
        }
        best.map(|(_, j, k)| (j, k))
    }

    /// After a reassignment no agent sitting left of its anchor may exceed
    /// its bound; exact arithmetic rules this state out.
    fn under_allocated_violator(&self) -> Option<usize> {
        for i in 0..self.inst.n() {
            if self.utils[i] >= self.state.points[i].anchor - 1e-12 {
                continue;
            }
            let d = self.state.agent_dual_value(i, self.utils[i]);
            let v = self.inst.agents[i].valuation.value(self.utils[i]);
            let bad = match self.mode {
                DualMode::Multiplicative => {
                    if v > 0.0 {
                        d > (self.targets[i] + self.opts.tol) * v
                    } else {
                        d > self.opts.tol
                    }
                }
                DualMode::Additive => d - v > self.targets[i] + self.opts.tol,
            };
            if bad {
                return Some(i);
            }
        }
        None
    }

    /// Landing slope for the first update of an agent whose initial slope
    /// is unbounded: large enough that the loop condition stays violated
    /// for any nonzero utility, so every improper item defects before the
    /// agent can exit the loop.
    fn jump_slope(&self, i: usize) -> f64 {
        let v = &self.inst.agents[i].valuation;
        let vmax = v.value(self.inst.row_sum(i));
        let umin = self.inst.row_min_positive(i).unwrap_or(1.0);
        let target = self.targets[i];
        let t = if target.is_finite() { target } else { 1.0 };
        2.0 * (t + 1.0) * (vmax + 1.0) / umin
    }

    fn slope_update(&mut self, i: usize) {
        let v = &self.inst.agents[i].valuation;
        let cur = self.state.points[i].slope;
        let next = if cur.is_infinite() {
            self.jump_slope(i)
        } else {
            match self.mode {
                DualMode::Multiplicative => cur / (1.0 + self.opts.epsilon),
                DualMode::Additive => cur - self.opts.epsilon / self.inst.m as f64,
            }
        };
        let floor = v.min_slope().max(self.opts.s_min);
        let landed = if next <= floor {
            self.saturated[i] = true;
            floor
        } else {
            next
        };
        if landed < cur {
            match v.slope_point_from_slope(landed) {
                Ok(sp) => self.state.points[i] = sp,
                Err(_) => {
                    // slope fell below the family's terminal slope
                    self.saturated[i] = true;
                }
            }
        } else {
            self.saturated[i] = true;
        }
        self.slope_updates[i] += 1;
        self.emit(
            EventKind::SlopeUpdate,
            i,
            None,
            Some(self.state.points[i].slope),
        );
    }

    /// Run to termination. Returns the report and whether an
    /// under-allocation was detected (consumed by the guessing wrapper).
    fn run(&mut self, guessing: bool) -> (SolveReport, bool) {
        // greedy initial assignment at the initial slopes
        for j in 0..self.inst.m {
            self.owner[j] = self.state.best_agent(self.inst, j, None);
            if let Some(i) = self.owner[j] {
                self.last_assign_price[j] =
                    price_product(self.state.points[i].slope, self.inst.utilities[i][j]);
            }
        }
        self.recompute_utils();

        let mut steps: u64 = 0;
        let mut termination = TerminationReason::Converged;
        let mut under_detected = false;

        'outer: loop {
            let violator = (0..self.inst.n()).find(|i| self.violated(*i));
            let i = match violator {
                Some(i) => i,
                None => break,
            };
            // inner loop: defect improper items first, then lower the slope
            while self.violated(i) {
                steps += 1;
                if steps > self.budget {
                    termination = TerminationReason::IterationBudget;
                    break 'outer;
                }
                if let Some((j, target)) = self.best_improper(i) {
                    self.owner[j] = Some(target);
                    let price = price_product(
                        self.state.points[target].slope,
                        self.inst.utilities[target][j],
                    );
                    debug_assert!(
                        price <= self.last_assign_price[j] * (1.0 + 1e-12) + 1e-12,
                        "item {j} reassigned at rising price {price} > {}",
                        self.last_assign_price[j]
                    );
                    self.last_assign_price[j] = price;
                    self.recompute_utils();
                    self.reassignments += 1;
                    self.emit(EventKind::Defect, i, Some(j), None);
                    if let Some(bad) = self.under_allocated_violator() {
                        self.under_events += 1;
                        under_detected = true;
                        if !guessing {
                            termination = TerminationReason::UnderAllocation { agent: bad };
                            break 'outer;
                        }
                    }
                } else {
                    self.slope_update(i);
                    if self.saturated[i] {
                        break;
                    }
                }
            }
            self.emit(EventKind::AgentDone, i, None, None);
        }

        (self.build_report(termination), under_detected)
    }

    fn build_report(&mut self, termination: TerminationReason) -> SolveReport {
        let allocation = Allocation {
            owner: self.owner.clone(),
        };
        let utils = allocation.utilities(self.inst);
        let primal: f64 = (0..self.inst.n())
            .map(|i| self.inst.agents[i].valuation.value(utils[i]))
            .sum();
        let scale = 1.0 + self.opts.epsilon;
        let (dual_feasible, dual_objective) =
            self.state
                .check_dual_feasible_owned(self.inst, &allocation, scale);
        let certificate = match self.mode {
            DualMode::Multiplicative => {
                if primal > 0.0 {
                    dual_objective / primal
                } else if dual_objective <= self.opts.tol {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            DualMode::Additive => dual_objective - primal,
        };
        SolveReport {
            mode: self.mode,
            epsilon: self.opts.epsilon,
            primal,
            dual_objective,
            dual_feasible,
            certificate,
            targets: self.targets.clone(),
            clamped: self.clamped.clone(),
            allocation,
            final_utilities: utils,
            dual: self.state.clone(),
            reassignments: self.reassignments,
            slope_updates: self.slope_updates.clone(),
            saturated: self.saturated.clone(),
            under_allocation_events: self.under_events,
            termination,
            accepted_guess: None,
            trace: if self.opts.trace {
                Some(std::mem::take(&mut self.trace))
            } else {
                None
            },
        }
    }
}

/// Analytic ceiling on per-agent slope updates, with unbounded initial
/// slopes replaced by their jump landing value.
pub fn update_ceiling(inst: &Instance, mode: DualMode, epsilon: f64) -> Vec<f64> {
    let n = inst.n();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = &inst.agents[i].valuation;
        let umax = inst.row_sum(i);
        if umax <= 0.0 || v.slope_at_zero() <= 0.0 {
            // nothing to win or a flat valuation: the agent never updates
            out.push(0.0);
            continue;
        }
        let s0 = v.slope_at_zero();
        match mode {
            DualMode::Multiplicative => {
                // rho needs v(umax) > 0, which the multiplicative setting
                // guarantees for admitted valuations
                if s0.is_infinite() || v.value(umax) <= 0.0 {
                    out.push(f64::INFINITY);
                } else {
                    let rho = s0 * umax / v.value(umax);
                    out.push(((rho / epsilon).ln() / (1.0 + epsilon).ln()).ceil() + 1.0);
                }
            }
            DualMode::Additive => {
                if s0.is_infinite() {
                    out.push(f64::INFINITY);
                } else {
                    out.push((inst.m as f64 * s0 / epsilon).ceil() + 1.0);
                }
            }
        }
    }
    out
}

fn iteration_budget(inst: &Instance, mode: DualMode, targets: &[f64], opts: &SolveOptions) -> u64 {
    let n = inst.n();
    let mut total_updates = 0.0f64;
    for i in 0..n {
        let v = &inst.agents[i].valuation;
        let umax = inst.row_sum(i);
        if umax <= 0.0 {
            continue;
        }
        let vmax = v.value(umax);
        let s0 = if v.slope_at_zero().is_finite() {
            v.slope_at_zero()
        } else {
            // the jump landing slope bounds the effective start
            let umin = inst.row_min_positive(i).unwrap_or(1.0);
            let t = if targets[i].is_finite() {
                targets[i]
            } else {
                1.0
            };
            2.0 * (t + 1.0) * (vmax + 1.0) / umin + 1.0
        };
        let per_agent = match mode {
            DualMode::Multiplicative => {
                let denom = if vmax > 0.0 { vmax } else { 1.0 };
                let rho = (s0 * umax / denom).max(1.0);
                ((rho / opts.epsilon).ln() / (1.0 + opts.epsilon).ln()).ceil() + 1.0
            }
            DualMode::Additive => (inst.m as f64 * s0 / opts.epsilon).ceil() + 1.0,
        };
        // the slope floor bounds how often any slope can shrink
        let floor_cap = match mode {
            DualMode::Multiplicative => {
                ((s0 / opts.s_min).ln() / (1.0 + opts.epsilon).ln()).ceil() + 1.0
            }
            DualMode::Additive => (inst.m as f64 * s0 / opts.epsilon).ceil() + 1.0,
        };
        total_updates += per_agent.min(floor_cap).max(1.0);
    }
    let steps = opts.budget_factor * (total_updates + n as f64 + 1.0) * (inst.m as f64 + 1.0);
    steps.min(1e18) as u64
}
