//! Weighted bang-per-buck tatonnement for asymmetric Nash welfare with
//! smooth additive valuations.
//!
//! Each agent posts one uniform bid `b_i`, initialized at the smoothing
//! parameter `omega`; items always sit with an agent maximizing the
//! weighted ratio `weight_i · u[i][j] / b_i`. While an agent's average
//! ratio `r = (u_i + omega)/b_i` violates `ln r >= r − 1 − alpha_bar`,
//! the agent first sheds items that stopped being maximum-ratio and then
//! raises its bid by `b ← weight·m·b/(weight·m − ε·b)`, which lowers its
//! ratio slope `weight/b` by exactly `ε/m`. The run is step-for-step the
//! additive solver over valuations `weight_i · ln(u_i + omega)` expressed
//! in bid space, and the tests hold the two to identical traces.

use serde::{Deserialize, Serialize};

use crate::curvature::smooth_log_alpha_closed_form;
use crate::error::{IcaError, Result};
use crate::instance::{Allocation, Instance};
use crate::report::{EventKind, TerminationReason, TraceEvent};
use crate::solvers::SolveOptions;

/// Scale factors recorded by [`normalize_instance`] so objectives can be
/// mapped back to original units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalization {
    /// Per-agent divisor applied to the utility row (its former maximum).
    pub row_scales: Vec<f64>,
    /// Former sum of weights.
    pub weight_sum: f64,
}

impl Normalization {
    /// Convert a normalized product objective back to original weights:
    /// `normalized^weight_sum · Π row_scale_i^{weight_i}` where the
    /// weights are the original (unnormalized) ones.
    pub fn original_product(&self, original_weights: &[f64], normalized_product: f64) -> f64 {
        let mut out = normalized_product.powf(self.weight_sum);
        for (scale, w) in self.row_scales.iter().zip(original_weights) {
            out *= scale.powf(*w);
        }
        out
    }
}

/// Scale every agent's utility row to maximum 1 and the weights to sum 1.
pub fn normalize_instance(inst: &Instance) -> Result<(Instance, Normalization)> {
    inst.validate()?;
    let mut row_scales = Vec::with_capacity(inst.n());
    let mut utilities = Vec::with_capacity(inst.n());
    for i in 0..inst.n() {
        let max = inst.row_max(i);
        if !(max > 0.0) {
            return Err(IcaError::InvalidInstance(format!(
                "agent {i}: all utilities are zero, cannot normalize"
            )));
        }
        row_scales.push(max);
        utilities.push(
            inst.utilities[i]
                .iter()
                .map(|u| u / max)
                .collect::<Vec<_>>(),
        );
    }
    let weight_sum: f64 = inst.agents.iter().map(|a| a.weight).sum();
    let agents = inst
        .agents
        .iter()
        .map(|a| crate::instance::AgentSpec {
            valuation: a.valuation.clone(),
            weight: a.weight / weight_sum,
        })
        .collect();
    let norm = Instance {
        agents,
        m: inst.m,
        utilities,
    };
    Ok((
        norm,
        Normalization {
            row_scales,
            weight_sum,
        },
    ))
}

fn is_normalized(inst: &Instance) -> bool {
    let wsum: f64 = inst.agents.iter().map(|a| a.weight).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return false;
    }
    (0..inst.n()).all(|i| (inst.row_max(i) - 1.0).abs() < 1e-9)
}

/// Outcome of a weighted bang-per-buck run on a normalized instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WbbReport {
    pub omega: f64,
    pub epsilon: f64,
    /// `Σ weight_i · ln(u_i + omega)`.
    pub log_objective: f64,
    /// `Π (u_i + omega)^{weight_i}`.
    pub product_objective: f64,
    /// Verified feasible dual objective with the `ε/m` slack.
    pub dual_objective: f64,
    pub dual_feasible: bool,
    /// `dual − log objective`; at most `Σ alpha_i + ε` on termination.
    pub certificate: f64,
    /// Normalized curvature `alpha_bar` shared by all agents.
    pub alpha_bar: f64,
    /// Per-agent `alpha_i = weight_i · alpha_bar`.
    pub alphas: Vec<f64>,
    pub bids: Vec<f64>,
    pub allocation: Allocation,
    pub final_utilities: Vec<f64>,
    pub reassignments: u64,
    pub bid_updates: Vec<u64>,
    pub saturated: Vec<bool>,
    pub under_allocation_events: u64,
    pub termination: TerminationReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl WbbReport {
    pub fn converged(&self) -> bool {
        self.termination == TerminationReason::Converged
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Run WBB on a normalized instance.
pub fn solve_wbb(inst: &Instance, omega: f64, epsilon: f64) -> Result<WbbReport> {
    solve_wbb_opts(inst, omega, &SolveOptions::with_epsilon(epsilon))
}

pub fn solve_wbb_opts(inst: &Instance, omega: f64, opts: &SolveOptions) -> Result<WbbReport> {
    inst.validate()?;
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(IcaError::Domain(format!(
            "omega must be in (0, 1], got {omega}"
        )));
    }
    if !is_normalized(inst) {
        return Err(IcaError::InvalidInstance(
            "wbb requires a normalized instance (row maxima 1, weights summing to 1); \
             run normalize_instance first"
                .into(),
        ));
    }
    let mut engine = WbbEngine::new(inst, omega, opts)?;
    Ok(engine.run())
}

/// Normalize, solve, and convert the product objective back to original
/// units.
pub fn solve_wbb_raw(
    inst: &Instance,
    omega: f64,
    opts: &SolveOptions,
) -> Result<(WbbReport, Normalization, f64)> {
    let (norm, info) = normalize_instance(inst)?;
    let report = solve_wbb_opts(&norm, omega, opts)?;
    let weights: Vec<f64> = inst.agents.iter().map(|a| a.weight).collect();
    let original = info.original_product(&weights, report.product_objective);
    Ok((report, info, original))
}

struct WbbEngine<'a> {
    inst: &'a Instance,
    omega: f64,
    opts: SolveOptions,
    weights: Vec<f64>,
    alpha_bar: f64,
    bids: Vec<f64>,
    owner: Vec<Option<usize>>,
    utils: Vec<f64>,
    saturated: Vec<bool>,
    bid_updates: Vec<u64>,
    reassignments: u64,
    under_events: u64,
    step: u64,
    trace: Vec<TraceEvent>,
    budget: u64,
}

impl<'a> WbbEngine<'a> {
    fn new(inst: &'a Instance, omega: f64, opts: &SolveOptions) -> Result<Self> {
        let n = inst.n();
        let weights: Vec<f64> = inst.agents.iter().map(|a| a.weight).collect();
        let alpha_bar = smooth_log_alpha_closed_form(1.0, omega)?;
        let m_f = inst.m as f64;
        // each update lowers weight/b by eps/m from weight/omega, so the
        // count per agent is bounded by m·(weight/omega)/eps
        let total_updates: f64 = weights
            .iter()
            .map(|w| (m_f * (w / omega) / opts.epsilon).ceil() + 1.0)
            .sum();
        let budget =
            (opts.budget_factor * (total_updates + n as f64 + 1.0) * (m_f + 1.0)).min(1e18) as u64;
        Ok(WbbEngine {
            inst,
            omega,
            opts: opts.clone(),
            weights,
            alpha_bar,
            bids: vec![omega; n],
            owner: vec![None; inst.m],
            utils: vec![0.0; n],
            saturated: vec![false; n],
            bid_updates: vec![0; n],
            reassignments: 0,
            under_events: 0,
            step: 0,
            trace: Vec::new(),
            budget,
        })
    }

    fn emit(&mut self, event: EventKind, agent: usize, item: Option<usize>, bid: Option<f64>) {
        if self.opts.trace {
            self.trace.push(TraceEvent {
                t: self.step,
                event,
                agent,
                item,
                slope: None,
                bid,
            });
        }
        self.step += 1;
    }

    fn ratio_slope(&self, i: usize) -> f64 {
        self.weights[i] / self.bids[i]
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

    fn best_agent(&self, j: usize, current: Option<usize>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.inst.n() {
            let u = self.inst.utilities[i][j];
            let p = if u == 0.0 {
                0.0
            } else {
                u * self.ratio_slope(i)
            };
            match best {
                None => best = Some((i, p)),
                Some((_, bp)) if p > bp => best = Some((i, p)),
                _ => {}
            }
        }
        match best {
            Some((_, p)) if p <= 0.0 => current,
            Some((i, _)) => Some(i),
            None => current,
        }
    }

    /// Loop condition, evaluated in log space: violated when
    /// `ln r < r − 1 − alpha_bar` for `r = (u_i + omega)/b_i`.
    fn violated(&self, i: usize) -> bool {
        if self.saturated[i] {
            return false;
        }
        let r = (self.utils[i] + self.omega) / self.bids[i];
        r.ln() < r - 1.0 - self.alpha_bar
    }

    fn best_improper(&self, i: usize) -> Option<(usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        let own_slope = self.ratio_slope(i);
        for j in 0..self.inst.m {
            if self.owner[j] != Some(i) {
                continue;
            }
            let u_own = self.inst.utilities[i][j];
            let own = if u_own == 0.0 { 0.0 } else { u_own * own_slope };
            let target = match self.best_agent(j, Some(i)) {
                Some(k) => k,
                None => continue,
            };
            if target == i {
                continue;
            }
            let u_t = self.inst.utilities[target][j];
            let max = if u_t == 0.0 {
                0.0
            } else {
                u_t * self.ratio_slope(target)
            };
            if !(max > own) {
                continue;
            }
            let regret = max - own;
            match best {
                None => best = Some((regret, j, target)),
                Some((r, _, _)) if regret > r => best = Some((regret, j, target)),
                _ => {}
            }
        }
        best.map(|(_, j, k)| (j, k))
    }

    fn under_allocated_violator(&self) -> Option<usize> {
        for i in 0..self.inst.n() {
            let t_i = self.bids[i] - self.omega;
            if self.utils[i] >= t_i - 1e-12 {
                continue;
            }
            let r = (self.utils[i] + self.omega) / self.bids[i];
            if r.ln() < r - 1.0 - self.alpha_bar - self.opts.tol {
                return Some(i);
            }
        }
        None
    }

    fn bid_update(&mut self, i: usize) {
        let m_f = self.inst.m as f64;
        let w = self.weights[i];
        let b = self.bids[i];
        let denom = w * m_f - self.opts.epsilon * b;
        if denom <= 0.0 {
            self.saturated[i] = true;
        } else {
            let next = w * m_f * b / denom;
            if w / next <= self.opts.s_min {
                self.saturated[i] = true;
            } else {
                self.bids[i] = next;
            }
        }
        self.bid_updates[i] += 1;
        self.emit(EventKind::BidUpdate, i, None, Some(self.bids[i]));
    }

    fn run(&mut self) -> WbbReport {
        for j in 0..self.inst.m {
            self.owner[j] = self.best_agent(j, None);
        }
        self.recompute_utils();

        let mut steps: u64 = 0;
        let mut termination = TerminationReason::Converged;
        'outer: loop {
            let violator = (0..self.inst.n()).find(|i| self.violated(*i));
            let i = match violator {
                Some(i) => i,
                None => break,
            };
            while self.violated(i) {
                steps += 1;
                if steps > self.budget {
                    termination = TerminationReason::IterationBudget;
                    break 'outer;
                }
                if let Some((j, target)) = self.best_improper(i) {
                    self.owner[j] = Some(target);
                    self.recompute_utils();
                    self.reassignments += 1;
                    self.emit(EventKind::Defect, i, Some(j), None);
                    if let Some(bad) = self.under_allocated_violator() {
                        self.under_events += 1;
                        termination = TerminationReason::UnderAllocation { agent: bad };
                        break 'outer;
                    }
                } else {
                    self.bid_update(i);
                    if self.saturated[i] {
                        break;
                    }
                }
            }
            self.emit(EventKind::AgentDone, i, None, None);
        }

        self.build_report(termination)
    }

    fn build_report(&mut self, termination: TerminationReason) -> WbbReport {
        let allocation = Allocation {
            owner: self.owner.clone(),
        };
        let utils = allocation.utilities(self.inst);
        let n = self.inst.n();
        let m_f = self.inst.m as f64;
        let log_objective: f64 = (0..n)
            .map(|i| self.weights[i] * (utils[i] + self.omega).ln())
            .sum();
        let product_objective = log_objective.exp();

        // dual certificate: ASN-D built from the bids with the eps/m slack
        // on owner-derived prices, feasibility genuinely checked
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let b = self.bids[i];
                self.weights[i] * (b.ln() - 1.0 + self.omega / b)
            })
            .collect();
        let slack = self.opts.epsilon / m_f;
        let mut feasible = true;
        let mut price_sum = 0.0;
        for j in 0..self.inst.m {
            let base = match self.owner[j] {
                Some(i) => {
                    let u = self.inst.utilities[i][j];
                    if u == 0.0 {
                        0.0
                    } else {
                        u * self.ratio_slope(i)
                    }
                }
                None => 0.0,
            };
            let p = base + slack;
            for i in 0..n {
                let u = self.inst.utilities[i][j];
                let need = if u == 0.0 {
                    0.0
                } else {
                    u * self.ratio_slope(i)
                };
                if p < need - 1e-9 {
                    feasible = false;
                }
            }
            price_sum += p;
        }
        let dual_objective = y.iter().sum::<f64>() + price_sum;
        let alphas: Vec<f64> = self.weights.iter().map(|w| w * self.alpha_bar).collect();

        WbbReport {
            omega: self.omega,
            epsilon: self.opts.epsilon,
            log_objective,
            product_objective,
            dual_objective,
            dual_feasible: feasible,
            certificate: dual_objective - log_objective,
            alpha_bar: self.alpha_bar,
            alphas,
            bids: self.bids.clone(),
            allocation,
            final_utilities: utils,
            reassignments: self.reassignments,
            bid_updates: self.bid_updates.clone(),
            saturated: self.saturated.clone(),
            under_allocation_events: self.under_events,
            termination,
            trace: if self.opts.trace {
                Some(std::mem::take(&mut self.trace))
            } else {
                None
            },
        }
    }
}
