//! Problem instances: construction, validation, serialization, random
//! generation, and the tight integrality-gap construction.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::{mult_curvature, mult_gap_expr};
use crate::error::{IcaError, Result};
use crate::valuations::ConcaveValuation;

/// One agent: a valuation plus a positive weight. The weight only enters
/// the Nash-welfare objectives; the utilitarian solvers ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub valuation: ConcaveValuation,
    pub weight: f64,
}

/// `n` agents × `m` items with a utility matrix `utilities[i][j] >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub agents: Vec<AgentSpec>,
    pub m: usize,
    pub utilities: Vec<Vec<f64>>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Maximum single-item utility for agent `i`.
    pub fn row_max(&self, i: usize) -> f64 {
        self.utilities[i].iter().cloned().fold(0.0, f64::max)
    }

    /// Total utility available to agent `i` (its maximum possible spend).
    pub fn row_sum(&self, i: usize) -> f64 {
        self.utilities[i].iter().sum()
    }

    /// Smallest strictly positive utility for agent `i`, if any.
    pub fn row_min_positive(&self, i: usize) -> Option<f64> {
        self.utilities[i]
            .iter()
            .cloned()
            .filter(|u| *u > 0.0)
            .fold(None, |acc, u| Some(acc.map_or(u, |a: f64| a.min(u))))
    }

    /// Hard validation; error messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(IcaError::InvalidInstance("agents must be non-empty".into()));
        }
        if self.m == 0 {
            return Err(IcaError::InvalidInstance("m must be >= 1".into()));
        }
        if self.utilities.len() != self.agents.len() {
            return Err(IcaError::InvalidInstance(format!(
                "utilities has {} rows, expected {} (one per agent)",
                self.utilities.len(),
                self.agents.len()
            )));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            agent
                .valuation
                .validate()
                .map_err(|e| IcaError::InvalidInstance(format!("agents[{i}].valuation: {e}")))?;
            if !(agent.weight > 0.0) || !agent.weight.is_finite() {
                return Err(IcaError::InvalidInstance(format!(
                    "agents[{i}].weight must be finite and > 0, got {}",
                    agent.weight
                )));
            }
        }
        for (i, row) in self.utilities.iter().enumerate() {
            if row.len() != self.m {
                return Err(IcaError::InvalidInstance(format!(
                    "utilities[{i}] has length {}, expected m = {}",
                    row.len(),
                    self.m
                )));
            }
            for (j, u) in row.iter().enumerate() {
                if !u.is_finite() || *u < 0.0 {
                    return Err(IcaError::InvalidInstance(format!(
                        "utilities[{i}][{j}] must be finite and >= 0, got {u}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Non-fatal diagnostics: items valued by nobody and violations of the
    /// piecewise segment-length precondition that underpins the 4/3 bound.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for j in 0..self.m {
            if (0..self.n()).all(|i| self.utilities[i][j] == 0.0) {
                out.push(format!("item {j} has zero utility for every agent"));
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            let min_seg = match &agent.valuation {
                ConcaveValuation::Budget { cap } => Some(*cap),
                ConcaveValuation::Piecewise { points, slopes } => {
                    let f = crate::valuations::PiecewiseFn {
                        points: points.clone(),
                        slopes: slopes.clone(),
                    };
                    if slopes.len() > 1 {
                        Some(f.min_segment_length())
                    } else {
                        None
                    }
                }
                _ => None,
            };
            if let Some(len) = min_seg {
                let w = self.row_max(i);
                if w > len {
                    out.push(format!(
                        "agent {i}: max item utility {w} exceeds min segment length {len}; \
                         the 4/3 multiplicative bound is not guaranteed"
                    ));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// A partition of the items: `owner[j]` is the receiving agent, or `None`
/// for an unassigned item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub owner: Vec<Option<usize>>,
}

impl Allocation {
    pub fn unassigned(m: usize) -> Self {
        Allocation {
            owner: vec![None; m],
        }
    }

    /// Recompute each agent's additive utility from the owner list.
    pub fn utilities(&self, inst: &Instance) -> Vec<f64> {
        let mut u = vec![0.0; inst.n()];
        for (j, owner) in self.owner.iter().enumerate() {
            if let Some(i) = owner {
                u[*i] += inst.utilities[*i][j];
            }
        }
        u
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if self.owner.len() != inst.m {
            return Err(IcaError::InvalidInstance(format!(
                "allocation has {} items, instance has {}",
                self.owner.len(),
                inst.m
            )));
        }
        for (j, owner) in self.owner.iter().enumerate() {
            if let Some(i) = owner {
                if *i >= inst.n() {
                    return Err(IcaError::InvalidInstance(format!(
                        "owner[{j}] = {i} out of range for {} agents",
                        inst.n()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Valuation families the random generator can draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomFamily {
    Linear,
    Budget,
    Piecewise,
    Power,
    SmoothLog { omega: f64 },
}

/// Deterministic random instance: utilities i.i.d. uniform on (0, 1],
/// valuation parameters drawn so the segment-length precondition holds
/// where it applies.
pub fn gen_random(n: usize, m: usize, family: RandomFamily, seed: u64) -> Instance {
    assert!(n >= 1 && m >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::with_capacity(n);
    for _ in 0..n {
        let weight = rng.gen_range(0.5..1.5);
        let valuation = match family {
            RandomFamily::Linear => ConcaveValuation::linear(rng.gen_range(0.5..2.0)),
            RandomFamily::Budget => ConcaveValuation::budget(rng.gen_range(1.0..2.0)),
            RandomFamily::Piecewise => {
                let lambda = rng.gen_range(2..=4usize);
                let mut slopes = Vec::with_capacity(lambda);
                let mut s = rng.gen_range(0.0..0.3);
                for _ in 0..lambda {
                    slopes.push(s);
                    s += rng.gen_range(0.05..0.5);
                }
                slopes.reverse();
                let mut points = vec![0.0];
                for _ in 1..lambda {
                    let prev = *points.last().unwrap();
                    points.push(prev + rng.gen_range(1.0..2.0));
                }
                ConcaveValuation::piecewise(points, slopes).expect("generated piecewise is valid")
            }
            RandomFamily::Power => ConcaveValuation::power(rng.gen_range(0.3..0.95)),
            RandomFamily::SmoothLog { omega } => ConcaveValuation::SmoothLog {
                eta: weight,
                omega,
                inner: None,
            },
        };
        agents.push(AgentSpec { valuation, weight });
    }
    let utilities = (0..n)
        .map(|_| (0..m).map(|_| 1.0 - rng.gen::<f64>()).collect())
        .collect();
    Instance {
        agents,
        m,
        utilities,
    }
}

/// Best rational approximation `p/q` of `x ∈ (0, 1)` with
/// `1 <= p < q <= max_denominator`, found by Stern-Brocot mediant descent.
pub fn best_rational(x: f64, max_denominator: u64) -> (u64, u64) {
    assert!(x > 0.0 && x < 1.0 && max_denominator >= 2);
    let (mut ln, mut ld) = (0u64, 1u64); // 0/1
    let (mut hn, mut hd) = (1u64, 1u64); // 1/1
    let mut best: Option<(u64, u64)> = None;
    let consider = |p: u64, q: u64, best: &mut Option<(u64, u64)>| {
        if p == 0 || p >= q || q > max_denominator {
            return;
        }
        let err = (x - p as f64 / q as f64).abs();
        match best {
            None => *best = Some((p, q)),
            Some((bp, bq)) => {
                let berr = (x - *bp as f64 / *bq as f64).abs();
                if err < berr || (err == berr && q < *bq) {
                    *best = Some((p, q));
                }
            }
        }
    };
    loop {
        let mn = ln + hn;
        let md = ld + hd;
        if md > max_denominator {
            break;
        }
        consider(mn, md, &mut best);
        if (mn as f64) < x * md as f64 {
            ln = mn;
            ld = md;
        } else {
            hn = mn;
            hd = md;
        }
    }
    consider(ln, ld, &mut best);
    consider(hn, hd, &mut best);
    best.unwrap_or((1, max_denominator))
}

/// Blueprint of a generated integrality-gap instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapInstanceSpec {
    pub valuation: ConcaveValuation,
    /// The maximum item utility `u` in the instance.
    pub width: f64,
    /// Rational approximation `beta/gamma` of `zstar/width`.
    pub beta: u64,
    pub gamma: u64,
    /// Outer curvature witness: private spend per agent.
    pub z: f64,
    /// Ideal inner witness from the curvature search.
    pub zstar_ideal: f64,
    /// Realized inner witness `width·beta/gamma` used by the construction.
    pub zstar: f64,
    /// Dual tangent point `z + zstar`.
    pub tstar: f64,
    /// Ideal curvature from the search.
    pub mu_ideal: f64,
    /// Curvature expression evaluated at the realized witness; equals the
    /// instance's fractional/integral ratio.
    pub mu_realized: f64,
    /// Count of full-utility private items per agent.
    pub full_private_items: u64,
    /// Utility of the remainder private item, when nonzero.
    pub remainder_utility: Option<f64>,
}

impl GapInstanceSpec {
    /// `OPT_F = gamma · v(tstar)`, certified by the dual construction.
    pub fn fractional_opt(&self) -> f64 {
        self.gamma as f64 * self.valuation.value(self.tstar)
    }

    /// `OPT_I = beta·v(z + u) + (gamma − beta)·v(z)`.
    pub fn integral_opt_formula(&self) -> f64 {
        self.beta as f64 * self.valuation.value(self.z + self.width)
            + (self.gamma - self.beta) as f64 * self.valuation.value(self.z)
    }
}

/// Construct the tight integrality-gap instance for valuation `v` and
/// maximum utility `width`.
///
/// All `gamma` agents share `v`. `beta` public items have utility `width`
/// for everyone; each agent additionally owns private items summing to
/// `z`, worthless to the others. Splitting public spend evenly achieves
/// `gamma·v(z + zstar)` fractionally, while any integral assignment gets
/// at most `beta·v(z+width) + (gamma−beta)·v(z)`.
pub fn gen_gap_instance(
    v: &ConcaveValuation,
    width: f64,
    max_denominator: u64,
) -> Result<(Instance, GapInstanceSpec)> {
    v.validate()?;
    if !(width > 0.0) || !width.is_finite() {
        return Err(IcaError::Gap(format!(
            "width must be positive, got {width}"
        )));
    }
    let report = mult_curvature(v, width)?;
    if report.value.is_infinite() {
        return Err(IcaError::Gap(
            "curvature is unbounded (supremum at z* -> 0); no finite gap instance exists".into(),
        ));
    }
    if report.value <= 1.0 + 1e-12 || report.witness_zstar <= 0.0 {
        return Err(IcaError::Gap(format!(
            "mu = {} (no curvature gap to certify)",
            report.value
        )));
    }
    let z = report.witness_z;
    let ratio = report.witness_zstar / width;
    let (beta, gamma) = best_rational(ratio, max_denominator);
    let zstar = width * beta as f64 / gamma as f64;
    let tstar = z + zstar;

    let full = (z / width).floor();
    let remainder = z - full * width;
    let keep_remainder = remainder > 1e-12 * width.max(1.0);
    let privates_per_agent = full as u64 + keep_remainder as u64;
    let m = beta as usize + gamma as usize * privates_per_agent as usize;

    let n = gamma as usize;
    let mut utilities = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..beta as usize {
            utilities[i][j] = width;
        }
        let base = beta as usize + i * privates_per_agent as usize;
        for k in 0..full as usize {
            utilities[i][base + k] = width;
        }
        if keep_remainder {
            utilities[i][base + full as usize] = remainder;
        }
    }
    let agents = (0..n)
        .map(|_| AgentSpec {
            valuation: v.clone(),
            weight: 1.0,
        })
        .collect();
    let inst = Instance {
        agents,
        m,
        utilities,
    };
    inst.validate()?;

    let mu_realized = mult_gap_expr(v, z, zstar, width);
    let spec = GapInstanceSpec {
        valuation: v.clone(),
        width,
        beta,
        gamma,
        z,
        zstar_ideal: report.witness_zstar,
        zstar,
        tstar,
        mu_ideal: report.value,
        mu_realized,
        full_private_items: full as u64,
        remainder_utility: if keep_remainder {
            Some(remainder)
        } else {
            None
        },
    };
    Ok((inst, spec))
}
