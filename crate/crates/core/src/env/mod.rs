//! Placement and routing episodes, internal penalties and the joint reward.
//!
//! A batch of `M` requests runs as `M` placement episodes followed by `M`
//! routing episodes. All agents of a batch share one [`ResourceLedger`]; in each
//! step round every agent observes the same ledger, then debits are applied in
//! agent-index order.

pub mod encoding;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::{shortest_path, Weight};
use crate::catalog::{ServiceRequest, VnfCatalog};
use crate::error::EnvError;
use crate::solution::{check_request, Deployment, Scales};
use crate::topology::{ResourceLedger, SubstrateNetwork};

/// A one-hot node selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepAction {
    pub node: usize,
    pub width: usize,
}

impl StepAction {
    pub fn new(node: usize, width: usize) -> Result<Self, EnvError> {
        if node >= width {
            return Err(EnvError::BadAction { expected: width });
        }
        Ok(StepAction { node, width })
    }

    pub fn from_one_hot(v: &[u8]) -> Result<Self, EnvError> {
        let bad = EnvError::BadAction { expected: v.len() };
        if v.iter().any(|&x| x > 1) || v.iter().filter(|&&x| x == 1).count() != 1 {
            return Err(bad);
        }
        Ok(StepAction { node: v.iter().position(|&x| x == 1).ok_or(bad)?, width: v.len() })
    }

    pub fn one_hot(&self) -> Vec<u8> {
        let mut v = vec![0; self.width];
        v[self.node] = 1;
        v
    }
}

/// Stacks placement actions into `P` (one row per VNF).
pub fn compose_placement(actions: &[StepAction], chain_len: usize) -> Result<Array2<u8>, EnvError> {
    if actions.len() != chain_len {
        return Err(EnvError::ActionCount { expected: chain_len, got: actions.len() });
    }
    let n = actions.first().map_or(0, |a| a.width);
    let mut p = Array2::zeros((chain_len, n));
    for (j, a) in actions.iter().enumerate() {
        if a.width != n {
            return Err(EnvError::BadAction { expected: n });
        }
        p[[j, a.node]] = 1;
    }
    Ok(p)
}

/// Builds `R` and `Q` from consecutive selections, starting at `source`.
/// Returns `(R, Q, hop_count)`.
pub fn compose_routing(actions: &[StepAction], source: usize, node_count: usize) -> (Array2<u8>, Array2<u32>, usize) {
    let mut r = Array2::zeros((node_count, node_count));
    let mut q = Array2::zeros((node_count, node_count));
    let mut prev = source;
    for (m, a) in actions.iter().enumerate() {
        r[[prev, a.node]] = 1;
        q[[prev, a.node]] = (m + 1) as u32;
        prev = a.node;
    }
    (r, q, actions.len())
}

/// Internal penalty coefficients (all negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCoeffs {
    pub placement: f64,
    pub class_i: f64,
    pub class_ii: f64,
    pub class_iii: f64,
}

impl Default for PenaltyCoeffs {
    fn default() -> Self {
        PenaltyCoeffs { placement: -10.0, class_i: -8.0, class_ii: -2.0, class_iii: -1.0 }
    }
}

/// Coefficients of the exponential joint reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRewardCoeffs {
    pub dec: f64,
    pub scal: f64,
    pub trans: f64,
}

impl JointRewardCoeffs {
    /// `scal = -1/(10 M)`, `trans = 20`, `dec = 1`.
    pub fn paper(m: usize) -> Self {
        JointRewardCoeffs { dec: 1.0, scal: -1.0 / (10.0 * m.max(1) as f64), trans: 20.0 }
    }

    /// Chooses `trans` so that an objective equal to `anchor` earns `dec · η`.
    pub fn anchored(dec: f64, scal: f64, anchor: f64) -> Self {
        JointRewardCoeffs { dec, scal, trans: -scal * anchor }
    }
}

/// Difference-reward weights `η_i = Π_{z≠i} Θ_z / Σ_m Π_{z≠m} Θ_z`.
///
/// Evaluated as `(1/Θ_i) / Σ_m (1/Θ_m)`, which is the same ratio without
/// overflow. The last weight is `1 - Σ_{i<M-1} η_i` so that summing in index
/// order gives exactly 1.
pub fn difference_weights(thetas: &[f64]) -> Result<Vec<f64>, EnvError> {
    if let Some((agent, &value)) = thetas.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
        return Err(EnvError::DegenerateObjective { agent, value });
    }
    let m = thetas.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let inv_sum: f64 = thetas.iter().map(|t| 1.0 / t).sum();
    let mut w: Vec<f64> = thetas.iter().map(|t| (1.0 / t) / inv_sum).collect();
    let head: f64 = w[..m - 1].iter().sum();
    w[m - 1] = 1.0 - head;
    Ok(w)
}

/// Joint reward per agent from the weighted objectives `Θ` of one batch.
pub fn joint_reward(thetas: &[f64], coeffs: &JointRewardCoeffs) -> Result<Vec<f64>, EnvError> {
    let eta = difference_weights(thetas)?;
    let total: f64 = thetas.iter().sum();
    // Keep the exponential away from underflow so rewards stay positive.
    let base = coeffs.dec * (coeffs.scal * total + coeffs.trans).max(-700.0).exp();
    Ok(eta.into_iter().map(|e| e * base).collect())
}

/// Cheap lower bound on a request's weighted objective: cheapest host per VNF
/// plus the cheapest and fastest `s → t` paths.
pub fn objective_lower_bound(req: &ServiceRequest, net: &SubstrateNetwork, catalog: &VnfCatalog, scales: Scales) -> f64 {
    if req.padding {
        return 0.0;
    }
    let n = net.node_count();
    let mut cost = 0.0;
    let mut delay = 0.0;
    for &k in &req.chain {
        cost += (0..n)
            .map(|x| {
                net.deploy_cost(k, x)
                    + catalog.compute_req(k, req.rate) * net.compute_cost(x)
                    + catalog.memory_req[k] * net.memory_cost(x)
            })
            .fold(f64::INFINITY, f64::min);
        delay += catalog.dyn_delay_per_rate[k] * req.rate;
    }
    let path_sum = |w: Weight| -> f64 {
        shortest_path(net, req.source, req.destination, w)
            .map(|p| p.windows(2).map(|e| w.of(net, e[0], e[1])).sum())
            .unwrap_or(0.0)
    };
    cost += req.rate * path_sum(Weight::BandwidthCost);
    let hops = path_sum(Weight::Hops);
    delay += req.rate * path_sum(Weight::LinkDelay) + net.node_fixed_delay() * (1.0 + hops);
    req.cost_factor * scales.cost * cost + req.delay_factor * scales.delay * delay
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// Whether the selection changed the episode (routing may reject moves).
    pub accepted: bool,
}

/// One request's placement episode.
#[derive(Debug, Clone)]
pub struct PlacementEpisode {
    pub agent: usize,
    pub hosts: Vec<usize>,
    chain_len: usize,
    /// Any step violated C16 or C17.
    pub violated: bool,
}

impl PlacementEpisode {
    pub fn new(agent: usize, req: &ServiceRequest) -> Self {
        PlacementEpisode { agent, hosts: Vec::new(), chain_len: req.chain_len(), violated: false }
    }

    pub fn done(&self) -> bool {
        self.hosts.len() >= self.chain_len
    }

    /// Places the next VNF of the chain on `action.node`, judging C16/C17
    /// against `ledger` and debiting it when both hold.
    pub fn step(
        &mut self,
        action: StepAction,
        req: &ServiceRequest,
        catalog: &VnfCatalog,
        ledger: &mut ResourceLedger,
        penalties: &PenaltyCoeffs,
    ) -> Result<StepOutcome, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeDone);
        }
        if action.width != ledger.node_count() {
            return Err(EnvError::BadAction { expected: ledger.node_count() });
        }
        let k = req.chain[self.hosts.len()];
        let n = action.node;
        let compute = catalog.compute_req(k, req.rate);
        let memory = catalog.memory_req[k];
        let c16 = ledger.compute_fits(n, compute);
        let c17 = ledger.memory_fits(n, memory);
        let reward = penalties.placement * (f64::from(u8::from(!c16)) + f64::from(u8::from(!c17)));
        if c16 && c17 {
            ledger.debit_node(n, compute, memory);
        } else {
            self.violated = true;
        }
        self.hosts.push(n);
        Ok(StepOutcome { reward, done: self.done(), accepted: true })
    }

    /// Suitable placement result.
    pub fn is_spr(&self) -> bool {
        self.done() && !self.violated
    }
}

/// One request's routing episode over at most `N - 1` steps.
#[derive(Debug, Clone)]
pub struct RoutingEpisode {
    pub agent: usize,
    pub path: Vec<usize>,
    pub steps: usize,
    max_steps: usize,
    finished: bool,
    /// Any accepted link exceeded the remaining bandwidth.
    pub bandwidth_violated: bool,
    /// Final C3/C13–C15 or destination check failed.
    pub terminal_violated: bool,
}

impl RoutingEpisode {
    pub fn new(agent: usize, req: &ServiceRequest, node_count: usize) -> Self {
        RoutingEpisode {
            agent,
            path: vec![req.source],
            steps: 0,
            max_steps: node_count.saturating_sub(1),
            finished: req.padding,
            bandwidth_violated: false,
            terminal_violated: false,
        }
    }

    pub fn done(&self) -> bool {
        self.finished
    }

    pub fn current(&self) -> usize {
        *self.path.last().expect("path starts at the source")
    }

    pub fn reached_destination(&self, req: &ServiceRequest) -> bool {
        self.current() == req.destination && self.path.len() > 1
    }

    /// Moves to `action.node`.
    ///
    /// Non-adjacent or revisited nodes are rejected with the class III
    /// penalty and the route is left unchanged. Accepted links are judged
    /// against the remaining bandwidth (class I) and the VNF order seen so far
    /// (class II); at termination C13–C15 are re-checked on the whole route.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        action: StepAction,
        req: &ServiceRequest,
        hosts: &[usize],
        net: &SubstrateNetwork,
        ledger: &mut ResourceLedger,
        penalties: &PenaltyCoeffs,
    ) -> Result<StepOutcome, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeDone);
        }
        if action.width != net.node_count() {
            return Err(EnvError::BadAction { expected: net.node_count() });
        }
        self.steps += 1;
        let cur = self.current();
        let next = action.node;
        let mut reward = 0.0;
        let cycle = !net.is_adjacent(cur, next) || partial_c3_violated(&self.path, next, req.destination);
        let accepted = !cycle;
        if cycle {
            reward += penalties.class_iii;
        } else {
            if ledger.link_fits(cur, next, req.rate) {
                ledger.debit_link(cur, next, req.rate);
            } else {
                self.bandwidth_violated = true;
                reward += penalties.class_i;
            }
            self.path.push(next);
        }
        let arrived = accepted && next == req.destination;
        if arrived || self.steps >= self.max_steps {
            self.finished = true;
            let violations = self.terminal_violations(req, hosts, net);
            if violations > 0 {
                self.terminal_violated = true;
            }
            reward += penalties.class_ii * violations as f64;
        } else if accepted {
            reward += penalties.class_ii * partial_order_violations(&self.path, hosts) as f64;
        }
        Ok(StepOutcome { reward, done: self.finished, accepted })
    }

    /// C13–C15 on the final route, plus one class II unit when the
    /// destination was never reached.
    fn terminal_violations(&self, req: &ServiceRequest, hosts: &[usize], net: &SubstrateNetwork) -> usize {
        let dep = self.deployment(req, hosts, net.node_count());
        let v = check_request(&dep, req, net);
        let mut count = (13..=15).filter(|&x| !v.holds(x)).count();
        if !v.holds(3) {
            count += 1;
        }
        if !self.reached_destination(req) {
            count += 1;
        }
        count
    }

    pub fn deployment(&self, req: &ServiceRequest, hosts: &[usize], node_count: usize) -> Deployment {
        if req.padding {
            return Deployment::empty(req.id, 0, node_count);
        }
        Deployment::from_path(req, hosts, &self.path, node_count).expect("hosts and path are in range")
    }

    /// Suitable routing result.
    pub fn is_srr(&self, req: &ServiceRequest) -> bool {
        req.padding
            || (self.finished && self.reached_destination(req) && !self.bandwidth_violated && !self.terminal_violated)
    }
}

/// C3 on the partial route extended by `next`, counting the exit the route
/// still owes at its new end unless that end is the destination.
pub fn partial_c3_violated(path: &[usize], next: usize, destination: usize) -> bool {
    let mut incident = path.windows(2).filter(|w| w[0] == next || w[1] == next).count();
    incident += 1;
    if next != destination {
        incident += 1;
    }
    incident > 2
}

/// Consecutive VNF pairs whose later host is on the path while the earlier
/// host is missing or reached at a later hop.
pub fn partial_order_violations(path: &[usize], hosts: &[usize]) -> usize {
    let hop = |x: usize| path.iter().position(|&p| p == x);
    hosts
        .windows(2)
        .filter(|w| match (hop(w[0]), hop(w[1])) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(a), Some(b)) => a > b,
        })
        .count()
}

/// A line of the JSON-lines episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub epoch: usize,
    pub phase: String,
    pub step: usize,
    pub agent: usize,
    pub action: usize,
    pub reward: f64,
}
