//! Multi-agent DDPG trainer for the placement and routing agents.
//!
//! Each request slot of a batch owns a placement agent and a routing agent.
//! Every agent has an actor, a centralized critic (conditioned on the other
//! agents' final placement or routing results), target copies of both and a
//! FIFO replay memory.

use std::collections::VecDeque;
use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::debit;
use crate::catalog::{pad_to_batches, ServiceRequest, VnfCatalog};
use crate::env::encoding::{
    encode_other_results, encode_placement, encode_routing, other_results_len, EncodeScales, FeatureKey, Field,
    OtherResults, PlacementView, RoutingView, Side, StateLayout,
};
use crate::env::{
    joint_reward, objective_lower_bound, JointRewardCoeffs, PenaltyCoeffs, PlacementEpisode, RoutingEpisode,
    StepAction, TraceEvent,
};
use crate::error::{LearnError, NetError};
use crate::nn::{batch, BranchNet, NetShape, RmsProp};
use crate::rng::{stream_rng, Stream};
use crate::solution::{evaluate_cost, evaluate_delay, validate_against, weighted_objective, Deployment, Scales};
use crate::topology::{ResourceLedger, SubstrateNetwork};

pub const CHECKPOINT_VERSION: u32 = 1;

/// How the joint reward's exponential is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum JointSpec {
    /// `scal = -1/(10 M)`, `trans = 20`, `dec = 1`.
    Paper,
    Fixed { dec: f64, scal: f64, trans: f64 },
    /// `trans` chosen so the batch's objective lower bound earns `dec · η`;
    /// `scal` is divided by the number of live agents.
    Anchored { dec: f64, scal: f64 },
}

/// Which steps receive the joint reward on top of their internal reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalReward {
    TerminalStep,
    EveryStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub placement_actor_lr: f64,
    pub routing_actor_lr: f64,
    pub placement_critic_lr: f64,
    pub routing_critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub epochs: usize,
    /// Episodes of the placement refinement loop per failing epoch.
    pub max_placement_episodes: usize,
    pub max_routing_episodes: usize,
    /// Refinement loops allowed before epochs proceed regardless.
    pub placement_pre: usize,
    pub routing_pre: usize,
    pub noise_start: f64,
    pub noise_end: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub penalties: PenaltyCoeffs,
    pub joint: JointSpec,
    pub final_reward: FinalReward,
    /// Keep the actors of the best greedy rollout seen during training.
    pub keep_best: bool,
    /// Greedy evaluation period in epochs (0 disables).
    pub eval_every: usize,
    /// Weight of the policy-entropy bonus in the actor loss (0 disables).
    #[serde(default)]
    pub entropy_weight: f64,
}

impl HyperParams {
    pub fn paper() -> Self {
        HyperParams {
            placement_actor_lr: 0.002,
            routing_actor_lr: 0.001,
            placement_critic_lr: 0.05,
            routing_critic_lr: 0.01,
            gamma: 0.99,
            tau: 0.01,
            batch_size: 256,
            replay_capacity: 4000,
            epochs: 10_000,
            max_placement_episodes: 500,
            max_routing_episodes: 1000,
            placement_pre: 4500,
            routing_pre: 4500,
            noise_start: 0.5,
            noise_end: 0.01,
            rms_decay: 0.99,
            rms_eps: 1e-8,
            penalties: PenaltyCoeffs::default(),
            joint: JointSpec::Paper,
            final_reward: FinalReward::TerminalStep,
            keep_best: false,
            eval_every: 0,
            entropy_weight: 0.0,
        }
    }

    /// Scaled-down settings for instances with a handful of nodes.
    pub fn toy() -> Self {
        HyperParams {
            placement_actor_lr: 0.0005,
            routing_actor_lr: 0.0005,
            placement_critic_lr: 0.005,
            routing_critic_lr: 0.005,
            gamma: 0.9,
            batch_size: 32,
            replay_capacity: 256,
            epochs: 1500,
            max_placement_episodes: 20,
            max_routing_episodes: 20,
            placement_pre: 750,
            routing_pre: 750,
            noise_start: 3.0,
            noise_end: 0.05,
            joint: JointSpec::Anchored { dec: 5.0, scal: -0.05 },
            keep_best: true,
            eval_every: 1,
            entropy_weight: 0.2,
            ..HyperParams::paper()
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let positive = [
            ("placement_actor_lr", self.placement_actor_lr),
            ("routing_actor_lr", self.routing_actor_lr),
            ("placement_critic_lr", self.placement_critic_lr),
            ("routing_critic_lr", self.routing_critic_lr),
            ("rms_eps", self.rms_eps),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LearnError::HyperParam { name, value });
            }
        }
        let unit = [("gamma", self.gamma, 0.0), ("rms_decay", self.rms_decay, 0.0)];
        for (name, value, lo) in unit {
            if !(lo..=1.0).contains(&value) {
                return Err(LearnError::HyperParam { name, value });
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(LearnError::HyperParam { name: "tau", value: self.tau });
        }
        if self.batch_size == 0 {
            return Err(LearnError::HyperParam { name: "batch_size", value: 0.0 });
        }
        if self.replay_capacity < self.batch_size {
            return Err(LearnError::HyperParam { name: "replay_capacity", value: self.replay_capacity as f64 });
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 {
            return Err(LearnError::HyperParam { name: "noise", value: self.noise_start.min(self.noise_end) });
        }
        Ok(())
    }

    /// Exploration scale, decaying linearly over the configured epochs.
    pub fn noise_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.noise_start;
        }
        let f = (epoch as f64 / (self.epochs - 1) as f64).min(1.0);
        self.noise_start + f * (self.noise_end - self.noise_start)
    }

    fn joint_coeffs(&self, requests: &[ServiceRequest], net: &SubstrateNetwork, cat: &VnfCatalog, scales: Scales) -> JointRewardCoeffs {
        let live = requests.iter().filter(|r| !r.padding).count().max(1);
        match self.joint {
            JointSpec::Paper => JointRewardCoeffs::paper(live),
            JointSpec::Fixed { dec, scal, trans } => JointRewardCoeffs { dec, scal, trans },
            JointSpec::Anchored { dec, scal } => {
                let anchor: f64 = requests.iter().map(|r| objective_lower_bound(r, net, cat, scales)).sum();
                JointRewardCoeffs::anchored(dec, scal / live as f64, anchor)
            }
        }
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::paper()
    }
}

/// One stored decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    /// Flattened final results of the other agents.
    pub other_results: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO replay memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl Replay {
    pub fn new(capacity: usize) -> Self {
        Replay { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.capacity > 0 && self.items.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `size` distinct transitions drawn uniformly.
    pub fn sample(&self, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&Transition>, LearnError> {
        if self.items.len() < size {
            return Err(LearnError::InsufficientReplay { available: self.items.len(), required: size });
        }
        Ok(sample(rng, self.items.len(), size).into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Actor, critic, their targets, optimizers and replay of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBundle {
    pub actor: BranchNet,
    pub critic: BranchNet,
    pub target_actor: BranchNet,
    pub target_critic: BranchNet,
    pub actor_opt: RmsProp,
    pub critic_opt: RmsProp,
    #[serde(skip)]
    pub replay: Replay,
}

impl AgentBundle {
    pub fn new(actor: NetShape, critic: NetShape, lr: (f64, f64), hyper: &HyperParams, rng: &mut ChaCha8Rng) -> Self {
        let a = BranchNet::new(actor, rng);
        let c = BranchNet::new(critic, rng);
        AgentBundle::from_nets(a, c, lr, hyper)
    }

    fn from_nets(actor: BranchNet, critic: BranchNet, lr: (f64, f64), hyper: &HyperParams) -> Self {
        let mut actor_opt = RmsProp::new(&actor, lr.0);
        let mut critic_opt = RmsProp::new(&critic, lr.1);
        for o in [&mut actor_opt, &mut critic_opt] {
            o.decay = hyper.rms_decay;
            o.eps = hyper.rms_eps;
        }
        AgentBundle {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            replay: Replay::new(hyper.replay_capacity),
        }
    }

    pub fn action_width(&self) -> usize {
        self.actor.shape.output_len
    }
}

fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.into_iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Argmax of the actor's distribution after adding `sigma`-scaled Gaussian
/// noise to its logits (log-probabilities).
pub fn select_action(actor: &BranchNet, state: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Result<usize, NetError> {
    let p = actor.forward_one(state)?;
    if sigma == 0.0 {
        return Ok(argmax(p));
    }
    Ok(argmax(p.into_iter().map(|x| x.max(1e-300).ln() + sigma * rng.sample::<f64, _>(StandardNormal))))
}

pub fn one_hot(action: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[action] = 1.0;
    v
}

fn critic_rows(states: &Array2<f64>, actions: &Array2<f64>, others: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[states.view(), actions.view(), others.view()]).expect("same batch size")
}

/// `Q(s, a, results of the others)` from the online critic.
pub fn critic_value(bundle: &AgentBundle, state: &[f64], action: &[f64], other_results: &[f64]) -> Result<f64, NetError> {
    let mut x = Vec::with_capacity(state.len() + action.len() + other_results.len());
    x.extend_from_slice(state);
    x.extend_from_slice(action);
    x.extend_from_slice(other_results);
    Ok(bundle.critic.forward_one(&x)?[0])
}

struct Minibatch {
    states: Array2<f64>,
    actions: Array2<f64>,
    others: Array2<f64>,
    rewards: Vec<f64>,
    next_states: Array2<f64>,
    live: Vec<f64>,
}

impl Minibatch {
    fn new(items: &[&Transition], width: usize) -> Self {
        let states = batch(&items.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>());
        let next_states = batch(&items.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>());
        let mut others = batch(&items.iter().map(|t| t.other_results.as_slice()).collect::<Vec<_>>());
        if others.ncols() == 0 {
            others = Array2::zeros((items.len(), 0));
        }
        let mut actions = Array2::zeros((items.len(), width));
        for (r, t) in items.iter().enumerate() {
            actions[[r, t.action]] = 1.0;
        }
        Minibatch {
            states,
            actions,
            others,
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states,
            live: items.iter().map(|t| if t.done { 0.0 } else { 1.0 }).collect(),
        }
    }
}

/// One step on the mean squared TD error; returns the loss before the step.
pub fn update_critic(bundle: &mut AgentBundle, items: &[&Transition], gamma: f64) -> Result<f64, LearnError> {
    if items.is_empty() {
        return Err(LearnError::InsufficientReplay { available: 0, required: 1 });
    }
    let mb = Minibatch::new(items, bundle.action_width());
    let next_actions = bundle.target_actor.forward(&mb.next_states)?;
    let q_next = bundle.target_critic.forward(&critic_rows(&mb.next_states, &next_actions, &mb.others))?;
    let (q, tape) = bundle.critic.forward_tape(&critic_rows(&mb.states, &mb.actions, &mb.others))?;
    let b = items.len() as f64;
    let mut grad = Array2::zeros((items.len(), 1));
    let mut loss = 0.0;
    for r in 0..items.len() {
        let y = mb.rewards[r] + gamma * mb.live[r] * q_next[[r, 0]];
        let e = q[[r, 0]] - y;
        loss += e * e / b;
        grad[[r, 0]] = 2.0 * e / b;
    }
    let (g, _) = bundle.critic.backward(&tape, &grad);
    bundle.critic_opt.step(&mut bundle.critic, &g);
    Ok(loss)
}

/// Actor gradient `∇_a Q · ∇_θ μ` averaged over the batch, chained through
/// the critic's action input.
pub fn actor_gradient(
    bundle: &AgentBundle,
    items: &[&Transition],
    entropy_weight: f64,
) -> Result<(crate::nn::Grads, f64), LearnError> {
    if items.is_empty() {
        return Err(LearnError::InsufficientReplay { available: 0, required: 1 });
    }
    let mb = Minibatch::new(items, bundle.action_width());
    let (probs, actor_tape) = bundle.actor.forward_tape(&mb.states)?;
    let (q, critic_tape) = bundle.critic.forward_tape(&critic_rows(&mb.states, &probs, &mb.others))?;
    let b = items.len() as f64;
    let mean_q = q.sum() / b;
    // ascend Q: minimize -mean Q
    let d_q = Array2::from_elem((items.len(), 1), -1.0 / b);
    let (_, d_in) = bundle.critic.backward(&critic_tape, &d_q);
    let start = mb.states.ncols();
    let mut d_action = d_in.slice(s![.., start..start + probs.ncols()]).to_owned();
    if entropy_weight != 0.0 {
        // -w·H(p): dH/dp = -(ln p + 1)
        d_action.zip_mut_with(&probs, |d, &p| *d += entropy_weight * (p.max(1e-300).ln() + 1.0) / b);
    }
    let (g, _) = bundle.actor.backward(&actor_tape, &d_action);
    Ok((g, mean_q))
}

/// One deterministic policy-gradient step; returns the mean Q before it.
pub fn update_actor(bundle: &mut AgentBundle, items: &[&Transition], entropy_weight: f64) -> Result<f64, LearnError> {
    let (g, mean_q) = actor_gradient(bundle, items, entropy_weight)?;
    bundle.actor_opt.step(&mut bundle.actor, &g);
    Ok(mean_q)
}

pub fn soft_update(bundle: &mut AgentBundle, tau: f64) {
    bundle.target_actor.soft_update(&bundle.actor, tau);
    bundle.target_critic.soft_update(&bundle.critic, tau);
}

/// Sample, update critic and actor, soft-update targets.
fn train_agent(bundle: &mut AgentBundle, hyper: &HyperParams, rng: &mut ChaCha8Rng) -> Result<(), LearnError> {
    let AgentBundle { replay, .. } = &*bundle;
    let items: Vec<Transition> = replay.sample(hyper.batch_size, rng)?.into_iter().cloned().collect();
    let refs: Vec<&Transition> = items.iter().collect();
    update_critic(bundle, &refs, hyper.gamma)?;
    update_actor(bundle, &refs, hyper.entropy_weight)?;
    soft_update(bundle, hyper.tau);
    Ok(())
}

/// Everything needed to deploy batches of `agents` requests on one topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub node_count: usize,
    pub category_count: usize,
    pub agents: usize,
    pub hyper: HyperParams,
    pub encode_scales: EncodeScales,
    pub objective_scales: Scales,
    pub placement: Vec<AgentBundle>,
    pub routing: Vec<AgentBundle>,
}

/// Actor and critic shapes of one side.
pub fn net_shapes(side: Side, n: usize, k: usize, m: usize) -> (NetShape, NetShape) {
    let layout = match side {
        Side::Placement => StateLayout::placement(n, k, m),
        Side::Routing => StateLayout::routing(n, k, m),
    };
    let actor = NetShape {
        self_len: layout.self_len,
        other_len: layout.other_len,
        sn_len: layout.sn_len,
        action_len: 0,
        results_len: 0,
        output_len: n,
        softmax: true,
    };
    let critic = NetShape { action_len: n, results_len: other_results_len(side, n, k, m), output_len: 1, softmax: false, ..actor };
    (actor, critic)
}

/// Input and output keys of an agent's actor and critic.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentKeys {
    pub actor_in: Vec<FeatureKey>,
    pub actor_out: Vec<FeatureKey>,
    pub critic_in: Vec<FeatureKey>,
    pub critic_out: Vec<FeatureKey>,
}

pub fn agent_keys(side: Side, agent: usize, n: usize, k: usize, m: usize) -> AgentKeys {
    let net = SubstrateNetwork::bare(n, Vec::new(), k).expect("edgeless network");
    let ledger = ResourceLedger::full(&net);
    let reqs: Vec<ServiceRequest> = (0..m)
        .map(|id| ServiceRequest {
            id,
            source: 0,
            destination: n - 1,
            chain: vec![0],
            rate: 1.0,
            cost_factor: 0.5,
            delay_factor: 0.5,
            padding: false,
        })
        .collect();
    let scales = EncodeScales::for_instance(&net, &reqs);
    let hosts = vec![vec![0]; m];
    let actor_in = match side {
        Side::Placement => encode_placement(PlacementView { agent, hosts: &[] }, &reqs, &net, k, &ledger, &scales, true).1,
        Side::Routing => {
            encode_routing(RoutingView { agent, path: &[0], steps: 0 }, &reqs, &hosts, &net, k, &ledger, &scales, true).1
        }
    }
    .expect("keys requested");
    let results = match side {
        Side::Placement => OtherResults::Placement(&hosts),
        Side::Routing => OtherResults::Routing(&hosts),
    };
    let result_keys = encode_other_results(agent, &reqs, &results, n, k, true).1.expect("keys requested");
    let actor_out: Vec<FeatureKey> = (0..n).map(|x| FeatureKey::node(Field::Action, 0, x)).collect();
    let mut critic_in = actor_in.clone();
    critic_in.extend(actor_out.iter().copied());
    critic_in.extend(result_keys);
    AgentKeys { actor_in, actor_out, critic_in, critic_out: vec![FeatureKey::scalar(Field::QValue, 0)] }
}

impl TrainedModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node_count: usize,
        category_count: usize,
        agents: usize,
        hyper: HyperParams,
        encode_scales: EncodeScales,
        objective_scales: Scales,
        seed: u64,
    ) -> Result<Self, LearnError> {
        hyper.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let (pa, pc) = net_shapes(Side::Placement, node_count, category_count, agents);
        let (ra, rc) = net_shapes(Side::Routing, node_count, category_count, agents);
        let placement = (0..agents)
            .map(|_| AgentBundle::new(pa, pc, (hyper.placement_actor_lr, hyper.placement_critic_lr), &hyper, &mut rng))
            .collect();
        let routing = (0..agents)
            .map(|_| AgentBundle::new(ra, rc, (hyper.routing_actor_lr, hyper.routing_critic_lr), &hyper, &mut rng))
            .collect();
        Ok(TrainedModel {
            version: CHECKPOINT_VERSION,
            node_count,
            category_count,
            agents,
            hyper,
            encode_scales,
            objective_scales,
            placement,
            routing,
        })
    }

    /// Model sized for `requests` on `net`, with encoding scales from them.
    pub fn for_instance(
        requests: &[ServiceRequest],
        net: &SubstrateNetwork,
        catalog: &VnfCatalog,
        hyper: HyperParams,
        scales: Scales,
        seed: u64,
    ) -> Result<Self, LearnError> {
        TrainedModel::new(
            net.node_count(),
            catalog.category_count(),
            requests.len(),
            hyper,
            EncodeScales::for_instance(net, requests),
            scales,
            seed,
        )
    }

    fn check_batch(&self, requests: &[ServiceRequest], net: &SubstrateNetwork) -> Result<(), LearnError> {
        if requests.len() != self.agents {
            return Err(LearnError::AgentCount { expected: self.agents, got: requests.len() });
        }
        if net.node_count() != self.node_count {
            return Err(NetError::InputDim { expected: self.node_count, got: net.node_count() }.into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let text = serde_json::to_string(self).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut model: TrainedModel = serde_json::from_str(&text).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        if model.version != CHECKPOINT_VERSION {
            return Err(LearnError::Checkpoint(format!("unsupported version {}", model.version)));
        }
        let cap = model.hyper.replay_capacity;
        for b in model.placement.iter_mut().chain(model.routing.iter_mut()) {
            b.replay = Replay::new(cap);
        }
        Ok(model)
    }

    /// Trainable flag of every layer of every network, in a fixed order.
    pub fn trainable_mask(&self) -> Vec<bool> {
        self.placement
            .iter()
            .chain(&self.routing)
            .flat_map(|b| b.actor.layers().chain(b.critic.layers()).map(|l| l.trainable).collect::<Vec<_>>())
            .collect()
    }
}

/// Per-step record of a rollout.
#[derive(Debug, Clone)]
struct StepRecord {
    state: Vec<f64>,
    action: usize,
    reward: f64,
    next_state: Vec<f64>,
    done: bool,
}

struct PlacementRun {
    hosts: Vec<Vec<usize>>,
    steps: Vec<Vec<StepRecord>>,
    spr: Vec<bool>,
}

struct RoutingRun {
    paths: Vec<Vec<usize>>,
    steps: Vec<Vec<StepRecord>>,
    srr: Vec<bool>,
}

struct Ctx<'a> {
    requests: &'a [ServiceRequest],
    net: &'a SubstrateNetwork,
    catalog: &'a VnfCatalog,
    base: &'a ResourceLedger,
}

fn placement_rollout(model: &TrainedModel, ctx: &Ctx<'_>, sigma: f64, rng: &mut ChaCha8Rng) -> Result<PlacementRun, LearnError> {
    let (reqs, net, k) = (ctx.requests, ctx.net, model.category_count);
    let m = reqs.len();
    let n = net.node_count();
    let mut ledger = ctx.base.clone();
    let mut eps: Vec<PlacementEpisode> = reqs.iter().enumerate().map(|(i, r)| PlacementEpisode::new(i, r)).collect();
    let mut steps: Vec<Vec<StepRecord>> = vec![Vec::new(); m];
    let encode = |i: usize, hosts: &[usize], ledger: &ResourceLedger| {
        encode_placement(PlacementView { agent: i, hosts }, reqs, net, k, ledger, &model.encode_scales, false).0.flatten()
    };
    loop {
        let active: Vec<usize> = (0..m).filter(|&i| !reqs[i].padding && !eps[i].done()).collect();
        if active.is_empty() {
            break;
        }
        // all agents observe the same ledger, then act in index order
        let states: Vec<Vec<f64>> = active.iter().map(|&i| encode(i, &eps[i].hosts, &ledger)).collect();
        for (&i, state) in active.iter().zip(states) {
            let a = select_action(&model.placement[i].actor, &state, sigma, rng)?;
            let out = eps[i].step(StepAction::new(a, n)?, &reqs[i], ctx.catalog, &mut ledger, &model.hyper.penalties)?;
            steps[i].push(StepRecord { state, action: a, reward: out.reward, next_state: Vec::new(), done: out.done });
        }
        for &i in &active {
            let next = encode(i, &eps[i].hosts, &ledger);
            steps[i].last_mut().expect("just pushed").next_state = next;
        }
    }
    Ok(PlacementRun {
        spr: eps.iter().zip(reqs).map(|(e, r)| r.padding || e.is_spr()).collect(),
        hosts: eps.into_iter().map(|e| e.hosts).collect(),
        steps,
    })
}

fn routing_rollout(
    model: &TrainedModel,
    ctx: &Ctx<'_>,
    hosts: &[Vec<usize>],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RoutingRun, LearnError> {
    let (reqs, net, k) = (ctx.requests, ctx.net, model.category_count);
    let m = reqs.len();
    let n = net.node_count();
    let mut ledger = ctx.base.clone();
    let mut eps: Vec<RoutingEpisode> = reqs.iter().enumerate().map(|(i, r)| RoutingEpisode::new(i, r, n)).collect();
    let mut steps: Vec<Vec<StepRecord>> = vec![Vec::new(); m];
    let encode = |i: usize, ep: &RoutingEpisode, ledger: &ResourceLedger| {
        encode_routing(RoutingView { agent: i, path: &ep.path, steps: ep.steps }, reqs, hosts, net, k, ledger, &model.encode_scales, false)
            .0
            .flatten()
    };
    loop {
        let active: Vec<usize> = (0..m).filter(|&i| !eps[i].done()).collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<Vec<f64>> = active.iter().map(|&i| encode(i, &eps[i], &ledger)).collect();
        for (&i, state) in active.iter().zip(states) {
            let a = select_action(&model.routing[i].actor, &state, sigma, rng)?;
            let out =
                eps[i].step(StepAction::new(a, n)?, &reqs[i], &hosts[i], net, &mut ledger, &model.hyper.penalties)?;
            steps[i].push(StepRecord { state, action: a, reward: out.reward, next_state: Vec::new(), done: out.done });
        }
        for &i in &active {
            let next = encode(i, &eps[i], &ledger);
            steps[i].last_mut().expect("just pushed").next_state = next;
        }
    }
    Ok(RoutingRun {
        srr: eps.iter().zip(reqs).map(|(e, r)| e.is_srr(r)).collect(),
        paths: eps.into_iter().map(|e| e.path).collect(),
        steps,
    })
}

fn store(
    bundles: &mut [AgentBundle],
    steps: &[Vec<StepRecord>],
    others: impl Fn(usize) -> Vec<f64>,
    joint: Option<&[f64]>,
    policy: FinalReward,
) {
    for (i, (bundle, recs)) in bundles.iter_mut().zip(steps).enumerate() {
        if recs.is_empty() {
            continue;
        }
        let other = others(i);
        let last = recs.len() - 1;
        for (t, r) in recs.iter().enumerate() {
            let bonus = match (joint, policy) {
                (Some(j), FinalReward::EveryStep) => j[i],
                (Some(j), FinalReward::TerminalStep) if t == last => j[i],
                _ => 0.0,
            };
            bundle.replay.push(Transition {
                state: r.state.clone(),
                action: r.action,
                other_results: other.clone(),
                reward: r.reward + bonus,
                next_state: r.next_state.clone(),
                done: r.done,
            });
        }
    }
}

fn live_full(bundles: &[AgentBundle], requests: &[ServiceRequest]) -> bool {
    bundles.iter().zip(requests).filter(|(_, r)| !r.padding).all(|(b, _)| b.replay.is_full())
        && requests.iter().any(|r| !r.padding)
}

fn train_side(bundles: &mut [AgentBundle], requests: &[ServiceRequest], hyper: &HyperParams, rng: &mut ChaCha8Rng) -> Result<bool, LearnError> {
    if !live_full(bundles, requests) {
        return Ok(false);
    }
    for (b, _) in bundles.iter_mut().zip(requests).filter(|(_, r)| !r.padding) {
        train_agent(b, hyper, rng)?;
    }
    Ok(true)
}

/// Deployments, objectives and feasibility of a finished rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub deployments: Vec<Deployment>,
    /// Weighted objective per slot (0 for padding).
    pub thetas: Vec<f64>,
    /// Per slot: placement suitable and routing suitable.
    pub suitable: Vec<bool>,
    /// C1–C18 hold for the whole batch against the base ledger.
    pub feasible: bool,
    pub objective: f64,
}

fn batch_result(
    model: &TrainedModel,
    ctx: &Ctx<'_>,
    hosts: &[Vec<usize>],
    paths: &[Vec<usize>],
    spr: &[bool],
    srr: &[bool],
) -> Result<BatchResult, LearnError> {
    let n = ctx.net.node_count();
    let mut deployments = Vec::with_capacity(ctx.requests.len());
    let mut thetas = Vec::with_capacity(ctx.requests.len());
    for ((req, h), p) in ctx.requests.iter().zip(hosts).zip(paths) {
        let dep = if req.padding { Deployment::empty(req.id, 0, n) } else { Deployment::from_path(req, h, p, n)? };
        let theta = weighted_objective(
            evaluate_cost(&dep, req, ctx.net, ctx.catalog),
            evaluate_delay(&dep, req, ctx.net, ctx.catalog),
            req,
            model.objective_scales,
        );
        deployments.push(dep);
        thetas.push(theta);
    }
    let report = validate_against(&deployments, ctx.requests, ctx.net, ctx.catalog, ctx.base)?;
    Ok(BatchResult {
        objective: thetas.iter().fold(0.0, |a, b| a + b),
        suitable: spr.iter().zip(srr).map(|(a, b)| *a && *b).collect(),
        feasible: report.feasible(),
        deployments,
        thetas,
    })
}

/// Noise-free rollout of both phases.
pub fn greedy_rollout(
    model: &TrainedModel,
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    base: &ResourceLedger,
) -> Result<BatchResult, LearnError> {
    greedy_rollout_traced(model, requests, net, catalog, base, None)
}

/// [`greedy_rollout`] that also appends every step to `trace`, tagged with
/// the given batch number in the `epoch` field.
pub fn greedy_rollout_traced(
    model: &TrainedModel,
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    base: &ResourceLedger,
    trace: Option<(&mut Vec<TraceEvent>, usize)>,
) -> Result<BatchResult, LearnError> {
    model.check_batch(requests, net)?;
    let ctx = Ctx { requests, net, catalog, base };
    // sigma 0 never draws
    let mut rng = stream_rng(0, Stream::Exploration);
    let p = placement_rollout(model, &ctx, 0.0, &mut rng)?;
    let r = routing_rollout(model, &ctx, &p.hosts, 0.0, &mut rng)?;
    if let Some((events, epoch)) = trace {
        for (phase, steps) in [("placement", &p.steps), ("routing", &r.steps)] {
            for (agent, recs) in steps.iter().enumerate() {
                events.extend(recs.iter().enumerate().map(|(step, rec)| TraceEvent {
                    epoch,
                    phase: phase.to_string(),
                    step,
                    agent,
                    action: rec.action,
                    reward: rec.reward,
                }));
            }
        }
    }
    batch_result(model, &ctx, &p.hosts, &r.paths, &p.spr, &r.srr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Joint reward per slot (0 for padding and for epochs without one).
    pub joint_rewards: Vec<f64>,
    pub total_joint: f64,
    /// The epoch produced a batch satisfying every constraint.
    pub feasible: bool,
    pub objective: Option<f64>,
    pub placement_refinements: usize,
    pub routing_refinements: usize,
    /// Objective of the noise-free rollout after the epoch, when evaluated
    /// and feasible.
    pub greedy_objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_greedy_objective: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainingLog {
    pub fn total_joint(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.total_joint).collect()
    }
}

/// Builds a fresh model for `requests` and trains it.
pub fn train(
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    hyper: &HyperParams,
    scales: Scales,
    seed: u64,
) -> Result<(TrainedModel, TrainingLog), LearnError> {
    let mut model = TrainedModel::for_instance(requests, net, catalog, hyper.clone(), scales, seed)?;
    let log = continue_training(&mut model, requests, net, catalog, seed, hyper.epochs)?;
    Ok((model, log))
}

/// Runs `epochs` training epochs on an existing model (fresh or migrated).
pub fn continue_training(
    model: &mut TrainedModel,
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    seed: u64,
    epochs: usize,
) -> Result<TrainingLog, LearnError> {
    continue_training_until(model, requests, net, catalog, seed, epochs, |_| false)
}

/// As [`continue_training`], stopping early once `stop` accepts the epochs
/// logged so far.
pub fn continue_training_until(
    model: &mut TrainedModel,
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    seed: u64,
    epochs: usize,
    mut stop: impl FnMut(&[EpochLog]) -> bool,
) -> Result<TrainingLog, LearnError> {
    model.hyper.validate()?;
    model.check_batch(requests, net)?;
    let hyper = model.hyper.clone();
    let base = ResourceLedger::full(net);
    let ctx = Ctx { requests, net, catalog, base: &base };
    let coeffs = hyper.joint_coeffs(requests, net, catalog, model.objective_scales);
    let mut explore = stream_rng(seed, Stream::Exploration);
    let mut replay_rng = stream_rng(seed, Stream::Replay);
    let (k, n) = (model.category_count, net.node_count());
    let live: Vec<usize> = (0..requests.len()).filter(|&i| !requests[i].padding).collect();

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, Vec<BranchNet>, Vec<BranchNet>)> = None;
    let (mut n_p, mut n_r) = (0, 0);
    for epoch in 0..epochs {
        let sigma = hyper.noise_at(epoch);
        let mut entry = EpochLog {
            epoch,
            joint_rewards: vec![0.0; requests.len()],
            total_joint: 0.0,
            feasible: false,
            objective: None,
            placement_refinements: 0,
            routing_refinements: 0,
            greedy_objective: None,
        };
        let p = placement_rollout(model, &ctx, sigma, &mut explore)?;
        let p_ok = p.spr.iter().all(|&x| x);
        if !p_ok && n_p < hyper.placement_pre {
            n_p += 1;
            for _ in 0..hyper.max_placement_episodes {
                entry.placement_refinements += 1;
                let run = placement_rollout(model, &ctx, sigma, &mut explore)?;
                let hosts = run.hosts.clone();
                store(
                    &mut model.placement,
                    &run.steps,
                    |i| encode_other_results(i, requests, &OtherResults::Placement(&hosts), n, k, false).0,
                    None,
                    hyper.final_reward,
                );
                train_side(&mut model.placement, requests, &hyper, &mut replay_rng)?;
                if run.spr.iter().all(|&x| x) {
                    break;
                }
            }
        } else {
            let r = routing_rollout(model, &ctx, &p.hosts, sigma, &mut explore)?;
            let r_ok = r.srr.iter().all(|&x| x);
            if !r_ok && n_r < hyper.routing_pre {
                n_r += 1;
                for _ in 0..hyper.max_routing_episodes {
                    entry.routing_refinements += 1;
                    let run = routing_rollout(model, &ctx, &p.hosts, sigma, &mut explore)?;
                    let paths = run.paths.clone();
                    store(
                        &mut model.routing,
                        &run.steps,
                        |i| encode_other_results(i, requests, &OtherResults::Routing(&paths), n, k, false).0,
                        None,
                        hyper.final_reward,
                    );
                    train_side(&mut model.routing, requests, &hyper, &mut replay_rng)?;
                    if run.srr.iter().all(|&x| x) {
                        break;
                    }
                }
            } else {
                let res = batch_result(model, &ctx, &p.hosts, &r.paths, &p.spr, &r.srr)?;
                let joint = if res.feasible && !live.is_empty() {
                    let thetas: Vec<f64> = live.iter().map(|&i| res.thetas[i]).collect();
                    let j = joint_reward(&thetas, &coeffs)?;
                    let mut full = vec![0.0; requests.len()];
                    for (&i, v) in live.iter().zip(j) {
                        full[i] = v;
                    }
                    Some(full)
                } else {
                    None
                };
                let hosts = p.hosts.clone();
                store(
                    &mut model.placement,
                    &p.steps,
                    |i| encode_other_results(i, requests, &OtherResults::Placement(&hosts), n, k, false).0,
                    joint.as_deref(),
                    hyper.final_reward,
                );
                let paths = r.paths.clone();
                store(
                    &mut model.routing,
                    &r.steps,
                    |i| encode_other_results(i, requests, &OtherResults::Routing(&paths), n, k, false).0,
                    joint.as_deref(),
                    hyper.final_reward,
                );
                train_side(&mut model.placement, requests, &hyper, &mut replay_rng)?;
                train_side(&mut model.routing, requests, &hyper, &mut replay_rng)?;
                entry.feasible = res.feasible;
                entry.objective = Some(res.objective);
                if let Some(j) = joint {
                    entry.total_joint = j.iter().sum();
                    entry.joint_rewards = j;
                }
            }
        }
        if hyper.eval_every > 0 && (epoch + 1) % hyper.eval_every == 0 {
            let g = greedy_rollout(model, requests, net, catalog, &base)?;
            if g.feasible {
                entry.greedy_objective = Some(g.objective);
                if hyper.keep_best && best.as_ref().is_none_or(|(b, _, _)| g.objective < *b) {
                    best = Some((
                        g.objective,
                        model.placement.iter().map(|b| b.actor.clone()).collect(),
                        model.routing.iter().map(|b| b.actor.clone()).collect(),
                    ));
                    log.best_epoch = Some(epoch);
                }
            }
        }
        log.epochs.push(entry);
        if stop(&log.epochs) {
            break;
        }
    }
    if let Some((obj, pa, ra)) = best {
        log.best_greedy_objective = Some(obj);
        for (b, a) in model.placement.iter_mut().zip(pa) {
            b.actor = a;
        }
        for (b, a) in model.routing.iter_mut().zip(ra) {
            b.actor = a;
        }
    }
    Ok(log)
}

/// Result of deploying a request list batch by batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployOutcome {
    /// Aligned with the input requests.
    pub deployments: Vec<Deployment>,
    pub accepted: Vec<bool>,
    pub batches: usize,
    pub ledger: ResourceLedger,
}

/// Pads `requests` to whole batches and deploys them one batch at a time on a
/// persistent ledger. A request is accepted when its own route and placement
/// satisfy C1–C15 and its resources fit what earlier acceptances left over;
/// rejected requests never debit the ledger.
pub fn deploy_all(
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    model: &TrainedModel,
) -> Result<DeployOutcome, LearnError> {
    deploy_all_traced(requests, net, catalog, model, None)
}

/// [`deploy_all`] with the per-step trace of every batch rollout.
pub fn deploy_all_traced(
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    model: &TrainedModel,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<DeployOutcome, LearnError> {
    let mut ledger = ResourceLedger::full(net);
    let mut out = DeployOutcome { deployments: Vec::new(), accepted: Vec::new(), batches: 0, ledger: ledger.clone() };
    if requests.is_empty() {
        return Ok(out);
    }
    for chunk in pad_to_batches(requests, model.agents) {
        let sink = trace.as_deref_mut().map(|t| (t, out.batches));
        out.batches += 1;
        let res = greedy_rollout_traced(model, &chunk, net, catalog, &ledger, sink)?;
        for (req, dep) in chunk.iter().zip(res.deployments) {
            if req.padding {
                continue;
            }
            let single = validate_against(std::slice::from_ref(&dep), std::slice::from_ref(req), net, catalog, &ledger)?;
            let ok = single.feasible();
            if ok {
                debit(&mut ledger, &dep, req, catalog);
            }
            out.deployments.push(dep);
            out.accepted.push(ok);
        }
    }
    out.ledger = ledger;
    Ok(out)
}

fn migrate_bundle(
    old: &AgentBundle,
    side: Side,
    agent: usize,
    dims_old: (usize, usize, usize),
    n_new: usize,
    lr: (f64, f64),
    hyper: &HyperParams,
    rng: &mut ChaCha8Rng,
) -> Result<AgentBundle, LearnError> {
    let (n_old, k, m) = dims_old;
    let ko = agent_keys(side, agent, n_old, k, m);
    let kn = agent_keys(side, agent, n_new, k, m);
    let (sa, sc) = net_shapes(side, n_new, k, m);
    let mut actor = BranchNet::new(sa, rng);
    let mut critic = BranchNet::new(sc, rng);
    actor.transfer_from(&old.actor, (&ko.actor_in, &ko.actor_out), (&kn.actor_in, &kn.actor_out))?;
    critic.transfer_from(&old.critic, (&ko.critic_in, &ko.critic_out), (&kn.critic_in, &kn.critic_out))?;
    let am = actor.reconfigurable();
    actor.set_trainable(&am);
    let cm = critic.reconfigurable();
    critic.set_trainable(&cm);
    Ok(AgentBundle::from_nets(actor, critic, lr, hyper))
}

/// Carries a trained model over to a topology that kept every node (and
/// possibly gained some). Weights are mapped by feature key; only the
/// node-count dependent layers stay trainable.
pub fn migrate(model: &TrainedModel, new_net: &SubstrateNetwork, seed: u64) -> Result<TrainedModel, LearnError> {
    let n_new = new_net.node_count();
    if n_new < model.node_count {
        return Err(LearnError::NodeRemoval);
    }
    let mut rng = stream_rng(seed, Stream::Init);
    let dims = (model.node_count, model.category_count, model.agents);
    let h = &model.hyper;
    let mut placement = Vec::with_capacity(model.agents);
    for (i, b) in model.placement.iter().enumerate() {
        placement.push(migrate_bundle(
            b,
            Side::Placement,
            i,
            dims,
            n_new,
            (h.placement_actor_lr, h.placement_critic_lr),
            h,
            &mut rng,
        )?);
    }
    let mut routing = Vec::with_capacity(model.agents);
    for (i, b) in model.routing.iter().enumerate() {
        routing.push(migrate_bundle(
            b,
            Side::Routing,
            i,
            dims,
            n_new,
            (h.routing_actor_lr, h.routing_critic_lr),
            h,
            &mut rng,
        )?);
    }
    Ok(TrainedModel { node_count: n_new, placement, routing, ..model.clone() })
}

/// Rolling mean over the trailing `window` values (shorter at the start).
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{exact_solve, ExactLimits};
    use crate::topology::NetworkAttributes;

    fn path4() -> (SubstrateNetwork, VnfCatalog) {
        let attrs = NetworkAttributes::uniform(4, 3, 1, 100.0, 1.0, 1.0);
        let net = SubstrateNetwork::new(4, vec![(0, 1), (1, 2), (2, 3)], attrs).unwrap();
        (net, VnfCatalog::uniform(1, 1.0, 1.0, 1.0))
    }

    fn request(s: usize, t: usize) -> ServiceRequest {
        ServiceRequest {
            id: 0,
            source: s,
            destination: t,
            chain: vec![0],
            rate: 1.0,
            cost_factor: 0.5,
            delay_factor: 0.5,
            padding: false,
        }
    }

    fn tr(reward: f64, done: bool, state: Vec<f64>, width: usize) -> Transition {
        Transition { next_state: state.clone(), state, action: width - 1, other_results: Vec::new(), reward, done }
    }

    #[test]
    fn replay_is_fifo() {
        let mut r = Replay::new(3);
        for i in 0..5 {
            r.push(tr(i as f64, true, vec![], 1));
        }
        assert_eq!(r.len(), 3);
        assert_eq!(r.iter().map(|t| t.reward).collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        let mut rng = stream_rng(0, Stream::Replay);
        assert!(r.sample(4, &mut rng).is_err());
        assert_eq!(r.sample(3, &mut rng).unwrap().len(), 3);
    }

    #[test]
    fn hyper_defaults() {
        let h = HyperParams::default();
        assert_eq!(
            (h.placement_actor_lr, h.routing_actor_lr, h.placement_critic_lr, h.routing_critic_lr),
            (0.002, 0.001, 0.05, 0.01)
        );
        assert_eq!((h.gamma, h.max_placement_episodes, h.max_routing_episodes), (0.99, 500, 1000));
        assert_eq!((h.placement_pre, h.routing_pre, h.batch_size, h.replay_capacity), (4500, 4500, 256, 4000));
        assert!(HyperParams { tau: 0.0, ..h.clone() }.validate().is_err());
        assert!(HyperParams { gamma: 1.5, ..h }.validate().is_err());
    }

    #[test]
    fn noise_zero_is_argmax_and_seeded_noise_repeats() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let model = TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 1).unwrap();
        let actor = &model.placement[0].actor;
        let x = vec![0.3; actor.input_len()];
        let p = actor.forward_one(&x).unwrap();
        let mut rng = stream_rng(9, Stream::Exploration);
        assert_eq!(select_action(actor, &x, 0.0, &mut rng).unwrap(), argmax(p));
        let a = select_action(actor, &x, 0.7, &mut stream_rng(3, Stream::Exploration)).unwrap();
        let b = select_action(actor, &x, 0.7, &mut stream_rng(3, Stream::Exploration)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn terminal_target_is_reward() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let mut model =
            TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 2).unwrap();
        let b = &mut model.placement[0];
        let len = b.actor.input_len();
        let t = tr(1.5, true, vec![0.1; len], 4);
        let q = critic_value(b, &t.state, &one_hot(t.action, 4), &[]).unwrap();
        let loss = update_critic(b, &[&t], 0.99).unwrap();
        assert!((loss - (q - 1.5).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn single_transition_loss_decreases() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let hyper = HyperParams { placement_critic_lr: 1e-4, ..HyperParams::toy() };
        let mut model = TrainedModel::for_instance(&reqs, &net, &cat, hyper, Scales::default(), 3).unwrap();
        let b = &mut model.placement[0];
        let t = tr(2.0, true, vec![0.2; b.actor.input_len()], 4);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let l = update_critic(b, &[&t], 0.99).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn soft_update_extremes() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let mut model =
            TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 4).unwrap();
        let b = &mut model.routing[0];
        b.actor.trunk[0].w[[0, 0]] += 1.0;
        soft_update(b, 1.0);
        assert_eq!(b.target_actor, b.actor);
        assert_eq!(b.target_critic, b.critic);
    }

    #[test]
    fn zero_epochs_is_noop() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let hyper = HyperParams { epochs: 0, ..HyperParams::toy() };
        let fresh = TrainedModel::for_instance(&reqs, &net, &cat, hyper.clone(), Scales::default(), 5).unwrap();
        let (model, log) = train(&reqs, &net, &cat, &hyper, Scales::default(), 5).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(model, fresh);
    }

    #[test]
    fn toy_path_graph_reaches_oracle() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let opt = exact_solve(&reqs, &net, &cat, Scales::default(), &ExactLimits::default()).unwrap().unwrap();
        let mut hits = 0;
        for seed in 0..10 {
            let hyper = HyperParams { epochs: 150, ..HyperParams::toy() };
            let (model, _) = train(&reqs, &net, &cat, &hyper, Scales::default(), seed).unwrap();
            let g = greedy_rollout(&model, &reqs, &net, &cat, &ResourceLedger::full(&net)).unwrap();
            if g.feasible && g.objective <= 1.05 * opt.objective.objective {
                hits += 1;
            }
        }
        assert!(hits >= 8, "{hits}/10");
    }

    #[test]
    fn migrate_links_only_keeps_weights() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let model = TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 6).unwrap();
        let more = SubstrateNetwork::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)], NetworkAttributes::uniform(4, 4, 1, 100.0, 1.0, 1.0)).unwrap();
        let moved = migrate(&model, &more, 6).unwrap();
        for (a, b) in model.placement.iter().zip(&moved.placement) {
            for (x, y) in a.actor.layers().zip(b.actor.layers()) {
                assert_eq!(x.w, y.w);
                assert_eq!(x.b, y.b);
            }
            assert_eq!(b.actor.layers().map(|l| l.trainable).collect::<Vec<_>>(), b.actor.reconfigurable());
        }
        let smaller = SubstrateNetwork::new(3, vec![(0, 1), (1, 2)], NetworkAttributes::uniform(3, 2, 1, 100.0, 1.0, 1.0)).unwrap();
        assert!(matches!(migrate(&model, &smaller, 0), Err(LearnError::NodeRemoval)));
    }

    #[test]
    fn migrate_added_node_copies_output_rows() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let model = TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 7).unwrap();
        let bigger = SubstrateNetwork::new(
            5,
            vec![(0, 1), (1, 2), (2, 3), (3, 4)],
            NetworkAttributes::uniform(5, 4, 1, 100.0, 1.0, 1.0),
        )
        .unwrap();
        let moved = migrate(&model, &bigger, 7).unwrap();
        let old_out = &model.routing[0].actor.trunk[2];
        let new_out = &moved.routing[0].actor.trunk[2];
        assert_eq!(new_out.w.nrows(), 5);
        assert_eq!(new_out.w.slice(s![..4, ..]), old_out.w);
        assert_eq!(moved.routing[0].actor.trunk[1], model.routing[0].actor.trunk[1].clone_frozen());
    }

    trait Frozen {
        fn clone_frozen(&self) -> Self;
    }

    impl Frozen for crate::nn::Dense {
        fn clone_frozen(&self) -> Self {
            crate::nn::Dense { trainable: false, ..self.clone() }
        }
    }

    #[test]
    fn deploy_empty_and_batches() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3), request(1, 2)];
        let model = TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 8).unwrap();
        let none = deploy_all(&[], &net, &cat, &model).unwrap();
        assert!(none.deployments.is_empty() && none.batches == 0);
        let many: Vec<ServiceRequest> = (0..5).map(|i| ServiceRequest { id: i, ..request(0, 3) }).collect();
        let out = deploy_all(&many, &net, &cat, &model).unwrap();
        assert_eq!(out.batches, 3);
        assert_eq!(out.accepted.len(), 5);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (net, cat) = path4();
        let reqs = vec![request(0, 3)];
        let model = TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save(&p).unwrap();
        let back = TrainedModel::load(&p).unwrap();
        assert_eq!(back.placement[0].actor, model.placement[0].actor);
        assert_eq!(back.routing[0].replay.capacity(), model.hyper.replay_capacity);
    }

    #[test]
    fn smoothing_window() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }
}
