//! Flat state vectors for the placement and routing agents.
//!
//! Every coordinate carries a [`FeatureKey`] naming what it measures (field,
//! agent slot, node/category indices). Keys let migration map weights of an
//! old input layout onto a new one when the node count changes.

use serde::{Deserialize, Serialize};

use crate::catalog::ServiceRequest;
use crate::topology::{ResourceLedger, SubstrateNetwork};

pub const NO_INDEX: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureKey {
    pub field: Field,
    pub agent: u16,
    pub a: u32,
    pub b: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    Rate,
    CostFactor,
    DelayFactor,
    Source,
    Destination,
    Categories,
    RemainingCategories,
    Placement,
    CurrentRouting,
    RemainingCompute,
    RemainingMemory,
    RemainingBandwidth,
    Adjacency,
    /// Category of the VNF about to be placed.
    CurrentCategory,
    /// Host of the previously placed VNF (the source before the first).
    PreviousHost,
    /// Routing agent's current node.
    CurrentNode,
    /// Host of the next VNF still to be visited, or the destination.
    NextTarget,
    /// Fraction of the routing step budget still unused.
    StepsLeft,
    Action,
    OtherResult,
    /// Output unit of a branch sub-network feeding the trunk.
    BranchOutput,
    /// Hidden unit of a network layer.
    Hidden,
    /// Critic output.
    QValue,
}

impl FeatureKey {
    pub fn new(field: Field, agent: usize, a: usize, b: usize) -> Self {
        let idx = |x: usize| if x == usize::MAX { NO_INDEX } else { x as u32 };
        FeatureKey { field, agent: agent as u16, a: idx(a), b: idx(b) }
    }

    pub fn scalar(field: Field, agent: usize) -> Self {
        FeatureKey::new(field, agent, usize::MAX, usize::MAX)
    }

    pub fn node(field: Field, agent: usize, n: usize) -> Self {
        FeatureKey::new(field, agent, n, usize::MAX)
    }
}

/// Normalizers fixed at model creation and reused across topology changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeScales {
    pub rate: f64,
    pub compute: f64,
    pub memory: f64,
    pub bandwidth: f64,
}

impl EncodeScales {
    pub fn for_instance(net: &SubstrateNetwork, requests: &[ServiceRequest]) -> Self {
        let max = |v: &[f64]| v.iter().copied().fold(0.0_f64, f64::max);
        let pos = |x: f64| if x > 0.0 { x } else { 1.0 };
        let at = net.attributes();
        EncodeScales {
            rate: pos(requests.iter().map(|r| r.rate).fold(0.0, f64::max)),
            compute: pos(max(&at.compute_cap)),
            memory: pos(max(&at.memory_cap)),
            bandwidth: pos(max(&at.bandwidth_cap)),
        }
    }
}

/// Collects values and, on request, their keys.
pub struct Enc {
    pub values: Vec<f64>,
    pub keys: Option<Vec<FeatureKey>>,
}

impl Enc {
    pub fn new(with_keys: bool) -> Self {
        Enc { values: Vec::new(), keys: with_keys.then(Vec::new) }
    }

    #[inline]
    pub fn push(&mut self, key: FeatureKey, v: f64) {
        self.values.push(v);
        if let Some(k) = &mut self.keys {
            k.push(key);
        }
    }

    fn one_hot(&mut self, field: Field, agent: usize, hot: Option<usize>, width: usize) {
        for n in 0..width {
            self.push(FeatureKey::node(field, agent, n), if hot == Some(n) { 1.0 } else { 0.0 });
        }
    }

    fn header(&mut self, agent: usize, req: &ServiceRequest, scales: &EncodeScales, n: usize) {
        self.push(FeatureKey::scalar(Field::Rate, agent), req.rate / scales.rate);
        self.push(FeatureKey::scalar(Field::CostFactor, agent), req.cost_factor);
        self.push(FeatureKey::scalar(Field::DelayFactor, agent), req.delay_factor);
        let (s, t) = if req.padding { (None, None) } else { (Some(req.source), Some(req.destination)) };
        self.one_hot(Field::Source, agent, s, n);
        self.one_hot(Field::Destination, agent, t, n);
    }

    fn category_mask(&mut self, field: Field, agent: usize, cats: impl Iterator<Item = usize>, k: usize) {
        let mut mask = vec![0.0; k];
        for c in cats {
            mask[c] = 1.0;
        }
        for (c, v) in mask.into_iter().enumerate() {
            self.push(FeatureKey::node(field, agent, c), v);
        }
    }

    /// Padded placement `P̆` (category × node).
    fn padded_placement(&mut self, field: Field, agent: usize, req: &ServiceRequest, hosts: &[usize], k: usize, n: usize) {
        let mut m = vec![0.0; k * n];
        for (j, &h) in hosts.iter().enumerate() {
            m[req.chain[j] * n + h] = 1.0;
        }
        for c in 0..k {
            for x in 0..n {
                self.push(FeatureKey::new(field, agent, c, x), m[c * n + x]);
            }
        }
    }

    fn adjacency(&mut self, net: &SubstrateNetwork) {
        let n = net.node_count();
        for u in 0..n {
            for v in 0..n {
                self.push(FeatureKey::new(Field::Adjacency, 0, u, v), f64::from(net.adjacency()[[u, v]]));
            }
        }
    }
}

/// Block sizes of a state vector in order self, other, sn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub self_len: usize,
    pub other_len: usize,
    pub sn_len: usize,
}

impl StateLayout {
    pub fn total(&self) -> usize {
        self.self_len + self.other_len + self.sn_len
    }

    pub fn placement(n: usize, k: usize, m: usize) -> Self {
        StateLayout {
            // paper self block plus current category and previous host
            self_len: 2 * k + 2 * n + 3 + k + n,
            other_len: m * (3 + 2 * n + k),
            sn_len: (n + 2) * n,
        }
    }

    pub fn routing(n: usize, k: usize, m: usize) -> Self {
        StateLayout {
            // paper self block plus current node, next target and step budget
            self_len: 3 + 2 * n + k * n + n * n + 2 * n + 1,
            other_len: m * (3 + 2 * n + k * n),
            sn_len: 2 * n * n,
        }
    }
}

/// A state split into its three blocks; `aux` is appended to the self block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedState {
    pub self_obs: Vec<f64>,
    pub aux: Vec<f64>,
    pub other_obs: Vec<f64>,
    pub sn_info: Vec<f64>,
}

impl EncodedState {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.self_obs.len() + self.aux.len() + self.other_obs.len() + self.sn_info.len());
        v.extend_from_slice(&self.self_obs);
        v.extend_from_slice(&self.aux);
        v.extend_from_slice(&self.other_obs);
        v.extend_from_slice(&self.sn_info);
        v
    }
}

/// What a placement agent has done so far.
#[derive(Debug, Clone, Copy)]
pub struct PlacementView<'a> {
    pub agent: usize,
    /// Hosts of the VNFs placed so far, in chain order.
    pub hosts: &'a [usize],
}

fn other_block(enc: &mut Enc, requests: &[ServiceRequest], scales: &EncodeScales, n: usize, k: usize) {
    for (z, r) in requests.iter().enumerate() {
        enc.header(z, r, scales, n);
        enc.category_mask(Field::Categories, z, r.chain.iter().copied(), k);
    }
}

pub fn encode_placement(
    view: PlacementView<'_>,
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    k: usize,
    ledger: &ResourceLedger,
    scales: &EncodeScales,
    with_keys: bool,
) -> (EncodedState, Option<Vec<FeatureKey>>) {
    let n = net.node_count();
    let req = &requests[view.agent];
    let j = view.hosts.len();

    let mut s = Enc::new(with_keys);
    s.header(0, req, scales, n);
    s.category_mask(Field::Categories, 0, req.chain.iter().copied(), k);
    s.category_mask(Field::RemainingCategories, 0, req.chain[j.min(req.chain.len())..].iter().copied(), k);
    let self_len = s.values.len();
    s.category_mask(Field::CurrentCategory, 0, req.chain.get(j).copied().into_iter(), k);
    let prev = if req.padding { None } else { Some(view.hosts.last().copied().unwrap_or(req.source)) };
    s.one_hot(Field::PreviousHost, 0, prev, n);

    let mut o = Enc::new(with_keys);
    other_block(&mut o, requests, scales, n, k);

    let mut sn = Enc::new(with_keys);
    for x in 0..n {
        sn.push(FeatureKey::node(Field::RemainingCompute, 0, x), ledger.remaining_compute[x] / scales.compute);
    }
    for x in 0..n {
        sn.push(FeatureKey::node(Field::RemainingMemory, 0, x), ledger.remaining_memory[x] / scales.memory);
    }
    sn.adjacency(net);

    finish(s, self_len, o, sn)
}

/// What a routing agent has done so far.
#[derive(Debug, Clone, Copy)]
pub struct RoutingView<'a> {
    pub agent: usize,
    /// Nodes visited so far, starting at the source.
    pub path: &'a [usize],
    /// Decisions taken so far, rejected moves included.
    pub steps: usize,
}

/// Host of the first VNF not yet covered by `path`, or the destination.
pub fn next_target(req: &ServiceRequest, hosts: &[usize], path: &[usize]) -> usize {
    let mut pos = 0;
    for &h in hosts {
        match path[pos..].iter().position(|&x| x == h) {
            Some(p) => pos += p,
            None => return h,
        }
    }
    req.destination
}

#[allow(clippy::too_many_arguments)]
pub fn encode_routing(
    view: RoutingView<'_>,
    requests: &[ServiceRequest],
    placements: &[Vec<usize>],
    net: &SubstrateNetwork,
    k: usize,
    ledger: &ResourceLedger,
    scales: &EncodeScales,
    with_keys: bool,
) -> (EncodedState, Option<Vec<FeatureKey>>) {
    let n = net.node_count();
    let req = &requests[view.agent];
    let hosts = &placements[view.agent];

    let mut s = Enc::new(with_keys);
    s.header(0, req, scales, n);
    s.padded_placement(Field::Placement, 0, req, hosts, k, n);
    let mut cur = vec![0.0; n * n];
    for w in view.path.windows(2) {
        cur[w[0] * n + w[1]] = 1.0;
    }
    for u in 0..n {
        for v in 0..n {
            s.push(FeatureKey::new(Field::CurrentRouting, 0, u, v), cur[u * n + v]);
        }
    }
    let self_len = s.values.len();
    let (at, target) = if req.padding {
        (None, None)
    } else {
        (view.path.last().copied(), Some(next_target(req, hosts, view.path)))
    };
    s.one_hot(Field::CurrentNode, 0, at, n);
    s.one_hot(Field::NextTarget, 0, target, n);
    let budget = n.saturating_sub(1).max(1);
    let left = if req.padding { 0.0 } else { budget.saturating_sub(view.steps) as f64 / budget as f64 };
    s.push(FeatureKey::scalar(Field::StepsLeft, 0), left);

    let mut o = Enc::new(with_keys);
    for (z, r) in requests.iter().enumerate() {
        o.header(z, r, scales, n);
        o.padded_placement(Field::Placement, z, r, &placements[z], k, n);
    }

    let mut sn = Enc::new(with_keys);
    for u in 0..n {
        for v in 0..n {
            sn.push(
                FeatureKey::new(Field::RemainingBandwidth, 0, u, v),
                ledger.remaining_bandwidth[[u, v]] / scales.bandwidth,
            );
        }
    }
    sn.adjacency(net);

    finish(s, self_len, o, sn)
}

fn finish(mut s: Enc, self_len: usize, o: Enc, sn: Enc) -> (EncodedState, Option<Vec<FeatureKey>>) {
    let aux = s.values.split_off(self_len);
    let keys = match (s.keys, o.keys, sn.keys) {
        (Some(mut a), Some(b), Some(c)) => {
            a.extend(b);
            a.extend(c);
            Some(a)
        }
        _ => None,
    };
    (EncodedState { self_obs: s.values, aux, other_obs: o.values, sn_info: sn.values }, keys)
}

/// Other agents' results for the centralized critic: padded placements `P̆`
/// (placement side) or routing matrices (routing side), agent `i` skipped.
pub fn encode_other_results(
    agent: usize,
    requests: &[ServiceRequest],
    results: &OtherResults<'_>,
    n: usize,
    k: usize,
    with_keys: bool,
) -> (Vec<f64>, Option<Vec<FeatureKey>>) {
    let mut e = Enc::new(with_keys);
    for z in (0..requests.len()).filter(|&z| z != agent) {
        match results {
            OtherResults::Placement(hosts) => {
                e.padded_placement(Field::OtherResult, z, &requests[z], &hosts[z], k, n)
            }
            OtherResults::Routing(paths) => {
                let mut m = vec![0.0; n * n];
                for w in paths[z].windows(2) {
                    m[w[0] * n + w[1]] = 1.0;
                }
                for u in 0..n {
                    for v in 0..n {
                        e.push(FeatureKey::new(Field::OtherResult, z, u, v), m[u * n + v]);
                    }
                }
            }
        }
    }
    (e.values, e.keys)
}

pub enum OtherResults<'a> {
    Placement(&'a [Vec<usize>]),
    Routing(&'a [Vec<usize>]),
}

pub fn other_results_len(side: Side, n: usize, k: usize, m: usize) -> usize {
    m.saturating_sub(1)
        * match side {
            Side::Placement => k * n,
            Side::Routing => n * n,
        }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Placement,
    Routing,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ServiceRequest;
    use crate::topology::{full_mesh, generate_instance, DistributionSpec};

    fn setup() -> (SubstrateNetwork, Vec<ServiceRequest>) {
        let net = generate_instance(&full_mesh(5, 10).unwrap(), 1, &DistributionSpec::default()).unwrap();
        let mk = |id, s, t, chain: Vec<usize>| ServiceRequest {
            id,
            source: s,
            destination: t,
            chain,
            rate: 5.4,
            cost_factor: 0.3,
            delay_factor: 0.7,
            padding: false,
        };
        (net, vec![mk(0, 0, 4, vec![3, 1]), mk(1, 2, 1, vec![7])])
    }

    #[test]
    fn placement_layout_matches() {
        let (net, reqs) = setup();
        let ledger = ResourceLedger::full(&net);
        let scales = EncodeScales::for_instance(&net, &reqs);
        let (st, keys) =
            encode_placement(PlacementView { agent: 0, hosts: &[2] }, &reqs, &net, 10, &ledger, &scales, true);
        // self block is exactly the paper's 2K + 2N + 3
        assert_eq!(st.self_obs.len(), 2 * 10 + 2 * 5 + 3);
        let layout = StateLayout::placement(5, 10, 2);
        assert_eq!(st.self_obs.len() + st.aux.len(), layout.self_len);
        assert_eq!(st.other_obs.len(), layout.other_len);
        assert_eq!(st.sn_info.len(), layout.sn_len);
        assert_eq!(keys.unwrap().len(), layout.total());
        // category 3 placed, 1 remains
        let rem = &st.self_obs[3 + 10 + 10..];
        assert_eq!(rem[3], 0.0);
        assert_eq!(rem[1], 1.0);
    }

    #[test]
    fn routing_layout_matches() {
        let (net, reqs) = setup();
        let ledger = ResourceLedger::full(&net);
        let scales = EncodeScales::for_instance(&net, &reqs);
        let placements = vec![vec![1, 3], vec![2]];
        let (st, keys) = encode_routing(
            RoutingView { agent: 0, path: &[0], steps: 0 },
            &reqs,
            &placements,
            &net,
            10,
            &ledger,
            &scales,
            true,
        );
        let layout = StateLayout::routing(5, 10, 2);
        assert_eq!(st.self_obs.len() + st.aux.len(), layout.self_len);
        assert_eq!(st.other_obs.len() + st.sn_info.len(), layout.other_len + layout.sn_len);
        assert_eq!(keys.unwrap().len(), layout.total());
        // current routing block starts all zero
        let r_cu = &st.self_obs[3 + 10 + 50..];
        assert!(r_cu.iter().all(|&x| x == 0.0));
        assert_eq!(next_target(&reqs[0], &placements[0], &[0]), 1);
        assert_eq!(next_target(&reqs[0], &placements[0], &[0, 1, 3]), 4);
    }

    #[test]
    fn other_results_skip_self() {
        let (_, reqs) = setup();
        let hosts = vec![vec![1, 3], vec![2]];
        let (v, _) = encode_other_results(0, &reqs, &OtherResults::Placement(&hosts), 5, 10, false);
        assert_eq!(v.len(), other_results_len(Side::Placement, 5, 10, 2));
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert_eq!(v[7 * 5 + 2], 1.0);
    }
}
