//! Shortest paths, two greedy heuristics and the exhaustive small-instance oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::catalog::{ServiceRequest, VnfCatalog};
use crate::error::SolveError;
use crate::solution::{
    check_request, evaluate_cost, evaluate_delay, evaluate_objective, validate, validate_against, weighted_objective,
    Deployment, ObjectiveBreakdown, Scales,
};
use crate::topology::{ResourceLedger, SubstrateNetwork, RESOURCE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    Hops,
    LinkDelay,
    BandwidthCost,
}

impl Weight {
    pub fn of(self, net: &SubstrateNetwork, u: usize, v: usize) -> f64 {
        match self {
            Weight::Hops => 1.0,
            Weight::LinkDelay => net.link_delay(u, v),
            Weight::BandwidthCost => net.bandwidth_cost(u, v),
        }
    }
}

const TIE_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    hops: usize,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, hops, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-weight path from `src` to `dst`.
///
/// Ties are broken by fewer hops, then by the smaller next node at every step
/// (the lexicographically smallest node sequence). `None` when unreachable.
pub fn shortest_path(net: &SubstrateNetwork, src: usize, dst: usize, weight: Weight) -> Option<Vec<usize>> {
    let n = net.node_count();
    if src == dst {
        return Some(vec![src]);
    }
    // distances to dst; weights are symmetric
    let mut dist = vec![f64::INFINITY; n];
    let mut hops = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[dst] = 0.0;
    hops[dst] = 0;
    heap.push(Entry { dist: 0.0, hops: 0, node: dst });
    while let Some(Entry { node: u, .. }) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        for v in net.neighbors(u) {
            let d = dist[u] + weight.of(net, u, v);
            let h = hops[u] + 1;
            let better = if close(d, dist[v]) { h < hops[v] } else { d < dist[v] };
            if !settled[v] && better {
                dist[v] = d;
                hops[v] = h;
                heap.push(Entry { dist: d, hops: h, node: v });
            }
        }
    }
    if !dist[src].is_finite() {
        return None;
    }
    let mut path = vec![src];
    let mut u = src;
    while u != dst {
        u = net
            .neighbors(u)
            .find(|&v| hops[v] + 1 == hops[u] && close(dist[u], dist[v] + weight.of(net, u, v)))?;
        path.push(u);
    }
    Some(path)
}

/// Hop distances from `src` (`usize::MAX` when unreachable).
pub fn hop_distances(net: &SubstrateNetwork, src: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; net.node_count()];
    let mut queue = std::collections::VecDeque::from([src]);
    d[src] = 0;
    while let Some(u) = queue.pop_front() {
        for v in net.neighbors(u) {
            if d[v] == usize::MAX {
                d[v] = d[u] + 1;
                queue.push_back(v);
            }
        }
    }
    d
}

/// Deployments of a heuristic, aligned with the request list.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub deployments: Vec<Deployment>,
    pub accepted: Vec<bool>,
}

impl HeuristicResult {
    fn with_capacity(m: usize) -> Self {
        HeuristicResult { deployments: Vec::with_capacity(m), accepted: Vec::with_capacity(m) }
    }
}

/// Joins shortest-path legs `s → h_1 → … → h_k → t`.
fn threaded_walk(net: &SubstrateNetwork, req: &ServiceRequest, hosts: &[usize], weight: Weight) -> Option<Vec<usize>> {
    let mut walk = vec![req.source];
    for &target in hosts.iter().chain(std::iter::once(&req.destination)) {
        let from = *walk.last().expect("walk starts at the source");
        let leg = shortest_path(net, from, target, weight)?;
        walk.extend_from_slice(&leg[1..]);
    }
    Some(walk)
}

/// Accepts `dep` if it is feasible on top of `ledger`, debiting on success.
fn admit(
    dep: Deployment,
    req: &ServiceRequest,
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    ledger: &mut ResourceLedger,
    out: &mut HeuristicResult,
) {
    let ok = validate_against(std::slice::from_ref(&dep), std::slice::from_ref(req), net, catalog, ledger)
        .map(|r| r.feasible())
        .unwrap_or(false);
    if ok {
        debit(ledger, &dep, req, catalog);
    }
    out.deployments.push(dep);
    out.accepted.push(ok);
}

/// Subtracts a feasible deployment's resource use from `ledger`.
pub fn debit(ledger: &mut ResourceLedger, dep: &Deployment, req: &ServiceRequest, catalog: &VnfCatalog) {
    if req.padding {
        return;
    }
    if let Some(hosts) = dep.placement_nodes() {
        for (&k, &h) in req.chain.iter().zip(&hosts) {
            ledger.debit_node(h, catalog.compute_req(k, req.rate), catalog.memory_req[k]);
        }
    }
    for ((u, v), &x) in dep.routing.indexed_iter() {
        if x != 0 {
            ledger.debit_link(u, v, req.rate);
        }
    }
}

fn rejected(req: &ServiceRequest, n: usize, out: &mut HeuristicResult) {
    out.deployments.push(Deployment::empty(req.id, if req.padding { 0 } else { req.chain_len() }, n));
    out.accepted.push(false);
}

/// Best-fit decreasing placement plus link-delay shortest-path routing.
///
/// Requests are handled in input order against one shared ledger. Within a
/// request the VNFs go in descending compute demand, each onto the node with
/// the most remaining compute that can hold it.
pub fn greedy_bestfit(requests: &[ServiceRequest], net: &SubstrateNetwork, catalog: &VnfCatalog) -> HeuristicResult {
    greedy_bestfit_on(requests, net, catalog, ResourceLedger::full(net))
}

pub fn greedy_bestfit_on(
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    mut ledger: ResourceLedger,
) -> HeuristicResult {
    let n = net.node_count();
    let mut out = HeuristicResult::with_capacity(requests.len());
    'requests: for req in requests {
        if req.padding {
            rejected(req, n, &mut out);
            continue;
        }
        let mut order: Vec<usize> = (0..req.chain_len()).collect();
        order.sort_by(|&a, &b| {
            catalog.compute_req(req.chain[b], req.rate).total_cmp(&catalog.compute_req(req.chain[a], req.rate))
        });
        let mut trial = ledger.clone();
        let mut hosts = vec![0; req.chain_len()];
        for j in order {
            let k = req.chain[j];
            let (c, m) = (catalog.compute_req(k, req.rate), catalog.memory_req[k]);
            let best = (0..n)
                .filter(|&x| trial.compute_fits(x, c) && trial.memory_fits(x, m))
                .fold(None::<usize>, |acc, x| match acc {
                    Some(b) if trial.remaining_compute[b] >= trial.remaining_compute[x] => Some(b),
                    _ => Some(x),
                });
            let Some(h) = best else {
                rejected(req, n, &mut out);
                continue 'requests;
            };
            trial.debit_node(h, c, m);
            hosts[j] = h;
        }
        let Some(walk) = threaded_walk(net, req, &hosts, Weight::LinkDelay) else {
            rejected(req, n, &mut out);
            continue;
        };
        let dep = Deployment::from_path(req, &hosts, &walk, n).expect("nodes in range");
        admit(dep, req, net, catalog, &mut ledger, &mut out);
    }
    out
}

/// Walks from the source placing each VNF on the nearest (by hops) node that
/// can still hold it, then takes a hop-shortest path to the destination.
pub fn greedy_nearest(requests: &[ServiceRequest], net: &SubstrateNetwork, catalog: &VnfCatalog) -> HeuristicResult {
    greedy_nearest_on(requests, net, catalog, ResourceLedger::full(net))
}

pub fn greedy_nearest_on(
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    mut ledger: ResourceLedger,
) -> HeuristicResult {
    let n = net.node_count();
    let mut out = HeuristicResult::with_capacity(requests.len());
    'requests: for req in requests {
        if req.padding {
            rejected(req, n, &mut out);
            continue;
        }
        let mut trial = ledger.clone();
        let mut hosts = Vec::with_capacity(req.chain_len());
        let mut at = req.source;
        for &k in &req.chain {
            let (c, m) = (catalog.compute_req(k, req.rate), catalog.memory_req[k]);
            let d = hop_distances(net, at);
            let pick = (0..n)
                .filter(|&x| d[x] != usize::MAX && trial.compute_fits(x, c) && trial.memory_fits(x, m))
                .min_by_key(|&x| (d[x], x));
            let Some(h) = pick else {
                rejected(req, n, &mut out);
                continue 'requests;
            };
            trial.debit_node(h, c, m);
            hosts.push(h);
            at = h;
        }
        let Some(walk) = threaded_walk(net, req, &hosts, Weight::Hops) else {
            rejected(req, n, &mut out);
            continue;
        };
        let dep = Deployment::from_path(req, &hosts, &walk, n).expect("nodes in range");
        admit(dep, req, net, catalog, &mut ledger, &mut out);
    }
    out
}

/// Size limits of the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExactLimits {
    pub max_nodes: usize,
    pub max_requests: usize,
    pub max_chain: usize,
    /// Longest path considered; `None` means `N - 1`.
    pub max_hops: Option<usize>,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits { max_nodes: 6, max_requests: 2, max_chain: 2, max_hops: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub deployments: Vec<Deployment>,
    pub objective: ObjectiveBreakdown,
    /// Hop bound actually used.
    pub hop_bound: usize,
    /// Candidate (path, assignment) pairs enumerated over all requests.
    pub candidates: usize,
}

/// All simple `src → dst` paths with at most `max_hops` links, in
/// lexicographic node order.
pub fn simple_paths(net: &SubstrateNetwork, src: usize, dst: usize, max_hops: usize) -> Vec<Vec<usize>> {
    fn dfs(
        net: &SubstrateNetwork,
        dst: usize,
        max_hops: usize,
        path: &mut Vec<usize>,
        on: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        let u = *path.last().expect("nonempty");
        if u == dst {
            out.push(path.clone());
            return;
        }
        if path.len() > max_hops {
            return;
        }
        for v in net.neighbors(u) {
            if !on[v] {
                on[v] = true;
                path.push(v);
                dfs(net, dst, max_hops, path, on, out);
                path.pop();
                on[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    if src == dst {
        return out;
    }
    let mut on = vec![false; net.node_count()];
    on[src] = true;
    dfs(net, dst, max_hops, &mut vec![src], &mut on, &mut out);
    out
}

/// Non-decreasing position sequences of length `k` over `0..len`.
pub fn ordered_assignments(k: usize, len: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, len: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for p in from..len {
            cur.push(p);
            rec(k, len, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, len, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

struct Candidate {
    theta: f64,
    dep: Deployment,
    compute: Vec<(usize, f64)>,
    memory: Vec<(usize, f64)>,
    links: Vec<(usize, usize)>,
}

/// Exhaustive optimum of the weighted objective over simple paths and
/// order-respecting placements on path nodes, with branch and bound across
/// requests. `Ok(None)` when no feasible joint deployment exists.
pub fn exact_solve(
    requests: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    scales: Scales,
    limits: &ExactLimits,
) -> Result<Option<ExactSolution>, SolveError> {
    let n = net.node_count();
    let live: Vec<usize> = (0..requests.len()).filter(|&i| !requests[i].padding).collect();
    if n > limits.max_nodes {
        return Err(SolveError::Budget(format!("{n} nodes > {}", limits.max_nodes)));
    }
    if live.len() > limits.max_requests {
        return Err(SolveError::Budget(format!("{} requests > {}", live.len(), limits.max_requests)));
    }
    if let Some(r) = live.iter().map(|&i| &requests[i]).find(|r| r.chain_len() > limits.max_chain) {
        return Err(SolveError::Budget(format!("chain of {} VNFs > {}", r.chain_len(), limits.max_chain)));
    }
    let hop_bound = limits.max_hops.unwrap_or(n.saturating_sub(1)).min(n.saturating_sub(1));

    let mut per_request: Vec<Vec<Candidate>> = Vec::with_capacity(live.len());
    let mut total = 0;
    for &i in &live {
        let req = &requests[i];
        let mut cands = Vec::new();
        for path in simple_paths(net, req.source, req.destination, hop_bound) {
            for assign in ordered_assignments(req.chain_len(), path.len()) {
                let hosts: Vec<usize> = assign.iter().map(|&p| path[p]).collect();
                let dep = Deployment::from_path(req, &hosts, &path, n)?;
                if !check_request(&dep, req, net).feasible() {
                    continue;
                }
                let theta = weighted_objective(
                    evaluate_cost(&dep, req, net, catalog),
                    evaluate_delay(&dep, req, net, catalog),
                    req,
                    scales,
                );
                let compute = req.chain.iter().zip(&hosts).map(|(&k, &h)| (h, catalog.compute_req(k, req.rate))).collect();
                let memory = req.chain.iter().zip(&hosts).map(|(&k, &h)| (h, catalog.memory_req[k])).collect();
                let links = path.windows(2).map(|w| (w[0], w[1])).collect();
                cands.push(Candidate { theta, dep, compute, memory, links });
            }
        }
        total += cands.len();
        // stable: equal objectives keep (path, assignment) enumeration order
        cands.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        per_request.push(cands);
    }
    if per_request.iter().any(|c| c.is_empty()) {
        return Ok(None);
    }

    // suffix[i]: best possible objective of requests i.. ignoring capacity
    let mut suffix = vec![0.0; per_request.len() + 1];
    for i in (0..per_request.len()).rev() {
        suffix[i] = suffix[i + 1] + per_request[i][0].theta;
    }

    struct Search<'a> {
        cands: &'a [Vec<Candidate>],
        suffix: &'a [f64],
        ledger: ResourceLedger,
        chosen: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
        rate: Vec<f64>,
    }

    impl Search<'_> {
        fn fits(&self, c: &Candidate, rate: f64) -> bool {
            // aggregate within the candidate (two VNFs may share a node)
            let mut node_use: Vec<(usize, f64, f64)> = Vec::new();
            for (&(h, cc), &(_, mm)) in c.compute.iter().zip(&c.memory) {
                match node_use.iter_mut().find(|e| e.0 == h) {
                    Some(e) => {
                        e.1 += cc;
                        e.2 += mm;
                    }
                    None => node_use.push((h, cc, mm)),
                }
            }
            node_use.iter().all(|&(h, cc, mm)| self.ledger.compute_fits(h, cc) && self.ledger.memory_fits(h, mm))
                && c.links.iter().all(|&(u, v)| rate <= self.ledger.remaining_bandwidth[[u, v]] + RESOURCE_EPS)
        }

        fn apply(&mut self, c: &Candidate, rate: f64, sign: f64) {
            for (&(h, cc), &(_, mm)) in c.compute.iter().zip(&c.memory) {
                self.ledger.remaining_compute[h] -= sign * cc;
                self.ledger.remaining_memory[h] -= sign * mm;
            }
            for &(u, v) in &c.links {
                self.ledger.remaining_bandwidth[[u, v]] -= sign * rate;
            }
        }

        fn go(&mut self, i: usize, acc: f64) {
            if i == self.cands.len() {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.chosen.clone()));
                }
                return;
            }
            for ci in 0..self.cands[i].len() {
                let c = &self.cands[i][ci];
                if let Some((b, _)) = &self.best {
                    if acc + c.theta + self.suffix[i + 1] >= *b {
                        break;
                    }
                }
                let rate = self.rate[i];
                if !self.fits(c, rate) {
                    continue;
                }
                self.apply(c, rate, 1.0);
                self.chosen.push(ci);
                self.go(i + 1, acc + c.theta);
                self.chosen.pop();
                let c = &self.cands[i][ci];
                self.apply(c, rate, -1.0);
            }
        }
    }

    let mut search = Search {
        cands: &per_request,
        suffix: &suffix,
        ledger: ResourceLedger::full(net),
        chosen: Vec::new(),
        best: None,
        rate: live.iter().map(|&i| requests[i].rate).collect(),
    };
    search.go(0, 0.0);
    let Some((_, chosen)) = search.best else {
        return Ok(None);
    };

    let mut deployments: Vec<Deployment> = requests.iter().map(|r| Deployment::empty(r.id, 0, n)).collect();
    for (slot, &i) in live.iter().enumerate() {
        deployments[i] = per_request[slot][chosen[slot]].dep.clone();
    }
    let report = validate(&deployments, requests, net, catalog)?;
    if !report.feasible() {
        return Ok(None);
    }
    let objective = evaluate_objective(&deployments, requests, net, catalog, scales);
    Ok(Some(ExactSolution { deployments, objective, hop_bound, candidates: total }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{full_mesh, generate_instance, random_connected, DistributionSpec, NetworkAttributes};

    fn req(s: usize, t: usize, chain: Vec<usize>, phi_d: f64) -> ServiceRequest {
        ServiceRequest {
            id: 0,
            source: s,
            destination: t,
            chain,
            rate: 1.0,
            cost_factor: 1.0 - phi_d,
            delay_factor: phi_d,
            padding: false,
        }
    }

    #[test]
    fn trivial_paths() {
        let net = SubstrateNetwork::bare(3, vec![(0, 1), (1, 2)], 1).unwrap();
        assert_eq!(shortest_path(&net, 1, 1, Weight::Hops), Some(vec![1]));
        assert_eq!(shortest_path(&net, 0, 2, Weight::Hops), Some(vec![0, 1, 2]));
        let split = SubstrateNetwork::bare(3, vec![(0, 1)], 1).unwrap();
        assert_eq!(shortest_path(&split, 0, 2, Weight::Hops), None);
    }

    #[test]
    fn tie_break_smaller_next() {
        // square 0-1-3, 0-2-3
        let net = SubstrateNetwork::bare(4, vec![(0, 2), (2, 3), (0, 1), (1, 3)], 1).unwrap();
        assert_eq!(shortest_path(&net, 0, 3, Weight::Hops), Some(vec![0, 1, 3]));
    }

    #[test]
    fn triangle_exact_by_hand() {
        // direct link 0-2 expensive, detour via 1 cheap
        let mut attrs = NetworkAttributes::uniform(3, 3, 1, 100.0, 1.0, 1.0);
        attrs.bandwidth_cost = vec![1.0, 1.0, 5.0]; // (0,1), (1,2), (0,2)
        let net = SubstrateNetwork::new(3, vec![(0, 1), (1, 2), (0, 2)], attrs).unwrap();
        let cat = VnfCatalog::uniform(1, 1.0, 1.0, 1.0);
        let r = req(0, 2, vec![0], 0.0);
        let sol = exact_solve(&[r.clone()], &net, &cat, Scales::default(), &ExactLimits::default()).unwrap().unwrap();
        // direct: 1 + 1 + 1 + 5 = 8 (placement cost 3 on any node); detour: 3 + 2 = 5
        let direct = Deployment::from_path(&r, &[0], &[0, 2], 3).unwrap();
        let detour = Deployment::from_path(&r, &[0], &[0, 1, 2], 3).unwrap();
        assert_eq!(evaluate_cost(&direct, &r, &net, &cat), 8.0);
        assert_eq!(evaluate_cost(&detour, &r, &net, &cat), 5.0);
        assert_eq!(sol.objective.objective, 5.0);
        assert_eq!(sol.deployments[0].route_nodes(0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn cost_vs_delay_argmin_differs() {
        // cheap but slow detour vs costly fast direct link
        let mut attrs = NetworkAttributes::uniform(3, 3, 1, 100.0, 1.0, 1.0);
        attrs.bandwidth_cost = vec![1.0, 1.0, 10.0];
        attrs.link_delay = vec![5.0, 5.0, 1.0];
        let net = SubstrateNetwork::new(3, vec![(0, 1), (1, 2), (0, 2)], attrs).unwrap();
        let cat = VnfCatalog::uniform(1, 1.0, 1.0, 1.0);
        let lim = ExactLimits::default();
        let by_cost = exact_solve(&[req(0, 2, vec![0], 0.0)], &net, &cat, Scales::default(), &lim).unwrap().unwrap();
        let by_delay = exact_solve(&[req(0, 2, vec![0], 1.0)], &net, &cat, Scales::default(), &lim).unwrap().unwrap();
        assert_eq!(by_cost.deployments[0].hop_count, 2);
        assert_eq!(by_delay.deployments[0].hop_count, 1);
    }

    #[test]
    fn disconnected_is_infeasible() {
        let net = generate_instance(
            &SubstrateNetwork::bare(4, vec![(0, 1), (2, 3)], 2).unwrap(),
            1,
            &DistributionSpec::default(),
        )
        .unwrap();
        let cat = VnfCatalog::uniform(2, 1.0, 1.0, 1.0);
        let r = req(0, 3, vec![1], 0.5);
        assert!(exact_solve(&[r.clone()], &net, &cat, Scales::default(), &ExactLimits::default()).unwrap().is_none());
        assert_eq!(greedy_nearest(&[r.clone()], &net, &cat).accepted, vec![false]);
        assert_eq!(greedy_bestfit(&[r], &net, &cat).accepted, vec![false]);
    }

    #[test]
    fn budget_error() {
        let net = full_mesh(7, 2).unwrap();
        let cat = VnfCatalog::uniform(2, 1.0, 1.0, 1.0);
        assert!(matches!(
            exact_solve(&[req(0, 1, vec![0], 0.5)], &net, &cat, Scales::default(), &ExactLimits::default()),
            Err(SolveError::Budget(_))
        ));
    }

    #[test]
    fn bestfit_picks_largest() {
        let mut attrs = NetworkAttributes::uniform(3, 2, 1, 100.0, 1.0, 1.0);
        attrs.compute_cap[2] = 200.0;
        let net = SubstrateNetwork::new(3, vec![(0, 1), (1, 2)], attrs).unwrap();
        let cat = VnfCatalog::uniform(1, 1.0, 1.0, 1.0);
        let out = greedy_bestfit(&[req(0, 1, vec![0], 0.5)], &net, &cat);
        assert_eq!(out.deployments[0].placement_nodes().unwrap(), vec![2]);
        // route 0 -> 2 -> 1 revisits 1, so it is rejected rather than accepted invalid
        assert_eq!(out.accepted, vec![false]);
        assert!(greedy_bestfit(&[], &net, &cat).deployments.is_empty());
    }

    #[test]
    fn nearest_uses_only_feasible_neighbor() {
        let mut attrs = NetworkAttributes::uniform(3, 2, 1, 100.0, 1.0, 1.0);
        attrs.compute_cap[0] = 0.0;
        let net = SubstrateNetwork::new(3, vec![(0, 1), (1, 2)], attrs).unwrap();
        let cat = VnfCatalog::uniform(1, 1.0, 1.0, 1.0);
        let out = greedy_nearest(&[req(0, 2, vec![0], 0.5)], &net, &cat);
        assert_eq!(out.deployments[0].placement_nodes().unwrap(), vec![1]);
        assert_eq!(out.accepted, vec![true]);
    }

    /// Brute force over simple paths with (weight, hops, sequence) ordering.
    fn brute(net: &SubstrateNetwork, s: usize, t: usize, w: Weight) -> Option<Vec<usize>> {
        if s == t {
            return Some(vec![s]);
        }
        let mut all = simple_paths(net, s, t, net.node_count());
        let cost = |p: &Vec<usize>| p.windows(2).map(|e| w.of(net, e[0], e[1])).sum::<f64>();
        let best = all.iter().map(cost).fold(f64::INFINITY, f64::min);
        all.retain(|p| close(cost(p), best));
        let hops = all.iter().map(|p| p.len()).min()?;
        all.retain(|p| p.len() == hops);
        all.into_iter().min()
    }

    #[test]
    fn shortest_matches_brute_force() {
        for seed in 0..60 {
            let n = 2 + (seed as usize % 5);
            let t = random_connected(n, 0.4, seed, 1).unwrap();
            let net = generate_instance(&t, seed, &DistributionSpec::default()).unwrap();
            for w in [Weight::Hops, Weight::LinkDelay, Weight::BandwidthCost] {
                for s in 0..n {
                    for d in 0..n {
                        assert_eq!(shortest_path(&net, s, d, w), brute(&net, s, d, w), "seed {seed} {w:?} {s}->{d}");
                    }
                }
            }
        }
    }

    #[test]
    fn assignments_count() {
        // multisets of size 2 from 3 positions
        assert_eq!(ordered_assignments(2, 3).len(), 6);
        assert_eq!(ordered_assignments(0, 3), vec![Vec::<usize>::new()]);
    }
}
