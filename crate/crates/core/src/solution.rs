//! Deployments, the C1–C18 validator and the cost/delay objective.
//!
//! Every constraint is evaluated literally on the matrices; nothing is inferred
//! from a path. Capacity constraints (C16–C18) are aggregated over all requests.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::catalog::{ServiceRequest, VnfCatalog};
use crate::error::StructuralError;
use crate::topology::{ResourceLedger, SubstrateNetwork, RESOURCE_EPS};

/// Placement and routing of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub request_id: usize,
    /// `N_f × N`; row `j` marks the node hosting the `j`-th VNF of the chain.
    pub placement: Array2<u8>,
    /// `N × N`; entry `(u, v)` is 1 when the route uses the directed link.
    pub routing: Array2<u8>,
    /// `N × N`; hop number of each used link, 0 elsewhere.
    pub hops: Array2<u32>,
    pub hop_count: usize,
}

impl Deployment {
    /// Nothing placed, nothing routed.
    pub fn empty(request_id: usize, chain_len: usize, node_count: usize) -> Self {
        Deployment {
            request_id,
            placement: Array2::zeros((chain_len, node_count)),
            routing: Array2::zeros((node_count, node_count)),
            hops: Array2::zeros((node_count, node_count)),
            hop_count: 0,
        }
    }

    /// Builds P from a node per VNF and R/Q from a node walk starting at the
    /// source. Revisited arcs keep R binary and take the later hop number.
    pub fn from_path(
        request: &ServiceRequest,
        placement_nodes: &[usize],
        path: &[usize],
        node_count: usize,
    ) -> Result<Self, StructuralError> {
        if placement_nodes.len() != request.chain_len() {
            return Err(StructuralError::Dimension {
                request: request.id,
                matrix: "placement",
                rows: placement_nodes.len(),
                cols: node_count,
                exp_rows: request.chain_len(),
                exp_cols: node_count,
            });
        }
        let mut dep = Deployment::empty(request.id, request.chain_len(), node_count);
        for (j, &n) in placement_nodes.iter().enumerate() {
            if n >= node_count {
                return Err(StructuralError::PathNode { node: n });
            }
            dep.placement[[j, n]] = 1;
        }
        if let Some(&n) = path.iter().find(|&&n| n >= node_count) {
            return Err(StructuralError::PathNode { node: n });
        }
        for (m, w) in path.windows(2).enumerate() {
            dep.routing[[w[0], w[1]]] = 1;
            dep.hops[[w[0], w[1]]] = (m + 1) as u32;
        }
        dep.hop_count = path.len().saturating_sub(1);
        Ok(dep)
    }

    /// Flow matrix `H = r · R`.
    pub fn flow(&self, rate: f64) -> Array2<f64> {
        self.routing.mapv(|x| rate * f64::from(x))
    }

    pub fn node_count(&self) -> usize {
        self.routing.nrows()
    }

    /// Node of each VNF when every row has exactly one mark.
    pub fn placement_nodes(&self) -> Option<Vec<usize>> {
        self.placement
            .rows()
            .into_iter()
            .map(|row| {
                let mut hit = row.iter().enumerate().filter(|(_, &x)| x != 0);
                match (hit.next(), hit.next()) {
                    (Some((n, &1)), None) => Some(n),
                    _ => None,
                }
            })
            .collect()
    }

    /// Follows hop numbers 1, 2, … from `source`; `None` when the hop labels do
    /// not describe a single walk.
    pub fn route_nodes(&self, source: usize) -> Option<Vec<usize>> {
        let n = self.node_count();
        let mut walk = vec![source];
        let mut cur = source;
        for m in 1..=self.hop_count {
            let next: Vec<usize> =
                (0..n).filter(|&v| self.routing[[cur, v]] == 1 && self.hops[[cur, v]] == m as u32).collect();
            if next.len() != 1 {
                return None;
            }
            cur = next[0];
            walk.push(cur);
        }
        let used = self.routing.iter().filter(|&&x| x != 0).count();
        (used == self.hop_count).then_some(walk)
    }

    pub fn to_record(&self, source: usize) -> Option<DeploymentRecord> {
        Some(DeploymentRecord {
            request_id: self.request_id,
            placement: self.placement_nodes()?,
            path: self.route_nodes(source)?,
        })
    }
}

/// JSON form: placement as one node per VNF (row order), routing as a node path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentRecord {
    pub request_id: usize,
    pub placement: Vec<usize>,
    pub path: Vec<usize>,
}

impl DeploymentRecord {
    pub fn to_deployment(&self, request: &ServiceRequest, node_count: usize) -> Result<Deployment, StructuralError> {
        if self.request_id != request.id {
            return Err(StructuralError::IdMismatch { deployment: self.request_id, request: request.id });
        }
        Deployment::from_path(request, &self.placement, &self.path, node_count)
    }
}

/// Solution file written by the solvers and read by `check`: the requests and,
/// per request, its deployment or `null` when rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub requests: Vec<ServiceRequest>,
    pub deployments: Vec<Option<DeploymentRecord>>,
    #[serde(default)]
    pub objective: Option<f64>,
}

impl SolutionFile {
    /// Records accepted deployments; padding requests are dropped.
    pub fn new(requests: &[ServiceRequest], deps: &[Deployment], accepted: &[bool]) -> Self {
        let mut out = SolutionFile { requests: Vec::new(), deployments: Vec::new(), objective: None };
        for ((req, dep), &ok) in requests.iter().zip(deps).zip(accepted) {
            if req.padding {
                continue;
            }
            out.requests.push(req.clone());
            out.deployments.push(if ok { dep.to_record(req.source) } else { None });
        }
        out
    }

    /// The accepted requests with their deployments as matrices.
    pub fn accepted(&self, node_count: usize) -> Result<(Vec<ServiceRequest>, Vec<Deployment>), StructuralError> {
        if self.deployments.len() != self.requests.len() {
            return Err(StructuralError::CountMismatch {
                deployments: self.deployments.len(),
                requests: self.requests.len(),
            });
        }
        let mut reqs = Vec::new();
        let mut deps = Vec::new();
        for (req, rec) in self.requests.iter().zip(&self.deployments) {
            if let Some(rec) = rec {
                deps.push(rec.to_deployment(req, node_count)?);
                reqs.push(req.clone());
            }
        }
        Ok((reqs, deps))
    }
}

pub const CONSTRAINT_COUNT: usize = 18;

/// Outcome of every constraint; index `x - 1` holds C`x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Verdict(pub [bool; CONSTRAINT_COUNT]);

impl Verdict {
    pub fn all_pass() -> Self {
        Verdict([true; CONSTRAINT_COUNT])
    }

    /// Whether C`x` holds (`x` is 1-based).
    pub fn holds(&self, x: usize) -> bool {
        self.0[x - 1]
    }

    fn fail(&mut self, x: usize) {
        self.0[x - 1] = false;
    }

    pub fn violated(&self) -> Vec<usize> {
        (1..=CONSTRAINT_COUNT).filter(|&x| !self.holds(x)).collect()
    }

    pub fn feasible(&self) -> bool {
        self.0.iter().all(|&b| b)
    }

    /// C`lo`..=C`hi` all hold.
    pub fn range_holds(&self, lo: usize, hi: usize) -> bool {
        (lo..=hi).all(|x| self.holds(x))
    }

    fn merge(&mut self, other: &Verdict) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a &= b;
        }
    }
}

/// Violated-constraint counts per routing penalty class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassTally {
    /// C18.
    pub class_i: usize,
    /// C13–C15.
    pub class_ii: usize,
    /// C3.
    pub class_iii: usize,
}

impl ClassTally {
    pub fn of(v: &Verdict) -> Self {
        ClassTally {
            class_i: usize::from(!v.holds(18)),
            class_ii: (13..=15).filter(|&x| !v.holds(x)).count(),
            class_iii: usize::from(!v.holds(3)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    pub verdict: Verdict,
    /// Request-local constraints (C1–C15) per request; C16–C18 are left `true`
    /// here since they are aggregate.
    pub per_request: Vec<Verdict>,
    pub violated_list: Vec<String>,
    pub class_tally: ClassTally,
}

impl ConstraintReport {
    pub fn feasible(&self) -> bool {
        self.violated_list.is_empty()
    }

    pub fn holds(&self, x: usize) -> bool {
        self.verdict.holds(x)
    }
}

fn check_shapes(
    dep: &Deployment,
    req: &ServiceRequest,
    n: usize,
    catalog: &VnfCatalog,
) -> Result<(), StructuralError> {
    if dep.request_id != req.id {
        return Err(StructuralError::IdMismatch { deployment: dep.request_id, request: req.id });
    }
    let dims: [(&'static str, (usize, usize), (usize, usize)); 3] = [
        ("placement", dep.placement.dim(), (req.chain_len(), n)),
        ("routing", dep.routing.dim(), (n, n)),
        ("hops", dep.hops.dim(), (n, n)),
    ];
    for (matrix, (rows, cols), (exp_rows, exp_cols)) in dims {
        if (rows, cols) != (exp_rows, exp_cols) {
            return Err(StructuralError::Dimension { request: req.id, matrix, rows, cols, exp_rows, exp_cols });
        }
    }
    if let Some(&category) = req.chain.iter().find(|&&k| k >= catalog.category_count()) {
        return Err(StructuralError::UnknownCategory { request: req.id, category });
    }
    if !req.padding && (req.source >= n || req.destination >= n) {
        return Err(StructuralError::PathNode { node: req.source.max(req.destination) });
    }
    if dep.placement.iter().any(|&x| x > 1) {
        return Err(StructuralError::NonBinary { request: req.id, matrix: "placement" });
    }
    if dep.routing.iter().any(|&x| x > 1) {
        return Err(StructuralError::NonBinary { request: req.id, matrix: "routing" });
    }
    Ok(())
}

/// C1–C15 for one request, evaluated literally. Sums written over ℰ in the
/// model (C1, C3, C4, C10) only count adjacent pairs.
pub fn check_request(dep: &Deployment, req: &ServiceRequest, net: &SubstrateNetwork) -> Verdict {
    let mut v = Verdict::all_pass();
    if req.padding {
        return v;
    }
    let n = net.node_count();
    let a = net.adjacency();
    let r = &dep.routing;
    let q = &dep.hops;
    let p = &dep.placement;
    let (s, t) = (req.source, req.destination);
    let ri = |u: usize, w: usize| i64::from(r[[u, w]]);
    let qi = |u: usize, w: usize| i64::from(q[[u, w]]);
    let adj = |u: usize, w: usize| a[[u, w]] == 1;

    for u in 0..n {
        let out_e: i64 = (0..n).filter(|&w| adj(u, w)).map(|w| ri(u, w)).sum();
        let in_e: i64 = (0..n).filter(|&w| adj(w, u)).map(|w| ri(w, u)).sum();
        let expected = if u == s {
            1
        } else if u == t {
            -1
        } else {
            0
        };
        // C1: one unit of flow leaves s and reaches t.
        if out_e - in_e != expected {
            v.fail(1);
        }
        // C4: the same balance on H = r·R.
        let h_out: f64 = (0..n).filter(|&w| adj(u, w)).map(|w| req.rate * ri(u, w) as f64).sum();
        let h_in: f64 = (0..n).filter(|&w| adj(w, u)).map(|w| req.rate * ri(w, u) as f64).sum();
        if (h_out - h_in - req.rate * expected as f64).abs() > 1e-9 * req.rate.max(1.0) {
            v.fail(4);
        }
        // C3: at most two incident route arcs at any node.
        let incident: i64 = (0..n).filter(|&w| adj(u, w)).map(|w| ri(u, w) + ri(w, u)).sum();
        if incident > 2 {
            v.fail(3);
        }
        for w in 0..n {
            if ri(u, w) + ri(w, u) > 1 {
                v.fail(2);
            }
            // C9: hop labels only on used links.
            if qi(u, w) != ri(u, w) * qi(u, w) {
                v.fail(9);
            }
        }
        // C10: arriving at hop m means leaving at hop m+1.
        if u != t {
            let q_out: i64 = (0..n).filter(|&w| adj(u, w)).map(|w| qi(u, w)).sum();
            let q_in: i64 = (0..n).filter(|&w| adj(w, u)).map(|w| qi(w, u)).sum();
            if q_out != q_in + out_e {
                v.fail(10);
            }
        }
    }

    let col_r = |w: usize| (0..n).map(|u| ri(u, w)).sum::<i64>();
    let row_r = |u: usize| (0..n).map(|w| ri(u, w)).sum::<i64>();
    let col_q = |w: usize| (0..n).map(|u| qi(u, w)).sum::<i64>();
    let row_q = |u: usize| (0..n).map(|w| qi(u, w)).sum::<i64>();
    if col_r(s) != 0 || col_q(s) != 0 {
        v.fail(5);
    }
    if row_r(s) != 1 || row_q(s) != 1 {
        v.fail(6);
    }
    if row_r(t) != 0 || row_q(t) != 0 {
        v.fail(7);
    }
    if col_r(t) != 1 || col_q(t) != dep.hop_count as i64 {
        v.fail(8);
    }

    let nf = req.chain_len();
    for j in 0..nf {
        let row_sum: i64 = (0..n).map(|x| i64::from(p[[j, x]])).sum();
        if row_sum != 1 {
            v.fail(11);
        }
        for x in 0..n {
            let pj = i64::from(p[[j, x]]);
            if x != s && pj > col_r(x) {
                v.fail(13);
            }
            if x != t && pj > row_r(x) {
                v.fail(14);
            }
        }
    }
    let total: i64 = p.iter().map(|&x| i64::from(x)).sum();
    if total != nf as i64 {
        v.fail(12);
    }
    // C15 needs v*_j; a row without a unique host is already a C11 failure.
    if let Some(hosts) = dep.placement_nodes() {
        for w in hosts.windows(2) {
            if col_q(w[0]) > col_q(w[1]) {
                v.fail(15);
            }
        }
    }
    v
}

/// Aggregate compute, memory and directed bandwidth use of a set of deployments.
pub fn resource_usage(
    deps: &[Deployment],
    reqs: &[ServiceRequest],
    catalog: &VnfCatalog,
    node_count: usize,
) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
    let mut compute = vec![0.0; node_count];
    let mut memory = vec![0.0; node_count];
    let mut bandwidth = Array2::zeros((node_count, node_count));
    for (dep, req) in deps.iter().zip(reqs) {
        if req.padding {
            continue;
        }
        for (j, &k) in req.chain.iter().enumerate() {
            for x in 0..node_count {
                let pj = f64::from(dep.placement[[j, x]]);
                compute[x] += catalog.compute_req(k, req.rate) * pj;
                memory[x] += catalog.memory_req[k] * pj;
            }
        }
        bandwidth.zip_mut_with(&dep.routing, |b, &x| *b += req.rate * f64::from(x));
    }
    (compute, memory, bandwidth)
}

/// Validates against the full network capacities.
pub fn validate(
    deps: &[Deployment],
    reqs: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
) -> Result<ConstraintReport, StructuralError> {
    validate_against(deps, reqs, net, catalog, &ResourceLedger::full(net))
}

/// Validates with C16–C18 judged against `available` instead of the raw
/// capacities (for deployments on top of earlier batches).
pub fn validate_against(
    deps: &[Deployment],
    reqs: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    available: &ResourceLedger,
) -> Result<ConstraintReport, StructuralError> {
    if deps.len() != reqs.len() {
        return Err(StructuralError::CountMismatch { deployments: deps.len(), requests: reqs.len() });
    }
    let n = net.node_count();
    for (dep, req) in deps.iter().zip(reqs) {
        check_shapes(dep, req, n, catalog)?;
    }
    let mut verdict = Verdict::all_pass();
    let mut per_request = Vec::with_capacity(deps.len());
    for (dep, req) in deps.iter().zip(reqs) {
        let v = check_request(dep, req, net);
        verdict.merge(&v);
        per_request.push(v);
    }
    let (compute, memory, bandwidth) = resource_usage(deps, reqs, catalog, n);
    for x in 0..n {
        if compute[x] > available.remaining_compute[x] + RESOURCE_EPS {
            verdict.fail(16);
        }
        if memory[x] > available.remaining_memory[x] + RESOURCE_EPS {
            verdict.fail(17);
        }
    }
    for ((u, w), &used) in bandwidth.indexed_iter() {
        if used > available.remaining_bandwidth[[u, w]] + RESOURCE_EPS {
            verdict.fail(18);
        }
    }
    Ok(ConstraintReport {
        verdict,
        per_request,
        violated_list: verdict.violated().into_iter().map(|x| format!("C{x}")).collect(),
        class_tally: ClassTally::of(&verdict),
    })
}

/// Deployment plus resource cost of one request; zero for padding.
pub fn evaluate_cost(dep: &Deployment, req: &ServiceRequest, net: &SubstrateNetwork, catalog: &VnfCatalog) -> f64 {
    if req.padding {
        return 0.0;
    }
    let n = net.node_count();
    let mut cost = 0.0;
    for (j, &k) in req.chain.iter().enumerate() {
        for x in 0..n {
            let pj = f64::from(dep.placement[[j, x]]);
            cost += net.deploy_cost(k, x) * pj;
            cost += pj * (catalog.compute_req(k, req.rate) * net.compute_cost(x) + catalog.memory_req[k] * net.memory_cost(x));
        }
    }
    for ((u, w), &x) in dep.routing.indexed_iter() {
        if x != 0 {
            cost += req.rate * f64::from(x) * net.bandwidth_cost(u, w);
        }
    }
    cost
}

/// Transmission plus processing delay of one request; zero for padding.
pub fn evaluate_delay(dep: &Deployment, req: &ServiceRequest, net: &SubstrateNetwork, catalog: &VnfCatalog) -> f64 {
    if req.padding {
        return 0.0;
    }
    let mut delay = 0.0;
    let mut links = 0.0;
    for ((u, w), &x) in dep.routing.indexed_iter() {
        if x != 0 {
            delay += req.rate * f64::from(x) * net.link_delay(u, w);
            links += f64::from(x);
        }
    }
    delay += net.node_fixed_delay() * (1.0 + links);
    for (j, &k) in req.chain.iter().enumerate() {
        for x in 0..net.node_count() {
            delay += f64::from(dep.placement[[j, x]]) * catalog.dyn_delay_per_rate[k] * req.rate;
        }
    }
    delay
}

/// Cost and delay normalizers; both 1 by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub cost: f64,
    pub delay: f64,
}

impl Default for Scales {
    fn default() -> Self {
        Scales { cost: 1.0, delay: 1.0 }
    }
}

/// Weighted objective of a single request.
pub fn weighted_objective(cost: f64, delay: f64, req: &ServiceRequest, scales: Scales) -> f64 {
    if req.padding {
        return 0.0;
    }
    req.cost_factor * scales.cost * cost + req.delay_factor * scales.delay * delay
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// Aligned with the request list; padding entries are 0.
    pub cost_total: Vec<f64>,
    pub delay_total: Vec<f64>,
    pub weighted: Vec<f64>,
    pub objective: f64,
    pub scale_cost: f64,
    pub scale_delay: f64,
}

pub fn evaluate_objective(
    deps: &[Deployment],
    reqs: &[ServiceRequest],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    scales: Scales,
) -> ObjectiveBreakdown {
    let mut out = ObjectiveBreakdown {
        cost_total: Vec::with_capacity(reqs.len()),
        delay_total: Vec::with_capacity(reqs.len()),
        weighted: Vec::with_capacity(reqs.len()),
        objective: 0.0,
        scale_cost: scales.cost,
        scale_delay: scales.delay,
    };
    for (dep, req) in deps.iter().zip(reqs) {
        let c = evaluate_cost(dep, req, net, catalog);
        let d = evaluate_delay(dep, req, net, catalog);
        out.cost_total.push(c);
        out.delay_total.push(d);
        out.weighted.push(weighted_objective(c, d, req, scales));
    }
    out.objective = out.weighted.iter().fold(0.0, |a, b| a + b);
    out
}
