//! Substrate network model, topology files and randomized instances.
//!
//! Node indices are 0-based in memory and 1-based in topology files.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::rng::{stream_rng, uniform, Stream};

/// Closed interval for a uniformly sampled attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check(&self, field: &'static str) -> Result<(), TopologyError> {
        if self.lo > self.hi || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(TopologyError::InvalidRange { field, lo: self.lo, hi: self.hi });
        }
        if self.lo < 0.0 {
            return Err(TopologyError::NegativeAttribute(field));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        uniform(rng, self.lo, self.hi)
    }
}

/// Sampling ranges for every network attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistributionSpec {
    pub compute_cap: Range,
    pub memory_cap: Range,
    pub bandwidth_cap: Range,
    pub compute_cost: Range,
    pub memory_cost: Range,
    pub bandwidth_cost: Range,
    pub deploy_cost: Range,
    pub link_delay: Range,
    pub node_fixed_delay: f64,
    pub category_count: usize,
}

impl Default for DistributionSpec {
    fn default() -> Self {
        DistributionSpec {
            compute_cap: Range::new(250.0, 350.0),
            memory_cap: Range::new(250.0, 350.0),
            // Not given for links; reuse the node capacity range.
            bandwidth_cap: Range::new(250.0, 350.0),
            compute_cost: Range::new(1.0, 3.0),
            memory_cost: Range::new(1.0, 3.0),
            bandwidth_cost: Range::new(5.0, 15.0),
            deploy_cost: Range::new(5.0, 15.0),
            link_delay: Range::new(0.5, 3.0),
            node_fixed_delay: 1.0,
            category_count: 10,
        }
    }
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<(), TopologyError> {
        self.compute_cap.check("compute_cap")?;
        self.memory_cap.check("memory_cap")?;
        self.bandwidth_cap.check("bandwidth_cap")?;
        self.compute_cost.check("compute_cost")?;
        self.memory_cost.check("memory_cost")?;
        self.bandwidth_cost.check("bandwidth_cost")?;
        self.deploy_cost.check("deploy_cost")?;
        self.link_delay.check("link_delay")?;
        if self.node_fixed_delay < 0.0 || !self.node_fixed_delay.is_finite() {
            return Err(TopologyError::NegativeAttribute("node_fixed_delay"));
        }
        Ok(())
    }

    /// Multiplies every capacity range by `factor`.
    pub fn scale_capacities(mut self, factor: f64) -> Self {
        for r in [&mut self.compute_cap, &mut self.memory_cap, &mut self.bandwidth_cap] {
            r.lo *= factor;
            r.hi *= factor;
        }
        self
    }
}

/// Per-node and per-link attributes. Link vectors are aligned with
/// [`SubstrateNetwork::links`]; `deploy_cost` is indexed `[category][node]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAttributes {
    pub compute_cap: Vec<f64>,
    pub memory_cap: Vec<f64>,
    pub compute_cost: Vec<f64>,
    pub memory_cost: Vec<f64>,
    pub deploy_cost: Vec<Vec<f64>>,
    pub bandwidth_cap: Vec<f64>,
    pub bandwidth_cost: Vec<f64>,
    pub link_delay: Vec<f64>,
    pub node_fixed_delay: f64,
}

impl NetworkAttributes {
    /// All-zero attributes with unit node delay.
    pub fn zeros(node_count: usize, link_count: usize, category_count: usize) -> Self {
        NetworkAttributes {
            compute_cap: vec![0.0; node_count],
            memory_cap: vec![0.0; node_count],
            compute_cost: vec![0.0; node_count],
            memory_cost: vec![0.0; node_count],
            deploy_cost: vec![vec![0.0; node_count]; category_count],
            bandwidth_cap: vec![0.0; link_count],
            bandwidth_cost: vec![0.0; link_count],
            link_delay: vec![0.0; link_count],
            node_fixed_delay: 1.0,
        }
    }

    /// Uniform attributes: handy for hand-built instances in tests.
    pub fn uniform(
        node_count: usize,
        link_count: usize,
        category_count: usize,
        capacity: f64,
        unit_cost: f64,
        delay: f64,
    ) -> Self {
        NetworkAttributes {
            compute_cap: vec![capacity; node_count],
            memory_cap: vec![capacity; node_count],
            compute_cost: vec![unit_cost; node_count],
            memory_cost: vec![unit_cost; node_count],
            deploy_cost: vec![vec![unit_cost; node_count]; category_count],
            bandwidth_cap: vec![capacity; link_count],
            bandwidth_cost: vec![unit_cost; link_count],
            link_delay: vec![delay; link_count],
            node_fixed_delay: 1.0,
        }
    }

    fn check(&self, node_count: usize, link_count: usize) -> Result<(), TopologyError> {
        let node_fields: [(&'static str, &Vec<f64>); 4] = [
            ("compute_cap", &self.compute_cap),
            ("memory_cap", &self.memory_cap),
            ("compute_cost", &self.compute_cost),
            ("memory_cost", &self.memory_cost),
        ];
        for (name, v) in node_fields {
            if v.len() != node_count {
                return Err(TopologyError::AttributeShape { field: name, got: v.len(), expected: node_count });
            }
        }
        let link_fields: [(&'static str, &Vec<f64>); 3] = [
            ("bandwidth_cap", &self.bandwidth_cap),
            ("bandwidth_cost", &self.bandwidth_cost),
            ("link_delay", &self.link_delay),
        ];
        for (name, v) in link_fields {
            if v.len() != link_count {
                return Err(TopologyError::AttributeShape { field: name, got: v.len(), expected: link_count });
            }
        }
        for row in &self.deploy_cost {
            if row.len() != node_count {
                return Err(TopologyError::AttributeShape {
                    field: "deploy_cost",
                    got: row.len(),
                    expected: node_count,
                });
            }
        }
        let all = node_fields
            .iter()
            .map(|(n, v)| (*n, v.as_slice()))
            .chain(link_fields.iter().map(|(n, v)| (*n, v.as_slice())))
            .chain(self.deploy_cost.iter().map(|r| ("deploy_cost", r.as_slice())));
        for (name, v) in all {
            if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(TopologyError::NegativeAttribute(name));
            }
        }
        if !(self.node_fixed_delay >= 0.0) {
            return Err(TopologyError::NegativeAttribute("node_fixed_delay"));
        }
        Ok(())
    }
}

/// Undirected substrate network with resource and cost attributes.
///
/// Immutable after construction; use [`mutate_topology`] to derive changed copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct SubstrateNetwork {
    node_count: usize,
    links: Vec<(usize, usize)>,
    adjacency: Array2<u8>,
    link_index: Array2<usize>,
    attrs: NetworkAttributes,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    node_count: usize,
    links: Vec<(usize, usize)>,
    attributes: NetworkAttributes,
}

impl TryFrom<NetworkRepr> for SubstrateNetwork {
    type Error = TopologyError;
    fn try_from(r: NetworkRepr) -> Result<Self, Self::Error> {
        SubstrateNetwork::new(r.node_count, r.links, r.attributes)
    }
}

impl From<SubstrateNetwork> for NetworkRepr {
    fn from(n: SubstrateNetwork) -> Self {
        NetworkRepr { node_count: n.node_count, links: n.links, attributes: n.attrs }
    }
}

const NO_LINK: usize = usize::MAX;

impl SubstrateNetwork {
    pub fn new(
        node_count: usize,
        links: Vec<(usize, usize)>,
        attrs: NetworkAttributes,
    ) -> Result<Self, TopologyError> {
        let mut adjacency = Array2::<u8>::zeros((node_count, node_count));
        let mut link_index = Array2::<usize>::from_elem((node_count, node_count), NO_LINK);
        let mut normalized = Vec::with_capacity(links.len());
        for (idx, &(u, v)) in links.iter().enumerate() {
            for x in [u, v] {
                if x >= node_count {
                    return Err(TopologyError::NodeOutOfRange { index: x, node_count });
                }
            }
            if u == v {
                return Err(TopologyError::SelfLoop(u));
            }
            if adjacency[[u, v]] == 1 {
                return Err(TopologyError::DuplicateLink { u, v });
            }
            adjacency[[u, v]] = 1;
            adjacency[[v, u]] = 1;
            link_index[[u, v]] = idx;
            link_index[[v, u]] = idx;
            normalized.push((u.min(v), u.max(v)));
        }
        attrs.check(node_count, normalized.len())?;
        Ok(SubstrateNetwork { node_count, links: normalized, adjacency, link_index, attrs })
    }

    /// Structure only; every attribute zero except the unit node delay.
    pub fn bare(node_count: usize, links: Vec<(usize, usize)>, category_count: usize) -> Result<Self, TopologyError> {
        let attrs = NetworkAttributes::zeros(node_count, links.len(), category_count);
        SubstrateNetwork::new(node_count, links, attrs)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Links as `(min, max)` pairs in declaration order.
    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn adjacency(&self) -> &Array2<u8> {
        &self.adjacency
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[[u, v]] == 1
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count).filter(move |&v| self.adjacency[[u, v]] == 1)
    }

    pub fn link_id(&self, u: usize, v: usize) -> Option<usize> {
        match self.link_index[[u, v]] {
            NO_LINK => None,
            i => Some(i),
        }
    }

    pub fn attributes(&self) -> &NetworkAttributes {
        &self.attrs
    }

    pub fn category_count(&self) -> usize {
        self.attrs.deploy_cost.len()
    }

    pub fn compute_cap(&self, n: usize) -> f64 {
        self.attrs.compute_cap[n]
    }

    pub fn memory_cap(&self, n: usize) -> f64 {
        self.attrs.memory_cap[n]
    }

    pub fn compute_cost(&self, n: usize) -> f64 {
        self.attrs.compute_cost[n]
    }

    pub fn memory_cost(&self, n: usize) -> f64 {
        self.attrs.memory_cost[n]
    }

    pub fn deploy_cost(&self, category: usize, n: usize) -> f64 {
        self.attrs.deploy_cost[category][n]
    }

    /// Capacity of link `(u, v)`; zero when not linked.
    pub fn bandwidth_cap(&self, u: usize, v: usize) -> f64 {
        self.link_id(u, v).map_or(0.0, |i| self.attrs.bandwidth_cap[i])
    }

    pub fn bandwidth_cost(&self, u: usize, v: usize) -> f64 {
        self.link_id(u, v).map_or(0.0, |i| self.attrs.bandwidth_cost[i])
    }

    pub fn link_delay(&self, u: usize, v: usize) -> f64 {
        self.link_id(u, v).map_or(0.0, |i| self.attrs.link_delay[i])
    }

    pub fn node_fixed_delay(&self) -> f64 {
        self.attrs.node_fixed_delay
    }

    /// Dense symmetric bandwidth matrix.
    pub fn bandwidth_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.node_count, self.node_count));
        for (i, &(u, v)) in self.links.iter().enumerate() {
            m[[u, v]] = self.attrs.bandwidth_cap[i];
            m[[v, u]] = self.attrs.bandwidth_cap[i];
        }
        m
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Relabels nodes: new index of old node `u` is `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, TopologyError> {
        let n = self.node_count;
        let mut attrs = self.attrs.clone();
        for (old, &new) in perm.iter().enumerate() {
            attrs.compute_cap[new] = self.attrs.compute_cap[old];
            attrs.memory_cap[new] = self.attrs.memory_cap[old];
            attrs.compute_cost[new] = self.attrs.compute_cost[old];
            attrs.memory_cost[new] = self.attrs.memory_cost[old];
            for k in 0..attrs.deploy_cost.len() {
                attrs.deploy_cost[k][new] = self.attrs.deploy_cost[k][old];
            }
        }
        let links = self.links.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        SubstrateNetwork::new(n, links, attrs)
    }

    /// Serializes the structure in topology-file form (attributes omitted).
    pub fn to_topology_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", self.node_count);
        for &(u, v) in &self.links {
            let _ = writeln!(out, "link {} {}", u + 1, v + 1);
        }
        out
    }
}

/// Parsed topology file: the structure plus the optional `seed` line.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyFile {
    pub node_count: usize,
    pub links: Vec<(usize, usize)>,
    pub seed: Option<u64>,
}

/// Reads the node/link list format:
///
/// ```text
/// nodes 3
/// link 1 2
/// link 2 3
/// link 1 3
/// seed 42      # optional: sample attributes with the default distribution
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn parse_topology_file(text: &str) -> Result<TopologyFile, TopologyError> {
    let mut node_count: Option<usize> = None;
    let mut links = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut seed = None;
    let err = |line: usize, message: String| TopologyError::Parse { line, message };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let parse_num = |s: &str| -> Result<u64, TopologyError> {
            s.parse::<u64>().map_err(|_| err(line_no, format!("expected an integer, got `{s}`")))
        };
        match keyword {
            "nodes" => {
                if node_count.is_some() {
                    return Err(err(line_no, "repeated `nodes` line".into()));
                }
                if args.len() != 1 {
                    return Err(err(line_no, "expected `nodes <N>`".into()));
                }
                let n = parse_num(args[0])? as usize;
                if n == 0 {
                    return Err(err(line_no, "node count must be positive".into()));
                }
                node_count = Some(n);
            }
            "link" => {
                let n = node_count.ok_or_else(|| err(line_no, "`link` before `nodes`".into()))?;
                if args.len() != 2 {
                    return Err(err(line_no, "expected `link <u> <v>`".into()));
                }
                let u = parse_num(args[0])? as usize;
                let v = parse_num(args[1])? as usize;
                for x in [u, v] {
                    if x == 0 || x > n {
                        return Err(err(line_no, format!("dangling node index {x} (nodes are 1..={n})")));
                    }
                }
                if u == v {
                    return Err(err(line_no, format!("self-loop {u} {v}")));
                }
                if !seen.insert((u.min(v), u.max(v))) {
                    return Err(err(line_no, format!("duplicate link {u} {v}")));
                }
                links.push((u - 1, v - 1));
            }
            "seed" => {
                if args.len() != 1 {
                    return Err(err(line_no, "expected `seed <int>`".into()));
                }
                seed = Some(parse_num(args[0])?);
            }
            other => return Err(err(line_no, format!("unknown keyword `{other}`"))),
        }
    }
    let node_count = node_count.ok_or_else(|| err(1, "missing `nodes <N>` line".into()))?;
    Ok(TopologyFile { node_count, links, seed })
}

/// Parses a topology file into a network. With a `seed` line the attributes are
/// sampled from [`DistributionSpec::default`]; otherwise they are all zero.
pub fn parse_topology(text: &str) -> Result<SubstrateNetwork, TopologyError> {
    let file = parse_topology_file(text)?;
    let dist = DistributionSpec::default();
    let bare = SubstrateNetwork::bare(file.node_count, file.links, dist.category_count)?;
    match file.seed {
        Some(seed) => generate_instance(&bare, seed, &dist),
        None => Ok(bare),
    }
}

/// Samples every attribute i.i.d. from `dist` on the structure of `topology`.
pub fn generate_instance(
    topology: &SubstrateNetwork,
    seed: u64,
    dist: &DistributionSpec,
) -> Result<SubstrateNetwork, TopologyError> {
    dist.validate()?;
    let mut rng = stream_rng(seed, Stream::Topology);
    let n = topology.node_count();
    let l = topology.link_count();
    let mut attrs = NetworkAttributes::zeros(n, l, dist.category_count);
    for i in 0..n {
        attrs.compute_cap[i] = dist.compute_cap.sample(&mut rng);
        attrs.memory_cap[i] = dist.memory_cap.sample(&mut rng);
        attrs.compute_cost[i] = dist.compute_cost.sample(&mut rng);
        attrs.memory_cost[i] = dist.memory_cost.sample(&mut rng);
    }
    for i in 0..l {
        attrs.bandwidth_cap[i] = dist.bandwidth_cap.sample(&mut rng);
        attrs.bandwidth_cost[i] = dist.bandwidth_cost.sample(&mut rng);
        attrs.link_delay[i] = dist.link_delay.sample(&mut rng);
    }
    for row in attrs.deploy_cost.iter_mut() {
        for x in row.iter_mut() {
            *x = dist.deploy_cost.sample(&mut rng);
        }
    }
    attrs.node_fixed_delay = dist.node_fixed_delay;
    SubstrateNetwork::new(n, topology.links().to_vec(), attrs)
}

/// Random connected graph: a random spanning tree plus each remaining pair with
/// probability `extra_link_prob`.
pub fn random_connected(
    node_count: usize,
    extra_link_prob: f64,
    seed: u64,
    category_count: usize,
) -> Result<SubstrateNetwork, TopologyError> {
    use rand::seq::SliceRandom;
    use rand::Rng;
    let mut rng = stream_rng(seed, Stream::Change);
    let mut order: Vec<usize> = (0..node_count).collect();
    order.shuffle(&mut rng);
    let mut present = vec![vec![false; node_count]; node_count];
    let mut links = Vec::new();
    for i in 1..node_count {
        let parent = order[rng.random_range(0..i)];
        let child = order[i];
        present[parent][child] = true;
        present[child][parent] = true;
        links.push((parent.min(child), parent.max(child)));
    }
    for u in 0..node_count {
        for v in (u + 1)..node_count {
            if !present[u][v] && rng.random::<f64>() < extra_link_prob {
                present[u][v] = true;
                links.push((u, v));
            }
        }
    }
    SubstrateNetwork::bare(node_count, links, category_count)
}

/// Complete graph on `node_count` nodes.
pub fn full_mesh(node_count: usize, category_count: usize) -> Result<SubstrateNetwork, TopologyError> {
    let links = (0..node_count)
        .flat_map(|u| ((u + 1)..node_count).map(move |v| (u, v)))
        .collect();
    SubstrateNetwork::bare(node_count, links, category_count)
}

/// A link to add, with its attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewLink {
    pub u: usize,
    pub v: usize,
    pub bandwidth_cap: f64,
    pub bandwidth_cost: f64,
    pub delay: f64,
}

/// Attributes of an appended node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewNode {
    pub compute_cap: f64,
    pub memory_cap: f64,
    pub compute_cost: f64,
    pub memory_cost: f64,
    /// One entry per VNF category.
    pub deploy_cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TopologyChange {
    AddLinks(Vec<NewLink>),
    /// The new node gets index `N`; links may reference it.
    AddNodeWithLinks { node: NewNode, links: Vec<NewLink> },
}

impl TopologyChange {
    pub fn adds_node(&self) -> bool {
        matches!(self, TopologyChange::AddNodeWithLinks { .. })
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, TopologyChange::AddLinks(l) if l.is_empty())
    }
}

/// Returns a changed copy of `net`; existing indices and attributes are kept.
pub fn mutate_topology(net: &SubstrateNetwork, change: &TopologyChange) -> Result<SubstrateNetwork, TopologyError> {
    let mut attrs = net.attrs.clone();
    let mut links = net.links.clone();
    let (node_count, new_links) = match change {
        TopologyChange::AddLinks(l) => (net.node_count, l),
        TopologyChange::AddNodeWithLinks { node, links: l } => {
            if node.deploy_cost.len() != attrs.deploy_cost.len() {
                return Err(TopologyError::AttributeShape {
                    field: "deploy_cost",
                    got: node.deploy_cost.len(),
                    expected: attrs.deploy_cost.len(),
                });
            }
            attrs.compute_cap.push(node.compute_cap);
            attrs.memory_cap.push(node.memory_cap);
            attrs.compute_cost.push(node.compute_cost);
            attrs.memory_cost.push(node.memory_cost);
            for (row, &c) in attrs.deploy_cost.iter_mut().zip(&node.deploy_cost) {
                row.push(c);
            }
            (net.node_count + 1, l)
        }
    };
    for nl in new_links {
        for x in [nl.u, nl.v] {
            if x >= node_count {
                return Err(TopologyError::NodeOutOfRange { index: x, node_count });
            }
        }
        if nl.u < net.node_count && nl.v < net.node_count && net.is_adjacent(nl.u, nl.v) {
            return Err(TopologyError::DuplicateLink { u: nl.u, v: nl.v });
        }
        links.push((nl.u, nl.v));
        attrs.bandwidth_cap.push(nl.bandwidth_cap);
        attrs.bandwidth_cost.push(nl.bandwidth_cost);
        attrs.link_delay.push(nl.delay);
    }
    SubstrateNetwork::new(node_count, links, attrs)
}

/// Draws a random change: `link_count` new links among absent pairs, plus a
/// new node when `add_node` (the new node takes part in every new link when
/// possible, mirroring "one node and four links").
pub fn sample_change(
    net: &SubstrateNetwork,
    add_node: bool,
    link_count: usize,
    seed: u64,
    dist: &DistributionSpec,
) -> Result<TopologyChange, TopologyError> {
    use rand::seq::SliceRandom;
    dist.validate()?;
    let mut rng = stream_rng(seed, Stream::Change);
    let n = net.node_count();
    let link = |u: usize, v: usize, rng: &mut rand_chacha::ChaCha8Rng| NewLink {
        u,
        v,
        bandwidth_cap: dist.bandwidth_cap.sample(rng),
        bandwidth_cost: dist.bandwidth_cost.sample(rng),
        delay: dist.link_delay.sample(rng),
    };
    if add_node {
        let node = NewNode {
            compute_cap: dist.compute_cap.sample(&mut rng),
            memory_cap: dist.memory_cap.sample(&mut rng),
            compute_cost: dist.compute_cost.sample(&mut rng),
            memory_cost: dist.memory_cost.sample(&mut rng),
            deploy_cost: (0..net.category_count()).map(|_| dist.deploy_cost.sample(&mut rng)).collect(),
        };
        let mut peers: Vec<usize> = (0..n).collect();
        peers.shuffle(&mut rng);
        peers.truncate(link_count.min(n));
        peers.sort_unstable();
        let links = peers.into_iter().map(|p| link(p, n, &mut rng)).collect();
        Ok(TopologyChange::AddNodeWithLinks { node, links })
    } else {
        let mut absent: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !net.is_adjacent(u, v))
            .collect();
        absent.shuffle(&mut rng);
        absent.truncate(link_count);
        absent.sort_unstable();
        Ok(TopologyChange::AddLinks(absent.into_iter().map(|(u, v)| link(u, v, &mut rng)).collect()))
    }
}

/// Remaining resources during an episode or a deployment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLedger {
    pub remaining_compute: Vec<f64>,
    pub remaining_memory: Vec<f64>,
    /// Directed remaining bandwidth; zero wherever there is no link.
    pub remaining_bandwidth: Array2<f64>,
}

/// Slack allowed on resource comparisons of sampled reals.
pub const RESOURCE_EPS: f64 = 1e-9;

impl ResourceLedger {
    pub fn full(net: &SubstrateNetwork) -> Self {
        ResourceLedger {
            remaining_compute: net.attrs.compute_cap.clone(),
            remaining_memory: net.attrs.memory_cap.clone(),
            remaining_bandwidth: net.bandwidth_matrix(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.remaining_compute.len()
    }

    pub fn compute_fits(&self, n: usize, compute: f64) -> bool {
        compute <= self.remaining_compute[n] + RESOURCE_EPS
    }

    pub fn memory_fits(&self, n: usize, memory: f64) -> bool {
        memory <= self.remaining_memory[n] + RESOURCE_EPS
    }

    pub fn debit_node(&mut self, n: usize, compute: f64, memory: f64) {
        self.remaining_compute[n] = (self.remaining_compute[n] - compute).max(0.0);
        self.remaining_memory[n] = (self.remaining_memory[n] - memory).max(0.0);
    }

    pub fn link_fits(&self, u: usize, v: usize, rate: f64) -> bool {
        rate <= self.remaining_bandwidth[[u, v]] + RESOURCE_EPS
    }

    pub fn debit_link(&mut self, u: usize, v: usize, rate: f64) {
        let b = &mut self.remaining_bandwidth[[u, v]];
        *b = (*b - rate).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "nodes 3\nlink 1 2\nlink 2 3\nlink 1 3\n";

    fn cost266() -> SubstrateNetwork {
        parse_topology(include_str!("../data/cost266.topo")).unwrap()
    }

    #[test]
    fn triangle_parses() {
        let net = parse_topology(TRIANGLE).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.link_count(), 3);
        let a = net.adjacency();
        assert_eq!(a.iter().map(|&x| x as usize).sum::<usize>(), 6);
        for u in 0..3 {
            assert_eq!(a[[u, u]], 0);
            for v in 0..3 {
                assert_eq!(a[[u, v]], a[[v, u]]);
            }
        }
    }

    #[test]
    fn cost266_size() {
        let net = cost266();
        assert_eq!(net.node_count(), 37);
        assert_eq!(net.link_count(), 57);
        assert!(net.is_connected());
    }

    #[test]
    fn ta2_size() {
        let net = parse_topology(include_str!("../data/ta2.topo")).unwrap();
        assert_eq!((net.node_count(), net.link_count()), (65, 108));
    }

    #[test]
    fn parse_errors_name_line() {
        let e = parse_topology("nodes 5\nlink 1 2\nlink 5 5\n").unwrap_err();
        assert_eq!(e, TopologyError::Parse { line: 3, message: "self-loop 5 5".into() });
        let e = parse_topology("nodes 3\nlink 1 2\nlink 2 1\n").unwrap_err();
        assert!(matches!(e, TopologyError::Parse { line: 3, .. }), "{e}");
        assert!(e.to_string().contains("duplicate"));
        let e = parse_topology("nodes 3\n\nlink 1 4\n").unwrap_err();
        assert!(matches!(e, TopologyError::Parse { line: 3, .. }));
        assert!(e.to_string().contains("dangling"));
        let e = parse_topology("nodes 3\nlink 0 1\n").unwrap_err();
        assert!(e.to_string().contains("dangling"));
        assert!(parse_topology("link 1 2\n").is_err());
        assert!(parse_topology("").is_err());
    }

    #[test]
    fn seed_line_samples_attributes() {
        let net = parse_topology("nodes 3\nlink 1 2\nlink 2 3\nseed 9\n").unwrap();
        assert!(net.attributes().compute_cap.iter().all(|&c| (250.0..=350.0).contains(&c)));
        let bare = parse_topology("nodes 3\nlink 1 2\nlink 2 3\n").unwrap();
        assert!(bare.attributes().compute_cap.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn generate_is_deterministic() {
        let t = cost266();
        let d = DistributionSpec::default();
        let a = generate_instance(&t, 7, &d).unwrap();
        let b = generate_instance(&t, 7, &d).unwrap();
        assert_eq!(a, b);
        let c = generate_instance(&t, 8, &d).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_ranges_hold() {
        let net = generate_instance(&cost266(), 3, &DistributionSpec::default()).unwrap();
        let at = net.attributes();
        assert!(at.compute_cap.iter().all(|&c| (250.0..=350.0).contains(&c)));
        assert!(at.memory_cap.iter().all(|&c| (250.0..=350.0).contains(&c)));
        assert!(at.compute_cost.iter().all(|&c| (1.0..=3.0).contains(&c)));
        assert!(at.memory_cost.iter().all(|&c| (1.0..=3.0).contains(&c)));
        assert!(at.bandwidth_cost.iter().all(|&c| (5.0..=15.0).contains(&c)));
        assert!(at.deploy_cost.iter().flatten().all(|&c| (5.0..=15.0).contains(&c)));
        assert!(at.link_delay.iter().all(|&c| (0.5..=3.0).contains(&c)));
        assert_eq!(at.node_fixed_delay, 1.0);
        assert_eq!(at.deploy_cost.len(), 10);
    }

    #[test]
    fn degenerate_range() {
        let d = DistributionSpec { compute_cost: Range::fixed(5.0), ..Default::default() };
        let net = generate_instance(&cost266(), 1, &d).unwrap();
        assert!(net.attributes().compute_cost.iter().all(|&c| c == 5.0));
    }

    #[test]
    fn inverted_range_rejected() {
        let d = DistributionSpec { link_delay: Range::new(3.0, 1.0), ..Default::default() };
        assert!(matches!(
            generate_instance(&cost266(), 1, &d),
            Err(TopologyError::InvalidRange { field: "link_delay", .. })
        ));
    }

    #[test]
    fn add_links_and_node() {
        let net = generate_instance(&cost266(), 5, &DistributionSpec::default()).unwrap();
        let d = DistributionSpec::default();
        let five = sample_change(&net, false, 5, 11, &d).unwrap();
        let m = mutate_topology(&net, &five).unwrap();
        assert_eq!((m.node_count(), m.link_count()), (37, 62));

        let node = sample_change(&net, true, 4, 11, &d).unwrap();
        let m2 = mutate_topology(&net, &node).unwrap();
        assert_eq!((m2.node_count(), m2.link_count()), (38, 61));
        // old attributes untouched
        for i in 0..37 {
            assert_eq!(m2.compute_cap(i), net.compute_cap(i));
            assert_eq!(m2.deploy_cost(3, i), net.deploy_cost(3, i));
        }
        for &(u, v) in net.links() {
            assert_eq!(m2.bandwidth_cap(u, v), net.bandwidth_cap(u, v));
            assert_eq!(m2.link_delay(u, v), net.link_delay(u, v));
        }

        let same = mutate_topology(&net, &TopologyChange::AddLinks(vec![])).unwrap();
        assert_eq!(same, net);
    }

    #[test]
    fn mutate_errors() {
        let net = parse_topology(TRIANGLE).unwrap();
        let l = |u, v| NewLink { u, v, bandwidth_cap: 1.0, bandwidth_cost: 1.0, delay: 1.0 };
        assert!(matches!(
            mutate_topology(&net, &TopologyChange::AddLinks(vec![l(0, 1)])),
            Err(TopologyError::DuplicateLink { .. })
        ));
        assert!(matches!(
            mutate_topology(&net, &TopologyChange::AddLinks(vec![l(0, 3)])),
            Err(TopologyError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn ledger_starts_full_and_symmetric() {
        let net = generate_instance(&parse_topology(TRIANGLE).unwrap(), 2, &DistributionSpec::default()).unwrap();
        let ledger = ResourceLedger::full(&net);
        for u in 0..3 {
            assert_eq!(ledger.remaining_bandwidth[[u, u]], 0.0);
            for v in 0..3 {
                assert_eq!(ledger.remaining_bandwidth[[u, v]], ledger.remaining_bandwidth[[v, u]]);
            }
        }
        assert_eq!(ledger.remaining_compute, net.attributes().compute_cap);
    }

    #[test]
    fn text_roundtrip() {
        let net = cost266();
        let again = parse_topology(&net.to_topology_text()).unwrap();
        assert_eq!(again.links(), net.links());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn generated_networks_are_symmetric(n in 2usize..9, p in 0.0f64..1.0, seed in 0u64..1000) {
                let t = random_connected(n, p, seed, 4).unwrap();
                let net = generate_instance(&t, seed, &DistributionSpec::default()).unwrap();
                prop_assert!(net.is_connected());
                let a = net.adjacency();
                let b = net.bandwidth_matrix();
                for u in 0..n {
                    prop_assert_eq!(a[[u, u]], 0);
                    for v in 0..n {
                        prop_assert_eq!(a[[u, v]], a[[v, u]]);
                        prop_assert_eq!(b[[u, v]], b[[v, u]]);
                        prop_assert_eq!(a[[u, v]] == 1, net.link_id(u, v).is_some());
                    }
                }
            }
        }
    }
}
