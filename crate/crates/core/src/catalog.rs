//! VNF categories and service requests.
//!
//! Categories are 0-based everywhere, including the JSON-lines request format.

use std::io::{BufRead, Write};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CatalogError;
use crate::rng::{stream_rng, uniform, Stream};
use crate::topology::{Range, SubstrateNetwork};

/// Per-category resource and delay coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfCatalog {
    /// Memory needed by one instance (f^m).
    pub memory_req: Vec<f64>,
    /// Compute per unit of service rate (eta); compute need is `eta * rate`.
    pub compute_per_rate: Vec<f64>,
    /// Processing delay per unit of service rate.
    pub dyn_delay_per_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogSpec {
    pub category_count: usize,
    pub memory_req: Range,
    pub compute_per_rate: Range,
    pub dyn_delay_per_rate: Range,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            category_count: 10,
            memory_req: Range::new(1.0, 5.0),
            compute_per_rate: Range::new(0.2, 1.0),
            dyn_delay_per_rate: Range::new(0.5, 3.0),
        }
    }
}

impl VnfCatalog {
    pub fn generate(spec: &CatalogSpec, seed: u64) -> Result<Self, CatalogError> {
        if spec.category_count == 0 {
            return Err(CatalogError::InvalidParameter("category_count must be positive".into()));
        }
        for (name, r) in [
            ("memory_req", spec.memory_req),
            ("compute_per_rate", spec.compute_per_rate),
            ("dyn_delay_per_rate", spec.dyn_delay_per_rate),
        ] {
            if !(r.lo >= 0.0 && r.lo <= r.hi && r.hi.is_finite()) {
                return Err(CatalogError::InvalidParameter(format!("{name} range [{}, {}]", r.lo, r.hi)));
            }
        }
        let mut rng = stream_rng(seed, Stream::Catalog);
        let k = spec.category_count;
        let mut cat = VnfCatalog {
            memory_req: Vec::with_capacity(k),
            compute_per_rate: Vec::with_capacity(k),
            dyn_delay_per_rate: Vec::with_capacity(k),
        };
        for _ in 0..k {
            cat.memory_req.push(uniform(&mut rng, spec.memory_req.lo, spec.memory_req.hi));
            cat.compute_per_rate.push(uniform(&mut rng, spec.compute_per_rate.lo, spec.compute_per_rate.hi));
            cat.dyn_delay_per_rate.push(uniform(&mut rng, spec.dyn_delay_per_rate.lo, spec.dyn_delay_per_rate.hi));
        }
        Ok(cat)
    }

    /// Every category identical: convenient for hand-built cases.
    pub fn uniform(category_count: usize, memory: f64, compute_per_rate: f64, dyn_delay: f64) -> Self {
        VnfCatalog {
            memory_req: vec![memory; category_count],
            compute_per_rate: vec![compute_per_rate; category_count],
            dyn_delay_per_rate: vec![dyn_delay; category_count],
        }
    }

    pub fn category_count(&self) -> usize {
        self.memory_req.len()
    }

    pub fn compute_req(&self, category: usize, rate: f64) -> f64 {
        self.compute_per_rate[category] * rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: usize,
    pub source: usize,
    pub destination: usize,
    /// Ordered VNF categories.
    pub chain: Vec<usize>,
    /// Service rate in Mbps.
    pub rate: f64,
    pub cost_factor: f64,
    pub delay_factor: f64,
    /// Zero-demand filler used to complete a batch.
    #[serde(default)]
    pub padding: bool,
}

impl ServiceRequest {
    pub fn padding(id: usize) -> Self {
        ServiceRequest {
            id,
            source: 0,
            destination: 0,
            chain: Vec::new(),
            rate: 0.0,
            cost_factor: 0.5,
            delay_factor: 0.5,
            padding: true,
        }
    }

    pub fn chain_len(&self) -> usize {
        self.chain.len()
    }

    /// Checks the request invariants against a network and catalog.
    pub fn check(&self, node_count: usize, catalog: &VnfCatalog, max_chain: usize) -> Result<(), CatalogError> {
        if self.padding {
            return Ok(());
        }
        let bad = |m: String| Err(CatalogError::InvalidParameter(format!("request {}: {m}", self.id)));
        if self.source >= node_count || self.destination >= node_count {
            return bad("endpoint out of range".into());
        }
        if self.source == self.destination {
            return bad("source equals destination".into());
        }
        if self.chain.is_empty() || self.chain.len() > max_chain {
            return bad(format!("chain length {}", self.chain.len()));
        }
        if let Some(&k) = self.chain.iter().find(|&&k| k >= catalog.category_count()) {
            return bad(format!("unknown category {k}"));
        }
        if !(self.rate > 0.0) {
            return bad(format!("rate {}", self.rate));
        }
        if !(0.0..=1.0).contains(&self.delay_factor) || (self.cost_factor + self.delay_factor - 1.0).abs() > 1e-12 {
            return bad("demand factors must lie in [0,1] and sum to 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestSpec {
    pub count: usize,
    pub rate: f64,
    pub min_chain: usize,
    pub max_chain: usize,
    pub mean_delay_factor: f64,
}

impl Default for RequestSpec {
    fn default() -> Self {
        RequestSpec { count: 20, rate: 5.4, min_chain: 2, max_chain: 4, mean_delay_factor: 0.5 }
    }
}

/// Draws requests: chain length uniform in `[min_chain, max_chain]`, distinct
/// categories per chain, distinct uniform endpoints, and delay factors whose
/// sample mean equals `mean_delay_factor`.
pub fn generate_requests(
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    spec: &RequestSpec,
    seed: u64,
) -> Result<Vec<ServiceRequest>, CatalogError> {
    let invalid = |m: &str| Err(CatalogError::InvalidParameter(m.into()));
    if spec.count == 0 {
        return invalid("request count must be at least 1");
    }
    if !(0.0..=1.0).contains(&spec.mean_delay_factor) {
        return invalid("mean delay factor must lie in [0,1]");
    }
    if spec.min_chain == 0 || spec.min_chain > spec.max_chain {
        return invalid("chain length bounds");
    }
    if !(spec.rate > 0.0) || !spec.rate.is_finite() {
        return invalid("rate must be positive");
    }
    if net.node_count() < 2 {
        return invalid("need at least two nodes for distinct endpoints");
    }
    if catalog.category_count() < spec.max_chain {
        return Err(CatalogError::InsufficientCategories {
            available: catalog.category_count(),
            required: spec.max_chain,
        });
    }

    let mut rng = stream_rng(seed, Stream::Requests);
    let n = net.node_count();
    let mut out = Vec::with_capacity(spec.count);
    for id in 0..spec.count {
        let len = rng.random_range(spec.min_chain..=spec.max_chain);
        let chain = sample_indices(&mut rng, catalog.category_count(), len).into_vec();
        let source = rng.random_range(0..n);
        let mut destination = rng.random_range(0..n - 1);
        if destination >= source {
            destination += 1;
        }
        out.push(ServiceRequest {
            id,
            source,
            destination,
            chain,
            rate: spec.rate,
            cost_factor: 0.0,
            delay_factor: 0.0,
            padding: false,
        });
    }
    let factors = delay_factors(spec.count, spec.mean_delay_factor, &mut rng);
    for (r, d) in out.iter_mut().zip(factors) {
        r.delay_factor = d;
        r.cost_factor = 1.0 - d;
    }
    Ok(out)
}

/// Samples `count` values in `[0,1]` around `mean`, then shifts them so the
/// sample mean is `mean`, pushing any clipped excess onto unclipped entries.
pub fn delay_factors(count: usize, mean: f64, rng: &mut impl Rng) -> Vec<f64> {
    let lo = (mean - 0.25).max(0.0);
    let hi = (mean + 0.25).min(1.0);
    let mut v: Vec<f64> = (0..count).map(|_| uniform(rng, lo, hi)).collect();
    for _ in 0..64 {
        let residual = mean * count as f64 - v.iter().sum::<f64>();
        if residual.abs() <= 1e-12 * count as f64 {
            break;
        }
        let free: Vec<usize> = (0..count)
            .filter(|&i| if residual > 0.0 { v[i] < 1.0 } else { v[i] > 0.0 })
            .collect();
        if free.is_empty() {
            break;
        }
        let share = residual / free.len() as f64;
        for i in free {
            v[i] = (v[i] + share).clamp(0.0, 1.0);
        }
    }
    v
}

/// Sets every request's delay factor to `delay_factor`.
pub fn with_delay_factor(requests: &[ServiceRequest], delay_factor: f64) -> Vec<ServiceRequest> {
    requests
        .iter()
        .cloned()
        .map(|mut r| {
            if !r.padding {
                r.delay_factor = delay_factor;
                r.cost_factor = 1.0 - delay_factor;
            }
            r
        })
        .collect()
}

/// Splits into batches of exactly `batch_size`, topping up the last with
/// zero-demand padding entries.
pub fn pad_to_batches(requests: &[ServiceRequest], batch_size: usize) -> Vec<Vec<ServiceRequest>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut next_id = requests.iter().map(|r| r.id + 1).max().unwrap_or(0);
    requests
        .chunks(batch_size)
        .map(|chunk| {
            let mut batch = chunk.to_vec();
            while batch.len() < batch_size {
                batch.push(ServiceRequest::padding(next_id));
                next_id += 1;
            }
            batch
        })
        .collect()
}

pub fn write_requests_jsonl(requests: &[ServiceRequest], mut w: impl Write) -> std::io::Result<()> {
    for r in requests {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_requests_jsonl(r: impl BufRead) -> Result<Vec<ServiceRequest>, CatalogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CatalogError::InvalidParameter(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let req = serde_json::from_str(&line)
            .map_err(|e| CatalogError::InvalidParameter(format!("line {}: {e}", i + 1)))?;
        out.push(req);
    }
    Ok(out)
}
