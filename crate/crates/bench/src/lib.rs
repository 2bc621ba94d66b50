//! Fixed instances shared by the benchmarks.

use vnf_orch_core::topology::random_connected;
use vnf_orch_core::{
    generate_instance, generate_requests, CatalogSpec, DistributionSpec, RequestSpec, ServiceRequest,
    SubstrateNetwork, VnfCatalog,
};

/// A random connected network with sampled attributes, its catalog and `m`
/// requests; chains have at most two VNFs so the exact solver stays in budget.
pub fn instance(nodes: usize, categories: usize, m: usize, seed: u64) -> (SubstrateNetwork, VnfCatalog, Vec<ServiceRequest>) {
    let structure = random_connected(nodes, 0.3, seed, categories).expect("valid size");
    let dist = DistributionSpec { category_count: categories, ..Default::default() };
    let net = generate_instance(&structure, seed, &dist).expect("valid distribution");
    let catalog = VnfCatalog::generate(&CatalogSpec { category_count: categories, ..Default::default() }, seed)
        .expect("valid catalog");
    let spec = RequestSpec { count: m, min_chain: 1, max_chain: 2.min(categories), ..Default::default() };
    let requests = generate_requests(&net, &catalog, &spec, seed).expect("valid requests");
    (net, catalog, requests)
}
