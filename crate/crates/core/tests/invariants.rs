use proptest::prelude::*;

use vnf_orch_core::catalog::{read_requests_jsonl, write_requests_jsonl, CatalogSpec, RequestSpec};
use vnf_orch_core::experiments::{ExperimentConfig, TopologySource};
use vnf_orch_core::topology::{parse_topology_file, random_connected, DistributionSpec};
use vnf_orch_core::{
    emit_cdf, evaluate_objective, generate_instance, generate_requests, greedy_bestfit, greedy_nearest, pad_to_batches,
    validate, Deployment, Scales, ServiceRequest, SubstrateNetwork, VnfCatalog,
};

fn instance(nodes: usize, p: f64, seed: u64, k: usize) -> (SubstrateNetwork, VnfCatalog) {
    let topo = random_connected(nodes, p, seed, k).unwrap();
    let net = generate_instance(&topo, seed, &DistributionSpec { category_count: k, ..Default::default() }).unwrap();
    let cat = VnfCatalog::generate(&CatalogSpec { category_count: k, ..Default::default() }, seed).unwrap();
    (net, cat)
}

fn requests(net: &SubstrateNetwork, cat: &VnfCatalog, count: usize, seed: u64) -> Vec<ServiceRequest> {
    let spec = RequestSpec { count, min_chain: 1, max_chain: cat.category_count().min(3), ..Default::default() };
    generate_requests(net, cat, &spec, seed).unwrap()
}

fn accepted_only(reqs: &[ServiceRequest], deps: &[Deployment], acc: &[bool]) -> (Vec<ServiceRequest>, Vec<Deployment>) {
    let mut r = Vec::new();
    let mut d = Vec::new();
    for ((req, dep), &a) in reqs.iter().zip(deps).zip(acc) {
        if a {
            r.push(req.clone());
            d.push(dep.clone());
        }
    }
    (r, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_acceptances_validate_jointly(nodes in 3usize..9, p in 0.0f64..0.7, seed in any::<u64>(), k in 1usize..4, m in 1usize..8) {
        let (net, cat) = instance(nodes, p, seed, k);
        let reqs = requests(&net, &cat, m, seed ^ 1);
        for res in [greedy_bestfit(&reqs, &net, &cat), greedy_nearest(&reqs, &net, &cat)] {
            prop_assert_eq!(res.deployments.len(), m);
            let (r, d) = accepted_only(&reqs, &res.deployments, &res.accepted);
            let report = validate(&d, &r, &net, &cat).unwrap();
            prop_assert!(report.feasible(), "{:?}", report);
        }
    }

    #[test]
    fn objective_is_invariant_under_relabeling(nodes in 3usize..8, p in 0.0f64..0.7, seed in any::<u64>(), shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (net, cat) = instance(nodes, p, seed, 2);
        let reqs = requests(&net, &cat, 3, seed ^ 2);
        let res = greedy_nearest(&reqs, &net, &cat);
        let (r, d) = accepted_only(&reqs, &res.deployments, &res.accepted);
        prop_assume!(!r.is_empty());

        let mut perm: Vec<usize> = (0..nodes).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let pnet = net.permuted(&perm).unwrap();
        let mut pr = Vec::new();
        let mut pd = Vec::new();
        for (req, dep) in r.iter().zip(&d) {
            let mut q = req.clone();
            q.source = perm[req.source];
            q.destination = perm[req.destination];
            let place: Vec<usize> = dep.placement_nodes().unwrap().iter().map(|&n| perm[n]).collect();
            let path: Vec<usize> = dep.route_nodes(req.source).unwrap().iter().map(|&n| perm[n]).collect();
            pd.push(Deployment::from_path(&q, &place, &path, nodes).unwrap());
            pr.push(q);
        }
        prop_assert!(validate(&pd, &pr, &pnet, &cat).unwrap().feasible());
        let a = evaluate_objective(&d, &r, &net, &cat, Scales::default()).objective;
        let b = evaluate_objective(&pd, &pr, &pnet, &cat, Scales::default()).objective;
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one(values in prop::collection::vec(-1e6f64..1e6, 1..200), points in 1usize..50) {
        let cdf = emit_cdf(&values, points).unwrap();
        prop_assert_eq!(cdf.len(), points);
        for w in cdf.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
            prop_assert!(w[0].1 <= w[1].1);
        }
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        for &(x, f) in &cdf {
            let below = values.iter().filter(|&&v| v <= x).count();
            prop_assert_eq!(f, below as f64 / values.len() as f64);
        }
    }

    #[test]
    fn padding_fills_batches_and_keeps_order(m in 1usize..30, batch in 1usize..7, seed in any::<u64>()) {
        let (net, cat) = instance(5, 0.3, seed, 3);
        let reqs = requests(&net, &cat, m, seed);
        let batches = pad_to_batches(&reqs, batch);
        prop_assert_eq!(batches.len(), m.div_ceil(batch));
        prop_assert!(batches.iter().all(|b| b.len() == batch));
        let flat: Vec<&ServiceRequest> = batches.iter().flatten().collect();
        for (i, r) in flat.iter().enumerate() {
            if i < m {
                prop_assert_eq!(*r, &reqs[i]);
            } else {
                prop_assert!(r.padding && r.chain.is_empty());
            }
        }
        let mut ids: Vec<usize> = flat.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), flat.len());
    }

    #[test]
    fn generated_requests_are_well_formed(nodes in 2usize..10, k in 1usize..5, m in 1usize..20, seed in any::<u64>()) {
        let (net, cat) = instance(nodes, 0.2, seed, k);
        let reqs = requests(&net, &cat, m, seed);
        prop_assert_eq!(&reqs, &requests(&net, &cat, m, seed));
        for r in &reqs {
            prop_assert!(r.source != r.destination);
            prop_assert!(r.source < nodes && r.destination < nodes);
            let mut c = r.chain.clone();
            c.sort_unstable();
            c.dedup();
            prop_assert_eq!(c.len(), r.chain.len());
            prop_assert!(r.chain.iter().all(|&f| f < k));
        }
        let mean = reqs.iter().map(|r| r.delay_factor).sum::<f64>() / m as f64;
        prop_assert!((mean - RequestSpec::default().mean_delay_factor).abs() < 1e-9);
    }

    #[test]
    fn requests_jsonl_round_trips(seed in any::<u64>(), m in 1usize..10) {
        let (net, cat) = instance(6, 0.3, seed, 3);
        let reqs = requests(&net, &cat, m, seed);
        let mut buf = Vec::new();
        write_requests_jsonl(&reqs, &mut buf).unwrap();
        prop_assert_eq!(read_requests_jsonl(&buf[..]).unwrap(), reqs);
    }

    #[test]
    fn topology_text_round_trips(nodes in 2usize..12, p in 0.0f64..1.0, seed in any::<u64>()) {
        let net = random_connected(nodes, p, seed, 2).unwrap();
        let file = parse_topology_file(&net.to_topology_text()).unwrap();
        prop_assert_eq!(file.node_count, nodes);
        prop_assert_eq!(&file.links[..], net.links());
        prop_assert_eq!(file.seed, None);
    }
}

#[test]
fn config_hash_tracks_content() {
    let text = r#"
method = "greedy-nearest"
seeds = [1, 2]
[topology]
kind = "full-mesh"
nodes = 4
"#;
    let a = ExperimentConfig::from_toml(text).unwrap();
    let b = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let mut c = a.clone();
    c.seeds.push(3);
    assert_ne!(a.hash(), c.hash());
    let mut moved = a.clone();
    moved.output_dir = Some("elsewhere".into());
    assert_eq!(a.hash(), moved.hash());
    let mut d = a.clone();
    d.topology = TopologySource::FullMesh { nodes: 5 };
    assert_ne!(a.hash(), d.hash());
}
