use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vnf_orch_core::baselines::{exact_solve, greedy_bestfit, greedy_nearest};
use vnf_orch_core::catalog::{read_requests_jsonl, write_requests_jsonl};
use vnf_orch_core::experiments::{
    build_instance, build_requests, read_csv_column, write_migration_outputs, HyperBlock, RequestParams,
    TopologySource,
};
use vnf_orch_core::learning::{deploy_all_traced, greedy_rollout_traced};
use vnf_orch_core::topology::parse_topology_file;
use vnf_orch_core::{
    emit_cdf, evaluate_objective, migrate, migration_study, pad_to_batches, run_experiment, train, validate,
    CatalogSpec, DistributionSpec, ExactLimits, ExperimentConfig, Method, MigrationConfig, ResourceLedger, Scales,
    ServiceRequest, SolutionFile, SubstrateNetwork, TraceEvent, TrainedModel, VnfCatalog,
};

/// Joint VNF placement and routing: solvers, MADRL training and experiments.
#[derive(Parser)]
#[command(name = "vnf-orch", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a request set as JSON lines.
    Requests {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a solution file against C1–C18.
    Check {
        #[arg(long)]
        deployment: PathBuf,
        #[command(flatten)]
        inst: InstanceArgs,
    },
    /// Solve exhaustively within the search budget.
    SolveExact {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Upper bound on route hops (default N-1).
        #[arg(long)]
        max_hops: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve with one of the greedy baselines.
    SolveGreedy {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_enum, default_value_t = Greedy::Bestfit)]
        method: Greedy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a MADRL model on the first batch of the first seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log (JSON).
        #[arg(long)]
        log: Option<PathBuf>,
        /// JSON-lines trace of the final noise-free rollout.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Deploy requests batch by batch with a trained model.
    Deploy {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Carry a trained model over to a grown topology.
    Migrate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        init_seed: u64,
    },
    /// Run an experiment config and write its metric files.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Empirical CDF of one column of a metrics CSV.
    Cdf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "cost")]
        column: String,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Migrated versus retrained epochs-to-threshold.
    MigrateStudy {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Greedy {
    Bestfit,
    Nearest,
}

/// Where the network, catalog and requests come from. A `--config` supplies
/// everything; the other flags override it or stand alone with `--topology`.
#[derive(Args)]
struct InstanceArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Topology file (`nodes`/`link`/`seed` lines, 1-based).
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Instance seed for attributes and catalog; defaults to the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    categories: Option<usize>,
    /// Number of requests M.
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    mean_delay_factor: Option<f64>,
    #[arg(long)]
    min_chain: Option<usize>,
    #[arg(long)]
    max_chain: Option<usize>,
    /// Seed of the request draw; defaults to the config's first seed.
    #[arg(long)]
    request_seed: Option<u64>,
    /// Read requests from JSON lines instead of generating them.
    #[arg(long)]
    requests_file: Option<PathBuf>,
}

struct Instance {
    cfg: ExperimentConfig,
    net: SubstrateNetwork,
    catalog: VnfCatalog,
    requests: Vec<ServiceRequest>,
}

impl InstanceArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => {
                let Some(topo) = &self.topology else { bail!("either --config or --topology is required") };
                let mut cfg = ExperimentConfig {
                    topology: TopologySource::File { path: topo.clone() },
                    instance_seed: 0,
                    distribution: DistributionSpec::default(),
                    catalog: CatalogSpec::default(),
                    requests: RequestParams::default(),
                    method: Method::Madrl,
                    hyper: HyperBlock::default(),
                    agents: None,
                    exact: ExactLimits::default(),
                    scales: Scales::default(),
                    seeds: vec![0],
                    output_dir: None,
                };
                cfg.catalog.category_count = cfg.distribution.category_count;
                cfg
            }
        };
        if let Some(p) = &self.topology {
            cfg.topology = TopologySource::File { path: p.clone() };
            if self.seed.is_none() {
                let file = parse_topology_file(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
                if let Some(s) = file.seed {
                    cfg.instance_seed = s;
                }
            }
        }
        if let Some(s) = self.seed {
            cfg.instance_seed = s;
        }
        if let Some(k) = self.categories {
            cfg.distribution.category_count = k;
            cfg.catalog.category_count = k;
            // chains never repeat a category
            cfg.requests.max_chain = cfg.requests.max_chain.min(k);
            cfg.requests.min_chain = cfg.requests.min_chain.min(k);
        }
        if let Some(x) = self.min_chain {
            cfg.requests.min_chain = x;
        }
        if let Some(x) = self.max_chain {
            cfg.requests.max_chain = x;
        }
        if let Some(m) = self.requests {
            cfg.requests.count = m;
            cfg.requests.pool = cfg.requests.pool.map(|p| p.max(m));
        }
        if let Some(r) = self.rate {
            cfg.requests.rate = r;
        }
        if let Some(x) = self.mean_delay_factor {
            cfg.requests.mean_delay_factor = x;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn load(&self) -> Result<Instance> {
        let cfg = self.config()?;
        let (net, catalog) = build_instance(&cfg)?;
        let requests = match &self.requests_file {
            Some(p) => {
                let reqs = read_requests_jsonl(BufReader::new(File::open(p).with_context(|| p.display().to_string())?))?;
                for r in &reqs {
                    r.check(net.node_count(), &catalog, catalog.category_count())?;
                }
                reqs
            }
            None => build_requests(&cfg, &net, &catalog, self.request_seed.unwrap_or(cfg.seeds[0]))?,
        };
        Ok(Instance { cfg, net, catalog, requests })
    }
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_trace(events: &[TraceEvent], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn solution(inst: &Instance, deps: &[vnf_orch_core::Deployment], accepted: &[bool]) -> SolutionFile {
    let mut file = SolutionFile::new(&inst.requests, deps, accepted);
    let (reqs, deps) = file.accepted(inst.net.node_count()).expect("solver output is well formed");
    file.objective = Some(evaluate_objective(&deps, &reqs, &inst.net, &inst.catalog, inst.cfg.scales).objective);
    file
}

fn summary(file: &SolutionFile) {
    let acc = file.deployments.iter().filter(|d| d.is_some()).count();
    eprintln!(
        "accepted {acc}/{} objective {}",
        file.requests.len(),
        file.objective.map_or("-".into(), |o| format!("{o:.6}"))
    );
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Requests { inst, out } => {
            let inst = inst.load()?;
            match out {
                Some(p) => write_requests_jsonl(&inst.requests, BufWriter::new(File::create(&p)?))?,
                None => write_requests_jsonl(&inst.requests, io::stdout().lock())?,
            }
        }
        Cmd::Check { deployment, inst } => {
            let inst = inst.load()?;
            let text = fs::read_to_string(&deployment).with_context(|| deployment.display().to_string())?;
            let file: SolutionFile = serde_json::from_str(&text).context("parsing solution file")?;
            let (reqs, deps) = file.accepted(inst.net.node_count())?;
            let report = validate(&deps, &reqs, &inst.net, &inst.catalog)?;
            let per_request: Vec<_> = reqs
                .iter()
                .zip(&report.per_request)
                .map(|(r, v)| serde_json::json!({ "request": r.id, "violated": v.violated() }))
                .collect();
            write_json(
                &serde_json::json!({
                    "feasible": report.feasible(),
                    "violated": report.violated_list,
                    "class_tally": report.class_tally,
                    "per_request": per_request,
                }),
                None,
            )?;
            if !report.feasible() {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::SolveExact { inst, max_hops, out } => {
            let inst = inst.load()?;
            let mut limits = inst.cfg.exact;
            if max_hops.is_some() {
                limits.max_hops = max_hops;
            }
            let sol = exact_solve(&inst.requests, &inst.net, &inst.catalog, inst.cfg.scales, &limits)?;
            let file = match sol {
                Some(s) => solution(&inst, &s.deployments, &vec![true; s.deployments.len()]),
                None => {
                    eprintln!("no feasible joint deployment");
                    let empty: Vec<_> = inst
                        .requests
                        .iter()
                        .map(|r| vnf_orch_core::Deployment::empty(r.id, r.chain_len(), inst.net.node_count()))
                        .collect();
                    solution(&inst, &empty, &vec![false; empty.len()])
                }
            };
            summary(&file);
            write_json(&file, out.as_deref())?;
        }
        Cmd::SolveGreedy { inst, method, out } => {
            let inst = inst.load()?;
            let res = match method {
                Greedy::Bestfit => greedy_bestfit(&inst.requests, &inst.net, &inst.catalog),
                Greedy::Nearest => greedy_nearest(&inst.requests, &inst.net, &inst.catalog),
            };
            let file = solution(&inst, &res.deployments, &res.accepted);
            summary(&file);
            write_json(&file, out.as_deref())?;
        }
        Cmd::Train { config, out, log, trace } => {
            let args = InstanceArgs::from_config(config);
            let inst = args.load()?;
            let hyper = inst.cfg.hyper.resolve()?;
            let batch = pad_to_batches(&inst.requests, inst.cfg.agents()).swap_remove(0);
            let (model, tlog) = train(&batch, &inst.net, &inst.catalog, &hyper, inst.cfg.scales, inst.cfg.seeds[0])?;
            model.save(&out)?;
            let mut events = Vec::new();
            let res = greedy_rollout_traced(
                &model,
                &batch,
                &inst.net,
                &inst.catalog,
                &ResourceLedger::full(&inst.net),
                Some((&mut events, 0)),
            )?;
            eprintln!(
                "trained {} epochs, best epoch {:?}, greedy rollout feasible {} objective {:.6}",
                tlog.epochs.len(),
                tlog.best_epoch,
                res.feasible,
                res.objective
            );
            if let Some(p) = trace {
                write_trace(&events, &p)?;
            }
            if let Some(p) = log {
                write_json(&tlog, Some(&p))?;
            }
        }
        Cmd::Deploy { model, inst, out, trace } => {
            let inst = inst.load()?;
            let model = TrainedModel::load(&model)?;
            let mut events = Vec::new();
            let res = deploy_all_traced(&inst.requests, &inst.net, &inst.catalog, &model, Some(&mut events))?;
            let file = solution(&inst, &res.deployments, &res.accepted);
            summary(&file);
            write_json(&file, out.as_deref())?;
            if let Some(p) = trace {
                write_trace(&events, &p)?;
            }
        }
        Cmd::Migrate { model, inst, out, init_seed } => {
            let inst = inst.load()?;
            let old = TrainedModel::load(&model)?;
            let new = migrate(&old, &inst.net, init_seed)?;
            new.save(&out)?;
            eprintln!("migrated {} -> {} nodes", old.node_count, new.node_count);
        }
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            for r in run_experiment(&cfg)? {
                println!(
                    "seed {} {}: accepted {}/{} throughput {} objective {:.6}",
                    r.seed,
                    r.method.name(),
                    r.accepted,
                    r.total,
                    r.throughput,
                    r.objective
                );
            }
        }
        Cmd::Cdf { input, column, points } => {
            let values = read_csv_column(&input, &column)?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record([column.as_str(), "cdf"])?;
            for (x, f) in emit_cdf(&values, points)? {
                w.write_record([x.to_string(), f.to_string()])?;
            }
            w.flush()?;
        }
        Cmd::MigrateStudy { config } => {
            let cfg = MigrationConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let outcomes = migration_study(&cfg)?;
            let show = |x: Option<usize>| x.map_or("censored".to_string(), |v| v.to_string());
            for o in &outcomes {
                println!("seed {}: migrated {} retrained {}", o.seed, show(o.migrated), show(o.retrained));
            }
            let wins = outcomes.iter().filter(|o| o.migrated_faster()).count();
            println!("migrated faster in {wins}/{}", outcomes.len());
            if let Some(dir) = &cfg.base.output_dir {
                write_migration_outputs(&cfg, &outcomes, dir)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

impl InstanceArgs {
    fn from_config(config: PathBuf) -> Self {
        InstanceArgs {
            config: Some(config),
            topology: None,
            seed: None,
            categories: None,
            requests: None,
            rate: None,
            mean_delay_factor: None,
            min_chain: None,
            max_chain: None,
            request_seed: None,
            requests_file: None,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
