use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedgraph_core::federation::comm_cost_report;
use fedgraph_core::harness::{
    default_grid, lambda_sweep, read_meta, run_experiment, synth_graph, write_dataset, ExperimentConfig, SynthConfig,
};
use fedgraph_core::Error;

#[derive(Parser)]
#[command(name = "fedgraph-sim", version, about = "Node-level federated GNN simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over all of its seeds.
    Run(RunArgs),
    /// Run one configuration per lambda and pick the best.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated lambda values; defaults depend on the dataset.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Write a synthetic dataset directory.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        c: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        label_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the communication report of a configuration without training.
    Comm(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long)]
    rounds: Option<u32>,
    /// One or more seeds.
    #[arg(long = "seed", num_args = 1..)]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate clients on all cores.
    #[arg(long)]
    parallel: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(m) = &self.model {
            cfg.set("model", m)?;
        }
        if let Some(m) = &self.mode {
            cfg.set("mode", m)?;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.parallel {
            cfg.parallel = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::NonFinite(_) => 3,
        Error::Config(_)
        | Error::Io { .. }
        | Error::Parse { .. }
        | Error::EndpointOutOfRange { .. }
        | Error::SelfLoop(_)
        | Error::LabelOutOfRange { .. }
        | Error::UnlabeledMaskNode { .. }
        | Error::OverlappingMasks { .. }
        | Error::MaskOutOfRange { .. }
        | Error::DropoutRate(_) => 2,
        _ => 1,
    }
}

fn comm(cfg: &ExperimentConfig) -> Result<String, Error> {
    let meta = read_meta(&cfg.dataset)?;
    let arch = cfg.architecture(&meta);
    arch.validate()?;
    let report = comm_cost_report(cfg.mode, &arch, meta.n, cfg.rounds, None);
    serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))
}

fn synth(cfg: &SynthConfig, out: &Path) -> Result<(), Error> {
    let ds = synth_graph(cfg)?;
    write_dataset(out, &ds.graph, &ds.features)?;
    println!(
        "wrote {} nodes, {} edges, {} classes to {}",
        ds.graph.num_nodes(),
        ds.graph.num_edges(),
        ds.graph.num_classes(),
        out.display()
    );
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let s = run_experiment(&cfg)?;
            print!("{}", fedgraph_core::harness::run::summary_text(&cfg, &s));
        }
        Command::Sweep { run, grid } => {
            let cfg = run.resolve()?;
            let grid = if grid.is_empty() { default_grid(&cfg.dataset) } else { grid };
            let s = lambda_sweep(&cfg, &grid)?;
            for (l, r) in &s.runs {
                println!("lambda {l}: final {:.2}%  best {:.2}%", 100.0 * r.final_acc(), 100.0 * r.best_acc().0);
            }
            println!("best lambda {}", s.best_lambda);
        }
        Command::Synth {
            n,
            p,
            d,
            c,
            seed,
            label_fraction,
            out,
        } => {
            let mut cfg = SynthConfig::new(seed, n, p, d, c);
            cfg.label_fraction = label_fraction;
            synth(&cfg, &out)?;
        }
        Command::Comm(args) => println!("{}", comm(&args.resolve()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
