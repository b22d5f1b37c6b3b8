use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::federation::{self, comm_cost_report, CommReport, Mode};
use crate::harness::config::ExperimentConfig;
use crate::harness::dataset::{load_dataset, Dataset};
use crate::metrics::RoundMetrics;
use crate::model::train_centralized;

pub const METRICS_HEADER: &str = "round,train_ce,train_reg,train_total,test_acc";

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub per_seed: Vec<(u64, Vec<RoundMetrics>)>,
    /// Elementwise seed mean of every column, per round.
    pub mean: Vec<RoundMetrics>,
    pub comm: CommReport,
}

impl ExperimentSummary {
    /// Mean over seeds of the last-round test accuracy.
    pub fn final_acc(&self) -> f64 {
        self.mean.last().map_or(0.0, |m| m.test_acc)
    }

    /// Sample standard deviation over seeds of the last-round accuracy.
    pub fn final_acc_std(&self) -> f64 {
        let finals: Vec<f64> = self
            .per_seed
            .iter()
            .filter_map(|(_, h)| h.last().map(|m| m.test_acc))
            .collect();
        if finals.len() < 2 {
            return 0.0;
        }
        let mu = finals.iter().sum::<f64>() / finals.len() as f64;
        (finals.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (finals.len() - 1) as f64).sqrt()
    }

    /// Highest point of the seed-mean accuracy curve and its round.
    pub fn best_acc(&self) -> (f64, u32) {
        self.mean
            .iter()
            .fold((0.0, 0), |b, m| if m.test_acc > b.0 { (m.test_acc, m.round) } else { b })
    }
}

/// Trains one seed. Communication transcripts are returned for federated modes.
pub fn run_seed(
    cfg: &ExperimentConfig,
    data: &Dataset,
    seed: u64,
) -> Result<(Vec<RoundMetrics>, Option<Vec<federation::RoundTranscript>>)> {
    let meta = data.meta();
    match cfg.mode {
        Mode::Centralized => {
            let (_, h) = train_centralized(&cfg.architecture(&meta), &data.graph, &data.features, &cfg.train_params(seed))?;
            Ok((h, None))
        }
        Mode::Nfedgnn | Mode::Cnfgnn => {
            let out = federation::train(&cfg.fed_config(&meta, seed), data)?;
            let h = out.history();
            Ok((h, Some(out.transcripts)))
        }
    }
}

pub fn mean_history(runs: &[(u64, Vec<RoundMetrics>)]) -> Vec<RoundMetrics> {
    let Some((_, first)) = runs.first() else {
        return Vec::new();
    };
    let k = runs.len() as f64;
    (0..first.len())
        .map(|r| {
            let mut m = RoundMetrics {
                round: first[r].round,
                train_ce: 0.0,
                train_reg: 0.0,
                train_total: 0.0,
                test_acc: 0.0,
            };
            for (_, h) in runs {
                m.train_ce += h[r].train_ce;
                m.train_reg += h[r].train_reg;
                m.train_total += h[r].train_total;
                m.test_acc += h[r].test_acc;
            }
            m.train_ce /= k;
            m.train_reg /= k;
            m.train_total /= k;
            m.test_acc /= k;
            m
        })
        .collect()
}

fn metrics_row(s: &mut String, m: &RoundMetrics) {
    let _ = writeln!(
        s,
        "{},{},{},{},{}",
        m.round, m.train_ce, m.train_reg, m.train_total, m.test_acc
    );
}

pub fn metrics_csv(history: &[RoundMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in history {
        metrics_row(&mut s, m);
    }
    s
}

/// All seeds in one file, with a leading `seed` column.
pub fn combined_metrics_csv(runs: &[(u64, Vec<RoundMetrics>)]) -> String {
    let mut s = format!("seed,{METRICS_HEADER}\n");
    for (seed, h) in runs {
        for m in h {
            let _ = write!(s, "{seed},");
            metrics_row(&mut s, m);
        }
    }
    s
}

/// Runs every seed on an already loaded dataset and writes the outputs.
pub fn run_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let meta = data.meta();
    let arch = cfg.architecture(&meta);
    arch.validate()?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    let mut transcripts = None;
    for &seed in &cfg.seeds {
        log::info!("{} {} lambda={} seed={seed}", cfg.mode, cfg.model, cfg.lambda);
        let (h, t) = run_seed(cfg, data, seed)?;
        if transcripts.is_none() {
            transcripts = t;
        }
        per_seed.push((seed, h));
    }
    let comm = comm_cost_report(cfg.mode, &arch, meta.n, cfg.rounds, transcripts.as_deref());
    let summary = ExperimentSummary {
        mean: mean_history(&per_seed),
        per_seed,
        comm,
    };
    write_outputs(cfg, &summary)?;
    Ok(summary)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset, cfg.feature_norm)?;
    run_on(cfg, &data)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_outputs(cfg: &ExperimentConfig, s: &ExperimentSummary) -> Result<()> {
    let dir = &cfg.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (seed, h) in &s.per_seed {
        write_file(&dir.join(format!("metrics_seed{seed}.csv")), &metrics_csv(h))?;
    }
    write_file(&dir.join("metrics.csv"), &combined_metrics_csv(&s.per_seed))?;
    write_file(&dir.join("metrics_mean.csv"), &metrics_csv(&s.mean))?;
    let json = serde_json::to_string_pretty(&s.comm).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&dir.join("comm.json"), &(json + "\n"))?;
    write_file(&dir.join("config.txt"), &cfg.to_text())?;
    write_file(&dir.join("summary.txt"), &summary_text(cfg, s))
}

pub fn summary_text(cfg: &ExperimentConfig, s: &ExperimentSummary) -> String {
    let (best, best_round) = s.best_acc();
    let mut t = String::new();
    let _ = writeln!(t, "dataset        {}", cfg.dataset.display());
    let _ = writeln!(t, "mode           {}", cfg.mode);
    let _ = writeln!(t, "model          {}", cfg.model);
    let _ = writeln!(t, "lambda         {}", cfg.lambda);
    let _ = writeln!(t, "rounds         {}", cfg.rounds);
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(t, "seeds          {}", seeds.join(","));
    let _ = writeln!(
        t,
        "final accuracy {:.2}% ± {:.2}",
        100.0 * s.final_acc(),
        100.0 * s.final_acc_std()
    );
    let _ = writeln!(t, "best accuracy  {:.2}% (round {best_round}, seed mean)", 100.0 * best);
    for (seed, h) in &s.per_seed {
        if let Some(m) = h.last() {
            let _ = writeln!(
                t,
                "  seed {seed}: final {:.2}%  train_ce {:.4}  train_reg {:.4}",
                100.0 * m.test_acc,
                m.train_ce,
                m.train_reg
            );
        }
    }
    let _ = writeln!(
        t,
        "traffic        up {:.2} MiB, down {:.2} MiB, reference figure {:.2} MiB",
        s.comm.upload_MiB, s.comm.download_MiB, s.comm.table1_MiB
    );
    t
}

/// Per-λ outcomes of [`lambda_sweep`].
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub runs: Vec<(f64, ExperimentSummary)>,
    pub best_lambda: f64,
    /// Grid values dropped as repeats.
    pub duplicates: Vec<f64>,
}

/// λ grid used when none is given: chosen by dataset directory name.
pub fn default_grid(dataset: &Path) -> Vec<f64> {
    let name = dataset
        .file_name()
        .map(|s| s.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match name.as_str() {
        "chameleon" | "squirrel" | "wiki-cs" | "wikics" | "wiki_cs" => vec![1.0, 10.0, 100.0, 500.0],
        _ => vec![0.1, 1.0, 10.0, 100.0, 300.0],
    }
}

pub fn dedup_grid(grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut kept: Vec<f64> = Vec::new();
    let mut dups = Vec::new();
    for &l in grid {
        if kept.iter().any(|k| k.to_bits() == l.to_bits()) {
            dups.push(l);
        } else {
            kept.push(l);
        }
    }
    (kept, dups)
}

/// Runs `cfg` once per λ into `out/lambda_<λ>/` and picks the λ with the
/// highest seed-mean final accuracy (first wins on ties).
pub fn lambda_sweep(cfg: &ExperimentConfig, grid: &[f64]) -> Result<SweepSummary> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset, cfg.feature_norm)?;
    lambda_sweep_on(cfg, &data, grid)
}

fn sweep_on(
    cfg: &ExperimentConfig,
    data: &Dataset,
    grid: &[f64],
    duplicates: Vec<f64>,
) -> Result<SweepSummary> {
    let mut runs = Vec::with_capacity(grid.len());
    let mut table = String::from("lambda,final_acc,best_acc\n");
    for &lambda in grid {
        let mut c = cfg.clone();
        c.lambda = lambda;
        c.out = cfg.out.join(format!("lambda_{lambda}"));
        let s = run_on(&c, data)?;
        let _ = writeln!(table, "{lambda},{},{}", s.final_acc(), s.best_acc().0);
        runs.push((lambda, s));
    }
    let best_lambda = runs
        .iter()
        .fold(None::<(f64, f64)>, |b, (l, s)| match b {
            Some((_, acc)) if acc >= s.final_acc() => b,
            _ => Some((*l, s.final_acc())),
        })
        .map(|(l, _)| l)
        .expect("grid is nonempty");
    let _ = writeln!(table, "# best lambda {best_lambda}");
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_file(&cfg.out.join("sweep.csv"), &table)?;
    Ok(SweepSummary {
        runs,
        best_lambda,
        duplicates,
    })
}

/// Sweep over an in-memory dataset.
pub fn lambda_sweep_on(cfg: &ExperimentConfig, data: &Dataset, grid: &[f64]) -> Result<SweepSummary> {
    let (grid, duplicates) = dedup_grid(grid);
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    for d in &duplicates {
        log::warn!("lambda {d} appears more than once in the grid; running it once");
    }
    sweep_on(cfg, data, &grid, duplicates)
}
