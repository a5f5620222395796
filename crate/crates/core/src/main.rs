use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use macrozip::bounds::{format_table, huffman_bit_bound, lzw_bit_bound, preprocessing_report, BoundKind, BoundReport};
use macrozip::dtw::symbolize;
use macrozip::harness::report::{conditions_from_metrics, condition_table, read_metrics};
use macrozip::harness::{emit_report, run_pipeline, ExperimentConfig};
use macrozip::huffman::{search_huffman, HuffmanSearch};
use macrozip::lzw::{lzw_encoded_bits, search_b_limit, LzwCodebook, LzwSearch};
use macrozip::types::{read_jsonl, Trajectory};

#[derive(Parser)]
#[command(name = "macrozip", version, about = "Macro-action discovery by trajectory compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Codec {
    Huffman,
    Lzw,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract codebooks from a JSON Lines trajectory file and print them.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        codec: Codec,
        /// Defaults to the largest action id plus one.
        #[arg(long)]
        alphabet_size: Option<usize>,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
        #[arg(long, default_value_t = 2)]
        l_min: usize,
        #[arg(long, default_value_t = 5)]
        l_max: usize,
        #[arg(long, default_value_t = 6)]
        b_max: u32,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        /// DTW threshold for continuous trajectories.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Window duration for continuous trajectories.
        #[arg(long, default_value_t = 10.0)]
        window: f64,
    },
    /// Recompute the bound checks from a finished run's artifacts.
    Bounds {
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Re-render the plot and condition table from metrics.csv.
    Replay {
        #[arg(long)]
        artifacts: PathBuf,
    },
}

/// Errors that map to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Validation(String);

fn validation(e: impl std::fmt::Display) -> anyhow::Error {
    Validation(e.to_string()).into()
}

fn run(cfg_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(cfg_path).map_err(|e| validation(format!("{}: {e}", cfg_path.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(validation)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let dir = out.unwrap_or_else(|| cfg.resolved_output_dir());
    let report = run_pipeline(&cfg)?;
    emit_report(&report, &dir)?;
    println!("{}", condition_table(&report.conditions));
    println!("artifacts written to {}", dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn extract(
    input: &Path,
    codec: Codec,
    alphabet_size: Option<usize>,
    grid: HuffmanSearch,
    sweep: LzwSearch,
    alpha: f64,
    window: f64,
) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(input).map_err(|e| validation(format!("{}: {e}", input.display())))?;
    let trajs = read_jsonl(&text).map_err(validation)?;
    let first = trajs.first().ok_or_else(|| validation("no trajectories in input"))?;
    let (corpus, registry): (Vec<Trajectory>, _) = if first.actions.is_discrete() {
        (trajs, None)
    } else {
        let sym = symbolize(&trajs, window, alpha).map_err(validation)?;
        (sym.trajectories, Some(sym.registry))
    };
    let refs: Vec<&[u32]> = corpus
        .iter()
        .map(|t| t.actions.as_discrete())
        .collect::<Result<_, _>>()
        .map_err(validation)?;
    let alphabet = match (alphabet_size, &registry) {
        (Some(a), _) => a,
        (None, Some(r)) => r.len(),
        (None, None) => refs.iter().flat_map(|t| t.iter()).max().map_or(1, |&m| m as usize + 1),
    };
    let mut out = json!({"alphabet_size": alphabet});
    if matches!(codec, Codec::Huffman | Codec::Both) {
        let h = search_huffman(&refs, alphabet, &grid).map_err(validation)?;
        out["huffman"] = json!({
            "best_n": h.best_n,
            "best_l": h.best_l,
            "objective": h.objective,
            "tree_code_lengths": h.codebook.tree_code_lengths,
            "codebook": h.codebook.codebook,
        });
    }
    if matches!(codec, Codec::Lzw | Codec::Both) {
        let z = search_b_limit(&refs, alphabet, &sweep).map_err(validation)?;
        out["lzw"] = json!({"b_limit": z.b_limit, "objective": z.objective, "codebook": z.to_codebook()});
    }
    if let Some(r) = registry {
        out["registry"] = serde_json::to_value(r)?;
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

/// Recomputes every bound from `corpus.jsonl` and `macros.json`.
fn bounds(dir: &Path) -> anyhow::Result<bool> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|e| validation(format!("{}: {e}", dir.join(name).display())))
    };
    let corpus = read_jsonl(&read("corpus.jsonl")?).map_err(validation)?;
    let macros: serde_json::Value = serde_json::from_str(&read("macros.json")?).map_err(validation)?;
    let cfg = ExperimentConfig::from_toml(&read("config.toml")?).map_err(validation)?;
    let runs = macros["runs"].as_array().ok_or_else(|| validation("macros.json has no runs"))?;
    let mut reports = Vec::new();
    for run in runs {
        let seed = run["seed"].as_u64().ok_or_else(|| validation("run without seed"))?;
        let label = format!("seed-{seed}");
        let prefix = format!("{label}/");
        let refs: Vec<&[u32]> = corpus
            .iter()
            .filter(|t| t.task_id.starts_with(&prefix))
            .map(|t| t.actions.as_discrete())
            .collect::<Result<_, _>>()
            .map_err(validation)?;
        let lengths: Vec<usize> = refs.iter().map(|t| t.len()).collect();
        let total: usize = lengths.iter().sum();
        reports.push(preprocessing_report(&lengths, cfg.huffman.l_min, cfg.huffman.l_max)?.with_label(&label));

        let h = &run["huffman"];
        let l = h["best_l"].as_u64().context("best_l")? as usize;
        let probs: Vec<f64> = h["macros"]
            .as_array()
            .context("huffman macros")?
            .iter()
            .filter_map(|m| m["prob"].as_f64())
            .collect();
        let longest = h["tree_code_lengths"]
            .as_array()
            .context("tree_code_lengths")?
            .iter()
            .filter_map(|v| v.as_u64())
            .max()
            .unwrap_or(0) as usize;
        let measured = (total.div_ceil(l) * longest) as f64;
        let mut r = BoundReport {
            theorem: BoundKind::HuffmanBits,
            label: Some(label.clone()),
            bound: None,
            measured,
            holds: false,
            inputs: json!({"m": probs.len(), "l": l, "longest_code": longest}),
            note: None,
            skipped: None,
        };
        match huffman_bit_bound(&probs, &lengths, l) {
            Ok(b) => {
                r.bound = Some(b as f64);
                r.holds = measured <= b as f64;
            }
            Err(e) => r.skipped = Some(e.to_string()),
        }
        reports.push(r);

        let z = &run["lzw"];
        let b_limit = z["b_limit"].as_u64().context("b_limit")? as u32;
        let alphabet = run["alphabet_size"].as_u64().context("alphabet_size")? as usize;
        let entries: Vec<Vec<u32>> = z["codebook"]["entries"]
            .as_array()
            .context("lzw entries")?
            .iter()
            .map(|e| serde_json::from_value(e["symbol"].clone()))
            .collect::<Result<_, _>>()?;
        if alphabet >= 2 {
            let cb = LzwCodebook::from_entries(alphabet, b_limit, entries).map_err(validation)?;
            let measured = lzw_encoded_bits(&refs, &cb)? as f64;
            let bound = lzw_bit_bound(cb.len(), alphabet, &lengths, b_limit)? as f64;
            reports.push(BoundReport {
                theorem: BoundKind::LzwBits,
                label: Some(label),
                bound: Some(bound),
                measured,
                holds: measured <= bound,
                inputs: json!({"n": cb.len(), "alphabet": alphabet, "b_limit": b_limit}),
                note: None,
                skipped: None,
            });
        }
    }
    print!("{}", format_table(&reports));
    Ok(reports.iter().all(BoundReport::passed))
}

fn replay(dir: &Path) -> anyhow::Result<()> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|e| validation(format!("{}: {e}", dir.join(name).display())))
    };
    let cfg = ExperimentConfig::from_toml(&read("config.toml")?).map_err(validation)?;
    let rows = read_metrics(&read("metrics.csv")?).map_err(validation)?;
    let conditions = conditions_from_metrics(&rows).map_err(validation)?;
    let name = cfg.domain.name();
    macrozip::harness::plot::plot_mean_curves(
        &dir.join(format!("mean_curve_{name}.svg")),
        &format!("Mean performance per condition ({name})"),
        &conditions,
    )?;
    print!("{}", condition_table(&conditions));
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> ExitCode {
    if e.downcast_ref::<Validation>().is_some() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out).map(|_| true),
        Command::Extract {
            input,
            codec,
            alphabet_size,
            n_max,
            l_min,
            l_max,
            b_max,
            lambda,
            alpha,
            window,
        } => extract(
            &input,
            codec,
            alphabet_size,
            HuffmanSearch { n_max, l_min, l_max, lambda },
            LzwSearch { b_max, lambda },
            alpha,
            window,
        )
        .map(|_| true),
        Command::Bounds { artifacts } => bounds(&artifacts),
        Command::Replay { artifacts } => replay(&artifacts).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some bounds do not hold");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
