use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::Domain;
use super::pipeline::{Condition, ConditionResult, ExperimentReport, SeedRun, TaskCurve};
use super::plot::plot_mean_curves;
use crate::agent::EpisodeStats;
use crate::bounds::{format_table, BoundReport};
use crate::envs::MAZE_ACTION_NAMES;
use crate::types::write_jsonl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub condition: String,
    pub task: String,
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: usize,
}

pub const METRICS_HEADER: &str = "condition,task,episode,return,steps";

pub fn metrics_csv(conditions: &[ConditionResult]) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_HEADER.split(','))?;
    for c in conditions {
        for tc in &c.curves {
            for (episode, e) in tc.curve.iter().enumerate() {
                w.serialize(MetricRow {
                    condition: c.condition.name().to_string(),
                    task: tc.task.clone(),
                    episode,
                    ret: e.ret,
                    steps: e.steps,
                })?;
            }
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn read_metrics(text: &str) -> anyhow::Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != METRICS_HEADER {
        bail!("unexpected metrics header {:?}", header.join(","));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Rebuilds per-condition results from metric rows, keeping task order.
pub fn conditions_from_metrics(rows: &[MetricRow]) -> anyhow::Result<Vec<ConditionResult>> {
    let mut grouped: Vec<Vec<TaskCurve>> = vec![Vec::new(); Condition::ALL.len()];
    for row in rows {
        let c = Condition::parse(&row.condition).with_context(|| format!("unknown condition {}", row.condition))?;
        let slot = &mut grouped[c as usize];
        if slot.last().is_none_or(|t| t.task != row.task) {
            slot.push(TaskCurve {
                task: row.task.clone(),
                curve: Vec::new(),
            });
        }
        let tc = slot.last_mut().expect("just pushed");
        if row.episode != tc.curve.len() {
            bail!("{} / {}: episode {} out of order", row.condition, row.task, row.episode);
        }
        tc.curve.push(EpisodeStats {
            ret: row.ret,
            steps: row.steps,
            reached_goal: false,
        });
    }
    Ok(Condition::ALL
        .into_iter()
        .zip(grouped)
        .map(|(c, g)| ConditionResult::from_curves(c, g))
        .collect())
}

/// Human-readable name of a symbol sequence, e.g. `(r,r,r)` or `(c0,c2)`.
pub fn symbol_name(domain: Domain, seq: &[u32]) -> String {
    let parts: Vec<String> = seq
        .iter()
        .map(|&a| match domain {
            Domain::Maze => MAZE_ACTION_NAMES.get(a as usize).map_or(a.to_string(), |s| s.to_string()),
            Domain::MountainCar => format!("c{a}"),
        })
        .collect();
    format!("({})", parts.join(","))
}

fn run_json(domain: Domain, run: &SeedRun) -> Value {
    let h = &run.huffman;
    let z = &run.lzw;
    let huffman_macros: Vec<Value> = h
        .macros
        .iter()
        .map(|m| {
            let seq = m.actions.as_discrete().unwrap_or_default();
            json!({"name": symbol_name(domain, seq), "symbol": seq, "prob": h.distribution.prob(&m.id)})
        })
        .collect();
    json!({
        "seed": run.seed,
        "alphabet_size": run.alphabet_size,
        "demonstrations": run.rollouts.len(),
        "huffman": {
            "best_n": h.best_n,
            "best_l": h.best_l,
            "objective": h.objective,
            "tree_code_lengths": h.codebook.tree_code_lengths,
            "macros": huffman_macros,
            "codebook": h.codebook.codebook,
            "grid": h.grid,
        },
        "lzw": {
            "b_limit": z.b_limit,
            "objective": z.objective,
            "codebook": z.to_codebook(),
            "sweep": z.sweep,
        },
        "registry": run.registry,
    })
}

pub fn macros_json(report: &ExperimentReport) -> Value {
    let domain = report.config.domain;
    json!({
        "domain": domain.name(),
        "runs": report.runs.iter().map(|r| run_json(domain, r)).collect::<Vec<_>>(),
    })
}

pub fn all_bounds(report: &ExperimentReport) -> Vec<BoundReport> {
    report.runs.iter().flat_map(|r| r.bounds.iter().cloned()).collect()
}

pub fn condition_table(conditions: &[ConditionResult]) -> String {
    let mut s = String::from("| condition | tasks | jumpstart | total_reward |\n|---|---|---|---|\n");
    for c in conditions {
        s.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            c.condition.name(),
            c.curves.len(),
            c.jumpstart,
            c.total_reward
        ));
    }
    s
}

pub fn summary_md(report: &ExperimentReport) -> String {
    let cfg = &report.config;
    let domain = cfg.domain;
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let mut s = format!("# Experiment summary: {}\n\n", domain.name());
    s.push_str(&format!(
        "Seeds: {}. Training tasks per seed: {}. Test tasks per seed: {}.\n\n",
        seeds.join(", "),
        cfg.train_task_count,
        cfg.test_task_count
    ));
    s.push_str(&format!(
        "Each test task is trained from scratch for {} episodes per condition, the same budget as \
         training. Jumpstart is the mean return over the first {} episodes; total_reward is the \
         summed return over all episodes. Both are averaged over test tasks.\n\n",
        cfg.episodes,
        super::pipeline::jumpstart_window(cfg.episodes)
    ));
    s.push_str("## Conditions\n\n");
    s.push_str(&condition_table(&report.conditions));
    for run in &report.runs {
        s.push_str(&format!("\n## Seed {}\n\n", run.seed));
        s.push_str(&format!(
            "{} demonstrations, alphabet size {}.\n\n",
            run.rollouts.len(),
            run.alphabet_size
        ));
        let h = &run.huffman;
        s.push_str(&format!(
            "Huffman: n = {}, l = {}, objective {}.\n\n| macro | probability |\n|---|---|\n",
            h.best_n, h.best_l, h.objective
        ));
        for m in &h.macros {
            let seq = m.actions.as_discrete().unwrap_or_default();
            s.push_str(&format!("| {} | {} |\n", symbol_name(domain, seq), h.distribution.prob(&m.id)));
        }
        let z = &run.lzw;
        s.push_str(&format!(
            "\nLZW: b_limit = {}, {} entries, objective {}.\n\n",
            z.b_limit,
            z.codebook.len(),
            z.objective
        ));
        s.push_str(&condition_table(&run.conditions));
    }
    s.push_str("\n## Bounds\n\n```\n");
    s.push_str(&format_table(&all_bounds(report)));
    s.push_str("```\n");
    s
}

fn check_writable(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").with_context(|| format!("{} is not writable", dir.display()))?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Writes every artifact of a run into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> anyhow::Result<()> {
    check_writable(dir)?;
    let domain = report.config.domain;
    fs::write(dir.join("config.toml"), report.config.to_toml())?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&report.conditions)?)?;
    fs::write(dir.join("macros.json"), serde_json::to_string_pretty(&macros_json(report))?)?;
    fs::write(dir.join("bounds.json"), serde_json::to_string_pretty(&all_bounds(report))?)?;
    let corpus: Vec<_> = report.runs.iter().flat_map(|r| r.corpus.iter().cloned()).collect();
    fs::write(dir.join("corpus.jsonl"), write_jsonl(&corpus))?;
    let demos: Vec<_> = report
        .runs
        .iter()
        .flat_map(|r| r.rollouts.iter().map(|x| x.trajectory.clone()))
        .collect();
    fs::write(dir.join("demonstrations.jsonl"), write_jsonl(&demos))?;
    let tasks: Vec<_> = report.runs.iter().flat_map(|r| r.tasks.iter().cloned()).collect();
    fs::write(dir.join("tasks.json"), serde_json::to_string_pretty(&tasks)?)?;
    for run in &report.runs {
        for (rel, grid) in &run.maps {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, grid.to_map_text())?;
        }
    }
    plot_mean_curves(
        &dir.join(format!("mean_curve_{}.svg", domain.name())),
        &format!("Mean performance per condition ({})", domain.name()),
        &report.conditions,
    )?;
    fs::write(dir.join("summary.md"), summary_md(report))?;
    Ok(())
}
