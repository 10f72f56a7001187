//! Human-readable tables and the JSON evaluation report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crowdnav_core::demo::{DemoSource, Demonstration};
use crowdnav_core::nav::{EpisodeResult, EvaluationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub checkpoint: String,
    pub seed: u64,
    pub summary: EvaluationReport,
    pub episodes: Vec<EpisodeResult>,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn evaluation_table(report: &EvaluationReport) -> String {
    let rows = [
        ("episodes", report.episodes.to_string()),
        ("success rate", format!("{:.3}", report.success_rate)),
        ("collision rate", format!("{:.3}", report.collision_rate)),
        ("timeout rate", format!("{:.3}", report.timeout_rate)),
        ("mean navigation time [s]", opt(report.mean_navigation_time, 2)),
        ("mean path length [m]", format!("{:.2}", report.mean_path_length)),
        ("mean invasion rate [1/m]", format!("{:.4}", report.mean_invasion_rate)),
        ("mean SVCR [1/m]", format!("{:.4}", report.mean_svcr)),
        ("pairwise accuracy", opt(report.pairwise_accuracy, 3)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v:>10}");
    }
    out
}

fn source_label(source: &DemoSource) -> String {
    match source {
        DemoSource::ScriptedExpert { p_noise, .. } => format!("p={p_noise}"),
        DemoSource::Teleop => "teleop".into(),
        DemoSource::Replay => "replay".into(),
        DemoSource::Synthetic => "synthetic".into(),
    }
}

/// Demonstrations sorted by SVCR, best (lowest) first; ties keep id order.
pub fn rank_table(demos: &[Demonstration]) -> String {
    let mut order: Vec<&Demonstration> = demos.iter().collect();
    order.sort_by(|a, b| a.svcr.total_cmp(&b.svcr).then(a.id.cmp(&b.id)));
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:>6}  {:<9}  {:<8}  {:>6}  {:>9}  {:>5}  {:>8}", "rank", "id", "source", "outcome", "steps", "length[m]", "n_s", "svcr");
    for (rank, d) in order.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:>6}  {:<9}  {:<8}  {:>6}  {:>9.3}  {:>5}  {:>8.4}",
            rank + 1,
            d.id,
            source_label(&d.source),
            format!("{:?}", d.outcome).to_lowercase(),
            d.robot_states.len(),
            d.trajectory_length,
            d.n_s,
            d.svcr
        );
    }
    out
}
