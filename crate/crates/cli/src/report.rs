//! Markdown tables over a run manifest.

use std::fmt::Write as _;

use ambicomp::pipeline::Variant;

use crate::experiment::{AggregateRow, RunManifest, Stat, CHANCE, LDL, LS, LS_OURS, MC, TS};

const OURS: &str = "STD+All";

fn cell(s: Option<Stat>) -> String {
    match s {
        Some(s) => format!("{:.4} ± {:.4}", s.mean, s.std),
        None => "n/a".into(),
    }
}

fn metric_rows(out: &mut String, m: &RunManifest, rows: &[(&str, &str)]) {
    out.push_str("| Method | JSD ↓ | KL ↓ | Acc ↑ |\n|---|---|---|---|\n");
    for (label, key) in rows {
        if let Some(r) = m.metrics.aggregate.get(*key) {
            let _ = writeln!(
                out,
                "| {label} | {} | {} | {} |",
                cell(r.jsd),
                cell(r.kl),
                cell(r.acc)
            );
        }
    }
}

fn row<'a>(m: &'a RunManifest, key: &str) -> Option<&'a AggregateRow> {
    m.metrics.aggregate.get(key)
}

pub fn render(m: &RunManifest) -> String {
    let mut out = String::new();
    let seeds: Vec<String> = m.metrics.seeds.iter().map(|s| s.seed.to_string()).collect();
    let _ = writeln!(
        out,
        "# Run report\n\nConfig hash `{}`; seeds {}; cells are mean ± sample std over seeds.\n",
        m.metrics.config_hash,
        seeds.join(", ")
    );

    out.push_str("## Main comparison\n\nTrained with single gold labels:\n\n");
    metric_rows(
        &mut out,
        m,
        &[
            (CHANCE, CHANCE),
            ("STD", "STD"),
            (LS, LS),
            (MC, MC),
            ("Ours", OURS),
        ],
    );
    out.push_str("\nUsing distribution labels (extra resources):\n\n");
    metric_rows(&mut out, m, &[(TS, TS), (LDL, LDL)]);

    out.push_str("\n## Ablation\n\n");
    let ablation: Vec<(&str, &str)> = Variant::ALL
        .iter()
        .map(|v| match v {
            Variant::Std => ("STD", v.name()),
            Variant::Pruning => ("+ Pruning", v.name()),
            Variant::Kd => ("+ KD", v.name()),
            Variant::All => ("+ All", v.name()),
        })
        .collect();
    metric_rows(&mut out, m, &ablation);

    out.push_str("\n## Diff on incorrect predictions\n\n| Method | Diff |\n|---|---|\n");
    for (label, key) in [
        ("STD", "STD"),
        ("STD+Pruning", "STD+Pruning"),
        ("Ours", OURS),
    ] {
        if let Some(r) = row(m, key) {
            let _ = writeln!(out, "| {label} | {} |", cell(r.diff));
        }
    }

    out.push_str("\n## Label smoothing\n\n");
    metric_rows(&mut out, m, &[(LS, LS), (LS_OURS, LS_OURS)]);

    out.push_str("\n## Decisions\n\n| Seed | Target | Source | λ | Fallback | LS target | LS source | LS λ | T |\n|---|---|---|---|---|---|---|---|---|\n");
    for s in &m.metrics.seeds {
        let d = &s.decisions;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            s.seed,
            d.target_layer,
            opt(d.kd.as_ref().map(|k| k.source_layer.to_string())),
            opt(d.kd.as_ref().map(|k| format!("{:.1}", k.lambda))),
            d.kd.as_ref().is_some_and(|k| k.fallback),
            opt(d.ls_target_layer.map(|t| t.to_string())),
            opt(d.ls_kd.as_ref().map(|k| k.source_layer.to_string())),
            opt(d.ls_kd.as_ref().map(|k| format!("{:.1}", k.lambda))),
            opt(d.temperature.map(|t| format!("{t:.3}"))),
        );
    }

    out.push_str("\n## Compression\n\n| Seed | Original params | Pruned params | Removed | Original latency (ms) | Pruned latency (ms) |\n|---|---|---|---|---|---|\n");
    for s in &m.metrics.seeds {
        let c = &s.compression;
        let lat = m.timings.iter().find(|t| t.seed == s.seed);
        let fmt = |l: Option<&ambicomp::metrics::LatencyStats>| {
            l.map_or("-".to_string(), |l| {
                format!("{:.3} ± {:.3}", l.mean, l.stddev)
            })
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.1}% | {} | {} |",
            s.seed,
            c.original_params,
            c.pruned_params,
            100.0 * (c.original_params - c.pruned_params) as f64 / c.original_params as f64,
            fmt(lat.map(|t| &t.latency_original)),
            fmt(lat.map(|t| &t.latency_pruned)),
        );
    }
    let notes: Vec<String> = m
        .metrics
        .seeds
        .iter()
        .flat_map(|s| {
            s.notes
                .iter()
                .map(move |n| format!("- seed {}: {n}", s.seed))
        })
        .collect();
    if !notes.is_empty() {
        out.push_str("\n## Notes\n\n");
        out.push_str(&notes.join("\n"));
        out.push('\n');
    }
    out
}
