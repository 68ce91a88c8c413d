//! Report emission: price-group and line-flow CSVs, the saturated-cut
//! certificate listing, and the DOT graph export.

use std::fmt::Write as _;

use gridnash_core::analysis::{BottleneckReport, LineFlow, PriceGroupReport};

use crate::config::LoadedGame;

/// Price-group table, one row per group, descending price. The `market_ids`
/// cell holds a comma-separated id list (quoted by the CSV writer).
pub fn price_groups_csv(report: &PriceGroupReport, market_ids: &[u64]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["group_price_eur_mwh", "market_ids"])
        .expect("csv header");
    for group in &report.groups {
        let ids = group
            .markets
            .iter()
            .map(|&j| market_ids[j].to_string())
            .collect::<Vec<_>>()
            .join(",");
        writer
            .write_record([group.price.to_string(), ids])
            .expect("csv row");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Per-line flow table in the order the lines were configured.
pub fn line_flows_csv(records: &[LineFlow], market_ids: &[u64]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "line_id",
            "from",
            "to",
            "flow_mw",
            "capacity_mw",
            "utilization",
            "saturated",
        ])
        .expect("csv header");
    for record in records {
        writer
            .write_record([
                record.line.to_string(),
                market_ids[record.tail].to_string(),
                market_ids[record.head].to_string(),
                record.flow.to_string(),
                record.capacity.to_string(),
                record.utilization.to_string(),
                record.saturated.to_string(),
            ])
            .expect("csv row");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Human-readable certificate listing for the bottleneck report.
pub fn certificates_text(report: &BottleneckReport, loaded: &LoadedGame) -> String {
    let id = |j: usize| loaded.market_ids[j];
    let mut out = String::new();
    let _ = writeln!(out, "mean price: {}", trim(report.price_groups.mean_price));
    let _ = writeln!(out, "price groups: {}", report.price_groups.group_count());
    for group in &report.price_groups.groups {
        let ids: Vec<String> = group.markets.iter().map(|&j| id(j).to_string()).collect();
        let _ = writeln!(
            out,
            "  {} : markets [{}]",
            trim(group.price),
            ids.join(", ")
        );
    }

    let _ = writeln!(
        out,
        "pairs straddling the mean: {}",
        report.straddling.len()
    );
    for pair in &report.straddling {
        match &pair.certificate {
            Some(cert) => {
                let cut: Vec<String> = cert.cut_set.iter().map(|&j| id(j).to_string()).collect();
                let lines = loaded.game.graph().lines();
                let crossing: Vec<String> = cert
                    .crossing
                    .iter()
                    .map(|c| {
                        let line = lines[c.line];
                        format!(
                            "line {} ({} -> {}, {})",
                            c.line,
                            id(line.tail),
                            id(line.head),
                            if c.leaves_cut {
                                "saturated outward"
                            } else {
                                "saturated inward"
                            }
                        )
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    "  market {} ({}) < {} < market {} ({}): cut U = [{}], crossing: {}",
                    id(pair.low),
                    trim(pair.low_price),
                    trim(report.price_groups.mean_price),
                    id(pair.high),
                    trim(pair.high_price),
                    cut.join(", "),
                    crossing.join("; "),
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "  market {} ({}) < {} < market {} ({}): NO SATURATED CUT FOUND",
                    id(pair.low),
                    trim(pair.low_price),
                    trim(report.price_groups.mean_price),
                    id(pair.high),
                    trim(pair.high_price),
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "discordant pairs checked: {} (all certified: {})",
        report.discordant.len(),
        report.discordant_passed
    );
    let _ = writeln!(
        out,
        "result: {}",
        if report.passed { "PASS" } else { "FAIL" }
    );
    out
}

const GROUP_PALETTE: [&str; 12] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
    "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
];

/// DOT digraph of the solved network: one node per market labeled with its id
/// and price, filled by price-group rank; arrows follow the sign of the flow,
/// labeled `flow/capacity`, with saturated lines drawn bold.
pub fn dot_export(
    loaded: &LoadedGame,
    prices: &[f64],
    flows: &[f64],
    groups: &PriceGroupReport,
    sat_tol: f64,
) -> String {
    let graph = loaded.game.graph();
    let mut group_of = vec![0usize; graph.markets()];
    for (rank, group) in groups.groups.iter().enumerate() {
        for &j in &group.markets {
            group_of[j] = rank;
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "digraph equilibrium {{");
    let _ = writeln!(out, "  rankdir=LR;");
    let _ = writeln!(
        out,
        "  node [shape=ellipse, style=filled, fontname=\"Helvetica\"];"
    );
    for j in 0..graph.markets() {
        let color = GROUP_PALETTE[group_of[j] % GROUP_PALETTE.len()];
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\\np={}\", fillcolor=\"{}\"];",
            loaded.market_ids[j],
            loaded.market_ids[j],
            trim(prices[j]),
            color
        );
    }
    for (k, line) in graph.lines().iter().enumerate() {
        // Arrow in the actual transport direction.
        let (src, dst) = if flows[k] >= 0.0 {
            (line.tail, line.head)
        } else {
            (line.head, line.tail)
        };
        let saturated = line.capacity - flows[k].abs() <= sat_tol;
        let style = if saturated {
            ", penwidth=2.8, style=bold"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}/{}\"{}];",
            loaded.market_ids[src],
            loaded.market_ids[dst],
            trim(flows[k].abs()),
            trim(line.capacity),
            style
        );
    }
    let _ = writeln!(out, "}}");
    out
}

/// Fixed-precision label formatting: four decimals with trailing zeros
/// trimmed, so `84.0` prints as `84` and `62.4` stays `62.4`.
fn trim(x: f64) -> String {
    let mut s = format!("{x:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}
