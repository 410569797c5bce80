use std::fmt::Write;

use super::{PartitionTree, TreeNode};

const INDENT: &str = "        ";

fn node_name(tree: &PartitionTree, node: &TreeNode) -> String {
    let feature = &tree.names[tree.feature];
    if node.chain.is_empty() {
        return feature.clone();
    }
    let conds: Vec<String> = node
        .chain
        .iter()
        .map(|c| c.display(&tree.names).to_string())
        .collect();
    format!("{feature} | {}", conds.join(" and "))
}

/// Text summary of a tree: every node with its heterogeneity, size and
/// weight, then the weighted heterogeneity per level.
pub fn render_report(tree: &PartitionTree) -> String {
    let mut out = String::new();
    let s = tree.feature;
    writeln!(out, "Feature {s} - Full partition tree:").unwrap();
    for node in &tree.nodes {
        writeln!(
            out,
            "{}Node id: {}, name: {}, heter: {:.2} || nof_instances: {:5} || weight: {:.2}",
            INDENT.repeat(node.depth),
            node.idx,
            node_name(tree, node),
            node.heterogeneity,
            node.nof_instances,
            node.weight
        )
        .unwrap();
    }
    writeln!(out, "{}", "-".repeat(50)).unwrap();
    writeln!(out, "Feature {s} - Statistics per tree level:").unwrap();
    for stat in &tree.level_stats {
        if stat.level == 0 {
            writeln!(out, "Level 0, heter: {:.2}", stat.heterogeneity).unwrap();
        } else {
            writeln!(
                out,
                "{}Level {}, heter: {:.2} || heter drop: {:.2} ({:.2}%)",
                INDENT.repeat(stat.level),
                stat.level,
                stat.heterogeneity,
                stat.drop,
                stat.pct_drop
            )
            .unwrap();
        }
    }
    out
}
