//! Edge-list ingestion: one `u v` pair per line, `#` starts a comment.

use std::path::Path;

use super::{DynamicGraph, GraphError, NodeId};

/// Parses an edge list. The node count is one past the largest id unless
/// `node_count` is given.
pub fn parse_edge_list(text: &str, node_count: Option<usize>) -> Result<DynamicGraph, GraphError> {
    let mut edges = Vec::new();
    let mut max_id = None::<NodeId>;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut next = || -> Result<NodeId, GraphError> {
            parts
                .next()
                .ok_or_else(|| GraphError::Parse { line: i + 1, msg: "expected two node ids".into() })?
                .parse()
                .map_err(|e| GraphError::Parse { line: i + 1, msg: format!("{e}") })
        };
        let (u, v) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(GraphError::Parse { line: i + 1, msg: "trailing tokens".into() });
        }
        max_id = Some(max_id.unwrap_or(0).max(u).max(v));
        edges.push((u, v));
    }
    let n = node_count.unwrap_or_else(|| max_id.map_or(1, |m| m as usize + 1));
    DynamicGraph::from_edges(n, edges, 0)
}

pub fn read_edge_list(path: &Path, node_count: Option<usize>) -> Result<DynamicGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text, node_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let g = parse_edge_list("# triangle\n0 1\n1 2 # closing\n\n2 0\n", None).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(parse_edge_list("0 1\n2\n", None), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!(parse_edge_list("0 x\n", None), Err(GraphError::Parse { line: 1, .. })));
        assert!(parse_edge_list("0 0\n", None).is_err());
    }

    #[test]
    fn explicit_node_count_allows_isolated_tail() {
        let g = parse_edge_list("0 1\n", Some(4)).unwrap();
        assert_eq!(g.node_count(), 4);
    }
}
