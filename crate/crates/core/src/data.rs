//! Bundled example data.

use crate::graph::Network;

/// Zachary's karate club friendship network: the standard 34-node,
/// 78-edge dataset. (Some sources quote a smaller member count for this
/// study; the edge list below is the standard published version with 34
/// nodes and 78 undirected links.)
pub const KARATE_EDGES: &str = include_str!("../data/karate.edges");

/// The karate club network as a [`Network`].
pub fn karate() -> Network {
    Network::parse_edge_list(KARATE_EDGES, 34).expect("bundled karate data is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn karate_has_34_nodes_78_edges() {
        let net = karate();
        assert_eq!(net.n(), 34);
        assert_eq!(net.edge_count(), 78);
        net.check_invariants().unwrap();
    }
}
