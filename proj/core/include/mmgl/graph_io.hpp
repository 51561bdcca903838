#pragma once

// Edge-list persistence for patient graphs.
//
// `<name>.csv` holds one `node_i,node_j,weight` line per undirected edge with
// i < j (row indices, no header). The sidecar `<name>.json` records
// {"format_version": 1, "nodes": [ids in row order], "theta": t, "method": m}.

#include <string>

#include "mmgl/agl.hpp"

namespace mmgl {

inline constexpr int kGraphFormatVersion = 1;

/// Path of the JSON sidecar belonging to an edge-list path.
std::string graph_sidecar_path(const std::string& edge_list_path);

/// Writes the upper triangle of the adjacency. Weights are written in
/// shortest round-trip form, so a reload reproduces them exactly.
void save_graph(const LearnedGraph& graph, const std::string& edge_list_path);

/// Reads an edge list and its sidecar back into a symmetric adjacency.
/// Throws ParseError on malformed lines and DataError on out-of-range nodes.
LearnedGraph load_graph(const std::string& edge_list_path);

}  // namespace mmgl
