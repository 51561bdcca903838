#include "mmgl/graph_io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mmgl/config.hpp"
#include "mmgl/errors.hpp"

namespace mmgl {

using json = nlohmann::json;

std::string graph_sidecar_path(const std::string& edge_list_path) {
  std::filesystem::path p(edge_list_path);
  p.replace_extension(".json");
  return p.string();
}

void save_graph(const LearnedGraph& graph, const std::string& edge_list_path) {
  const std::size_t n = graph.size();
  if (!graph.node_ids.empty() && graph.node_ids.size() != n) {
    throw DataError("save_graph: " + std::to_string(graph.node_ids.size()) + " ids for " +
                    std::to_string(n) + " nodes");
  }
  std::ofstream out(edge_list_path);
  if (!out) throw DataError("cannot write '" + edge_list_path + "'");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (graph.adjacency(i, j) != 0.0)
        out << i << ',' << j << ',' << format_double(graph.adjacency(i, j)) << '\n';
  if (!out) throw DataError("failed writing '" + edge_list_path + "'");

  json side;
  side["format_version"] = kGraphFormatVersion;
  if (graph.node_ids.empty()) {
    json ids = json::array();
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    side["nodes"] = ids;
  } else {
    side["nodes"] = graph.node_ids;
  }
  side["theta"] = graph.theta;
  side["method"] = graph.method;
  const std::string sidecar = graph_sidecar_path(edge_list_path);
  std::ofstream js(sidecar);
  js << side.dump(2) << '\n';
  if (!js) throw DataError("failed writing '" + sidecar + "'");
}

LearnedGraph load_graph(const std::string& edge_list_path) {
  const std::string sidecar = graph_sidecar_path(edge_list_path);
  std::ifstream js(sidecar);
  if (!js) throw DataError("cannot open graph sidecar '" + sidecar + "'");
  LearnedGraph g;
  try {
    const json side = json::parse(js);
    const int version = side.at("format_version").get<int>();
    if (version != kGraphFormatVersion) {
      throw DataError("graph sidecar '" + sidecar + "' has unsupported format_version " +
                      std::to_string(version));
    }
    g.node_ids = side.at("nodes").get<std::vector<std::string>>();
    g.theta = side.at("theta").get<double>();
    g.method = side.at("method").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError("graph sidecar '" + sidecar + "': " + e.what());
  }
  const std::size_t n = g.node_ids.size();
  g.adjacency = Matrix(n, n);

  std::ifstream in(edge_list_path);
  if (!in) throw DataError("cannot open edge list '" + edge_list_path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return ParseError(edge_list_path + ":" + std::to_string(line_no) + ": " + why);
    };
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw fail("expected node_i,node_j,weight");
    std::size_t i = 0, j = 0;
    double w = 0.0;
    const char* s = line.data();
    auto r1 = std::from_chars(s, s + c1, i);
    auto r2 = std::from_chars(s + c1 + 1, s + c2, j);
    auto r3 = std::from_chars(s + c2 + 1, s + line.size(), w);
    if (r1.ec != std::errc() || r1.ptr != s + c1 || r2.ec != std::errc() || r2.ptr != s + c2 ||
        r3.ec != std::errc() || r3.ptr != s + line.size()) {
      throw fail("malformed edge '" + line + "'");
    }
    if (i >= n || j >= n || i == j) {
      throw DataError(edge_list_path + ":" + std::to_string(line_no) + ": invalid node pair " +
                      std::to_string(i) + "," + std::to_string(j));
    }
    g.adjacency(i, j) = w;
    g.adjacency(j, i) = w;
  }
  return g;
}

}  // namespace mmgl
