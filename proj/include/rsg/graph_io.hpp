#pragma once

#include <filesystem>
#include <string>

#include "rsg/graph.hpp"

namespace rsg {

inline constexpr int kGraphFormatVersion = 1;

// Versioned self-describing JSON document with `meta`, `nodes`, `edges`.
// Key ordering is lexicographic, so serialization is byte-deterministic.
std::string serialize_graph(const Rsg& graph);

// Loads a graph without enforcing edge constraints; run validate() to check.
// Throws GraphError on malformed documents or unsupported versions.
Rsg deserialize_graph(const std::string& text);

void save_graph(const Rsg& graph, const std::filesystem::path& path);
Rsg load_graph(const std::filesystem::path& path);

}  // namespace rsg
