#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rsg/graph.hpp"
#include "rsg/parser.hpp"

namespace rsg {

struct Diagnostic {
    std::string file;
    int line = 0;
    std::string category;  // parse-error | external | unresolved | ambiguous | cycle
    std::string message;
};

struct BuildOptions {
    std::vector<std::string> include_globs{"*.py"};
    std::vector<std::string> exclude_globs;
};

class BuildError : public std::runtime_error {
  public:
    BuildError(const std::string& message, std::vector<Diagnostic> diagnostics)
        : std::runtime_error(message), diagnostics(std::move(diagnostics)) {}
    std::vector<Diagnostic> diagnostics;
};

struct BuildResult {
    Rsg graph;
    std::vector<Diagnostic> diagnostics;
};

// Parses every unit, creates Script/Function/Method/Class nodes with
// Encloses/Owns edges, then resolves imports, the class hierarchy, and the
// call graph. Units are processed in sorted file-path order; the result is
// deterministic and validates cleanly.
BuildResult build_rsg_from_sources(std::vector<SourceUnit> units);

// Walks repo_root for files matching the include globs and builds the graph.
// Throws BuildError when no file parses.
BuildResult build_rsg(const std::filesystem::path& repo_root, const BuildOptions& options = {});

// One JSON record per line.
void save_diagnostics(const std::vector<Diagnostic>& diagnostics,
                      const std::filesystem::path& path);

// Simple glob: '*' matches any run (including '/'), '?' a single character.
bool glob_match(std::string_view pattern, std::string_view text);

// "pkg/util/io.py" -> "pkg.util.io"; __init__ files name their package.
std::string module_name_of(const std::string& file_path);

// Nodes a given file imports, with Script/Class targets widened to their
// enclosed entities / owned methods; used as the candidate universe filter.
std::vector<NodeId> import_universe(const Rsg& graph, const std::string& file_path);

}  // namespace rsg
