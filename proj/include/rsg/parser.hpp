#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rsg/graph.hpp"

namespace rsg {

struct SourceUnit {
    std::string file_path;  // repo-relative, forward slashes
    std::string raw_text;
    int line_count = 0;

    static SourceUnit from_text(std::string file_path, std::string raw_text);
};

class ParseError : public std::runtime_error {
  public:
    ParseError(std::string file, int line, const std::string& message)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
          file_path(std::move(file)),
          line(line) {}
    std::string file_path;
    int line;
};

struct EntityInfo {
    std::string name;
    Span span;  // includes contiguous decorator lines above the header
    std::string source_text;
    std::string signature;  // "name(params)"
};

struct MethodInfo : EntityInfo {};

struct ClassInfo : EntityInfo {
    std::vector<std::string> parent_names;  // as declared, possibly dotted
    std::vector<MethodInfo> methods;
};

struct ImportBinding {
    std::string local_name;  // name visible in the file (alias-aware)
    std::string module;      // dotted module path; leading dots = relative
    std::string entity;      // empty for module imports
    bool star = false;
    int line = 1;
};

struct ParsedEntities {
    std::vector<EntityInfo> functions;
    std::vector<ClassInfo> classes;
    std::vector<ImportBinding> imports;
    // Surviving (line number, raw text) pairs and their concatenation.
    std::vector<std::pair<int, std::string>> residue_lines;
    std::string residue_script_text;
};

// Extracts functions, classes, methods, imports, and the residue script
// text. Entities nested inside another extracted entity's span stay in the
// enclosing entity's body; entity spans never overlap except methods inside
// their class.
ParsedEntities parse_source_unit(const SourceUnit& unit);

// Replaces comment text and string-literal contents with spaces so the
// structural scanners never match inside them. Line count is preserved.
std::string mask_code(const std::string& text);

struct CallSite {
    std::string callee;  // possibly dotted; "self.m" keeps the prefix
    int line = 1;
};

// Call expressions found in (masked) entity source text.
std::vector<CallSite> extract_call_sites(const std::string& source_text, int first_line);

}  // namespace rsg
