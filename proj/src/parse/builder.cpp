#include "rsg/builder.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rsg {

bool glob_match(std::string_view pattern, std::string_view text) {
    // iterative '*' backtracking
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

std::string module_name_of(const std::string& file_path) {
    std::string m = file_path;
    if (m.ends_with(".py")) m.resize(m.size() - 3);
    if (m.ends_with("/__init__")) m.resize(m.size() - 9);
    std::replace(m.begin(), m.end(), '/', '.');
    return m;
}

namespace {

struct FileState {
    std::string path;
    ParsedEntities parsed;
    NodeId script = -1;
    // top-level functions/classes by name
    std::map<std::string, std::vector<NodeId>> symbols;
    // import binding local name -> resolved node (entity or script), with
    // the module file path when the target is a Script
    struct ResolvedBinding {
        NodeId node = -1;
        std::string module_file;  // non-empty iff node is a Script
    };
    std::map<std::string, std::vector<ResolvedBinding>> bindings;
};

class Builder {
  public:
    BuildResult run(std::vector<SourceUnit> units) {
        std::sort(units.begin(), units.end(),
                  [](const SourceUnit& a, const SourceUnit& b) { return a.file_path < b.file_path; });
        for (SourceUnit& unit : units) {
            try {
                ParsedEntities parsed = parse_source_unit(unit);
                files_.push_back({unit.file_path, std::move(parsed), -1, {}, {}});
                line_counts_[unit.file_path] = unit.line_count;
            } catch (const ParseError& e) {
                diag(e.file_path, e.line, "parse-error", e.what());
            }
        }
        if (files_.empty())
            throw BuildError("no parseable source files", std::move(diagnostics_));

        create_nodes();
        resolve_imports();
        build_hierarchy();
        build_call_graph();
        return {std::move(graph_), std::move(diagnostics_)};
    }

  private:
    void diag(std::string file, int line, std::string category, std::string message) {
        diagnostics_.push_back({std::move(file), line, std::move(category), std::move(message)});
    }

    std::string unique_qualified(const std::string& base, int start_line) {
        if (!used_qnames_.contains(base)) {
            used_qnames_.insert(base);
            return base;
        }
        std::string alt = base + "#" + std::to_string(start_line);
        used_qnames_.insert(alt);
        return alt;
    }

    void create_nodes() {
        for (FileState& fs : files_) {
            const std::string module = module_name_of(fs.path);
            RsgNode script;
            script.kind = NodeKind::Script;
            script.name = std::filesystem::path(fs.path).stem().string();
            script.qualified_name = unique_qualified(module, 1);
            script.file_path = fs.path;
            script.span = {1, std::max(1, line_counts_[fs.path])};
            script.source_text = fs.parsed.residue_script_text;
            fs.script = graph_.add_node(std::move(script));

            struct Pending {
                int start;
                bool is_class;
                std::size_t index;
            };
            std::vector<Pending> order;
            for (std::size_t i = 0; i < fs.parsed.functions.size(); ++i)
                order.push_back({fs.parsed.functions[i].span.start_line, false, i});
            for (std::size_t i = 0; i < fs.parsed.classes.size(); ++i)
                order.push_back({fs.parsed.classes[i].span.start_line, true, i});
            std::sort(order.begin(), order.end(),
                      [](const Pending& a, const Pending& b) { return a.start < b.start; });

            for (const Pending& p : order) {
                if (!p.is_class) {
                    const EntityInfo& fn = fs.parsed.functions[p.index];
                    RsgNode node;
                    node.kind = NodeKind::Function;
                    node.name = fn.name;
                    node.qualified_name =
                        unique_qualified(module + "." + fn.name, fn.span.start_line);
                    node.file_path = fs.path;
                    node.span = fn.span;
                    node.source_text = fn.source_text;
                    node.signature = fn.signature;
                    const NodeId id = graph_.add_node(std::move(node));
                    graph_.add_edge({fs.script, id, RelationKind::Encloses});
                    fs.symbols[fn.name].push_back(id);
                } else {
                    const ClassInfo& cls = fs.parsed.classes[p.index];
                    RsgNode node;
                    node.kind = NodeKind::Class;
                    node.name = cls.name;
                    node.qualified_name =
                        unique_qualified(module + "." + cls.name, cls.span.start_line);
                    node.file_path = fs.path;
                    node.span = cls.span;
                    node.source_text = cls.source_text;
                    const NodeId class_id = graph_.add_node(std::move(node));
                    graph_.add_edge({fs.script, class_id, RelationKind::Encloses});
                    fs.symbols[cls.name].push_back(class_id);
                    class_parents_[class_id] = cls.parent_names;
                    class_file_[class_id] = &fs;
                    for (const MethodInfo& m : cls.methods) {
                        RsgNode mnode;
                        mnode.kind = NodeKind::Method;
                        mnode.name = m.name;
                        mnode.qualified_name = unique_qualified(
                            module + "." + cls.name + "." + m.name, m.span.start_line);
                        mnode.file_path = fs.path;
                        mnode.span = m.span;
                        mnode.source_text = m.source_text;
                        mnode.signature = m.signature;
                        const NodeId mid = graph_.add_node(std::move(mnode));
                        graph_.add_edge({fs.script, mid, RelationKind::Encloses});
                        graph_.add_edge({class_id, mid, RelationKind::Owns});
                    }
                }
            }
        }
        for (FileState& fs : files_) file_by_path_[fs.path] = &fs;
    }

    // Resolves a dotted module reference (possibly relative) to a file state.
    FileState* resolve_module(const std::string& module, const std::string& importer_path) {
        std::string rel = module;
        std::string base;
        if (!rel.empty() && rel.front() == '.') {
            std::size_t dots = 0;
            while (dots < rel.size() && rel[dots] == '.') ++dots;
            rel = rel.substr(dots);
            std::filesystem::path dir = std::filesystem::path(importer_path).parent_path();
            for (std::size_t i = 1; i < dots; ++i) dir = dir.parent_path();
            base = dir.generic_string();
        }
        std::string slashed = rel;
        std::replace(slashed.begin(), slashed.end(), '.', '/');
        std::vector<std::string> candidates;
        auto add = [&](std::string p) {
            if (!p.empty()) candidates.push_back(std::move(p));
        };
        const std::string prefix = base.empty() ? "" : base + "/";
        if (!slashed.empty()) {
            add(prefix + slashed + ".py");
            add(prefix + slashed + "/__init__.py");
        } else if (!base.empty()) {
            add(base + "/__init__.py");
        }
        if (base.empty() && !slashed.empty()) {
            // also try relative to the importer's own directory
            std::string dir = std::filesystem::path(importer_path).parent_path().generic_string();
            if (!dir.empty()) {
                add(dir + "/" + slashed + ".py");
                add(dir + "/" + slashed + "/__init__.py");
            }
        }
        for (const std::string& c : candidates) {
            auto it = file_by_path_.find(c);
            if (it != file_by_path_.end()) return it->second;
        }
        return nullptr;
    }

    void resolve_imports() {
        for (FileState& fs : files_) {
            for (const ImportBinding& b : fs.parsed.imports) {
                if (b.entity.empty() && !b.star) {
                    // import M [as x]
                    FileState* target = resolve_module(b.module, fs.path);
                    if (target == nullptr) {
                        diag(fs.path, b.line, "external", "import " + b.module);
                        continue;
                    }
                    graph_.add_edge({fs.script, target->script, RelationKind::Imports});
                    fs.bindings[b.local_name].push_back({target->script, target->path});
                    continue;
                }
                if (b.star) {
                    FileState* target = resolve_module(b.module, fs.path);
                    if (target == nullptr) {
                        diag(fs.path, b.line, "external", "from " + b.module + " import *");
                        continue;
                    }
                    // star imports resolve to the module's Script node only
                    graph_.add_edge({fs.script, target->script, RelationKind::Imports});
                    continue;
                }
                // from M import name: the name may itself be a submodule
                const std::string submodule =
                    b.module == "." || b.module.empty()
                        ? b.module + b.entity
                        : b.module + (b.module.back() == '.' ? "" : ".") + b.entity;
                if (FileState* as_module = resolve_module(submodule, fs.path)) {
                    graph_.add_edge({fs.script, as_module->script, RelationKind::Imports});
                    fs.bindings[b.local_name].push_back({as_module->script, as_module->path});
                    continue;
                }
                FileState* target = resolve_module(b.module, fs.path);
                if (target == nullptr) {
                    diag(fs.path, b.line, "external", "from " + b.module + " import " + b.entity);
                    continue;
                }
                auto sym = target->symbols.find(b.entity);
                if (sym == target->symbols.end() || sym->second.empty()) {
                    diag(fs.path, b.line, "unresolved",
                         "name " + b.entity + " not found in " + target->path);
                    continue;
                }
                if (sym->second.size() > 1) {
                    diag(fs.path, b.line, "ambiguous",
                         "name " + b.entity + " is defined more than once in " + target->path);
                    continue;
                }
                graph_.add_edge({fs.script, sym->second.front(), RelationKind::Imports});
                fs.bindings[b.local_name].push_back({sym->second.front(), {}});
            }
        }
    }

    bool inherits_reaches(NodeId from, NodeId to) {
        if (from == to) return true;
        std::vector<NodeId> stack{from};
        std::set<NodeId> seen{from};
        const std::vector<RelationKind> inh{RelationKind::Inherits};
        while (!stack.empty()) {
            NodeId v = stack.back();
            stack.pop_back();
            for (const NeighborRecord& nb : graph_.neighbors(v, &inh, Direction::Forward)) {
                if (nb.node == to) return true;
                if (seen.insert(nb.node).second) stack.push_back(nb.node);
            }
        }
        return false;
    }

    // Shared resolution chain: same-file symbols first, then import bindings.
    // `want_class` selects which node kinds are acceptable.
    NodeId resolve_name(FileState& fs, const std::string& name, bool want_class,
                        int line, const char* what) {
        auto acceptable = [&](NodeId id) {
            const NodeKind k = graph_.node(id).kind;
            return want_class ? k == NodeKind::Class
                              : (k == NodeKind::Function || k == NodeKind::Method);
        };
        if (name.find('.') == std::string::npos) {
            auto sym = fs.symbols.find(name);
            if (sym != fs.symbols.end() && !sym->second.empty()) {
                std::vector<NodeId> hits;
                for (NodeId id : sym->second)
                    if (acceptable(id)) hits.push_back(id);
                if (hits.size() == 1) return hits.front();
                if (hits.size() > 1) {
                    diag(fs.path, line, "ambiguous",
                         std::string(what) + " " + name + " is defined more than once in scope");
                    return -1;
                }
                return -1;  // same-file name of the wrong kind: constructor call etc.
            }
            auto bnd = fs.bindings.find(name);
            if (bnd != fs.bindings.end()) {
                std::vector<NodeId> hits;
                for (const auto& rb : bnd->second)
                    if (rb.node >= 0 && acceptable(rb.node)) hits.push_back(rb.node);
                if (hits.size() == 1) return hits.front();
                if (hits.size() > 1) {
                    diag(fs.path, line, "ambiguous",
                         std::string(what) + " " + name + " has multiple import bindings");
                    return -1;
                }
            }
            diag(fs.path, line, "unresolved", std::string(what) + " " + name);
            return -1;
        }
        // dotted: longest import-binding prefix that targets a module
        std::string prefix = name;
        while (true) {
            const std::size_t cut = prefix.rfind('.');
            if (cut == std::string::npos) break;
            prefix.resize(cut);
            auto bnd = fs.bindings.find(prefix);
            if (bnd == fs.bindings.end()) continue;
            const std::string remainder = name.substr(prefix.size() + 1);
            if (remainder.find('.') != std::string::npos) break;  // attribute chains: give up
            for (const auto& rb : bnd->second) {
                if (rb.module_file.empty()) continue;
                FileState* mod = file_by_path_[rb.module_file];
                auto sym = mod->symbols.find(remainder);
                if (sym == mod->symbols.end()) continue;
                std::vector<NodeId> hits;
                for (NodeId id : sym->second)
                    if (acceptable(id)) hits.push_back(id);
                if (hits.size() == 1) return hits.front();
            }
            break;
        }
        diag(fs.path, line, "unresolved", std::string(what) + " " + name);
        return -1;
    }

    void build_hierarchy() {
        for (const auto& [class_id, parents] : class_parents_) {
            FileState& fs = *class_file_[class_id];
            for (const std::string& parent : parents) {
                const NodeId parent_id = resolve_name(fs, parent, /*want_class=*/true,
                                                      graph_.node(class_id).span.start_line,
                                                      "parent class");
                if (parent_id < 0) continue;
                if (inherits_reaches(parent_id, class_id)) {
                    diag(fs.path, graph_.node(class_id).span.start_line, "cycle",
                         "dropping Inherits edge " + graph_.node(class_id).qualified_name +
                             " -> " + graph_.node(parent_id).qualified_name);
                    continue;
                }
                graph_.add_edge({class_id, parent_id, RelationKind::Inherits});
            }
        }
    }

    NodeId resolve_self_call(NodeId method_id, const std::string& name) {
        const std::vector<RelationKind> owns{RelationKind::Owns};
        const std::vector<RelationKind> inh{RelationKind::Inherits};
        auto owners = graph_.neighbors(method_id, &owns, Direction::Reverse);
        if (owners.empty()) return -1;
        // own class first, then ancestors breadth-first
        std::vector<NodeId> todo{owners.front().node};
        std::set<NodeId> seen{owners.front().node};
        std::size_t head = 0;
        while (head < todo.size()) {
            const NodeId cls = todo[head++];
            for (const NeighborRecord& m : graph_.neighbors(cls, &owns, Direction::Forward)) {
                if (graph_.node(m.node).name == name) return m.node;
            }
            for (const NeighborRecord& p : graph_.neighbors(cls, &inh, Direction::Forward)) {
                if (seen.insert(p.node).second) todo.push_back(p.node);
            }
        }
        return -1;
    }

    void build_call_graph() {
        const std::size_t node_count = graph_.node_count();
        for (std::size_t i = 0; i < node_count; ++i) {
            const RsgNode& caller = graph_.node(static_cast<NodeId>(i));
            if (caller.kind != NodeKind::Function && caller.kind != NodeKind::Method) continue;
            FileState& fs = *file_by_path_[caller.file_path];
            for (const CallSite& site :
                 extract_call_sites(caller.source_text, caller.span.start_line)) {
                if (site.callee.starts_with("self.")) {
                    if (caller.kind != NodeKind::Method) continue;
                    const std::string name = site.callee.substr(5);
                    if (name.find('.') != std::string::npos) {
                        diag(fs.path, site.line, "unresolved", "call " + site.callee);
                        continue;
                    }
                    const NodeId callee = resolve_self_call(caller.id, name);
                    if (callee < 0) {
                        diag(fs.path, site.line, "unresolved", "call " + site.callee);
                        continue;
                    }
                    graph_.add_edge({caller.id, callee, RelationKind::Invokes});
                    continue;
                }
                const NodeId callee =
                    resolve_name(fs, site.callee, /*want_class=*/false, site.line, "call");
                if (callee < 0) continue;
                graph_.add_edge({caller.id, callee, RelationKind::Invokes});
            }
        }
    }

    Rsg graph_;
    std::vector<Diagnostic> diagnostics_;
    std::vector<FileState> files_;
    std::map<std::string, FileState*> file_by_path_;
    std::map<std::string, int> line_counts_;
    std::map<NodeId, std::vector<std::string>> class_parents_;
    std::map<NodeId, FileState*> class_file_;
    std::set<std::string> used_qnames_;
};

}  // namespace

BuildResult build_rsg_from_sources(std::vector<SourceUnit> units) {
    Builder builder;
    return builder.run(std::move(units));
}

BuildResult build_rsg(const std::filesystem::path& repo_root, const BuildOptions& options) {
    namespace fs = std::filesystem;
    if (!fs::exists(repo_root))
        throw BuildError("repository root does not exist: " + repo_root.string(), {});
    std::vector<SourceUnit> units;
    for (const auto& entry : fs::recursive_directory_iterator(repo_root)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), repo_root).generic_string();
        const std::string filename = entry.path().filename().string();
        bool included = false;
        for (const std::string& g : options.include_globs)
            if (glob_match(g, rel) || glob_match(g, filename)) included = true;
        for (const std::string& g : options.exclude_globs)
            if (glob_match(g, rel)) included = false;
        if (!included) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        units.push_back(SourceUnit::from_text(rel, buf.str()));
    }
    if (units.empty()) throw BuildError("no source files under " + repo_root.string(), {});
    return build_rsg_from_sources(std::move(units));
}

void save_diagnostics(const std::vector<Diagnostic>& diagnostics,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    for (const Diagnostic& d : diagnostics) {
        nlohmann::json record = {
            {"file", d.file}, {"line", d.line}, {"category", d.category}, {"message", d.message}};
        out << record.dump() << '\n';
    }
}

std::vector<NodeId> import_universe(const Rsg& graph, const std::string& file_path) {
    std::vector<NodeId> out;
    auto script = graph.script_for_file(file_path);
    if (!script) return out;
    std::set<NodeId> uniq;
    const std::vector<RelationKind> imports{RelationKind::Imports};
    const std::vector<RelationKind> encl{RelationKind::Encloses};
    const std::vector<RelationKind> owns{RelationKind::Owns};
    for (const NeighborRecord& imp : graph.neighbors(*script, &imports, Direction::Forward)) {
        uniq.insert(imp.node);
        const NodeKind k = graph.node(imp.node).kind;
        if (k == NodeKind::Script) {
            for (const NeighborRecord& e : graph.neighbors(imp.node, &encl, Direction::Forward))
                uniq.insert(e.node);
        } else if (k == NodeKind::Class) {
            for (const NeighborRecord& m : graph.neighbors(imp.node, &owns, Direction::Forward))
                uniq.insert(m.node);
        }
    }
    out.assign(uniq.begin(), uniq.end());
    return out;
}

}  // namespace rsg
