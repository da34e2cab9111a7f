#include "rsg/parser.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>

namespace rsg {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    lines.push_back(cur);
    return lines;
}

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

int indent_of(const std::string& line) {
    int col = 0;
    for (char c : line) {
        if (c == ' ')
            ++col;
        else if (c == '\t')
            col += 8 - (col % 8);
        else
            break;
    }
    return col;
}

bool is_blank(const std::string& masked_line) {
    return std::all_of(masked_line.begin(), masked_line.end(),
                       [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string collapse_ws(const std::string& s) {
    std::string out;
    bool in_ws = false;
    for (char c : strip(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out.push_back(' ');
            in_ws = false;
            out.push_back(c);
        }
    }
    return out;
}

bool is_keyword(const std::string& name) {
    static const std::set<std::string> kw{
        "False", "None",     "True",  "and",    "as",     "assert", "async",  "await",
        "break", "class",    "def",   "del",    "elif",   "else",   "except", "finally",
        "for",   "from",     "global", "if",    "import", "in",     "is",     "lambda",
        "match", "nonlocal", "not",   "or",     "pass",   "print",  "raise",  "return",
        "try",   "while",    "with",  "yield"};
    return kw.contains(name);
}

struct HeaderInfo {
    bool is_class = false;
    std::string name;
    std::string paren_text;  // between the outermost parens, empty if none
    int end_line = 0;        // 0-based index of the line holding the ':'
    bool inline_body = false;
};

}  // namespace

SourceUnit SourceUnit::from_text(std::string file_path, std::string raw_text) {
    SourceUnit u;
    u.file_path = std::move(file_path);
    u.line_count = static_cast<int>(std::count(raw_text.begin(), raw_text.end(), '\n')) + 1;
    u.raw_text = std::move(raw_text);
    return u;
}

namespace {

std::string mask_code_impl(const std::string& text, int* error_line) {
    std::string out = text;
    enum class State { Code, Comment, Str };
    State state = State::Code;
    char quote = 0;
    bool triple = false;
    int line = 1;
    int str_open_line = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (c == '\n') ++line;
        if (state == State::Code) {
            if (c == '#') {
                state = State::Comment;
                out[i] = ' ';
            } else if (c == '\'' || c == '"') {
                quote = c;
                triple = (i + 2 < n && text[i + 1] == c && text[i + 2] == c);
                if (triple) i += 2;
                state = State::Str;
                str_open_line = line;
            }
            ++i;
        } else if (state == State::Comment) {
            if (c == '\n')
                state = State::Code;
            else
                out[i] = ' ';
            ++i;
        } else {  // Str
            if (c == '\\' && i + 1 < n) {
                out[i] = ' ';
                if (text[i + 1] == '\n') ++line;
                else out[i + 1] = ' ';
                i += 2;
            } else if (!triple && c == quote) {
                state = State::Code;
                ++i;
            } else if (triple && c == quote && i + 2 < n && text[i + 1] == quote &&
                       text[i + 2] == quote) {
                state = State::Code;
                i += 3;
            } else if (!triple && c == '\n') {
                // newline inside a single-quoted string: syntax error
                if (error_line != nullptr && *error_line == 0) *error_line = line - 1;
                state = State::Code;
                ++i;
            } else {
                if (c != '\n') out[i] = ' ';
                ++i;
            }
        }
    }
    if (state == State::Str && error_line != nullptr && *error_line == 0)
        *error_line = str_open_line;
    return out;
}

}  // namespace

std::string mask_code(const std::string& text) { return mask_code_impl(text, nullptr); }

namespace {

// Parses a def/class header starting at line `start` of the masked lines.
// Returns nullopt when the line is not a header. Throws ParseError when the
// header never reaches its ':'.
std::optional<HeaderInfo> parse_header(const std::vector<std::string>& masked, std::size_t start,
                                       const std::string& file) {
    std::string head = strip(masked[start]);
    HeaderInfo info;
    if (head.starts_with("async ")) head = strip(head.substr(6));
    if (head.starts_with("def ") || head.starts_with("def(")) {
        info.is_class = false;
        head = head.substr(3);
    } else if (head.starts_with("class ") || head.starts_with("class(")) {
        info.is_class = true;
        head = head.substr(5);
    } else {
        return std::nullopt;
    }
    head = strip(head);
    std::size_t p = 0;
    while (p < head.size() && is_ident_char(head[p])) ++p;
    if (p == 0) return std::nullopt;
    info.name = head.substr(0, p);

    // Scan forward for the ':' that closes the header, capturing the first
    // top-level paren group (params / base list) and tracking bracket depth.
    int depth = 0;
    bool capturing = false;
    bool captured = false;
    std::string parens;
    for (std::size_t li = start; li < masked.size(); ++li) {
        const std::string& line = masked[li];
        std::size_t ci = 0;
        if (li == start) {
            const std::size_t kw = line.find(info.is_class ? "class" : "def");
            const std::size_t name_pos = line.find(info.name, kw == std::string::npos ? 0 : kw);
            ci = (name_pos == std::string::npos) ? 0 : name_pos + info.name.size();
        }
        for (; ci < line.size(); ++ci) {
            const char c = line[ci];
            if (c == '(' || c == '[' || c == '{') {
                if (c == '(' && depth == 0 && !captured) {
                    capturing = true;
                    ++depth;
                    continue;
                }
                if (capturing) parens.push_back(c);
                ++depth;
                continue;
            }
            if (c == ')' || c == ']' || c == '}') {
                --depth;
                if (c == ')' && depth == 0 && capturing) {
                    capturing = false;
                    captured = true;
                    continue;
                }
                if (capturing) parens.push_back(c);
                continue;
            }
            if (depth == 0 && c == ':') {
                info.paren_text = parens;
                info.end_line = static_cast<int>(li);
                info.inline_body = !is_blank(line.substr(ci + 1));
                return info;
            }
            if (capturing) parens.push_back(c);
        }
    }
    throw ParseError(file, static_cast<int>(start) + 1, "unterminated def/class header");
}

std::vector<std::string> parse_parent_names(const std::string& paren_text) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    auto flush = [&] {
        std::string name = strip(cur);
        cur.clear();
        if (name.empty() || name.front() == '*' || name.find('=') != std::string::npos) return;
        for (char c : name)
            if (!is_ident_char(c) && c != '.') return;
        out.push_back(name);
    };
    for (char c : paren_text) {
        if (c == '(' || c == '[' || c == '{') ++depth;
        if (c == ')' || c == ']' || c == '}') --depth;
        if (c == ',' && depth == 0) {
            flush();
            continue;
        }
        cur.push_back(c);
    }
    flush();
    return out;
}

// 0-based index of the last body line of an entity whose header ends at
// header_end with the given indent.
std::size_t body_end(const std::vector<std::string>& masked, std::size_t header_end,
                     int header_indent, bool inline_body) {
    if (inline_body) return header_end;
    std::size_t last = header_end;
    for (std::size_t li = header_end + 1; li < masked.size(); ++li) {
        if (is_blank(masked[li])) continue;
        if (indent_of(masked[li]) <= header_indent) break;
        last = li;
    }
    return last;
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t first,
                       std::size_t last) {
    std::string out;
    for (std::size_t i = first; i <= last; ++i) {
        if (i > first) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

// First decorator line of a decorator stack directly above `header_line`.
std::size_t decorator_start(const std::vector<std::string>& masked, std::size_t header_line) {
    std::size_t first = header_line;
    while (first > 0) {
        const std::string prev = strip(masked[first - 1]);
        if (!prev.empty() && prev.front() == '@')
            --first;
        else
            break;
    }
    return first;
}

void parse_import_statement(const std::string& stmt, int line, const std::string& file,
                            std::vector<ImportBinding>& out) {
    std::istringstream in(stmt);
    std::string tok;
    in >> tok;
    auto read_dotted = [&](std::istringstream& s) {
        std::string name;
        s >> name;
        return name;
    };
    if (tok == "import") {
        // import a.b [as x], c [as y]
        std::string rest;
        std::getline(in, rest);
        std::istringstream parts(rest);
        std::string item;
        std::string buffer;
        std::vector<std::string> items;
        for (char c : rest) {
            if (c == ',') {
                items.push_back(buffer);
                buffer.clear();
            } else
                buffer.push_back(c);
        }
        items.push_back(buffer);
        for (std::string& it : items) {
            std::istringstream is(strip(it));
            std::string module = read_dotted(is);
            if (module.empty()) throw ParseError(file, line, "malformed import statement");
            std::string as_kw, alias;
            ImportBinding b;
            b.module = module;
            b.local_name = module;
            b.line = line;
            if (is >> as_kw >> alias && as_kw == "as") b.local_name = alias;
            out.push_back(std::move(b));
        }
        (void)item;
    } else if (tok == "from") {
        std::string module = read_dotted(in);
        std::string import_kw;
        in >> import_kw;
        if (module.empty() || import_kw != "import")
            throw ParseError(file, line, "malformed from-import statement");
        std::string rest;
        std::getline(in, rest);
        // strip parens from multi-line joined statements
        std::erase(rest, '(');
        std::erase(rest, ')');
        std::string buffer;
        std::vector<std::string> items;
        for (char c : rest) {
            if (c == ',') {
                items.push_back(buffer);
                buffer.clear();
            } else
                buffer.push_back(c);
        }
        items.push_back(buffer);
        for (std::string& it : items) {
            std::string entry = strip(it);
            if (entry.empty()) continue;
            ImportBinding b;
            b.module = module;
            b.line = line;
            if (entry == "*") {
                b.star = true;
                out.push_back(std::move(b));
                continue;
            }
            std::istringstream is(entry);
            std::string name, as_kw, alias;
            is >> name;
            b.entity = name;
            b.local_name = name;
            if (is >> as_kw >> alias && as_kw == "as") b.local_name = alias;
            out.push_back(std::move(b));
        }
    }
}

}  // namespace

ParsedEntities parse_source_unit(const SourceUnit& unit) {
    int mask_error = 0;
    const std::string masked_text = mask_code_impl(unit.raw_text, &mask_error);
    if (mask_error != 0)
        throw ParseError(unit.file_path, mask_error, "unterminated string literal");
    const std::vector<std::string> raw = split_lines(unit.raw_text);
    const std::vector<std::string> masked = split_lines(masked_text);
    const std::size_t n = masked.size();

    ParsedEntities parsed;
    std::vector<bool> covered(n, false);

    std::size_t i = 0;
    while (i < n) {
        if (is_blank(masked[i])) {
            ++i;
            continue;
        }
        std::size_t header_line = i;
        const std::string first = strip(masked[i]);
        if (!first.empty() && first.front() == '@') {
            // decorator stack: look ahead for its header
            std::size_t j = i;
            while (j < n && !strip(masked[j]).empty() && strip(masked[j]).front() == '@') ++j;
            if (j >= n || !parse_header(masked, j, unit.file_path).has_value()) {
                ++i;
                continue;
            }
            header_line = j;
        }
        auto header = parse_header(masked, header_line, unit.file_path);
        if (!header) {
            ++i;
            continue;
        }
        const int h_indent = indent_of(masked[header_line]);
        const std::size_t deco_first = decorator_start(masked, header_line);
        const std::size_t end =
            body_end(masked, static_cast<std::size_t>(header->end_line), h_indent,
                     header->inline_body);

        if (header->is_class) {
            ClassInfo cls;
            cls.name = header->name;
            cls.span = {static_cast<int>(deco_first) + 1, static_cast<int>(end) + 1};
            cls.source_text = join_lines(raw, deco_first, end);
            cls.parent_names = parse_parent_names(header->paren_text);

            // methods: defs at the first body indent level
            std::size_t bi = static_cast<std::size_t>(header->end_line) + 1;
            int body_indent = -1;
            for (std::size_t li = bi; li <= end && li < n; ++li) {
                if (is_blank(masked[li])) continue;
                if (body_indent < 0) body_indent = indent_of(masked[li]);
                if (indent_of(masked[li]) != body_indent) continue;
                std::size_t m_header = li;
                const std::string mfirst = strip(masked[li]);
                if (!mfirst.empty() && mfirst.front() == '@') continue;  // handled via its def line
                auto mh = parse_header(masked, m_header, unit.file_path);
                if (!mh || mh->is_class) continue;
                const std::size_t m_deco = decorator_start(masked, m_header);
                const std::size_t m_end = body_end(
                    masked, static_cast<std::size_t>(mh->end_line), body_indent, mh->inline_body);
                MethodInfo method;
                method.name = mh->name;
                method.span = {static_cast<int>(m_deco) + 1, static_cast<int>(m_end) + 1};
                method.source_text = join_lines(raw, m_deco, m_end);
                method.signature = mh->name + "(" + collapse_ws(mh->paren_text) + ")";
                cls.methods.push_back(std::move(method));
                li = m_end;
            }
            parsed.classes.push_back(std::move(cls));
        } else {
            EntityInfo fn;
            fn.name = header->name;
            fn.span = {static_cast<int>(deco_first) + 1, static_cast<int>(end) + 1};
            fn.source_text = join_lines(raw, deco_first, end);
            fn.signature = header->name + "(" + collapse_ws(header->paren_text) + ")";
            parsed.functions.push_back(std::move(fn));
        }
        for (std::size_t li = deco_first; li <= end && li < n; ++li) covered[li] = true;
        i = end + 1;
    }

    // residue: everything not covered by an extracted entity span
    for (std::size_t li = 0; li < n; ++li) {
        if (covered[li]) continue;
        parsed.residue_lines.emplace_back(static_cast<int>(li) + 1, raw[li]);
    }
    {
        std::string text;
        for (std::size_t k = 0; k < parsed.residue_lines.size(); ++k) {
            if (k > 0) text.push_back('\n');
            text += parsed.residue_lines[k].second;
        }
        parsed.residue_script_text = std::move(text);
    }

    // imports: scan uncovered masked lines, joining bracket continuations
    for (std::size_t li = 0; li < n; ++li) {
        if (covered[li]) continue;
        std::string head = strip(masked[li]);
        if (!head.starts_with("import ") && !head.starts_with("from ")) continue;
        std::string stmt = masked[li];
        std::size_t lj = li;
        auto open_brackets = [](const std::string& s) {
            long d = 0;
            for (char c : s) {
                if (c == '(' || c == '[') ++d;
                if (c == ')' || c == ']') --d;
            }
            return d;
        };
        while ((open_brackets(stmt) > 0 || (!stmt.empty() && strip(stmt).ends_with("\\"))) &&
               lj + 1 < n) {
            if (!stmt.empty() && strip(stmt).ends_with("\\")) {
                std::string s = strip(stmt);
                stmt = s.substr(0, s.size() - 1);
            }
            ++lj;
            stmt += " " + masked[lj];
        }
        parse_import_statement(strip(stmt), static_cast<int>(li) + 1, unit.file_path,
                               parsed.imports);
        li = lj;
    }

    return parsed;
}

std::vector<CallSite> extract_call_sites(const std::string& source_text, int first_line) {
    const std::string masked = mask_code(source_text);
    std::vector<CallSite> out;
    int line = first_line;
    std::string prev_ident;
    std::size_t i = 0;
    const std::size_t n = masked.size();
    while (i < n) {
        const char c = masked[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (is_ident_start(c) && (i == 0 || (!is_ident_char(masked[i - 1]) && masked[i - 1] != '.'))) {
            std::size_t j = i;
            while (j < n && (is_ident_char(masked[j]) || masked[j] == '.')) ++j;
            std::string chain = masked.substr(i, j - i);
            while (!chain.empty() && chain.back() == '.') chain.pop_back();
            std::size_t k = j;
            while (k < n && (masked[k] == ' ' || masked[k] == '\t')) ++k;
            const bool called = (k < n && masked[k] == '(');
            const std::string last_segment = chain.substr(chain.rfind('.') + 1);
            if (called && !is_keyword(chain) && !is_keyword(last_segment) &&
                prev_ident != "def" && prev_ident != "class") {
                out.push_back({chain, line});
            }
            prev_ident = chain;
            i = j;
            continue;
        }
        if (!std::isspace(static_cast<unsigned char>(c))) prev_ident.clear();
        ++i;
    }
    return out;
}

}  // namespace rsg
