#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "megacurate/config.hpp"

namespace megacurate {

namespace {

struct Cursor {
    std::string_view line;
    std::size_t pos = 0;
    const std::string* source;
    std::size_t line_no;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(*source + ":" + std::to_string(line_no) + ": " + msg);
    }
    bool done() const { return pos >= line.size(); }
    char peek() const { return line[pos]; }
    void skip_ws() {
        while (!done() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    }
};

bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_bare_key(Cursor& c) {
    std::size_t start = c.pos;
    while (!c.done() && is_bare_key_char(c.peek())) ++c.pos;
    if (c.pos == start) c.fail("expected a key");
    return std::string(c.line.substr(start, c.pos - start));
}

std::string parse_quoted(Cursor& c) {
    ++c.pos; // opening quote
    std::string out;
    while (true) {
        if (c.done()) c.fail("unterminated string");
        char ch = c.line[c.pos++];
        if (ch == '"') return out;
        if (ch != '\\') {
            out.push_back(ch);
            continue;
        }
        if (c.done()) c.fail("dangling escape");
        char esc = c.line[c.pos++];
        switch (esc) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default: c.fail(std::string("unsupported escape \\") + esc);
        }
    }
}

TomlValue parse_scalar_or_array(Cursor& c);

TomlValue parse_number_or_bool(Cursor& c) {
    std::size_t start = c.pos;
    while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '#' &&
           c.peek() != ' ' && c.peek() != '\t')
        ++c.pos;
    std::string_view token = c.line.substr(start, c.pos - start);
    if (token.empty()) c.fail("expected a value");

    TomlValue v;
    if (token == "true" || token == "false") {
        v.kind = TomlValue::Kind::Boolean;
        v.boolean = token == "true";
        return v;
    }
    const bool looks_float = token.find_first_of(".eE") != std::string_view::npos &&
                             !(token.size() > 1 && token[0] == '0' && token[1] == 'x');
    if (!looks_float) {
        i64 parsed = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), parsed);
        if (ec == std::errc() && ptr == token.data() + token.size()) {
            v.kind = TomlValue::Kind::Integer;
            v.integer = parsed;
            v.real = static_cast<double>(parsed);
            return v;
        }
    }
    double real = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), real);
    if (ec == std::errc() && ptr == token.data() + token.size()) {
        v.kind = TomlValue::Kind::Float;
        v.real = real;
        return v;
    }
    c.fail("cannot parse value \"" + std::string(token) + "\"");
}

TomlValue parse_scalar_or_array(Cursor& c) {
    c.skip_ws();
    if (c.done()) c.fail("expected a value");
    if (c.peek() == '"') {
        TomlValue v;
        v.kind = TomlValue::Kind::String;
        v.text = parse_quoted(c);
        return v;
    }
    if (c.peek() == '[') {
        ++c.pos;
        TomlValue v;
        v.kind = TomlValue::Kind::Array;
        c.skip_ws();
        if (!c.done() && c.peek() == ']') {
            ++c.pos;
            return v;
        }
        while (true) {
            v.items.push_back(parse_scalar_or_array(c));
            c.skip_ws();
            if (c.done()) c.fail("unterminated array");
            if (c.peek() == ',') {
                ++c.pos;
                continue;
            }
            if (c.peek() == ']') {
                ++c.pos;
                return v;
            }
            c.fail("expected ',' or ']' in array");
        }
    }
    return parse_number_or_bool(c);
}

} // namespace

const TomlValue* TomlDocument::find(std::string_view section, std::string_view key) const {
    auto sec = sections.find(std::string(section));
    if (sec == sections.end()) return nullptr;
    auto val = sec->second.find(std::string(key));
    return val == sec->second.end() ? nullptr : &val->second;
}

TomlDocument parse_toml(std::string_view text, const std::string& source) {
    TomlDocument doc;
    std::string current; // "" = root
    doc.sections[current];

    std::size_t line_no = 0;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        std::size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        std::string_view raw = text.substr(begin, end - begin);
        begin = end + 1;
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);

        Cursor c{raw, 0, &source, line_no};
        c.skip_ws();
        if (c.done() || c.peek() == '#') {
            if (end == text.size()) break;
            continue;
        }

        if (c.peek() == '[') {
            ++c.pos;
            std::string name = parse_bare_key(c);
            if (c.done() || c.peek() != ']') c.fail("expected ']'");
            ++c.pos;
            c.skip_ws();
            if (!c.done() && c.peek() != '#') c.fail("trailing characters after section header");
            if (doc.sections.count(name))
                c.fail("section [" + name + "] reopened");
            doc.sections[name];
            current = name;
        } else {
            std::string key = parse_bare_key(c);
            c.skip_ws();
            if (c.done() || c.peek() != '=') c.fail("expected '=' after key \"" + key + "\"");
            ++c.pos;
            TomlValue value = parse_scalar_or_array(c);
            c.skip_ws();
            if (!c.done() && c.peek() != '#') c.fail("trailing characters after value");
            auto [it, inserted] = doc.sections[current].emplace(key, std::move(value));
            if (!inserted)
                c.fail("duplicate key \"" + key + "\"" +
                       (current.empty() ? "" : " in [" + current + "]"));
        }
        if (end == text.size()) break;
    }
    return doc;
}

TomlDocument parse_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_toml(buf.str(), path.filename().string());
}

} // namespace megacurate
