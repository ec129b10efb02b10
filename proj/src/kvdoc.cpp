#include "dualscore/kvdoc.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dualscore::kvdoc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

Document parse(const std::string& text, const std::string& source) {
    Document doc;
    doc.source = source;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(doc, line_no, "unterminated section header");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) fail(doc, line_no, "empty section name");
            doc.sections.push_back({name, line_no, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(doc, line_no, "expected 'key = value'");
        Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
        if (e.key.empty()) fail(doc, line_no, "missing key before '='");
        if (doc.sections.empty()) doc.sections.push_back({"", 0, {}});
        for (const Entry& prev : doc.sections.back().entries)
            if (prev.key == e.key) fail(doc, line_no, "duplicate key '" + e.key + "'");
        doc.sections.back().entries.push_back(std::move(e));
    }
    return doc;
}

Document parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

void fail(const Document& doc, int line, const std::string& message) {
    std::ostringstream os;
    os << doc.source << ':' << line << ": " << message;
    throw ConfigError(os.str());
}

double as_double(const Document& doc, const Entry& e) {
    double v = 0.0;
    if (!parse_double(e.value, v)) fail(doc, e.line, "'" + e.key + "' expects a number, got '" + e.value + "'");
    return v;
}

long as_long(const Document& doc, const Entry& e) {
    long v = 0;
    const char* last = e.value.data() + e.value.size();
    auto [ptr, ec] = std::from_chars(e.value.data(), last, v);
    if (ec != std::errc() || ptr != last) fail(doc, e.line, "'" + e.key + "' expects an integer, got '" + e.value + "'");
    return v;
}

bool as_bool(const Document& doc, const Entry& e) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    fail(doc, e.line, "'" + e.key + "' expects true/false, got '" + e.value + "'");
}

std::vector<double> as_doubles(const Document& doc, const Entry& e, std::size_t count) {
    std::istringstream in(e.value);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        double v = 0.0;
        if (!parse_double(tok, v)) fail(doc, e.line, "'" + e.key + "' has a non-numeric component '" + tok + "'");
        out.push_back(v);
    }
    if (out.size() != count) {
        std::ostringstream os;
        os << "'" << e.key << "' expects " << count << " numbers, got " << out.size();
        fail(doc, e.line, os.str());
    }
    return out;
}

}  // namespace dualscore::kvdoc
