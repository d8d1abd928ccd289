#include "dbgi/inkml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dbgi/tensor.hpp"

namespace dbgi {

namespace {

struct Scanner {
    const std::string& text;
    const std::string& source;
    std::size_t pos = 0;
    int line = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        throw IoError(source + ":" + std::to_string(line) + ": " + msg);
    }

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }

    char advance() {
        const char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }

    bool consume(const std::string& literal) {
        if (text.compare(pos, literal.size(), literal) != 0) return false;
        for (std::size_t i = 0; i < literal.size(); ++i) advance();
        return true;
    }

    void skip_until(const std::string& terminator, const std::string& what) {
        while (!eof()) {
            if (consume(terminator)) return;
            advance();
        }
        fail("unterminated " + what);
    }

    void skip_spaces() {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) advance();
    }

    std::string read_name() {
        std::string name;
        while (!eof()) {
            const char c = peek();
            if (std::isalnum(static_cast<unsigned char>(c)) || c == ':' || c == '_' || c == '-' ||
                c == '.')
                name.push_back(advance());
            else
                break;
        }
        if (name.empty()) fail("expected a tag name");
        return name;
    }
};

std::string decode_entities(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '&') {
            out.push_back(raw[i]);
            continue;
        }
        const auto end = raw.find(';', i);
        const std::string entity = end == std::string::npos ? "" : raw.substr(i + 1, end - i - 1);
        if (entity == "amp") out.push_back('&');
        else if (entity == "lt") out.push_back('<');
        else if (entity == "gt") out.push_back('>');
        else if (entity == "quot") out.push_back('"');
        else if (entity == "apos") out.push_back('\'');
        else {
            out.push_back(raw[i]);
            continue;
        }
        i = end;
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

InkTrace parse_trace_points(const std::string& body, Scanner& scanner) {
    InkTrace trace;
    std::istringstream points(body);
    std::string point_text;
    while (std::getline(points, point_text, ',')) {
        std::istringstream fields(point_text);
        double x = 0.0, y = 0.0;
        if (!(fields >> x)) continue;  // blank fragment between commas
        if (!(fields >> y)) scanner.fail("trace point has an x coordinate but no y");
        if (!std::isfinite(x) || !std::isfinite(y)) scanner.fail("non-finite trace coordinate");
        trace.push_back({x, y});  // further channels (time, pressure) ignored
    }
    return trace;
}

}  // namespace

InkDocument parse_inkml(const std::string& text, const std::string& source_id) {
    Scanner scanner{text, source_id};
    InkDocument doc;
    doc.source_id = source_id;

    std::vector<std::string> open_tags;
    std::string text_buffer;
    bool capture_trace = false;
    bool capture_truth = false;

    while (!scanner.eof()) {
        if (scanner.peek() != '<') {
            const char c = scanner.advance();
            if (capture_trace || capture_truth) text_buffer.push_back(c);
            continue;
        }
        const int tag_line = scanner.line;
        scanner.advance();  // '<'
        if (scanner.consume("?")) {
            scanner.skip_until("?>", "processing instruction");
            continue;
        }
        if (scanner.consume("!--")) {
            scanner.skip_until("-->", "comment");
            continue;
        }
        if (scanner.consume("!")) {
            scanner.skip_until(">", "declaration");
            continue;
        }
        if (scanner.consume("/")) {
            const std::string name = scanner.read_name();
            scanner.skip_spaces();
            if (scanner.eof() || scanner.advance() != '>') scanner.fail("malformed closing tag");
            if (open_tags.empty() || open_tags.back() != name) {
                scanner.line = tag_line;
                scanner.fail("closing tag </" + name + "> does not match open element" +
                             (open_tags.empty() ? "" : " <" + open_tags.back() + ">"));
            }
            open_tags.pop_back();
            if (name == "trace" && capture_trace) {
                InkTrace trace = parse_trace_points(text_buffer, scanner);
                if (trace.empty())
                    doc.warnings.push_back(source_id + ":" + std::to_string(tag_line) +
                                           ": empty trace skipped");
                else
                    doc.traces.push_back(std::move(trace));
                capture_trace = false;
            } else if (name == "annotation" && capture_truth) {
                if (!doc.label) {
                    std::string label = trim(decode_entities(text_buffer));
                    // CROHME truth annotations are commonly wrapped in $...$
                    if (label.size() >= 2 && label.front() == '$' && label.back() == '$')
                        label = trim(label.substr(1, label.size() - 2));
                    doc.label = label;
                }
                capture_truth = false;
            }
            text_buffer.clear();
            continue;
        }

        // opening tag
        const std::string name = scanner.read_name();
        std::string type_attr;
        bool self_closing = false;
        while (true) {
            scanner.skip_spaces();
            if (scanner.eof()) scanner.fail("unterminated tag <" + name + ">");
            if (scanner.consume("/>")) {
                self_closing = true;
                break;
            }
            if (scanner.consume(">")) break;
            const std::string attr = scanner.read_name();
            scanner.skip_spaces();
            std::string value;
            if (scanner.consume("=")) {
                scanner.skip_spaces();
                if (scanner.eof()) scanner.fail("attribute " + attr + " has no value");
                const char quote = scanner.advance();
                if (quote != '"' && quote != '\'') scanner.fail("attribute value must be quoted");
                while (!scanner.eof() && scanner.peek() != quote) value.push_back(scanner.advance());
                if (scanner.eof()) scanner.fail("unterminated attribute value");
                scanner.advance();  // closing quote
            }
            if (attr == "type") type_attr = value;
        }
        if (self_closing) continue;
        open_tags.push_back(name);
        text_buffer.clear();
        if (name == "trace") capture_trace = true;
        if (name == "annotation" && type_attr == "truth") capture_truth = true;
    }

    if (!open_tags.empty()) scanner.fail("unclosed element <" + open_tags.back() + ">");
    if (doc.traces.empty()) throw IoError(source_id + ": no traces");
    return doc;
}

}  // namespace dbgi
