#include "dbgi/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dbgi/inkml.hpp"
#include "dbgi/raster.hpp"
#include "dbgi/rng.hpp"

namespace dbgi {

void SyntheticConfig::validate() const {
    if (count < 1) throw ContractViolation("synthetic: count must be >= 1");
    if (grammar_depth < 0) throw ContractViolation("synthetic: grammar_depth must be >= 0");
    RasterConfig{target_height, stroke_width}.validate();
}

namespace {

using Polyline = std::vector<InkPoint>;

struct Glyph {
    std::vector<Polyline> strokes;  // coordinates in [0, width] x [0, 1], y down
    double width = 0.7;
};

const std::vector<std::string>& atom_symbols() {
    static const std::vector<std::string> atoms = {
        "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
        "a", "b", "c", "i", "n", "s", "x", "y", "z",
        "+", "-", "=", "\\alpha", "\\sin"};
    return atoms;
}

const std::map<std::string, Glyph>& glyph_templates() {
    static const std::map<std::string, Glyph> glyphs = [] {
        std::map<std::string, Glyph> g;
        g["0"] = {{{{0.5, 0.02}, {0.25, 0.18}, {0.18, 0.5}, {0.25, 0.84}, {0.5, 0.98},
                    {0.72, 0.84}, {0.8, 0.5}, {0.72, 0.18}, {0.5, 0.02}}},
                  0.8};
        g["1"] = {{{{0.3, 0.22}, {0.55, 0.02}, {0.55, 0.98}}}, 0.6};
        g["2"] = {{{{0.18, 0.28}, {0.3, 0.06}, {0.62, 0.02}, {0.8, 0.22}, {0.72, 0.45},
                    {0.2, 0.95}, {0.82, 0.95}}},
                  0.8};
        g["3"] = {{{{0.2, 0.12}, {0.5, 0.02}, {0.78, 0.2}, {0.52, 0.46}, {0.8, 0.7},
                    {0.55, 0.97}, {0.2, 0.88}}},
                  0.8};
        g["4"] = {{{{0.6, 0.02}, {0.15, 0.6}, {0.85, 0.6}}, {{0.68, 0.35}, {0.68, 0.98}}}, 0.8};
        g["5"] = {{{{0.78, 0.04}, {0.25, 0.04}, {0.2, 0.45}, {0.55, 0.38}, {0.8, 0.55},
                    {0.78, 0.82}, {0.5, 0.97}, {0.2, 0.9}}},
                  0.8};
        g["6"] = {{{{0.72, 0.04}, {0.4, 0.25}, {0.22, 0.55}, {0.25, 0.85}, {0.5, 0.98},
                    {0.72, 0.85}, {0.75, 0.62}, {0.55, 0.5}, {0.3, 0.6}}},
                  0.8};
        g["7"] = {{{{0.18, 0.04}, {0.82, 0.04}, {0.45, 0.98}}}, 0.8};
        g["8"] = {{{{0.5, 0.02}, {0.27, 0.15}, {0.32, 0.38}, {0.5, 0.5}, {0.7, 0.63},
                    {0.66, 0.87}, {0.45, 0.98}, {0.28, 0.85}, {0.34, 0.62}, {0.5, 0.5},
                    {0.68, 0.37}, {0.72, 0.14}, {0.5, 0.02}}},
                  0.8};
        g["9"] = {{{{0.3, 0.96}, {0.6, 0.75}, {0.78, 0.45}, {0.75, 0.15}, {0.5, 0.02},
                    {0.28, 0.15}, {0.25, 0.38}, {0.45, 0.5}, {0.72, 0.4}}},
                  0.8};
        g["a"] = {{{{0.66, 0.35}, {0.42, 0.28}, {0.22, 0.5}, {0.26, 0.8}, {0.5, 0.92},
                    {0.66, 0.72}},
                   {{0.66, 0.3}, {0.68, 0.92}, {0.78, 0.95}}},
                  0.8};
        g["b"] = {{{{0.25, 0.02}, {0.25, 0.95}},
                   {{0.25, 0.5}, {0.5, 0.38}, {0.72, 0.55}, {0.7, 0.8}, {0.45, 0.95},
                    {0.25, 0.85}}},
                  0.8};
        g["c"] = {{{{0.75, 0.32}, {0.5, 0.22}, {0.26, 0.4}, {0.22, 0.65}, {0.45, 0.9},
                    {0.75, 0.82}}},
                  0.8};
        g["i"] = {{{{0.5, 0.14}, {0.52, 0.18}}, {{0.5, 0.36}, {0.5, 0.92}}}, 0.4};
        g["n"] = {{{{0.25, 0.34}, {0.25, 0.94}},
                   {{0.25, 0.5}, {0.45, 0.32}, {0.68, 0.42}, {0.7, 0.94}}},
                  0.8};
        g["s"] = {{{{0.68, 0.32}, {0.45, 0.25}, {0.3, 0.4}, {0.5, 0.55}, {0.68, 0.7},
                    {0.45, 0.88}, {0.25, 0.8}}},
                  0.7};
        g["x"] = {{{{0.2, 0.26}, {0.8, 0.94}}, {{0.8, 0.26}, {0.2, 0.94}}}, 0.8};
        g["y"] = {{{{0.2, 0.26}, {0.5, 0.68}}, {{0.8, 0.26}, {0.36, 0.98}, {0.22, 0.9}}}, 0.8};
        g["z"] = {{{{0.2, 0.3}, {0.78, 0.3}, {0.22, 0.92}, {0.8, 0.92}}}, 0.8};
        g["+"] = {{{{0.5, 0.2}, {0.5, 0.8}}, {{0.2, 0.5}, {0.8, 0.5}}}, 0.8};
        g["-"] = {{{{0.2, 0.5}, {0.8, 0.5}}}, 0.8};
        g["="] = {{{{0.2, 0.38}, {0.8, 0.38}}, {{0.2, 0.62}, {0.8, 0.62}}}, 0.8};
        g["\\alpha"] = {{{{0.78, 0.32}, {0.5, 0.25}, {0.25, 0.45}, {0.28, 0.75}, {0.55, 0.85},
                          {0.74, 0.58}, {0.84, 0.88}}},
                        0.9};
        // function name rendered as its letters
        Glyph sin;
        sin.width = 1.8;
        auto shifted = [](const Glyph& src, double dx, double sx) {
            std::vector<Polyline> out;
            for (const Polyline& line : src.strokes) {
                Polyline moved;
                for (const InkPoint& p : line) moved.push_back({p.x * sx + dx, p.y});
                out.push_back(std::move(moved));
            }
            return out;
        };
        for (auto& line : shifted(g["s"], 0.0, 0.8)) sin.strokes.push_back(line);
        for (auto& line : shifted(g["i"], 0.6, 0.9)) sin.strokes.push_back(line);
        for (auto& line : shifted(g["n"], 1.0, 1.0)) sin.strokes.push_back(line);
        g["\\sin"] = sin;
        return g;
    }();
    return glyphs;
}

// ---- layout ----

struct Drawing {
    std::vector<Polyline> strokes;
    double width = 0.0;
    double height = 0.0;
};

void shift(Drawing& d, double dx, double dy) {
    for (Polyline& line : d.strokes)
        for (InkPoint& p : line) {
            p.x += dx;
            p.y += dy;
        }
}

void rescale(Drawing& d, double factor) {
    for (Polyline& line : d.strokes)
        for (InkPoint& p : line) {
            p.x *= factor;
            p.y *= factor;
        }
    d.width *= factor;
    d.height *= factor;
}

void append(Drawing& into, Drawing piece, double dx, double dy) {
    shift(piece, dx, dy);
    for (Polyline& line : piece.strokes) into.strokes.push_back(std::move(line));
}

// break long segments so point noise bends the stroke, not just its endpoints
Polyline subdivide(const Polyline& line, double max_step) {
    Polyline out;
    out.push_back(line.front());
    for (std::size_t i = 1; i < line.size(); ++i) {
        const InkPoint a = line[i - 1], b = line[i];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / max_step)));
        for (int k = 1; k <= pieces; ++k) {
            const double t = static_cast<double>(k) / pieces;
            out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    return out;
}

Drawing render_glyph(const std::string& symbol, Rng& rng) {
    const auto& templates = glyph_templates();
    auto it = templates.find(symbol);
    if (it == templates.end()) throw ContractViolation("no stroke template for symbol " + symbol);
    const Glyph& glyph = it->second;

    const double angle = rng.normal(0.0, 0.05);
    const double sx = rng.normal(1.0, 0.06), sy = rng.normal(1.0, 0.06);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double cx = glyph.width / 2.0, cy = 0.5;

    Drawing d;
    d.width = glyph.width;
    d.height = 1.0;
    for (const Polyline& line : glyph.strokes) {
        Polyline warped;
        for (const InkPoint& p : subdivide(line, 0.12)) {
            const double x0 = (p.x - cx) * sx, y0 = (p.y - cy) * sy;
            warped.push_back({cx + ca * x0 - sa * y0 + rng.normal(0.0, 0.012),
                              cy + sa * x0 + ca * y0 + rng.normal(0.0, 0.012)});
        }
        d.strokes.push_back(std::move(warped));
    }
    return d;
}

// ---- grammar ----

constexpr double kGap = 0.22;

struct Piece {
    std::vector<std::string> tokens;
    Drawing drawing;
};

Piece gen_sequence(int depth, int budget, int min_items, int max_items, Rng& rng);

Piece gen_atom(Rng& rng) {
    const auto& atoms = atom_symbols();
    const std::string& symbol = atoms[static_cast<std::size_t>(rng.below(atoms.size()))];
    return {{symbol}, render_glyph(symbol, rng)};
}

Piece wrap_braces(std::vector<std::string> head, const Piece& inner) {
    Piece out;
    out.tokens = std::move(head);
    out.tokens.push_back("{");
    out.tokens.insert(out.tokens.end(), inner.tokens.begin(), inner.tokens.end());
    out.tokens.push_back("}");
    return out;
}

Piece gen_frac(int depth, int budget, Rng& rng) {
    // \frac { num } { den } costs 5 + |num| + |den|
    const int inner = budget - 5;
    const int num_budget = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(inner - 1)));
    Piece num = gen_sequence(depth - 1, num_budget, 1, 2, rng);
    Piece den = gen_sequence(depth - 1, inner - static_cast<int>(num.tokens.size()), 1, 2, rng);

    Piece out = wrap_braces({"\\frac"}, num);
    out.tokens.push_back("{");
    out.tokens.insert(out.tokens.end(), den.tokens.begin(), den.tokens.end());
    out.tokens.push_back("}");

    Drawing n = num.drawing, d = den.drawing;
    rescale(n, 0.75);
    rescale(d, 0.75);
    const double bar_w = std::max(n.width, d.width) + 0.3;
    const double bar_y = n.height + 0.15;
    const double num_dx = (bar_w - n.width) / 2.0;
    const double den_dx = (bar_w - d.width) / 2.0;
    Drawing& dr = out.drawing;
    dr.width = bar_w;
    dr.height = bar_y + 0.15 + d.height;
    append(dr, std::move(n), num_dx, 0.0);
    dr.strokes.push_back({{0.0, bar_y}, {bar_w, bar_y}});
    append(dr, std::move(d), den_dx, bar_y + 0.15);
    return out;
}

Piece gen_sqrt(int depth, int budget, Rng& rng) {
    // \sqrt { child } costs 3 + |child|
    Piece child = gen_sequence(depth - 1, budget - 3, 1, 2, rng);
    Piece out = wrap_braces({"\\sqrt"}, child);

    Drawing c = child.drawing;
    const double hook_w = 0.5, pad = 0.12;
    Drawing& dr = out.drawing;
    dr.height = c.height + 0.2;
    dr.width = hook_w + pad + c.width + pad;
    const double h = dr.height;
    dr.strokes.push_back(
        {{0.0, 0.6 * h}, {0.16, 0.55 * h}, {0.34, h}, {hook_w, 0.0}, {dr.width, 0.0}});
    append(dr, std::move(c), hook_w + pad, 0.2);
    return out;
}

Piece gen_script(int depth, int budget, bool superscript, Rng& rng) {
    // base ^ { exp } costs 4 + |exp|; the base is a single atom
    Piece base = gen_atom(rng);
    Piece exp = gen_sequence(depth - 1, budget - 5, 1, 2, rng);

    Piece out;
    out.tokens = base.tokens;
    out.tokens.push_back(superscript ? "^" : "_");
    out.tokens.push_back("{");
    out.tokens.insert(out.tokens.end(), exp.tokens.begin(), exp.tokens.end());
    out.tokens.push_back("}");

    Drawing b = base.drawing, e = exp.drawing;
    rescale(e, 0.55);
    const double ey = superscript ? -0.55 * e.height : b.height - 0.45 * e.height;
    const double top = std::min(0.0, ey);
    const double base_w = b.width;
    Drawing& dr = out.drawing;
    dr.width = base_w + 0.08 + e.width;
    dr.height = std::max(b.height, ey + e.height) - top;
    append(dr, std::move(b), 0.0, -top);
    append(dr, std::move(e), base_w + 0.08, ey - top);
    return out;
}

// One grammar item costing at most `budget` tokens (>= 1).
Piece gen_item(int depth, int budget, Rng& rng) {
    if (depth < 1 || budget < 4) return gen_atom(rng);
    std::vector<int> kinds = {0};          // atom
    if (budget >= 5) kinds.push_back(2);   // script
    if (budget >= 4) kinds.push_back(1);   // sqrt
    if (budget >= 7) kinds.push_back(3);   // frac
    const int kind = kinds[static_cast<std::size_t>(rng.below(kinds.size()))];
    switch (kind) {
        case 1: return gen_sqrt(depth, budget, rng);
        case 2: return gen_script(depth, budget, rng.below(2) == 0, rng);
        case 3: return gen_frac(depth, budget, rng);
        default: return gen_atom(rng);
    }
}

Piece gen_sequence(int depth, int budget, int min_items, int max_items, Rng& rng) {
    budget = std::max(budget, 1);
    std::vector<Piece> items;
    int used = 0;
    while (static_cast<int>(items.size()) < max_items && used < budget) {
        if (static_cast<int>(items.size()) >= min_items && budget - used < 4 && rng.below(3) == 0)
            break;
        items.push_back(gen_item(depth, budget - used, rng));
        used += static_cast<int>(items.back().tokens.size());
    }

    Piece out;
    double max_h = 0.0;
    for (const Piece& p : items) max_h = std::max(max_h, p.drawing.height);
    double x = 0.0;
    for (Piece& p : items) {
        out.tokens.insert(out.tokens.end(), p.tokens.begin(), p.tokens.end());
        const double dy = (max_h - p.drawing.height) / 2.0;
        const double w = p.drawing.width;
        append(out.drawing, std::move(p.drawing), x, dy);
        x += w + kGap;
    }
    out.drawing.width = items.empty() ? 0.0 : x - kGap;
    out.drawing.height = max_h;
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (const std::string& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

}  // namespace

Vocabulary synthetic_vocabulary() {
    std::vector<std::string> tokens = atom_symbols();
    for (const char* t : {"\\frac", "\\sqrt", "^", "_", "{", "}"}) tokens.emplace_back(t);
    return Vocabulary::from_tokens(tokens);
}

Sample generate_sample(const SyntheticConfig& config, std::uint64_t index, const Vocabulary& vocab) {
    config.validate();
    Rng rng = Rng::derive(config.seed, index);

    Piece expr;
    if (config.grammar_depth == 0) {
        expr = gen_atom(rng);
    } else {
        // cycle the seven 5-wide length buckets so every bucket 1-5 .. 31-35
        // shows up in any reasonably sized corpus
        const int bucket = static_cast<int>(index % 7);
        const int target = bucket * 5 + 1 + static_cast<int>(rng.below(5));
        expr = gen_sequence(config.grammar_depth, target, 1, target, rng);
    }

    InkDocument doc;
    doc.source_id = "synthetic:" + std::to_string(index);
    for (const Polyline& line : expr.drawing.strokes) {
        if (line.size() < 1) continue;
        doc.traces.push_back(line);
    }

    Sample sample;
    sample.label = join_tokens(expr.tokens);
    sample.image = rasterize(doc, config.target_height, config.stroke_width);
    sample.tokens = tokenize_latex(sample.label, vocab).ids;
    return sample;
}

std::vector<Sample> generate_synthetic(const SyntheticConfig& config, const Vocabulary& vocab) {
    config.validate();
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(config.count));
    for (int i = 0; i < config.count; ++i)
        samples.push_back(generate_sample(config, static_cast<std::uint64_t>(i), vocab));
    return samples;
}

}  // namespace dbgi
