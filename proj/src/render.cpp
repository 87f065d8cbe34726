#include "pieceshap/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

namespace pieceshap {

namespace {

using Json = nlohmann::ordered_json;

Json limit_document(const EvalLimit& limit) {
    Json j;
    j[std::string(limit.kind_name())] = limit.count();
    return j;
}

EvalLimit limit_from_document(const Json& j, const char* field) {
    if (!j.is_object() || j.size() != 1) {
        throw DocumentError(fmt::format("'{}' must be an object with one limit", field));
    }
    const auto& [name, value] = *j.items().begin();
    const auto kind = EvalLimit::parse_kind(name);
    if (!kind || !value.is_number_unsigned() || value.get<std::uint64_t>() == 0) {
        throw DocumentError(fmt::format("'{}' is not a valid limit: {}", field, j.dump()));
    }
    const auto n = value.get<std::uint64_t>();
    switch (*kind) {
        case EvalLimit::Kind::kMoveTimeMillis: return EvalLimit::move_time_ms(n);
        case EvalLimit::Kind::kDepth: return EvalLimit::depth(n);
        case EvalLimit::Kind::kNodes: return EvalLimit::nodes(n);
    }
    throw DocumentError("unreachable limit kind");
}

const Json& field(const Json& doc, const char* name) {
    if (!doc.contains(name)) {
        throw DocumentError(fmt::format("missing field '{}'", name));
    }
    return doc.at(name);
}

template <typename T>
T typed(const Json& doc, const char* name) {
    const auto& v = field(doc, name);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DocumentError(fmt::format("field '{}' has the wrong type", name));
    }
}

double number(const Json& doc, const char* name) {
    const auto& v = field(doc, name);
    if (!v.is_number()) {
        throw DocumentError(fmt::format("field '{}' must be a number", name));
    }
    return v.get<double>();
}

std::size_t count(const Json& doc, const char* name) {
    const auto& v = field(doc, name);
    if (!v.is_number_unsigned()) {
        throw DocumentError(fmt::format("field '{}' must be a non-negative integer", name));
    }
    return v.get<std::size_t>();
}

// Blue (negative) to red (positive), neutral in the middle.
constexpr std::array<Rgb, 11> kRamp{{
    {0x05, 0x30, 0x61},
    {0x21, 0x66, 0xAC},
    {0x43, 0x93, 0xC3},
    {0x92, 0xC5, 0xDE},
    {0xD1, 0xE5, 0xF0},
    {0xF7, 0xF7, 0xF7},
    {0xFD, 0xDB, 0xC7},
    {0xF4, 0xA5, 0x82},
    {0xD6, 0x60, 0x4D},
    {0xB2, 0x18, 0x2B},
    {0x67, 0x00, 0x1F},
}};

std::uint8_t mix(std::uint8_t a, std::uint8_t b, double t) {
    return static_cast<std::uint8_t>(std::lround(a + (static_cast<double>(b) - a) * t));
}

std::string_view glyph(const Piece& p) {
    // Solid glyphs for both sides; color comes from fill.
    static constexpr std::array<std::string_view, kPieceKindCount> kSolid{"♟", "♞", "♝",
                                                                           "♜", "♛", "♚"};
    return kSolid[static_cast<std::size_t>(p.kind)];
}

constexpr int kSquare = 60;
constexpr int kMargin = 20;
constexpr std::string_view kLight = "#F0D9B5";
constexpr std::string_view kDark = "#B58863";

double xml_safe(double v) {
    return v == 0.0 ? 0.0 : v;  // no "-0"
}

}  // namespace

Json to_document(const Explanation& e) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["fen"] = e.fen;
    doc["evaluator_id"] = e.evaluator_id;
    doc["method"] = std::string(to_string(e.method));
    doc["seed"] = e.seed ? Json(*e.seed) : Json(nullptr);
    doc["root_limit"] = limit_document(e.root_limit);
    doc["perturbation_limit"] = limit_document(e.perturbation_limit);
    doc["base_value"] = e.base_value;
    doc["full_value"] = e.full_value;
    doc["evaluations_used"] = e.evaluations_used;
    doc["fallback_count"] = e.fallback_count;
    auto contributions = Json::array();
    for (const auto& c : e.contributions) {
        Json row;
        row["square"] = c.piece.square.to_string();
        row["piece"] = std::string(to_string(c.piece.kind));
        row["color"] = std::string(to_string(c.piece.color));
        row["phi"] = c.phi;
        contributions.push_back(std::move(row));
    }
    doc["contributions"] = std::move(contributions);
    return doc;
}

Explanation from_document(const Json& doc) {
    if (!doc.is_object()) {
        throw DocumentError("explanation document must be a JSON object");
    }
    const auto version = typed<int>(doc, "schema_version");
    if (version != kSchemaVersion) {
        throw DocumentError(fmt::format("unsupported schema_version {}", version));
    }
    Explanation e;
    e.fen = typed<std::string>(doc, "fen");
    e.evaluator_id = typed<std::string>(doc, "evaluator_id");
    const auto method = parse_method(typed<std::string>(doc, "method"));
    if (!method) {
        throw DocumentError("unknown method");
    }
    e.method = *method;
    const auto& seed = field(doc, "seed");
    if (!seed.is_null()) {
        if (!seed.is_number_unsigned()) {
            throw DocumentError("field 'seed' must be null or a non-negative integer");
        }
        e.seed = seed.get<std::uint64_t>();
    }
    e.root_limit = limit_from_document(field(doc, "root_limit"), "root_limit");
    e.perturbation_limit = limit_from_document(field(doc, "perturbation_limit"), "perturbation_limit");
    e.base_value = number(doc, "base_value");
    e.full_value = number(doc, "full_value");
    e.evaluations_used = count(doc, "evaluations_used");
    e.fallback_count = count(doc, "fallback_count");
    const auto& rows = field(doc, "contributions");
    if (!rows.is_array()) {
        throw DocumentError("field 'contributions' must be an array");
    }
    for (const auto& row : rows) {
        if (!row.is_object()) {
            throw DocumentError("contribution entries must be objects");
        }
        const auto square = Square::parse(typed<std::string>(row, "square"));
        const auto kind = parse_piece_kind(typed<std::string>(row, "piece"));
        const auto color = parse_color(typed<std::string>(row, "color"));
        if (!square || !kind || !color) {
            throw DocumentError(fmt::format("bad contribution entry {}", row.dump()));
        }
        if (!e.contributions.empty() && !(e.contributions.back().piece.square < *square)) {
            throw DocumentError("contributions must be sorted by square");
        }
        e.contributions.push_back({PieceInstance{*kind, *color, *square}, number(row, "phi")});
    }
    return e;
}

std::string to_json(const Explanation& e) {
    return to_document(e).dump(2) + "\n";
}

Explanation from_json(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
        throw DocumentError(fmt::format("not valid JSON: {}", err.what()));
    }
    return from_document(doc);
}

Json comparison_document(const Explanation& a, const Explanation& b) {
    const auto rows = compare_explanations(a, b);
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["a"] = to_document(a);
    doc["b"] = to_document(b);
    auto deltas = Json::array();
    for (const auto& r : rows) {
        Json row;
        row["square"] = r.piece.square.to_string();
        row["piece"] = std::string(to_string(r.piece.kind));
        row["color"] = std::string(to_string(r.piece.color));
        row["phi_a"] = r.phi_a;
        row["phi_b"] = r.phi_b;
        row["delta"] = r.delta;
        deltas.push_back(std::move(row));
    }
    doc["deltas"] = std::move(deltas);
    return doc;
}

std::string Rgb::hex() const {
    return fmt::format("#{:02X}{:02X}{:02X}", r, g, b);
}

ColorScale::ColorScale(double limit) : limit_(std::isfinite(limit) ? std::abs(limit) : 0.0) {}

ColorScale ColorScale::for_explanation(const Explanation& e) {
    double m = 0;
    for (const auto& c : e.contributions) {
        m = std::max(m, std::abs(c.phi));
    }
    return ColorScale(m);
}

Rgb ColorScale::neutral() {
    return kRamp[kRamp.size() / 2];
}

Rgb ColorScale::color_for_phi(double phi) const {
    if (!(std::abs(phi) > kNeutralBand) || limit_ <= kNeutralBand) {
        return neutral();
    }
    const double t = std::clamp(phi / limit_, -1.0, 1.0);
    const double pos = (t + 1.0) / 2.0 * static_cast<double>(kRamp.size() - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), kRamp.size() - 2);
    const double frac = pos - static_cast<double>(lo);
    Rgb c{mix(kRamp[lo].r, kRamp[lo + 1].r, frac), mix(kRamp[lo].g, kRamp[lo + 1].g, frac),
          mix(kRamp[lo].b, kRamp[lo + 1].b, frac)};
    // Rounding can land a tiny value on the midpoint; keep its side visible.
    if (phi > 0 && c.r <= c.b) {
        c.g = c.b = static_cast<std::uint8_t>(c.r - 1);
    } else if (phi < 0 && c.b <= c.r) {
        c.r = c.g = static_cast<std::uint8_t>(c.b - 1);
    }
    return c;
}

std::string to_svg_board(const Explanation& e) {
    return to_svg_board(e, ColorScale::for_explanation(e));
}

std::string to_svg_board(const Explanation& e, const ColorScale& scale) {
    const auto pos = parse_fen(e.fen);
    const int size = 8 * kSquare + 2 * kMargin;
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        size);
    out += fmt::format("<title>{}</title>\n", e.fen);
    out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{0}\" fill=\"#FFFFFF\"/>\n", size);

    const auto origin = [](int file, int rank) {
        return std::pair{kMargin + file * kSquare, kMargin + (7 - rank) * kSquare};
    };

    out += "<g class=\"squares\">\n";
    for (int rank = 7; rank >= 0; --rank) {
        for (int file = 0; file < 8; ++file) {
            const auto [x, y] = origin(file, rank);
            const bool dark = (file + rank) % 2 == 0;
            out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", x, y, kSquare,
                               kSquare, dark ? kDark : kLight);
        }
    }
    out += "</g>\n<g class=\"attribution\">\n";
    for (const auto& c : e.contributions) {
        const auto [x, y] = origin(c.piece.square.file(), c.piece.square.rank());
        out += fmt::format(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"{}\" data-square=\"{}\" "
            "data-phi=\"{}\"/>\n",
            x, y, kSquare, kSquare, scale.color_for_phi(c.phi).hex(), kOverlayOpacity, c.piece.square.to_string(),
            xml_safe(c.phi));
    }
    out += "</g>\n<g class=\"pieces\" font-family=\"DejaVu Sans, Arial Unicode MS, sans-serif\" font-size=\"46\" "
           "text-anchor=\"middle\" dominant-baseline=\"central\">\n";
    for (int index = 0; index < 64; ++index) {
        const auto& p = pos.board()[index];
        if (!p) {
            continue;
        }
        const auto sq = Square::from_index(index);
        const auto [x, y] = origin(sq.file(), sq.rank());
        const bool white = p->color == Color::kWhite;
        out += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\" stroke=\"{}\" stroke-width=\"1.2\">{}</text>\n",
                           x + kSquare / 2, y + kSquare / 2, white ? "#FFFFFF" : "#000000", white ? "#000000" : "#FFFFFF",
                           glyph(*p));
    }
    out += "</g>\n<g class=\"coordinates\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\" "
           "text-anchor=\"middle\" dominant-baseline=\"central\">\n";
    for (int i = 0; i < 8; ++i) {
        out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kMargin + i * kSquare + kSquare / 2,
                           size - kMargin / 2, static_cast<char>('a' + i));
        out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kMargin / 2, kMargin + (7 - i) * kSquare + kSquare / 2,
                           i + 1);
    }
    out += "</g>\n</svg>\n";
    return out;
}

std::vector<WaterfallRow> waterfall_rows(const Explanation& e) {
    std::vector<Contribution> sorted = e.contributions;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.phi) > std::abs(b.phi); });
    std::vector<WaterfallRow> rows;
    double running = e.base_value;
    for (const auto& c : sorted) {
        rows.push_back({c.piece, c.phi, running, running + c.phi});
        running += c.phi;
    }
    return rows;
}

std::string row_label(const PieceInstance& piece) {
    return fmt::format("{} {} {}", piece.square.to_string(), to_string(piece.color), to_string(piece.kind));
}

std::string to_waterfall_text(const Explanation& e) {
    constexpr int kHalf = 20;
    const auto rows = waterfall_rows(e);
    double largest = 0;
    for (const auto& r : rows) {
        largest = std::max(largest, std::abs(r.phi));
    }
    std::string out;
    out += fmt::format("{}\n", e.fen);
    out += fmt::format("evaluator {}, {} ({} evaluations", e.evaluator_id, to_string(e.method), e.evaluations_used);
    if (e.fallback_count > 0) {
        out += fmt::format(", {} fallbacks", e.fallback_count);
    }
    out += ")\n";
    out += fmt::format("{:<18} {:>10} {:^{}} {:>8}\n", "base", "", "", 2 * kHalf + 1, fmt::format("{:.4f}", e.base_value));
    for (const auto& r : rows) {
        const int len = largest > 0 ? static_cast<int>(std::lround(std::abs(r.phi) / largest * kHalf)) : 0;
        std::string bar(2 * kHalf + 1, ' ');
        bar[kHalf] = '|';
        for (int i = 1; i <= len; ++i) {
            bar[r.phi < 0 ? kHalf - i : kHalf + i] = r.phi < 0 ? '-' : '+';
        }
        out += fmt::format("{:<18} {:>+10.4f} {} {:>8.4f}\n", row_label(r.piece), xml_safe(r.phi), bar, r.after);
    }
    out += fmt::format("{:<18} {:>10} {:^{}} {:>8}\n", "f(x)", "", "", 2 * kHalf + 1, fmt::format("{:.4f}", e.full_value));
    return out;
}

std::string to_waterfall_svg(const Explanation& e) {
    constexpr int kLabel = 170;
    constexpr int kChart = 420;
    constexpr int kRow = 26;
    constexpr int kTop = 30;
    const auto rows = waterfall_rows(e);
    const int height = kTop + static_cast<int>(rows.size() + 2) * kRow + 30;
    const int width = kLabel + kChart + 90;
    const auto x_of = [&](double p) { return kLabel + std::clamp(p, 0.0, 1.0) * kChart; };
    const auto ends = ColorScale(1.0);

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n",
        width, height);
    out += fmt::format("<title>{}</title>\n", e.fen);
    out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#FFFFFF\"/>\n", width, height);
    for (const double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1}\" x2=\"{0:.1f}\" y2=\"{2}\" stroke=\"#DDDDDD\"/>\n", x_of(tick),
                           kTop - 10, height - 25);
        out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555555\">{:.2f}</text>\n",
                           x_of(tick), height - 10, tick);
    }

    int y = kTop;
    const auto total_row = [&](std::string_view label, double value) {
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", kLabel - 8, y + kRow / 2 + 4, label);
        out += fmt::format("<rect x=\"{:.1f}\" y=\"{}\" width=\"2\" height=\"{}\" fill=\"#333333\"/>\n", x_of(value) - 1,
                           y + 3, kRow - 6);
        out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" fill=\"#333333\">{:.4f}</text>\n", x_of(value) + 6,
                           y + kRow / 2 + 4, value);
        y += kRow;
    };

    total_row("base", e.base_value);
    for (const auto& r : rows) {
        const double left = std::min(r.before, r.after);
        const double right = std::max(r.before, r.after);
        const auto color = r.phi > 0 ? ends.color_for_phi(1.0) : (r.phi < 0 ? ends.color_for_phi(-1.0) : ColorScale::neutral());
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", kLabel - 8, y + kRow / 2 + 4,
                           row_label(r.piece));
        out += fmt::format(
            "<rect x=\"{:.1f}\" y=\"{}\" width=\"{:.1f}\" height=\"{}\" fill=\"{}\" data-phi=\"{}\"/>\n", x_of(left),
            y + 3, std::max(1.0, x_of(right) - x_of(left)), kRow - 6, color.hex(), xml_safe(r.phi));
        out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" fill=\"#333333\">{:+.4f}</text>\n", x_of(right) + 6,
                           y + kRow / 2 + 4, xml_safe(r.phi));
        y += kRow;
    }
    total_row("f(x)", e.full_value);
    out += "</svg>\n";
    return out;
}

std::string to_comparison_text(const Explanation& a, const Explanation& b) {
    const auto rows = compare_explanations(a, b);
    std::string out;
    out += fmt::format("{}\n", a.fen);
    out += fmt::format("{:<18} {:>10} {:>10} {:>10}\n", "piece", a.evaluator_id.substr(0, 10),
                       b.evaluator_id.substr(0, 10), "delta");
    for (const auto& r : rows) {
        out += fmt::format("{:<18} {:>+10.4f} {:>+10.4f} {:>+10.4f}\n", row_label(r.piece), xml_safe(r.phi_a),
                           xml_safe(r.phi_b), xml_safe(r.delta));
    }
    out += fmt::format("{:<18} {:>10.4f} {:>10.4f} {:>+10.4f}\n", "f(x)", a.full_value, b.full_value,
                       xml_safe(a.full_value - b.full_value));
    return out;
}

}  // namespace pieceshap
