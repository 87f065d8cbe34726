#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pieceshap/attribution.hpp"

namespace pieceshap {

inline constexpr int kSchemaVersion = 1;

class DocumentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Explanation as a JSON document with a fixed key order.
nlohmann::ordered_json to_document(const Explanation& e);
/// Throws DocumentError on a missing field, a wrong type or an unknown schema version.
Explanation from_document(const nlohmann::ordered_json& doc);

/// Pretty-printed to_document(e) with a trailing newline. Doubles are written
/// in shortest round-trip form, so phi values survive bit-exactly.
std::string to_json(const Explanation& e);
Explanation from_json(std::string_view text);

/// Paired documents plus the delta table.
nlohmann::ordered_json comparison_document(const Explanation& a, const Explanation& b);

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    std::string hex() const;  // "#RRGGBB"
    bool operator==(const Rgb&) const = default;
};

/// Diverging blue-white-red ramp over [-limit, +limit]; 0 maps to the neutral midpoint.
class ColorScale {
public:
    /// Values with |phi| at or below this are drawn neutral.
    static constexpr double kNeutralBand = 1e-9;

    explicit ColorScale(double limit);
    /// Symmetric domain from the largest |phi| in the explanation.
    static ColorScale for_explanation(const Explanation& e);

    double limit() const { return limit_; }
    /// Red family (r > b) for positive phi, blue family (b > r) for negative.
    Rgb color_for_phi(double phi) const;
    static Rgb neutral();

private:
    double limit_;
};

inline constexpr double kOverlayOpacity = 0.7;

/// 8x8 board, White at the bottom, attributed squares tinted.
std::string to_svg_board(const Explanation& e, const ColorScale& scale);
std::string to_svg_board(const Explanation& e);

struct WaterfallRow {
    PieceInstance piece;
    double phi;
    double before;
    double after;
};

/// Rows by |phi| descending, ties in square order; the running total starts at base_value.
std::vector<WaterfallRow> waterfall_rows(const Explanation& e);

/// "c6 black queen" style label.
std::string row_label(const PieceInstance& piece);

std::string to_waterfall_text(const Explanation& e);
std::string to_waterfall_svg(const Explanation& e);

/// Delta table for a comparison, one row per piece.
std::string to_comparison_text(const Explanation& a, const Explanation& b);

}  // namespace pieceshap
