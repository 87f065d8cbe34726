#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "pieceshap/render.hpp"
#include "test_support.hpp"

namespace pieceshap {
namespace {

const ExplainLimits kLimits{EvalLimit::move_time_ms(100), EvalLimit::move_time_ms(10)};
const std::filesystem::path kGolden = PIECESHAP_GOLDEN_DIR;

Explanation material_explanation(const char* fen) {
    MaterialEvaluator m;
    return explain(parse_fen(fen), m, kLimits);
}

// Matches the golden file, or rewrites it when PIECESHAP_UPDATE_GOLDEN is set.
void expect_golden(const std::string& name, const std::string& actual) {
    const auto path = kGolden / name;
    if (std::getenv("PIECESHAP_UPDATE_GOLDEN") != nullptr) {
        std::ofstream(path, std::ios::binary) << actual;
    }
    std::ifstream in(path, std::ios::binary);
    ASSERT_TRUE(in) << "missing golden file " << path;
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), actual) << name;
}

std::string tint_fill(const std::string& svg, const std::string& square) {
    const std::regex re("fill=\"(#[0-9A-F]{6})\" fill-opacity=\"0.7\" data-square=\"" + square + "\"");
    std::smatch m;
    if (!std::regex_search(svg, m, re)) {
        return "";
    }
    return m[1];
}

Rgb parse_hex(const std::string& hex) {
    const auto v = std::stoul(hex.substr(1), nullptr, 16);
    return Rgb{static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

bool is_red(Rgb c) { return c.r > c.b; }
bool is_blue(Rgb c) { return c.b > c.r; }

Explanation random_explanation(std::mt19937_64& rng) {
    Explanation e;
    e.fen = to_fen(testing::random_position(rng, 5));
    const auto indexing = non_king_indexing(parse_fen(e.fen));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& p : indexing.pieces) {
        e.contributions.push_back({p, u(rng) * std::pow(10.0, -static_cast<int>(rng() % 12))});
    }
    e.evaluator_id = "rand";
    e.method = rng() % 2 ? Method::kExact : Method::kSampling;
    if (e.method == Method::kSampling) {
        e.seed = rng();
    }
    e.full_value = std::uniform_real_distribution<double>(0, 1)(rng);
    e.evaluations_used = rng() % 10000;
    e.fallback_count = rng() % 5;
    e.root_limit = EvalLimit::nodes(1 + rng() % 100000);
    e.perturbation_limit = EvalLimit::depth(1 + rng() % 20);
    return e;
}

TEST(Document, KingsOnly) {
    const auto e = material_explanation("8/2k5/8/8/8/5K2/8/8 w - - 0 1");
    const auto doc = to_document(e);
    EXPECT_TRUE(doc["contributions"].is_array());
    EXPECT_TRUE(doc["contributions"].empty());
    EXPECT_EQ(doc["base_value"].get<double>(), 0.5);
    EXPECT_EQ(doc["schema_version"].get<int>(), kSchemaVersion);
}

TEST(Document, KeyOrderIsFixed) {
    const auto doc = to_document(material_explanation("7k/8/2q5/8/8/8/8/R6K w - - 0 1"));
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) {
        keys.push_back(k);
    }
    const std::vector<std::string> expected{"schema_version", "fen", "evaluator_id", "method", "seed",
                                            "root_limit", "perturbation_limit", "base_value", "full_value",
                                            "evaluations_used", "fallback_count", "contributions"};
    EXPECT_EQ(keys, expected);
}

TEST(Document, TwoPieceValuesToNineDecimals) {
    const auto text = to_json(material_explanation("7k/8/2q5/8/8/8/8/R6K w - - 0 1"));
    const auto doc = nlohmann::json::parse(text);
    const double f_r = testing::oracle_logistic(500);
    const double f_q = testing::oracle_logistic(-900);
    const double f_rq = testing::oracle_logistic(-400);
    const double phi_r = 0.5 * (f_r - 0.5) + 0.5 * (f_rq - f_q);
    const double phi_q = 0.5 * (f_q - 0.5) + 0.5 * (f_rq - f_r);
    ASSERT_EQ(doc["contributions"].size(), 2U);
    EXPECT_EQ(doc["contributions"][0]["square"], "a1");
    EXPECT_EQ(doc["contributions"][0]["piece"], "rook");
    EXPECT_EQ(doc["contributions"][0]["color"], "white");
    EXPECT_NEAR(doc["contributions"][0]["phi"].get<double>(), phi_r, 1e-9);
    EXPECT_EQ(doc["contributions"][1]["square"], "c6");
    EXPECT_NEAR(doc["contributions"][1]["phi"].get<double>(), phi_q, 1e-9);
}

TEST(Document, RoundTripIsBitExact) {
    std::mt19937_64 rng(14);
    for (int i = 0; i < 300; ++i) {
        const auto e = random_explanation(rng);
        const auto back = from_json(to_json(e));
        ASSERT_EQ(back, e) << to_json(e);
        for (std::size_t k = 0; k < e.contributions.size(); ++k) {
            ASSERT_EQ(std::memcmp(&back.contributions[k].phi, &e.contributions[k].phi, sizeof(double)), 0);
        }
    }
}

TEST(Document, RejectsBadInput) {
    const auto good = to_document(material_explanation("7k/8/2q5/8/8/8/8/R6K w - - 0 1"));
    EXPECT_THROW(from_json("{"), DocumentError);
    EXPECT_THROW(from_json("[]"), DocumentError);
    auto bad = good;
    bad["schema_version"] = 99;
    EXPECT_THROW(from_document(bad), DocumentError);
    bad = good;
    bad.erase("fen");
    EXPECT_THROW(from_document(bad), DocumentError);
    bad = good;
    bad["contributions"][0]["square"] = "z9";
    EXPECT_THROW(from_document(bad), DocumentError);
    bad = good;
    std::swap(bad["contributions"][0], bad["contributions"][1]);
    EXPECT_THROW(from_document(bad), DocumentError);
    bad = good;
    bad["root_limit"] = {{"movetime", 0}};
    EXPECT_THROW(from_document(bad), DocumentError);
    EXPECT_NO_THROW(from_document(good));
}

TEST(ColorScale, NeutralAndSignFamilies) {
    const ColorScale scale(0.4);
    EXPECT_EQ(scale.color_for_phi(0.0), ColorScale::neutral());
    EXPECT_EQ(ColorScale::neutral().hex(), "#F7F7F7");
    EXPECT_EQ(scale.color_for_phi(0.4).hex(), "#67001F");
    EXPECT_EQ(scale.color_for_phi(-0.4).hex(), "#053061");
    EXPECT_EQ(scale.color_for_phi(5.0).hex(), "#67001F");
    for (double x = 1.000001e-6; x <= 0.4; x *= 1.3) {
        EXPECT_TRUE(is_red(scale.color_for_phi(x))) << x;
        EXPECT_TRUE(is_blue(scale.color_for_phi(-x))) << x;
    }
    // A large domain must not swallow tiny values either.
    const ColorScale wide(1e6);
    EXPECT_TRUE(is_red(wide.color_for_phi(2e-6)));
    EXPECT_TRUE(is_blue(wide.color_for_phi(-2e-6)));
}

TEST(ColorScale, MirroredAroundNeutral) {
    const ColorScale scale(1.0);
    for (int i = 1; i <= 10; ++i) {
        const double x = i / 10.0;
        const auto red = scale.color_for_phi(x);
        const auto blue = scale.color_for_phi(-x);
        // Same distance from the neutral point in lightness order.
        EXPECT_GT(red.r, red.b);
        EXPECT_GT(blue.b, blue.r);
    }
    // Quarter points reproduce the interpolated ramp.
    EXPECT_EQ(scale.color_for_phi(0.5).hex(), "#E58368");
    EXPECT_EQ(ColorScale(0.0).color_for_phi(0.3), ColorScale::neutral());
}

TEST(Svg, RooksRedQueenBlue) {
    const auto e = material_explanation("8/2k5/2q5/8/4R3/4RK2/8/8 w - - 0 1");
    const auto svg = to_svg_board(e);
    EXPECT_TRUE(is_red(parse_hex(tint_fill(svg, "e3"))));
    EXPECT_TRUE(is_red(parse_hex(tint_fill(svg, "e4"))));
    EXPECT_TRUE(is_blue(parse_hex(tint_fill(svg, "c6"))));
    EXPECT_EQ(tint_fill(svg, "c6"), "#053061");
    // Kings are never tinted.
    EXPECT_EQ(tint_fill(svg, "c7"), "");
    EXPECT_EQ(tint_fill(svg, "f3"), "");
    EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);
    expect_golden("two_rooks_queen.svg", svg);
}

TEST(Svg, ZeroPhiIsNeutral) {
    auto values = material_value_table_default();
    values[PieceKind::kKnight] = 0;
    MaterialEvaluator m("knightless", values);
    const auto e = explain(parse_fen("4k3/8/2n5/8/8/5N2/8/4K3 w - - 0 1"), m, kLimits);
    const auto svg = to_svg_board(e);
    EXPECT_EQ(tint_fill(svg, "c6"), "#F7F7F7");
    EXPECT_EQ(tint_fill(svg, "f3"), "#F7F7F7");
}

TEST(Svg, Deterministic) {
    const auto e = material_explanation("r1b1k3/pp6/8/8/8/8/PPP5/RNB1K3 w - - 0 1");
    EXPECT_EQ(to_svg_board(e), to_svg_board(e));
    EXPECT_EQ(to_waterfall_svg(e), to_waterfall_svg(e));
    EXPECT_EQ(to_waterfall_text(e), to_waterfall_text(e));
}

TEST(Waterfall, RunningTotalReachesFullValue) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) {
        MaterialEvaluator m;
        const auto e = explain(testing::random_position(rng, 1 + i % 9), m, kLimits);
        const auto rows = waterfall_rows(e);
        ASSERT_EQ(rows.size(), e.contributions.size());
        double prev_mag = 1e9;
        double running = e.base_value;
        for (const auto& r : rows) {
            EXPECT_LE(std::abs(r.phi), prev_mag);
            prev_mag = std::abs(r.phi);
            EXPECT_EQ(r.before, running);
            running = r.after;
        }
        EXPECT_NEAR(running, e.full_value, 1e-9);
    }
}

TEST(Waterfall, SinglePiece) {
    const auto e = material_explanation("7k/8/8/8/8/8/8/R6K w - - 0 1");
    const auto rows = waterfall_rows(e);
    ASSERT_EQ(rows.size(), 1U);
    EXPECT_NEAR(rows[0].phi, e.full_value - 0.5, 1e-12);
    EXPECT_EQ(row_label(rows[0].piece), "a1 white rook");
}

TEST(Waterfall, KingsOnlyText) {
    const auto text = to_waterfall_text(material_explanation("8/2k5/8/8/8/5K2/8/8 w - - 0 1"));
    EXPECT_NE(text.find("base"), std::string::npos);
    EXPECT_NE(text.find("0.5000"), std::string::npos);
    EXPECT_EQ(text.find("white"), std::string::npos);
    EXPECT_EQ(text.find("black"), std::string::npos);
}

TEST(Waterfall, Golden) {
    const auto e = material_explanation("8/2k5/2q5/8/4R3/4RK2/8/8 w - - 0 1");
    expect_golden("two_rooks_queen.txt", to_waterfall_text(e));
    expect_golden("two_rooks_queen_waterfall.svg", to_waterfall_svg(e));
}

TEST(Comparison, DocumentAndText) {
    auto values = material_value_table_default();
    values[PieceKind::kKnight] = 0;
    MaterialEvaluator plain;
    MaterialEvaluator knightless("knightless", values);
    const auto p = parse_fen("4k3/8/2n5/8/3p4/5N2/4P3/4K3 w - - 0 1");
    const auto a = explain(p, plain, kLimits);
    const auto b = explain(p, knightless, kLimits);
    const auto doc = comparison_document(a, b);
    ASSERT_EQ(doc["deltas"].size(), 4U);
    EXPECT_EQ(doc["deltas"][0]["piece"], "knight");
    EXPECT_EQ(doc["deltas"][1]["piece"], "knight");
    EXPECT_EQ(from_document(doc["a"]), a);
    const auto text = to_comparison_text(a, b);
    EXPECT_NE(text.find("knightless"), std::string::npos);
}

}  // namespace
}  // namespace pieceshap
