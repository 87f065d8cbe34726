#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pieceshap {

enum class Color : std::uint8_t { kWhite, kBlack };

constexpr Color opposite(Color c) { return c == Color::kWhite ? Color::kBlack : Color::kWhite; }

enum class PieceKind : std::uint8_t { kPawn, kKnight, kBishop, kRook, kQueen, kKing };

inline constexpr std::size_t kPieceKindCount = 6;

std::string_view to_string(Color c);
std::string_view to_string(PieceKind k);
std::optional<Color> parse_color(std::string_view s);
std::optional<PieceKind> parse_piece_kind(std::string_view s);

/// A board square; index = rank * 8 + file, so a1 = 0 and h8 = 63.
class Square {
public:
    constexpr Square() = default;
    constexpr Square(int file, int rank) : index_(static_cast<std::uint8_t>(rank * 8 + file)) {}

    static constexpr Square from_index(int index) { return Square(index % 8, index / 8); }
    /// Parses algebraic notation such as "e4".
    static std::optional<Square> parse(std::string_view text);

    constexpr int index() const { return index_; }
    constexpr int file() const { return index_ % 8; }
    constexpr int rank() const { return index_ / 8; }

    std::string to_string() const;

    constexpr auto operator<=>(const Square&) const = default;

private:
    std::uint8_t index_ = 0;
};

struct Piece {
    PieceKind kind;
    Color color;

    /// FEN letter: uppercase for white.
    char to_char() const;
    static std::optional<Piece> from_char(char c);

    constexpr auto operator<=>(const Piece&) const = default;
};

struct PieceInstance {
    PieceKind kind;
    Color color;
    Square square;

    Piece piece() const { return {kind, color}; }
    /// e.g. "Re4" / "qc6" (case encodes color).
    std::string label() const;

    constexpr auto operator<=>(const PieceInstance&) const = default;
};

struct CastlingRights {
    bool white_king = false;
    bool white_queen = false;
    bool black_king = false;
    bool black_queen = false;

    bool any() const { return white_king || white_queen || black_king || black_queen; }
    constexpr auto operator<=>(const CastlingRights&) const = default;
};

class FenError : public std::runtime_error {
public:
    enum class Kind { kMalformed, kIllegalSetup };

    /// field is the 1-based FEN field at fault, 0 when the problem spans the whole record.
    FenError(Kind kind, int field, const std::string& message);

    Kind kind() const { return kind_; }
    int field() const { return field_; }

private:
    Kind kind_;
    int field_;
};

/// A complete chess position. Instances obtained from parse_fen or
/// Position::create always satisfy the structural invariants.
class Position {
public:
    using Board = std::array<std::optional<Piece>, 64>;

    struct Metadata {
        Color side_to_move = Color::kWhite;
        CastlingRights castling{};
        std::optional<Square> en_passant{};
        unsigned halfmove_clock = 0;
        unsigned fullmove_number = 1;

        bool operator==(const Metadata&) const = default;
    };

    /// Throws FenError(kIllegalSetup) when an invariant does not hold.
    static Position create(const Board& board, const Metadata& meta);

    const Board& board() const { return board_; }
    const std::optional<Piece>& at(Square sq) const { return board_[sq.index()]; }
    Color side_to_move() const { return meta_.side_to_move; }
    const CastlingRights& castling() const { return meta_.castling; }
    const std::optional<Square>& en_passant() const { return meta_.en_passant; }
    unsigned halfmove_clock() const { return meta_.halfmove_clock; }
    unsigned fullmove_number() const { return meta_.fullmove_number; }
    const Metadata& metadata() const { return meta_; }

    /// All pieces, kings included, in ascending square order.
    std::vector<PieceInstance> pieces() const;
    std::size_t piece_count() const;
    Square king_square(Color c) const;

    bool operator==(const Position&) const = default;

private:
    friend struct PositionAccess;

    Position(const Board& board, const Metadata& meta) : board_(board), meta_(meta) {}

    Board board_{};
    Metadata meta_{};
};

struct SetupProblem {
    int fen_field;  // 1 = placement, 3 = castling, 4 = en passant, 6 = fullmove
    std::string message;
};

/// The first violated structural invariant, if any.
std::optional<SetupProblem> structural_problem(const Position::Board& board, const Position::Metadata& meta);

/// Accepts 4- or 6-field FEN. Missing counters default to "0 1"; a fullmove number of 0 is read as 1.
Position parse_fen(std::string_view text);
std::string to_fen(const Position& position);
/// FEN with the move counters normalized to "0 1"; identifies positions for caching.
std::string canonical_fen(const Position& position);

/// The n non-king pieces, sorted by ascending square index.
struct PieceIndexing {
    std::vector<PieceInstance> pieces;

    std::size_t size() const { return pieces.size(); }
    bool operator==(const PieceIndexing&) const = default;
};

PieceIndexing non_king_indexing(const Position& position);

/// Coalition of non-king pieces; bit i set means piece i of the indexing is kept.
class SubsetId {
public:
    static constexpr unsigned kMaxWidth = 63;

    /// Throws std::invalid_argument when width > 63 or bits exceed the width.
    SubsetId(std::uint64_t bits, unsigned width);

    static SubsetId all(unsigned width);
    static SubsetId none(unsigned width);

    std::uint64_t bits() const { return bits_; }
    unsigned width() const { return width_; }
    bool contains(unsigned i) const { return (bits_ >> i) & 1U; }
    unsigned size() const;
    SubsetId with(unsigned i) const { return SubsetId(bits_ | (std::uint64_t{1} << i), width_); }
    SubsetId without(unsigned i) const { return SubsetId(bits_ & ~(std::uint64_t{1} << i), width_); }

    bool operator==(const SubsetId&) const = default;

private:
    std::uint64_t bits_;
    unsigned width_;
};

/// Both kings plus the selected pieces, with the original metadata. Castling
/// flags whose rook was removed and an en passant square whose pawn was
/// removed are cleared.
Position build_subset_position(const Position& position, const PieceIndexing& indexing, SubsetId subset);
Position build_subset_position(const Position& position, SubsetId subset);

/// True when a piece of color `by` attacks `target`.
bool is_attacked(const Position::Board& board, Square target, Color by);
bool in_check(const Position& position, Color side);

enum class Legality { kLegal, kSideNotToMoveInCheck, kStructurallyInvalid };

Legality legality_status(const Position& position);

enum class RepairStatus { kLegalAsIs, kFlippedSideToMove, kUnresolvable };

std::string_view to_string(Legality l);
std::string_view to_string(RepairStatus s);

struct RepairOutcome {
    RepairStatus status;
    /// Meaningful unless status is kUnresolvable.
    Position position;
};

/// Legal positions pass through; otherwise the side to move is switched
/// (dropping any en passant square) and the result re-checked.
RepairOutcome repair(const Position& position);

/// Same placement with the other side to move and no en passant square.
Position flip_side_to_move(const Position& position);

}  // namespace pieceshap
