#include "pieceshap/position.hpp"

#include <algorithm>
#include <bit>
#include <charconv>

#include <fmt/format.h>

namespace pieceshap {

struct PositionAccess {
    static Position make(const Position::Board& board, const Position::Metadata& meta) { return Position(board, meta); }
};

namespace {

constexpr std::array<std::string_view, kPieceKindCount> kKindNames{"pawn", "knight", "bishop", "rook", "queen", "king"};

std::vector<std::string_view> split_fields(std::string_view text) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) {
            ++pos;
        }
        if (pos >= text.size()) {
            break;
        }
        auto end = pos;
        while (end < text.size() && text[end] != ' ' && text[end] != '\t') {
            ++end;
        }
        fields.push_back(text.substr(pos, end - pos));
        pos = end;
    }
    return fields;
}

std::optional<unsigned> parse_counter(std::string_view s) {
    unsigned value = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        return std::nullopt;
    }
    return value;
}

[[noreturn]] void malformed(int field, const std::string& msg) {
    throw FenError(FenError::Kind::kMalformed, field, msg);
}

}  // namespace

std::string_view to_string(Color c) { return c == Color::kWhite ? "white" : "black"; }

std::string_view to_string(PieceKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<Color> parse_color(std::string_view s) {
    if (s == "white") {
        return Color::kWhite;
    }
    if (s == "black") {
        return Color::kBlack;
    }
    return std::nullopt;
}

std::optional<PieceKind> parse_piece_kind(std::string_view s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == s) {
            return static_cast<PieceKind>(i);
        }
    }
    return std::nullopt;
}

std::optional<Square> Square::parse(std::string_view text) {
    if (text.size() != 2 || text[0] < 'a' || text[0] > 'h' || text[1] < '1' || text[1] > '8') {
        return std::nullopt;
    }
    return Square(text[0] - 'a', text[1] - '1');
}

std::string Square::to_string() const {
    return {static_cast<char>('a' + file()), static_cast<char>('1' + rank())};
}

char Piece::to_char() const {
    static constexpr std::array<char, kPieceKindCount> kLetters{'p', 'n', 'b', 'r', 'q', 'k'};
    const char c = kLetters[static_cast<std::size_t>(kind)];
    return color == Color::kWhite ? static_cast<char>(c - 'a' + 'A') : c;
}

std::optional<Piece> Piece::from_char(char c) {
    const Color color = (c >= 'A' && c <= 'Z') ? Color::kWhite : Color::kBlack;
    const char lower = color == Color::kWhite ? static_cast<char>(c - 'A' + 'a') : c;
    switch (lower) {
        case 'p': return Piece{PieceKind::kPawn, color};
        case 'n': return Piece{PieceKind::kKnight, color};
        case 'b': return Piece{PieceKind::kBishop, color};
        case 'r': return Piece{PieceKind::kRook, color};
        case 'q': return Piece{PieceKind::kQueen, color};
        case 'k': return Piece{PieceKind::kKing, color};
        default: return std::nullopt;
    }
}

std::string PieceInstance::label() const { return piece().to_char() + square.to_string(); }

FenError::FenError(Kind kind, int field, const std::string& message)
    : std::runtime_error(message), kind_(kind), field_(field) {}

std::optional<SetupProblem> structural_problem(const Position::Board& board, const Position::Metadata& meta) {
    std::array<int, 2> kings{};
    std::array<int, 2> totals{};
    for (int i = 0; i < 64; ++i) {
        const auto& p = board[i];
        if (!p) {
            continue;
        }
        const auto c = static_cast<std::size_t>(p->color);
        ++totals[c];
        if (p->kind == PieceKind::kKing) {
            ++kings[c];
        }
        if (p->kind == PieceKind::kPawn && (i / 8 == 0 || i / 8 == 7)) {
            return SetupProblem{1, fmt::format("pawn on back rank at {}", Square::from_index(i).to_string())};
        }
    }
    for (const auto c : {Color::kWhite, Color::kBlack}) {
        const auto ci = static_cast<std::size_t>(c);
        if (kings[ci] != 1) {
            return SetupProblem{1, fmt::format("expected exactly one {} king, found {}", to_string(c), kings[ci])};
        }
        if (totals[ci] > 16) {
            return SetupProblem{1, fmt::format("{} has {} pieces (max 16)", to_string(c), totals[ci])};
        }
    }

    const auto has = [&](const char* sq, PieceKind kind, Color color) {
        const auto& p = board[Square::parse(sq)->index()];
        return p && p->kind == kind && p->color == color;
    };
    const auto& cr = meta.castling;
    if ((cr.white_king || cr.white_queen) && !has("e1", PieceKind::kKing, Color::kWhite)) {
        return SetupProblem{3, std::string("white castling right without king on e1")};
    }
    if (cr.white_king && !has("h1", PieceKind::kRook, Color::kWhite)) {
        return SetupProblem{3, std::string("white kingside castling right without rook on h1")};
    }
    if (cr.white_queen && !has("a1", PieceKind::kRook, Color::kWhite)) {
        return SetupProblem{3, std::string("white queenside castling right without rook on a1")};
    }
    if ((cr.black_king || cr.black_queen) && !has("e8", PieceKind::kKing, Color::kBlack)) {
        return SetupProblem{3, std::string("black castling right without king on e8")};
    }
    if (cr.black_king && !has("h8", PieceKind::kRook, Color::kBlack)) {
        return SetupProblem{3, std::string("black kingside castling right without rook on h8")};
    }
    if (cr.black_queen && !has("a8", PieceKind::kRook, Color::kBlack)) {
        return SetupProblem{3, std::string("black queenside castling right without rook on a8")};
    }

    if (meta.en_passant) {
        const Square ep = *meta.en_passant;
        // The side not on move made the double push.
        const Color pusher = opposite(meta.side_to_move);
        const int expected_rank = pusher == Color::kWhite ? 2 : 5;
        if (ep.rank() != expected_rank) {
            return SetupProblem{4, fmt::format("en passant square {} is on the wrong rank for {} to move", ep.to_string(),
                               to_string(meta.side_to_move))};
        }
        const int landed_rank = pusher == Color::kWhite ? 3 : 4;
        const auto& pawn = board[Square(ep.file(), landed_rank).index()];
        if (!pawn || pawn->kind != PieceKind::kPawn || pawn->color != pusher) {
            return SetupProblem{4, fmt::format("en passant square {} without a {} pawn in front of it", ep.to_string(),
                               to_string(pusher))};
        }
        if (board[ep.index()]) {
            return SetupProblem{4, fmt::format("en passant square {} is occupied", ep.to_string())};
        }
    }
    if (meta.fullmove_number < 1) {
        return SetupProblem{6, std::string("fullmove number must be at least 1")};
    }
    return std::nullopt;
}

Position Position::create(const Board& board, const Metadata& meta) {
    if (auto problem = structural_problem(board, meta)) {
        throw FenError(FenError::Kind::kIllegalSetup, problem->fen_field, problem->message);
    }
    return Position(board, meta);
}

std::vector<PieceInstance> Position::pieces() const {
    std::vector<PieceInstance> out;
    for (int i = 0; i < 64; ++i) {
        if (const auto& p = board_[i]) {
            out.push_back({p->kind, p->color, Square::from_index(i)});
        }
    }
    return out;
}

std::size_t Position::piece_count() const {
    return static_cast<std::size_t>(std::count_if(board_.begin(), board_.end(), [](const auto& p) { return p.has_value(); }));
}

Square Position::king_square(Color c) const {
    for (int i = 0; i < 64; ++i) {
        const auto& p = board_[i];
        if (p && p->kind == PieceKind::kKing && p->color == c) {
            return Square::from_index(i);
        }
    }
    // Unreachable for positions that passed structural validation.
    throw std::logic_error("position has no king");
}

Position parse_fen(std::string_view text) {
    const auto fields = split_fields(text);
    if (fields.size() != 4 && fields.size() != 6) {
        malformed(0, fmt::format("expected 4 or 6 FEN fields, got {}", fields.size()));
    }

    Position::Board board{};
    int rank = 7;
    int file = 0;
    for (const char c : fields[0]) {
        if (c == '/') {
            if (file != 8) {
                malformed(1, fmt::format("piece placement: rank {} has {} files", rank + 1, file));
            }
            if (--rank < 0) {
                malformed(1, "piece placement: more than 8 ranks");
            }
            file = 0;
        } else if (c >= '1' && c <= '8') {
            file += c - '0';
            if (file > 8) {
                malformed(1, fmt::format("piece placement: rank {} overflows 8 files", rank + 1));
            }
        } else if (const auto piece = Piece::from_char(c)) {
            if (file >= 8) {
                malformed(1, fmt::format("piece placement: rank {} overflows 8 files", rank + 1));
            }
            board[Square(file, rank).index()] = *piece;
            ++file;
        } else {
            malformed(1, fmt::format("piece placement: unexpected character '{}'", c));
        }
    }
    if (rank != 0 || file != 8) {
        malformed(1, "piece placement: expected 8 complete ranks");
    }

    Position::Metadata meta;
    if (fields[1] == "w") {
        meta.side_to_move = Color::kWhite;
    } else if (fields[1] == "b") {
        meta.side_to_move = Color::kBlack;
    } else {
        malformed(2, fmt::format("side to move: expected 'w' or 'b', got '{}'", fields[1]));
    }

    if (fields[2] != "-") {
        for (const char c : fields[2]) {
            bool* flag = nullptr;
            switch (c) {
                case 'K': flag = &meta.castling.white_king; break;
                case 'Q': flag = &meta.castling.white_queen; break;
                case 'k': flag = &meta.castling.black_king; break;
                case 'q': flag = &meta.castling.black_queen; break;
                default: malformed(3, fmt::format("castling rights: unexpected character '{}'", c));
            }
            if (*flag) {
                malformed(3, fmt::format("castling rights: duplicate '{}'", c));
            }
            *flag = true;
        }
    }

    if (fields[3] != "-") {
        const auto ep = Square::parse(fields[3]);
        if (!ep) {
            malformed(4, fmt::format("en passant: invalid square '{}'", fields[3]));
        }
        meta.en_passant = ep;
    }

    if (fields.size() == 6) {
        const auto half = parse_counter(fields[4]);
        if (!half) {
            malformed(5, fmt::format("halfmove clock: invalid number '{}'", fields[4]));
        }
        const auto full = parse_counter(fields[5]);
        if (!full) {
            malformed(6, fmt::format("fullmove number: invalid number '{}'", fields[5]));
        }
        meta.halfmove_clock = *half;
        meta.fullmove_number = std::max(*full, 1U);
    }

    if (auto problem = structural_problem(board, meta)) {
        throw FenError(FenError::Kind::kIllegalSetup, problem->fen_field, problem->message);
    }
    return PositionAccess::make(board, meta);
}

namespace {

std::string placement_and_flags(const Position& position) {
    std::string out;
    for (int rank = 7; rank >= 0; --rank) {
        int empty = 0;
        for (int file = 0; file < 8; ++file) {
            const auto& p = position.at(Square(file, rank));
            if (!p) {
                ++empty;
                continue;
            }
            if (empty > 0) {
                out += static_cast<char>('0' + empty);
                empty = 0;
            }
            out += p->to_char();
        }
        if (empty > 0) {
            out += static_cast<char>('0' + empty);
        }
        if (rank > 0) {
            out += '/';
        }
    }
    out += position.side_to_move() == Color::kWhite ? " w " : " b ";
    const auto& cr = position.castling();
    if (!cr.any()) {
        out += '-';
    } else {
        if (cr.white_king) out += 'K';
        if (cr.white_queen) out += 'Q';
        if (cr.black_king) out += 'k';
        if (cr.black_queen) out += 'q';
    }
    out += ' ';
    out += position.en_passant() ? position.en_passant()->to_string() : "-";
    return out;
}

}  // namespace

std::string to_fen(const Position& position) {
    return fmt::format("{} {} {}", placement_and_flags(position), position.halfmove_clock(), position.fullmove_number());
}

std::string canonical_fen(const Position& position) { return placement_and_flags(position) + " 0 1"; }

PieceIndexing non_king_indexing(const Position& position) {
    PieceIndexing indexing;
    for (const auto& p : position.pieces()) {
        if (p.kind != PieceKind::kKing) {
            indexing.pieces.push_back(p);
        }
    }
    return indexing;
}

SubsetId::SubsetId(std::uint64_t bits, unsigned width) : bits_(bits), width_(width) {
    if (width > kMaxWidth) {
        throw std::invalid_argument(fmt::format("subset width {} exceeds {}", width, kMaxWidth));
    }
    if ((bits >> width) != 0) {
        throw std::invalid_argument(fmt::format("subset bits exceed width {}", width));
    }
}

SubsetId SubsetId::all(unsigned width) {
    if (width > kMaxWidth) {
        throw std::invalid_argument(fmt::format("subset width {} exceeds {}", width, kMaxWidth));
    }
    return SubsetId((std::uint64_t{1} << width) - 1, width);
}

SubsetId SubsetId::none(unsigned width) { return SubsetId(0, width); }

unsigned SubsetId::size() const { return static_cast<unsigned>(std::popcount(bits_)); }

Position build_subset_position(const Position& position, const PieceIndexing& indexing, SubsetId subset) {
    if (subset.width() != indexing.size()) {
        throw std::invalid_argument(
            fmt::format("subset width {} does not match {} non-king pieces", subset.width(), indexing.size()));
    }
    Position::Board board{};
    board[position.king_square(Color::kWhite).index()] = Piece{PieceKind::kKing, Color::kWhite};
    board[position.king_square(Color::kBlack).index()] = Piece{PieceKind::kKing, Color::kBlack};
    for (unsigned i = 0; i < indexing.size(); ++i) {
        if (subset.contains(i)) {
            const auto& p = indexing.pieces[i];
            board[p.square.index()] = p.piece();
        }
    }

    auto meta = position.metadata();
    const auto rook_on = [&](const char* sq, Color c) {
        const auto& p = board[Square::parse(sq)->index()];
        return p && p->kind == PieceKind::kRook && p->color == c;
    };
    meta.castling.white_king = meta.castling.white_king && rook_on("h1", Color::kWhite);
    meta.castling.white_queen = meta.castling.white_queen && rook_on("a1", Color::kWhite);
    meta.castling.black_king = meta.castling.black_king && rook_on("h8", Color::kBlack);
    meta.castling.black_queen = meta.castling.black_queen && rook_on("a8", Color::kBlack);
    if (meta.en_passant) {
        const Color pusher = opposite(meta.side_to_move);
        const Square landed(meta.en_passant->file(), pusher == Color::kWhite ? 3 : 4);
        const auto& pawn = board[landed.index()];
        if (!pawn || pawn->kind != PieceKind::kPawn || pawn->color != pusher) {
            meta.en_passant.reset();
        }
    }
    return PositionAccess::make(board, meta);
}

Position build_subset_position(const Position& position, SubsetId subset) {
    return build_subset_position(position, non_king_indexing(position), subset);
}

bool is_attacked(const Position::Board& board, Square target, Color by) {
    const int tf = target.file();
    const int tr = target.rank();
    const auto is = [&](int file, int rank, PieceKind kind) {
        if (file < 0 || file > 7 || rank < 0 || rank > 7) {
            return false;
        }
        const auto& p = board[rank * 8 + file];
        return p && p->color == by && p->kind == kind;
    };

    // A pawn of `by` attacks diagonally forward, so look one rank behind the target.
    const int pawn_rank = by == Color::kWhite ? tr - 1 : tr + 1;
    if (is(tf - 1, pawn_rank, PieceKind::kPawn) || is(tf + 1, pawn_rank, PieceKind::kPawn)) {
        return true;
    }

    static constexpr std::array<std::array<int, 2>, 8> kKnight{
        {{1, 2}, {2, 1}, {2, -1}, {1, -2}, {-1, -2}, {-2, -1}, {-2, 1}, {-1, 2}}};
    for (const auto& [df, dr] : kKnight) {
        if (is(tf + df, tr + dr, PieceKind::kKnight)) {
            return true;
        }
    }

    static constexpr std::array<std::array<int, 2>, 8> kKing{
        {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
    for (const auto& [df, dr] : kKing) {
        if (is(tf + df, tr + dr, PieceKind::kKing)) {
            return true;
        }
    }

    const auto slide = [&](int df, int dr, PieceKind slider) {
        int f = tf + df;
        int r = tr + dr;
        while (f >= 0 && f < 8 && r >= 0 && r < 8) {
            if (const auto& p = board[r * 8 + f]) {
                return p->color == by && (p->kind == slider || p->kind == PieceKind::kQueen);
            }
            f += df;
            r += dr;
        }
        return false;
    };
    return slide(1, 0, PieceKind::kRook) || slide(-1, 0, PieceKind::kRook) || slide(0, 1, PieceKind::kRook) ||
           slide(0, -1, PieceKind::kRook) || slide(1, 1, PieceKind::kBishop) || slide(1, -1, PieceKind::kBishop) ||
           slide(-1, 1, PieceKind::kBishop) || slide(-1, -1, PieceKind::kBishop);
}

bool in_check(const Position& position, Color side) {
    return is_attacked(position.board(), position.king_square(side), opposite(side));
}

Legality legality_status(const Position& position) {
    if (structural_problem(position.board(), position.metadata())) {
        return Legality::kStructurallyInvalid;
    }
    if (in_check(position, opposite(position.side_to_move()))) {
        return Legality::kSideNotToMoveInCheck;
    }
    return Legality::kLegal;
}

std::string_view to_string(Legality l) {
    switch (l) {
        case Legality::kLegal: return "legal";
        case Legality::kSideNotToMoveInCheck: return "side-not-to-move-in-check";
        case Legality::kStructurallyInvalid: return "structurally-invalid";
    }
    return "?";
}

std::string_view to_string(RepairStatus s) {
    switch (s) {
        case RepairStatus::kLegalAsIs: return "legal-as-is";
        case RepairStatus::kFlippedSideToMove: return "flipped-side-to-move";
        case RepairStatus::kUnresolvable: return "unresolvable";
    }
    return "?";
}

Position flip_side_to_move(const Position& position) {
    auto meta = position.metadata();
    meta.side_to_move = opposite(meta.side_to_move);
    meta.en_passant.reset();
    return PositionAccess::make(position.board(), meta);
}

RepairOutcome repair(const Position& position) {
    switch (legality_status(position)) {
        case Legality::kLegal: return {RepairStatus::kLegalAsIs, position};
        case Legality::kStructurallyInvalid: return {RepairStatus::kUnresolvable, position};
        case Legality::kSideNotToMoveInCheck: break;
    }
    auto flipped = flip_side_to_move(position);
    if (legality_status(flipped) == Legality::kLegal) {
        return {RepairStatus::kFlippedSideToMove, std::move(flipped)};
    }
    return {RepairStatus::kUnresolvable, position};
}

}  // namespace pieceshap
