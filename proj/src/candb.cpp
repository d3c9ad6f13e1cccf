#include "cansim/candb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace cansim::dbc {

namespace {

constexpr std::uint32_t kExtendedFlag = 0x80000000u;
constexpr std::uint32_t kMaxExtendedId = 0x1FFFFFFFu;
constexpr std::uint32_t kMaxStandardId = 0x7FFu;

bool is_ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}

bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

// Single-line scanner. Columns are 1-based for error messages.
class Cursor {
 public:
  Cursor(std::string_view text, int line) : text_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) {
      fail(std::string("expected '") + c + "'");
    }
    ++pos_;
  }

  std::string identifier(const char* what) {
    skip_ws();
    const std::size_t begin = pos_;
    if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) {
      fail(std::string("expected ") + what);
    }
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(begin, pos_ - begin));
  }

  template <typename Int>
  Int integer(const char* what) {
    skip_ws();
    Int value{};
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr == first) fail(std::string("expected ") + what);
    pos_ += static_cast<std::size_t>(ptr - first);
    return value;
  }

  double number(const char* what) {
    skip_ws();
    // from_chars rejects a leading '+', which some DBC writers emit.
    if (pos_ < text_.size() && text_[pos_] == '+') ++pos_;
    double value = 0.0;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr == first || !std::isfinite(value)) {
      fail(std::string("expected ") + what);
    }
    pos_ += static_cast<std::size_t>(ptr - first);
    return value;
  }

  std::string quoted(const char* what) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '"') fail(std::string("expected quoted ") + what);
    const std::size_t begin = ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') ++pos_;
    if (pos_ >= text_.size()) fail("unterminated string");
    std::string out(text_.substr(begin, pos_ - begin));
    ++pos_;
    return out;
  }

  char any_of(std::string_view options, const char* what) {
    skip_ws();
    if (pos_ >= text_.size() || options.find(text_[pos_]) == std::string_view::npos) {
      fail(std::string("expected ") + what);
    }
    return text_[pos_++];
  }

  std::string_view rest() {
    skip_ws();
    return text_.substr(pos_);
  }

  int column() const { return static_cast<int>(pos_) + 1; }
  int line() const { return line_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw DbcError(DbcErrorKind::syntax, line_, column(), message);
  }

 private:
  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

std::string_view leading_keyword(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  std::size_t j = i;
  while (j < line.size() && is_ident_char(line[j])) ++j;
  return line.substr(i, j - i);
}

void validate_signal_layout(const MessageSpec& msg, const SignalSpec& sig, int line) {
  const int capacity = msg.dlc * 8;
  for (int pos : signal_bit_positions(sig)) {
    if (pos < 0 || pos >= capacity) {
      throw DbcError(DbcErrorKind::dlc_overflow, line, 1,
                     "signal " + sig.name + " does not fit in " + std::to_string(msg.dlc) +
                         "-byte message " + msg.name);
    }
  }
}

void validate_no_overlap(const MessageSpec& msg, const SignalSpec& sig, int line) {
  const auto mine = signal_bit_positions(sig);
  const std::set<int> mine_set(mine.begin(), mine.end());
  for (const auto& other : msg.signals) {
    for (int pos : signal_bit_positions(other)) {
      if (mine_set.count(pos) != 0) {
        throw DbcError(DbcErrorKind::overlap, line, 1,
                       "signals " + other.name + " and " + sig.name + " overlap in message " +
                           msg.name + " (bit " + std::to_string(pos) + ")");
      }
    }
  }
}

SignalSpec parse_signal(Cursor& cur) {
  SignalSpec sig;
  sig.name = cur.identifier("signal name");
  if (!cur.peek(':')) cur.fail("multiplexed signals are not supported");
  cur.expect(':');
  const int start_col = cur.column();
  const auto start = cur.integer<long long>("start bit");
  cur.expect('|');
  const auto length = cur.integer<long long>("bit length");
  cur.expect('@');
  const char endian = cur.any_of("01", "byte order 0 or 1");
  const char sign = cur.any_of("+-", "sign + or -");
  if (start < 0 || start > 63) {
    throw DbcError(DbcErrorKind::invalid_value, cur.line(), start_col, "start bit out of range 0..63");
  }
  if (length < 1 || length > 64) {
    throw DbcError(DbcErrorKind::invalid_value, cur.line(), start_col, "bit length out of range 1..64");
  }
  sig.start_bit = static_cast<int>(start);
  sig.bit_length = static_cast<int>(length);
  sig.byte_order = endian == '1' ? ByteOrder::little_endian : ByteOrder::big_endian;
  sig.signedness = sign == '-' ? Signedness::signed_ : Signedness::unsigned_;

  cur.expect('(');
  const int factor_col = cur.column();
  sig.factor = cur.number("factor");
  cur.expect(',');
  sig.offset = cur.number("offset");
  cur.expect(')');
  cur.expect('[');
  const int range_col = cur.column();
  sig.min = cur.number("minimum");
  cur.expect('|');
  sig.max = cur.number("maximum");
  cur.expect(']');
  sig.unit = cur.quoted("unit");

  if (sig.factor == 0.0) {
    throw DbcError(DbcErrorKind::invalid_value, cur.line(), factor_col, "factor must be non-zero");
  }
  if (sig.min > sig.max) {
    throw DbcError(DbcErrorKind::invalid_value, cur.line(), range_col, "minimum exceeds maximum");
  }

  std::string_view receivers = cur.rest();
  while (!receivers.empty()) {
    const auto comma = receivers.find_first_of(", \t");
    auto token = receivers.substr(0, comma);
    if (!token.empty()) sig.receivers.emplace_back(token);
    if (comma == std::string_view::npos) break;
    receivers.remove_prefix(comma + 1);
  }
  return sig;
}

}  // namespace

std::string_view to_string(DbcErrorKind kind) {
  switch (kind) {
    case DbcErrorKind::syntax: return "syntax";
    case DbcErrorKind::overlap: return "overlap";
    case DbcErrorKind::dlc_overflow: return "dlc_overflow";
    case DbcErrorKind::duplicate_id: return "duplicate_id";
    case DbcErrorKind::duplicate_name: return "duplicate_name";
    case DbcErrorKind::invalid_value: return "invalid_value";
  }
  return "unknown";
}

DbcError::DbcError(DbcErrorKind kind, int line, int column, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + std::string(to_string(kind)) + ": " + what),
      kind_(kind),
      line_(line),
      column_(column) {}

std::int64_t SignalSpec::raw_min() const {
  if (!is_signed()) return 0;
  if (bit_length >= 64) return std::numeric_limits<std::int64_t>::min();
  return -(std::int64_t{1} << (bit_length - 1));
}

std::int64_t SignalSpec::raw_max() const {
  // Unsigned 64-bit signals are capped at INT64_MAX.
  if (bit_length >= 64 || (!is_signed() && bit_length == 63)) {
    return std::numeric_limits<std::int64_t>::max();
  }
  if (is_signed()) return (std::int64_t{1} << (bit_length - 1)) - 1;
  return (std::int64_t{1} << bit_length) - 1;
}

const SignalSpec* MessageSpec::find_signal(std::string_view signal_name) const {
  for (const auto& s : signals) {
    if (s.name == signal_name) return &s;
  }
  return nullptr;
}

const MessageSpec* Database::find(std::uint32_t id, bool extended) const {
  auto it = messages.find(message_key(id, extended));
  return it == messages.end() ? nullptr : &it->second;
}

const MessageSpec* Database::find(std::string_view name) const {
  for (const auto& [key, msg] : messages) {
    if (msg.name == name) return &msg;
  }
  return nullptr;
}

Database parse_dbc(std::string_view text) {
  Database db;
  MessageSpec* current = nullptr;
  bool skipping_message = false;
  int line_no = 0;

  auto next_line = [&text]() {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    return line;
  };

  while (!text.empty()) {
    const std::string_view line = next_line();
    ++line_no;
    const std::string_view keyword = leading_keyword(line);

    if (keyword.empty()) {
      Cursor blank(line, line_no);
      if (!blank.at_end()) {
        db.diagnostics.push_back({line_no, "skipped unrecognized line"});
      }
      continue;
    }

    Cursor cur(line, line_no);
    if (keyword == "VERSION") {
      cur.identifier("VERSION");
      db.version = cur.quoted("version");
      current = nullptr;
    } else if (keyword == "BO_") {
      cur.identifier("BO_");
      const int id_col = cur.column();
      const auto raw_id = cur.integer<std::uint32_t>("message id");
      const auto name = cur.identifier("message name");
      cur.expect(':');
      const int dlc_col = cur.column();
      const auto dlc = cur.integer<int>("dlc");
      const auto sender = cur.identifier("sender");

      const bool extended = (raw_id & kExtendedFlag) != 0;
      const std::uint32_t id = raw_id & ~kExtendedFlag;
      if ((extended && id > kMaxExtendedId) || (!extended && id > kMaxStandardId)) {
        // Covers the VECTOR__INDEPENDENT_SIG_MSG pseudo-message (0xC0000000).
        db.diagnostics.push_back({line_no, "skipped message " + name + " with out-of-range id"});
        current = nullptr;
        skipping_message = true;
        continue;
      }
      if (dlc < 0 || dlc > 8) {
        throw DbcError(DbcErrorKind::dlc_overflow, line_no, dlc_col,
                       "dlc " + std::to_string(dlc) + " exceeds 8 bytes");
      }
      const auto key = message_key(id, extended);
      if (db.messages.count(key) != 0) {
        throw DbcError(DbcErrorKind::duplicate_id, line_no, id_col,
                       "duplicate message id " + std::to_string(id));
      }
      if (db.find(name) != nullptr) {
        throw DbcError(DbcErrorKind::duplicate_name, line_no, id_col, "duplicate message name " + name);
      }
      MessageSpec msg;
      msg.id = id;
      msg.extended = extended;
      msg.name = name;
      msg.dlc = dlc;
      msg.sender = sender;
      current = &db.messages.emplace(key, std::move(msg)).first->second;
      skipping_message = false;
    } else if (keyword == "SG_") {
      cur.identifier("SG_");
      if (skipping_message) continue;
      if (current == nullptr) cur.fail("SG_ outside of a BO_ block");
      SignalSpec sig = parse_signal(cur);
      if (current->find_signal(sig.name) != nullptr) {
        throw DbcError(DbcErrorKind::duplicate_name, line_no, 1,
                       "duplicate signal " + sig.name + " in message " + current->name);
      }
      validate_signal_layout(*current, sig, line_no);
      validate_no_overlap(*current, sig, line_no);
      current->signals.push_back(std::move(sig));
    } else {
      // Any other statement ends the current BO_ block.
      current = nullptr;
      skipping_message = false;
      db.diagnostics.push_back({line_no, "skipped " + std::string(keyword) + " statement"});
    }
  }
  return db;
}

Database load_dbc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open DBC file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dbc(buf.str());
}

std::vector<int> signal_bit_positions(const SignalSpec& spec) {
  std::vector<int> positions;
  positions.reserve(static_cast<std::size_t>(spec.bit_length));
  if (spec.byte_order == ByteOrder::little_endian) {
    for (int i = 0; i < spec.bit_length; ++i) positions.push_back(spec.start_bit + i);
    return positions;
  }
  // Motorola: start_bit names the MSB; walk down within a byte, then jump to
  // bit 7 of the next byte.
  int pos = spec.start_bit;
  for (int i = 0; i < spec.bit_length; ++i) {
    positions.push_back(pos);
    pos = (pos % 8 == 0) ? pos + 15 : pos - 1;
  }
  std::reverse(positions.begin(), positions.end());
  return positions;
}

EncodeResult encode_signal_checked(const SignalSpec& spec, double phys) {
  if (std::isnan(phys)) throw CodecError("NaN value for signal " + spec.name);
  EncodeResult result;
  double value = phys;
  if (spec.has_range()) {
    const double clamped = std::clamp(value, spec.min, spec.max);
    result.saturated = clamped != value;
    value = clamped;
  }
  const double scaled = std::round((value - spec.offset) / spec.factor);
  const auto lo = spec.raw_min();
  const auto hi = spec.raw_max();
  // 2^63 as a double; anything at or above it cannot be converted.
  constexpr double kTwo63 = 9223372036854775808.0;
  if (scaled >= kTwo63 || scaled > static_cast<double>(hi)) {
    result.raw = hi;
    result.saturated = result.saturated || scaled > static_cast<double>(hi);
  } else if (scaled < -kTwo63 || scaled < static_cast<double>(lo)) {
    result.raw = lo;
    result.saturated = true;
  } else {
    result.raw = std::clamp(static_cast<std::int64_t>(scaled), lo, hi);
  }
  return result;
}

std::int64_t encode_signal(const SignalSpec& spec, double phys) {
  return encode_signal_checked(spec, phys).raw;
}

double decode_signal(const SignalSpec& spec, std::int64_t raw) {
  return static_cast<double>(raw) * spec.factor + spec.offset;
}

PackResult pack_message_checked(const MessageSpec& msg, const SignalValues& values) {
  PackResult out;
  out.payload.assign(static_cast<std::size_t>(msg.dlc), 0);
  for (const auto& sig : msg.signals) {
    auto it = values.find(sig.name);
    if (it == values.end()) {
      throw CodecError("missing value for signal " + sig.name + " in message " + msg.name);
    }
    const auto enc = encode_signal_checked(sig, it->second);
    if (enc.saturated) out.saturated_signals.push_back(sig.name);
    const auto bits = static_cast<std::uint64_t>(enc.raw);
    const auto positions = signal_bit_positions(sig);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (((bits >> i) & 1u) == 0) continue;
      const int pos = positions[i];
      out.payload[static_cast<std::size_t>(pos / 8)] |= static_cast<std::uint8_t>(1u << (pos % 8));
    }
  }
  return out;
}

std::vector<std::uint8_t> pack_message(const MessageSpec& msg, const SignalValues& values) {
  return pack_message_checked(msg, values).payload;
}

std::int64_t extract_raw(const SignalSpec& spec, std::span<const std::uint8_t> payload) {
  const auto positions = signal_bit_positions(spec);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int pos = positions[i];
    if (pos < 0 || static_cast<std::size_t>(pos / 8) >= payload.size()) {
      throw CodecError("signal " + spec.name + " lies outside the payload");
    }
    if ((payload[static_cast<std::size_t>(pos / 8)] >> (pos % 8)) & 1u) bits |= std::uint64_t{1} << i;
  }
  if (spec.is_signed() && spec.bit_length < 64 && ((bits >> (spec.bit_length - 1)) & 1u)) {
    bits |= ~std::uint64_t{0} << spec.bit_length;
  }
  if (!spec.is_signed() && bits > static_cast<std::uint64_t>(spec.raw_max())) {
    return spec.raw_max();
  }
  return static_cast<std::int64_t>(bits);
}

SignalValues unpack_message(const MessageSpec& msg, std::span<const std::uint8_t> payload) {
  if (payload.size() != static_cast<std::size_t>(msg.dlc)) {
    throw CodecError("payload for " + msg.name + " has " + std::to_string(payload.size()) +
                     " bytes, expected " + std::to_string(msg.dlc));
  }
  SignalValues out;
  for (const auto& sig : msg.signals) {
    out.emplace(sig.name, decode_signal(sig, extract_raw(sig, payload)));
  }
  return out;
}

}  // namespace cansim::dbc
