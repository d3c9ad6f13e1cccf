#pragma once

// DBC message/signal database and the physical <-> raw signal codec.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cansim::dbc {

enum class ByteOrder { little_endian, big_endian };
enum class Signedness { unsigned_, signed_ };

struct SignalSpec {
  std::string name;
  int start_bit = 0;
  int bit_length = 1;
  ByteOrder byte_order = ByteOrder::little_endian;
  Signedness signedness = Signedness::unsigned_;
  double factor = 1.0;
  double offset = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::string unit;
  std::vector<std::string> receivers;

  bool is_signed() const { return signedness == Signedness::signed_; }
  // A DBC range of [0|0] means "unconstrained".
  bool has_range() const { return min != 0.0 || max != 0.0; }
  std::int64_t raw_min() const;
  std::int64_t raw_max() const;
};

struct MessageSpec {
  std::uint32_t id = 0;
  bool extended = false;
  std::string name;
  int dlc = 0;
  std::string sender;
  std::vector<SignalSpec> signals;

  const SignalSpec* find_signal(std::string_view signal_name) const;
};

// Map key combining the identifier with the IDE flag so that a standard and
// an extended frame with the same numeric id do not collide.
constexpr std::uint64_t message_key(std::uint32_t id, bool extended) {
  return (static_cast<std::uint64_t>(extended) << 32) | id;
}

struct Diagnostic {
  int line = 0;
  std::string message;
};

struct Database {
  std::string version;
  std::map<std::uint64_t, MessageSpec> messages;
  std::vector<Diagnostic> diagnostics;

  const MessageSpec* find(std::uint32_t id, bool extended = false) const;
  const MessageSpec* find(std::string_view name) const;
};

enum class DbcErrorKind {
  syntax,
  overlap,
  dlc_overflow,
  duplicate_id,
  duplicate_name,
  invalid_value,
};

std::string_view to_string(DbcErrorKind kind);

class DbcError : public std::runtime_error {
 public:
  DbcError(DbcErrorKind kind, int line, int column, const std::string& what);

  DbcErrorKind kind() const { return kind_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  DbcErrorKind kind_;
  int line_;
  int column_;
};

// Thrown by the codec for inputs that have no encoding (NaN, missing
// values, wrong payload size).
class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the VERSION / BO_ / SG_ subset of the DBC format. Other statement
/// kinds are skipped and recorded in Database::diagnostics. Extended ids are
/// recognized by bit 31 of the BO_ identifier.
Database parse_dbc(std::string_view text);

/// Reads and parses a file. Throws std::runtime_error if unreadable.
Database load_dbc(const std::string& path);

/// Absolute payload bit positions (byte * 8 + bit, bit 0 = LSB of the byte)
/// covered by the signal, ordered from the raw value's LSB to its MSB.
/// Positions may be negative or exceed 63 for malformed big-endian layouts.
std::vector<int> signal_bit_positions(const SignalSpec& spec);

struct EncodeResult {
  std::int64_t raw = 0;
  bool saturated = false;
};

/// phys -> raw with clamping to [min, max] and to the representable raw
/// range, round-half-away-from-zero. Throws CodecError on NaN.
EncodeResult encode_signal_checked(const SignalSpec& spec, double phys);
std::int64_t encode_signal(const SignalSpec& spec, double phys);

double decode_signal(const SignalSpec& spec, std::int64_t raw);

using SignalValues = std::map<std::string, double, std::less<>>;

struct PackResult {
  std::vector<std::uint8_t> payload;
  std::vector<std::string> saturated_signals;
};

PackResult pack_message_checked(const MessageSpec& msg, const SignalValues& values);
std::vector<std::uint8_t> pack_message(const MessageSpec& msg, const SignalValues& values);

/// Raw (integer) value of one signal inside a payload of any length >= the
/// signal's span.
std::int64_t extract_raw(const SignalSpec& spec, std::span<const std::uint8_t> payload);

SignalValues unpack_message(const MessageSpec& msg, std::span<const std::uint8_t> payload);

}  // namespace cansim::dbc
