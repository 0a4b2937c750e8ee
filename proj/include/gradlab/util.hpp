#pragma once

// Seeded randomness, content hashing and little-endian binary I/O shared by
// every stage.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gradlab {

/// mt19937_64 plus draw helpers whose output does not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform double in [0, 1).
  double uniform();
  double normal();
  bool coin() { return (next() >> 63) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; derives independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

namespace bin {

void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_i32(std::string& out, std::int32_t v);
void put_f64(std::string& out, double v);
void put_str(std::string& out, std::string_view s);
void put_f64s(std::string& out, std::span<const double> v);

/// Cursor over a byte buffer; throws FormatError on truncation.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32();
  double f64();
  std::string str();
  std::vector<double> f64s(std::size_t n);
  void expect_magic(std::string_view magic);
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view take(std::size_t n);
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace bin

/// Formats a double with enough digits to round-trip, in a fixed locale-free
/// representation so CSV output is byte-stable.
std::string fmt_double(double v);

/// RFC 4180 quoting when the field contains a comma, quote or newline.
std::string csv_field(std::string_view s);
/// Splits CSV text written with csv_field into rows of unquoted fields.
/// Quoted fields may not span lines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace gradlab
