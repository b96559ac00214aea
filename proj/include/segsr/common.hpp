#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace segsr {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

// Error taxonomy. CLI maps UsageError to exit 2, everything else to exit 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct SizeMismatchError : Error {
  using Error::Error;
};
struct VersionError : Error {
  using Error::Error;
};
struct ChecksumError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

// Seeded RNG with a fixed, platform-independent sampling scheme. The std::
// distributions are implementation-defined, which would break the
// byte-identical rerun contract across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64();
  // [0, 1) with 53 random bits
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }
  // uniform over [0, n), rejection sampled
  uint64_t uniform_int(uint64_t n);

 private:
  uint64_t s_;
};

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(const void* data, size_t n);
uint64_t derive_seed(uint64_t base, std::string_view tag);
uint64_t derive_seed(uint64_t base, uint64_t index);

std::string to_hex(uint64_t x);

// Infinity-norm relative disagreement between two gradient vectors.
double max_rel_err(const std::vector<double>& a, const std::vector<double>& b);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t n);

}  // namespace segsr
