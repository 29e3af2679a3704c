#pragma once
// Shared plumbing: error types, string helpers, TSV escaping, hashing,
// and a deterministic RNG wrapper used everywhere a seed appears.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace persona {

// Base error; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A pipeline stage was invoked before its predecessor (exit code 3).
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Strings

std::string to_lower(std::string s);
std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);
std::vector<std::string> split_ws(const std::string& s);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
bool starts_with(const std::string& s, const std::string& prefix);

// Escape tabs/newlines/backslashes so free text fits in one TSV field.
std::string escape_field(const std::string& s);
std::string unescape_field(const std::string& s);

// Locale-independent numeric formatting. `fmt_g17` round-trips doubles.
std::string fmt_g17(double v);
std::string fmt_fixed(double v, int precision);

double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

// ---------------------------------------------------------------------------
// Hashing (FNV-1a 64) — used for config fingerprints in artifact headers.

std::uint64_t fnv1a64(const std::string& s);
std::string to_hex(std::uint64_t v);

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64's output sequence is fixed by the
// standard; the distributions here are hand-rolled so streams are identical
// across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_seed_(seed), x_(splitmix(seed)) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double uniform();
    // Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n);
    // Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t seed() const { return state_seed_; }

private:
    static std::uint64_t splitmix(std::uint64_t x);
    std::uint64_t state_seed_;
    std::uint64_t x_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small file helpers.

bool file_exists(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Parses "k1=v1 k2=v2 ..." metadata from an artifact header line.
std::map<std::string, std::string> parse_header_kv(const std::string& line);

}  // namespace persona
