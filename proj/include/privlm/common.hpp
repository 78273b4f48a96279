#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace privlm {

// Error categories map onto CLI exit codes: Config/Parse/Schema -> 2,
// Prerequisite -> 3, Divergence -> 4.
enum class ErrorKind {
    Config,
    Parse,
    Schema,
    Precondition,
    Prerequisite,
    Divergence,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

// FNV-1a, 64 bit. Used for checkpoint checksums and run manifests.
class Fnv64 {
public:
    void update(const void* data, std::size_t n);
    void update_u32(uint32_t v);
    void update_u64(uint64_t v);
    void update_str(const std::string& s);
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 1469598103934665603ull;
};

uint64_t fnv64_bytes(const void* data, std::size_t n);
uint64_t fnv64_file(const std::string& path);

// Deterministic RNG. splitmix64 core with hand-rolled distributions so
// results do not depend on the standard library implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64();
    double next_unit();                    // [0, 1)
    int uniform_int(int lo, int hi);       // inclusive bounds
    double normal(double mean, double stddev);
    double exponential();                  // rate 1

    // derive an independent stream, e.g. one per sample
    Rng fork(uint64_t salt);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))];
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// --- small file helpers ---
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<std::string> read_lines(const std::string& path);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

// Default location of the lexicon / template assets. Compiled in for the
// source tree; override with PRIVLM_DATA env var or explicit config paths.
std::string default_data_dir();

}  // namespace privlm
