#include "privlm/common.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace privlm {

namespace {
constexpr uint64_t kFnvPrime = 1099511628211ull;

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace

void Fnv64::update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h_ ^= p[i];
        h_ *= kFnvPrime;
    }
}

void Fnv64::update_u32(uint32_t v) { update(&v, sizeof v); }
void Fnv64::update_u64(uint64_t v) { update(&v, sizeof v); }
void Fnv64::update_str(const std::string& s) { update(s.data(), s.size()); }

uint64_t fnv64_bytes(const void* data, std::size_t n) {
    Fnv64 h;
    h.update(data, n);
    return h.digest();
}

uint64_t fnv64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open file for hashing: " + path);
    Fnv64 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.digest();
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
    require(lo <= hi, ErrorKind::Precondition, "uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal(double mean, double stddev) {
    if (have_spare_) {
        have_spare_ = false;
        return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
        u1 = next_unit();
    } while (u1 <= 1e-300);
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
}

double Rng::exponential() {
    double u = 0.0;
    do {
        u = next_unit();
    } while (u <= 1e-300);
    return -std::log(u);
}

Rng Rng::fork(uint64_t salt) {
    uint64_t s = state_;
    uint64_t a = splitmix64(s);
    return Rng(a ^ (salt * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::Io, "cannot write file: " + path);
    out << content;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::string text = read_text_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

bool file_exists(const std::string& path) {
    return std::filesystem::exists(path);
}

void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

std::string default_data_dir() {
    if (const char* env = std::getenv("PRIVLM_DATA")) return env;
#ifdef PRIVLM_DATA_DIR
    return PRIVLM_DATA_DIR;
#else
    return "data";
#endif
}

}  // namespace privlm
