#include "privlm/theory.hpp"

#include <cmath>
#include <limits>

#include "privlm/common.hpp"

namespace privlm {

namespace {
std::size_t ipow(std::size_t base, int exp) {
    std::size_t out = 1;
    for (int i = 0; i < exp; ++i) out *= base;
    return out;
}
}  // namespace

JointDist::JointDist(int alphabet, int length) : alphabet_(alphabet), length_(length) {
    require(alphabet >= 1 && alphabet <= 6, ErrorKind::Precondition,
            "JointDist: alphabet size must lie in [1,6]");
    require(length >= 1 && length <= 3, ErrorKind::Precondition,
            "JointDist: length must lie in [1,3]");
    table_.assign(ipow(static_cast<std::size_t>(alphabet), length) * ipow(2, length), 0.0);
}

std::size_t JointDist::index_of(const std::vector<int>& seq, const std::vector<int>& labels) const {
    require(seq.size() == static_cast<std::size_t>(length_) && labels.size() == seq.size(),
            ErrorKind::Precondition, "JointDist: wrong sequence length");
    std::size_t idx = 0;
    for (int i = 0; i < length_; ++i) {
        require(seq[static_cast<std::size_t>(i)] >= 0 && seq[static_cast<std::size_t>(i)] < alphabet_,
                ErrorKind::Precondition, "JointDist: symbol out of range");
        int p = labels[static_cast<std::size_t>(i)];
        require(p == 0 || p == 1, ErrorKind::Precondition, "JointDist: labels must be 0/1");
        idx = idx * static_cast<std::size_t>(alphabet_) + static_cast<std::size_t>(seq[static_cast<std::size_t>(i)]);
        idx = idx * 2 + static_cast<std::size_t>(p);
    }
    return idx;
}

void JointDist::decode_index(std::size_t index, std::vector<int>& seq,
                             std::vector<int>& labels) const {
    seq.assign(static_cast<std::size_t>(length_), 0);
    labels.assign(static_cast<std::size_t>(length_), 0);
    for (int i = length_ - 1; i >= 0; --i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(index % 2);
        index /= 2;
        seq[static_cast<std::size_t>(i)] = static_cast<int>(index % static_cast<std::size_t>(alphabet_));
        index /= static_cast<std::size_t>(alphabet_);
    }
}

double& JointDist::at(const std::vector<int>& seq, const std::vector<int>& labels) {
    return table_[index_of(seq, labels)];
}

double JointDist::at(const std::vector<int>& seq, const std::vector<int>& labels) const {
    return table_[index_of(seq, labels)];
}

double JointDist::total_mass() const {
    double s = 0.0;
    for (double v : table_) s += v;
    return s;
}

void JointDist::normalize() {
    double s = total_mass();
    require(s > 0.0, ErrorKind::Precondition, "JointDist: cannot normalize zero mass");
    for (double& v : table_) v /= s;
}

void JointDist::validate() const {
    for (double v : table_) {
        require(v >= 0.0, ErrorKind::Precondition, "JointDist: negative entry");
    }
    require(std::abs(total_mass() - 1.0) <= 1e-12, ErrorKind::Precondition,
            "JointDist: mass must equal 1 within 1e-12");
}

JointDist JointDist::random(int alphabet, int length, uint64_t seed) {
    JointDist d(alphabet, length);
    Rng rng(seed);
    for (double& v : d.table_) v = rng.exponential();
    d.normalize();
    return d;
}

double MaskedDist::total_mass() const {
    double s = 0.0;
    for (double v : table) s += v;
    return s;
}

double& MaskedDist::at(const std::vector<int>& masked_seq) {
    std::size_t idx = 0;
    for (int sym : masked_seq) {
        require(sym >= 0 && sym < alphabet, ErrorKind::Precondition,
                "MaskedDist: symbol out of range");
        idx = idx * static_cast<std::size_t>(alphabet) + static_cast<std::size_t>(sym);
    }
    return table[idx];
}

double exact_kl(const std::vector<double>& p, const std::vector<double>& q) {
    require(p.size() == q.size(), ErrorKind::Precondition,
            "exact_kl: supports have different shapes");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;  // 0 * log 0 := 0
        if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

MaskedDist mask_pushforward(const JointDist& dist) {
    MaskedDist out;
    out.alphabet = dist.alphabet() + 1;
    out.length = dist.length();
    out.table.assign(ipow(static_cast<std::size_t>(out.alphabet), out.length), 0.0);
    std::vector<int> seq, labels, masked(static_cast<std::size_t>(dist.length()));
    const int anon = dist.alphabet();
    for (std::size_t idx = 0; idx < dist.size(); ++idx) {
        double mass = dist.table()[idx];
        if (mass == 0.0) continue;
        dist.decode_index(idx, seq, labels);
        for (std::size_t t = 0; t < masked.size(); ++t) {
            masked[t] = labels[t] == 1 ? anon : seq[t];
        }
        out.at(masked) += mass;
    }
    return out;
}

DpiTrial check_dpi_once(const JointDist& truth, const JointDist& model) {
    require(truth.alphabet() == model.alphabet() && truth.length() == model.length(),
            ErrorKind::Precondition, "check_dpi: shape mismatch");
    DpiTrial trial;
    trial.rhs = exact_kl(truth.table(), model.table());
    MaskedDist truth_m = mask_pushforward(truth);
    MaskedDist model_m = mask_pushforward(model);
    trial.lhs = exact_kl(truth_m.table, model_m.table);
    return trial;
}

DpiReport check_dpi(int trials, int max_alphabet, int max_length, uint64_t seed, double slack) {
    require(trials >= 1, ErrorKind::Precondition, "check_dpi: trials must be >= 1");
    DpiReport report;
    report.min_gap = std::numeric_limits<double>::infinity();
    Rng rng(seed);
    double gap_sum = 0.0;
    for (int t = 0; t < trials; ++t) {
        int alphabet = rng.uniform_int(2, max_alphabet);
        int length = rng.uniform_int(1, max_length);
        JointDist truth = JointDist::random(alphabet, length, rng.next_u64());
        JointDist model = JointDist::random(alphabet, length, rng.next_u64());
        DpiTrial trial = check_dpi_once(truth, model);
        double gap = trial.gap();
        gap_sum += gap;
        report.min_gap = std::min(report.min_gap, gap);
        report.max_gap = std::max(report.max_gap, gap);
        if (trial.lhs > trial.rhs + slack) {
            report.violations++;
        }
        report.max_violation = std::max(report.max_violation, std::max(0.0, trial.lhs - trial.rhs));
        report.trials++;
    }
    report.mean_gap = gap_sum / static_cast<double>(report.trials);
    return report;
}

}  // namespace privlm
