#pragma once

#include <cstdint>
#include <vector>

namespace privlm {

/// Exhaustive joint distribution over (sequence, label) pairs: sequences in
/// [K]^n, binary label strings in {0,1}^n. Tables stay tiny (K <= 6, n <= 3)
/// so every quantity is computed exactly.
class JointDist {
public:
    JointDist(int alphabet, int length);

    int alphabet() const { return alphabet_; }
    int length() const { return length_; }
    std::size_t size() const { return table_.size(); }

    double& at(const std::vector<int>& seq, const std::vector<int>& labels);
    double at(const std::vector<int>& seq, const std::vector<int>& labels) const;
    const std::vector<double>& table() const { return table_; }
    std::vector<double>& table() { return table_; }

    double total_mass() const;
    void normalize();
    void validate() const;

    /// Full-support random distribution: normalized seeded exponentials.
    static JointDist random(int alphabet, int length, uint64_t seed);

    /// Decode flat index -> (seq, labels).
    void decode_index(std::size_t index, std::vector<int>& seq, std::vector<int>& labels) const;

private:
    std::size_t index_of(const std::vector<int>& seq, const std::vector<int>& labels) const;

    int alphabet_;
    int length_;
    std::vector<double> table_;
};

/// Distribution over masked sequences in [K+1]^n (symbol K is the anonymous
/// token).
struct MaskedDist {
    int alphabet;  // K + 1
    int length;
    std::vector<double> table;

    double total_mass() const;
    double& at(const std::vector<int>& masked_seq);
};

/// KL divergence between equal-shaped tables; +inf when q has a hole where
/// p has mass. 0*log0 taken as 0.
double exact_kl(const std::vector<double>& p, const std::vector<double>& q);

/// Push a joint distribution through the masking map: positions with label 1
/// become the anonymous symbol; colliding preimages accumulate.
MaskedDist mask_pushforward(const JointDist& dist);

struct DpiTrial {
    double lhs = 0.0;  // divergence after masking
    double rhs = 0.0;  // divergence on the joint
    double gap() const { return rhs - lhs; }
};

struct DpiReport {
    int trials = 0;
    int violations = 0;             // lhs > rhs + slack
    double max_violation = 0.0;     // max(lhs - rhs, 0) over trials
    double mean_gap = 0.0;
    double min_gap = 0.0;
    double max_gap = 0.0;
};

DpiTrial check_dpi_once(const JointDist& truth, const JointDist& model);
DpiReport check_dpi(int trials, int max_alphabet, int max_length, uint64_t seed,
                    double slack = 1e-12);

}  // namespace privlm
