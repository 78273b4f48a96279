#include "privlm/metrics.hpp"

#include <algorithm>
#include <map>

#include "privlm/common.hpp"

namespace privlm {

namespace {

template <typename T>
std::size_t clipped_overlap(const std::vector<T>& g, const std::vector<T>& r) {
    std::map<T, std::size_t> counts;
    for (const auto& x : r) counts[x]++;
    std::size_t overlap = 0;
    for (const auto& x : g) {
        auto it = counts.find(x);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

std::vector<std::pair<std::string, std::string>> bigrams(const std::vector<std::string>& t) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) out.emplace_back(t[i], t[i + 1]);
    return out;
}

}  // namespace

double rouge1(const std::vector<std::string>& generated,
              const std::vector<std::string>& reference) {
    require(!reference.empty(), ErrorKind::Precondition, "rouge1: empty reference");
    return static_cast<double>(clipped_overlap(generated, reference)) /
           static_cast<double>(reference.size());
}

double rouge2(const std::vector<std::string>& generated,
              const std::vector<std::string>& reference) {
    require(reference.size() >= 2, ErrorKind::Precondition,
            "rouge2: reference must have at least 2 tokens");
    return static_cast<double>(clipped_overlap(bigrams(generated), bigrams(reference))) /
           static_cast<double>(reference.size() - 1);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const std::vector<std::string>& generated,
               const std::vector<std::string>& reference) {
    require(!reference.empty(), ErrorKind::Precondition, "rouge_l: empty reference");
    if (generated.empty()) return 0.0;
    return static_cast<double>(lcs_length(generated, reference)) /
           static_cast<double>(std::max(generated.size(), reference.size()));
}

double PrivacyScore::value() const {
    require(total_tokens > 0, ErrorKind::Precondition, "s_priv: empty generation");
    return static_cast<double>(pii_tokens) / static_cast<double>(total_tokens);
}

PrivacyScore s_priv(const std::string& generated_text, const Detector& detector,
                    const Tokenizer& tokenizer) {
    AnnotatedSequence ann = detector.annotate(generated_text, tokenizer);
    PrivacyScore score;
    score.total_tokens = ann.tokens.size();
    for (uint8_t label : ann.labels) score.pii_tokens += label;
    return score;
}

double s_priv_value(const std::string& generated_text, const Detector& detector,
                    const Tokenizer& tokenizer) {
    return s_priv(generated_text, detector, tokenizer).value();
}

double delta(double s_priv_score, double baseline_s_priv) {
    require(baseline_s_priv > 0.0, ErrorKind::Precondition,
            "delta: baseline leakage must be positive");
    return (s_priv_score - baseline_s_priv) / baseline_s_priv;
}

}  // namespace privlm
