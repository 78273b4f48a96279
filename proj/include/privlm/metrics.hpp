#pragma once

#include <string>
#include <vector>

#include "privlm/detector.hpp"
#include "privlm/tokenizer.hpp"

namespace privlm {

/// Clipped unigram overlap over the reference unigram count.
double rouge1(const std::vector<std::string>& generated, const std::vector<std::string>& reference);

/// Clipped bigram overlap over the reference bigram count (needs |R| >= 2).
double rouge2(const std::vector<std::string>& generated, const std::vector<std::string>& reference);

/// LCS length over max(|G|, |R|).
double rouge_l(const std::vector<std::string>& generated, const std::vector<std::string>& reference);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct PrivacyScore {
    std::size_t pii_tokens = 0;
    std::size_t total_tokens = 0;
    double value() const;
};

/// Fraction of generated tokens the detector tags as PII. Placeholder
/// tokens (<NAME>, <X>, ...) count toward the total but are never PII.
PrivacyScore s_priv(const std::string& generated_text, const Detector& detector,
                    const Tokenizer& tokenizer);
double s_priv_value(const std::string& generated_text, const Detector& detector,
                    const Tokenizer& tokenizer);

/// (score - baseline) / baseline; negative means less leakage than baseline.
double delta(double s_priv_score, double baseline_s_priv);

}  // namespace privlm
