#pragma once

#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "privlm/corpus.hpp"
#include "privlm/tokenizer.hpp"

namespace privlm {

struct DetectorConfig {
    std::set<PiiCategory> categories = {PiiCategory::Name, PiiCategory::Organization,
                                        PiiCategory::Address, PiiCategory::Url,
                                        PiiCategory::Phone};
    std::string name_lexicon;  // resolved against data_dir when relative
    std::string org_lexicon;
    std::string url_pattern = R"(^(https?://|www\.)\S+$)";
    std::string phone_pattern = R"(^[0-9]{3}-[0-9]{3,4}(-[0-9]{1,4})?$)";
    // matched against "number word [word] suffix" windows, space-joined
    std::string address_pattern =
        R"(^[0-9]{1,4} [a-z]+( [a-z]+)? (street|avenue|road|lane|drive|boulevard|court|way)$)";
    std::string data_dir;

    // drops every k-th name from the lexicon to emulate an imperfect
    // scrubber; 0 disables
    double holdout_fraction = 0.0;

    static DetectorConfig defaults(const std::string& data_dir = "");
};

/// Θ_1 / Θ_2: PII-associated unigrams and (same-span, adjacent) bigrams
/// over token ids, extracted from annotated training data.
struct PiiNGramSet {
    std::set<int> unigrams;
    std::set<std::pair<int, int>> bigrams;

    bool empty() const { return unigrams.empty() && bigrams.empty(); }
    void save(const std::string& path) const;
    static PiiNGramSet load(const std::string& path);
};

struct CorpusAnnotation {
    AnnotatedSequence question;
    AnnotatedSequence answer;
};
using AnnotationMap = std::map<std::string, CorpusAnnotation>;

/// Rule-based scrubber: lexicon lookup for names/organizations plus regex
/// rules for URLs, phone numbers and street addresses. Longest match wins,
/// scanning left to right. Pure and idempotent.
class Detector {
public:
    explicit Detector(const DetectorConfig& config);

    AnnotatedSequence annotate(const std::string& text, const Tokenizer& tokenizer) const;
    AnnotationMap annotate_corpus(const Corpus& corpus, const Tokenizer& tokenizer) const;

    const DetectorConfig& config() const { return config_; }

private:
    int lexicon_match(const std::vector<std::string>& tokens, std::size_t pos,
                      const std::vector<std::vector<std::string>>& entries) const;
    int address_match(const std::vector<std::string>& tokens, std::size_t pos) const;

    DetectorConfig config_;
    std::vector<std::vector<std::string>> names_;
    std::vector<std::vector<std::string>> orgs_;
    std::regex url_re_;
    std::regex phone_re_;
    std::regex address_re_;
};

PiiNGramSet extract_pii_ngrams(const std::vector<const AnnotatedSequence*>& train_annotations);
PiiNGramSet extract_pii_ngrams(const AnnotationMap& annotations,
                               const std::vector<std::string>& train_ids);

void save_annotations(const AnnotationMap& map, const std::string& path);
AnnotationMap load_annotations(const std::string& path);

}  // namespace privlm
