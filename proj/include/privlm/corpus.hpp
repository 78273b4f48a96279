#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "privlm/tokenizer.hpp"

namespace privlm {

enum class PiiCategory { Name, Organization, Address, Url, Phone };

std::string to_string(PiiCategory c);
PiiCategory pii_category_from_string(const std::string& s);

/// Half-open token span [start, end) tagged with a PII category.
struct PiiSpan {
    int start = 0;
    int end = 0;
    PiiCategory category = PiiCategory::Name;

    bool operator==(const PiiSpan&) const = default;
};

/// A token sequence with per-token privacy labels. labels[i] == 1 exactly
/// when position i is covered by one of the (sorted, non-overlapping) spans.
struct AnnotatedSequence {
    std::vector<int> tokens;
    std::vector<uint8_t> labels;
    std::vector<PiiSpan> spans;

    void validate() const;
    bool has_pii() const;
};

struct Sample {
    std::string id;
    std::string question;
    std::string answer;
    std::string source = "loaded";  // loaded | synthetic

    // token spans of PII injected into the answer, recorded by the
    // synthetic generator; empty for loaded samples
    std::vector<PiiSpan> answer_pii;
};

struct CorpusStats {
    std::size_t count = 0;
    double mean_question_tokens = 0.0;
    double mean_answer_tokens = 0.0;
};

struct Corpus {
    std::string name;
    std::vector<Sample> samples;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;

    CorpusStats stats() const;
    const Sample& sample(const std::string& id) const;
    bool has_split() const { return !train_ids.empty() || !test_ids.empty(); }
    std::vector<const Sample*> train_samples() const;
    std::vector<const Sample*> test_samples() const;
    void validate() const;
};

/// One JSON object per line with string fields "question" and "answer".
/// Extra fields ("id", "source", "pii") round-trip; a leading
/// {"__provenance__": ...} header line is skipped.
Corpus load_jsonl(const std::string& path);
void save_jsonl(const Corpus& corpus, const std::string& path,
                const std::string& provenance = "");

/// Split sidecar: {"train": [ids], "test": [ids]}.
void save_split(const Corpus& corpus, const std::string& path);
void load_split(Corpus& corpus, const std::string& path);

struct SynthConfig {
    uint64_t seed = 0;
    std::size_t size = 0;
    double pii_density = 0.0;   // target fraction of PII tokens
    std::string data_dir;       // lexicon location; default_data_dir() if empty
};

/// Deterministic grammar-template generator. Medical-flavored Q/A pairs;
/// answers embed names, organizations, addresses, URLs and phone numbers
/// so that the corpus-wide PII token fraction tracks pii_density. Every
/// injected PII item is recorded in Sample::answer_pii as token spans of
/// the answer under Tokenizer::split.
Corpus synthesize_corpus(const SynthConfig& config);

/// Deterministic seeded shuffle; |train| = round(fraction * size).
void split_corpus(Corpus& corpus, double train_fraction, uint64_t seed);

}  // namespace privlm
