#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "privlm/common.hpp"
#include "privlm/curation.hpp"
#include "privlm/detector.hpp"

using namespace privlm;

namespace {

const char* kSentence = "Alan Gates visited Crescent Vale Medical Center for Hemophilia treatment";

Tokenizer sentence_tokenizer() { return Tokenizer::build({kSentence}); }

AnnotatedSequence annotate_sentence(const Tokenizer& tok, bool name_only) {
    DetectorConfig cfg = DetectorConfig::defaults(PRIVLM_DATA_DIR);
    if (name_only) {
        cfg.categories = {PiiCategory::Name};
    }
    Detector det(cfg);
    return det.annotate(kSentence, tok);
}

}  // namespace

TEST_CASE("removal drops only the name span in single-category mode") {
    Tokenizer tok = sentence_tokenizer();
    AnnotatedSequence seq = annotate_sentence(tok, /*name_only=*/true);
    std::vector<int> out = remove_pii(seq);
    CHECK(tok.decode(out) == "visited crescent vale medical center for hemophilia treatment");
}

TEST_CASE("removal drops every span in all-category mode") {
    Tokenizer tok = sentence_tokenizer();
    AnnotatedSequence seq = annotate_sentence(tok, /*name_only=*/false);
    std::vector<int> out = remove_pii(seq);
    CHECK(tok.decode(out) == "visited for hemophilia treatment");
}

TEST_CASE("removal is identity without labels and empty when all labeled") {
    Tokenizer tok = Tokenizer::build({"a b c"});
    AnnotatedSequence seq;
    seq.tokens = tok.encode("a b c");
    seq.labels = {0, 0, 0};
    CHECK(remove_pii(seq) == seq.tokens);

    seq.labels = {1, 1, 1};
    seq.spans = {{0, 3, PiiCategory::Name}};
    CHECK(remove_pii(seq).empty());
}

TEST_CASE("substitution collapses the name span to one placeholder") {
    Tokenizer tok = sentence_tokenizer();
    AnnotatedSequence seq = annotate_sentence(tok, /*name_only=*/true);
    std::vector<int> out = substitute_pii(seq, tok);
    CHECK(tok.decode(out) ==
          "<NAME> visited crescent vale medical center for hemophilia treatment");
}

TEST_CASE("generic style substitutes every span with <X>") {
    Tokenizer tok = sentence_tokenizer();
    AnnotatedSequence seq = annotate_sentence(tok, /*name_only=*/false);
    std::vector<int> out = substitute_pii(seq, tok, SubstitutionStyle::GenericX);
    CHECK(tok.decode(out) == "<X> visited <X> for hemophilia treatment");
}

TEST_CASE("substitution is identity without labels") {
    Tokenizer tok = Tokenizer::build({"x y"});
    AnnotatedSequence seq;
    seq.tokens = tok.encode("x y");
    seq.labels = {0, 0};
    CHECK(substitute_pii(seq, tok) == seq.tokens);
}

TEST_CASE("two adjacent spans become two placeholders, length recomputed by hand") {
    // 10 tokens; spans of size 3 and 2 -> 10 - (3+2) + 2 = 7
    Tokenizer tok = Tokenizer::build({"t0 t1 t2 t3 t4 t5 t6 t7 t8 t9"});
    AnnotatedSequence seq;
    seq.tokens = tok.encode("t0 t1 t2 t3 t4 t5 t6 t7 t8 t9");
    seq.labels = {0, 1, 1, 1, 1, 1, 0, 0, 0, 0};
    seq.spans = {{1, 4, PiiCategory::Organization}, {4, 6, PiiCategory::Name}};
    std::vector<int> out = substitute_pii(seq, tok);
    CHECK(out.size() == 7);
    CHECK(out[1] == tok.token_id(Tokenizer::kOrganization));
    CHECK(out[2] == tok.token_id(Tokenizer::kName));
}

TEST_CASE("substitution preserves order and count of non-PII tokens") {
    Tokenizer tok = sentence_tokenizer();
    AnnotatedSequence seq = annotate_sentence(tok, false);
    std::vector<int> out = substitute_pii(seq, tok);
    std::vector<int> expected_clean;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (!seq.labels[i]) expected_clean.push_back(seq.tokens[i]);
    }
    std::vector<int> got_clean;
    for (int id : out) {
        if (!tok.is_special_id(id)) got_clean.push_back(id);
    }
    CHECK(got_clean == expected_clean);
}

TEST_CASE("removal output is a subsequence of the input") {
    Tokenizer tok = sentence_tokenizer();
    AnnotatedSequence seq = annotate_sentence(tok, false);
    std::vector<int> out = remove_pii(seq);
    std::size_t j = 0;
    for (int id : seq.tokens) {
        if (j < out.size() && out[j] == id) ++j;
    }
    CHECK(j == out.size());
}

TEST_CASE("masking collapses distinct annotated inputs") {
    Tokenizer tok = Tokenizer::build({"alan gates mara quinlan visited"});
    AnnotatedSequence a;
    a.tokens = tok.encode("alan gates visited");
    a.labels = {1, 1, 0};
    a.spans = {{0, 2, PiiCategory::Name}};
    AnnotatedSequence b;
    b.tokens = tok.encode("mara quinlan visited");
    b.labels = {1, 1, 0};
    b.spans = {{0, 2, PiiCategory::Name}};
    CHECK(a.tokens != b.tokens);
    CHECK(substitute_pii(a, tok) == substitute_pii(b, tok));
}
