#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "privlm/common.hpp"
#include "privlm/corpus.hpp"

using namespace privlm;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "privlm_corpus_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

SynthConfig synth_cfg(uint64_t seed, std::size_t size, double density) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.size = size;
    cfg.pii_density = density;
    cfg.data_dir = PRIVLM_DATA_DIR;
    return cfg;
}

}  // namespace

TEST_CASE("load_jsonl reads one sample per line") {
    std::string path = temp_path("two.jsonl");
    write_text_file(path,
                    "{\"question\": \"q one?\", \"answer\": \"a one.\"}\n"
                    "{\"question\": \"q two?\", \"answer\": \"a two.\"}\n");
    Corpus c = load_jsonl(path);
    CHECK(c.samples.size() == 2);
    CHECK(c.samples[0].id == "0");
    CHECK(c.samples[1].question == "q two?");
}

TEST_CASE("load_jsonl reports the offending line") {
    std::string path = temp_path("bad.jsonl");
    write_text_file(path,
                    "{\"question\": \"q\", \"answer\": \"a\"}\n"
                    "{\"question\": \"q\", \"answer\": \"a\"}\n"
                    "{\"question\": \"q\"}\n");
    try {
        load_jsonl(path);
        FAIL("expected a schema error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Schema);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(std::string(e.what()).find("answer") != std::string::npos);
    }

    std::string mangled = temp_path("mangled.jsonl");
    write_text_file(mangled, "{\"question\": \"q\", \"answer\": \"a\"}\nnot json\n");
    try {
        load_jsonl(mangled);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("empty file yields an empty corpus with zero stats") {
    std::string path = temp_path("empty.jsonl");
    write_text_file(path, "");
    Corpus c = load_jsonl(path);
    CHECK(c.samples.empty());
    auto st = c.stats();
    CHECK(st.count == 0);
    CHECK(st.mean_question_tokens == 0.0);
    CHECK(st.mean_answer_tokens == 0.0);
}

TEST_CASE("synthesis is byte-deterministic in the seed") {
    Corpus a = synthesize_corpus(synth_cfg(7, 100, 0.05));
    Corpus b = synthesize_corpus(synth_cfg(7, 100, 0.05));
    std::string pa = temp_path("synth_a.jsonl");
    std::string pb = temp_path("synth_b.jsonl");
    save_jsonl(a, pa);
    save_jsonl(b, pb);
    CHECK(read_text_file(pa) == read_text_file(pb));

    Corpus c = synthesize_corpus(synth_cfg(8, 100, 0.05));
    std::string pc = temp_path("synth_c.jsonl");
    save_jsonl(c, pc);
    CHECK(read_text_file(pa) != read_text_file(pc));
}

TEST_CASE("zero density leaves no ground-truth spans") {
    Corpus c = synthesize_corpus(synth_cfg(3, 50, 0.0));
    for (const auto& s : c.samples) {
        CHECK(s.answer_pii.empty());
    }
}

TEST_CASE("measured PII fraction tracks the requested density") {
    // oracle: count injected PII tokens over all question+answer tokens
    Corpus c = synthesize_corpus(synth_cfg(7, 1000, 0.05));
    std::size_t pii = 0, total = 0;
    for (const auto& s : c.samples) {
        total += Tokenizer::split(s.question).size();
        total += Tokenizer::split(s.answer).size();
        for (const auto& span : s.answer_pii) pii += static_cast<std::size_t>(span.end - span.start);
    }
    double fraction = static_cast<double>(pii) / static_cast<double>(total);
    CHECK(fraction >= 0.03);
    CHECK(fraction <= 0.07);
}

TEST_CASE("ground-truth spans align with tokenizer boundaries") {
    Corpus c = synthesize_corpus(synth_cfg(11, 60, 0.10));
    for (const auto& s : c.samples) {
        auto tokens = Tokenizer::split(s.answer);
        // the serialized text re-tokenizes to the exact token stream the
        // generator recorded spans against
        for (const auto& span : s.answer_pii) {
            REQUIRE(span.start >= 0);
            REQUIRE(span.end <= static_cast<int>(tokens.size()));
            REQUIRE(span.start < span.end);
        }
    }
}

TEST_CASE("split honors the 85/15 fraction") {
    Corpus c = synthesize_corpus(synth_cfg(5, 100, 0.05));
    split_corpus(c, 0.85, 42);
    CHECK(c.train_ids.size() == 85);
    CHECK(c.test_ids.size() == 15);

    Corpus d = synthesize_corpus(synth_cfg(5, 100, 0.05));
    split_corpus(d, 0.85, 42);
    CHECK(c.train_ids == d.train_ids);
    CHECK(c.test_ids == d.test_ids);
}

TEST_CASE("split rejects tiny corpora") {
    Corpus c = synthesize_corpus(synth_cfg(5, 1, 0.0));
    CHECK_THROWS_AS(split_corpus(c, 0.85, 1), Error);
}

TEST_CASE("serialize then load is identity on samples and split") {
    Corpus c = synthesize_corpus(synth_cfg(13, 40, 0.08));
    split_corpus(c, 0.8, 9);
    std::string pj = temp_path("roundtrip.jsonl");
    std::string ps = temp_path("roundtrip.split.json");
    save_jsonl(c, pj);
    save_split(c, ps);
    Corpus back = load_jsonl(pj);
    load_split(back, ps);
    REQUIRE(back.samples.size() == c.samples.size());
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
        CHECK(back.samples[i].id == c.samples[i].id);
        CHECK(back.samples[i].question == c.samples[i].question);
        CHECK(back.samples[i].answer == c.samples[i].answer);
        CHECK(back.samples[i].source == c.samples[i].source);
        CHECK(back.samples[i].answer_pii == c.samples[i].answer_pii);
    }
    CHECK(back.train_ids == c.train_ids);
    CHECK(back.test_ids == c.test_ids);
}

TEST_CASE("stats match brute-force recomputation") {
    Corpus c = synthesize_corpus(synth_cfg(17, 25, 0.05));
    double q = 0.0, a = 0.0;
    for (const auto& s : c.samples) {
        q += static_cast<double>(Tokenizer::split(s.question).size());
        a += static_cast<double>(Tokenizer::split(s.answer).size());
    }
    auto st = c.stats();
    CHECK(st.mean_question_tokens == doctest::Approx(q / 25.0));
    CHECK(st.mean_answer_tokens == doctest::Approx(a / 25.0));
}

TEST_CASE("annotated sequence invariants are enforced") {
    AnnotatedSequence seq;
    seq.tokens = {10, 11, 12};
    seq.labels = {0, 1, 1};
    seq.spans = {{1, 3, PiiCategory::Name}};
    CHECK_NOTHROW(seq.validate());

    seq.labels = {1, 1, 1};  // label without covering span
    CHECK_THROWS_AS(seq.validate(), Error);

    seq.labels = {0, 1, 1};
    seq.spans = {{1, 3, PiiCategory::Name}, {2, 3, PiiCategory::Name}};  // overlap
    CHECK_THROWS_AS(seq.validate(), Error);
}
