#include "privlm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "privlm/common.hpp"

namespace privlm {

using nlohmann::json;

std::string to_string(PiiCategory c) {
    switch (c) {
        case PiiCategory::Name: return "NAME";
        case PiiCategory::Organization: return "ORGANIZATION";
        case PiiCategory::Address: return "ADDRESS";
        case PiiCategory::Url: return "URL";
        case PiiCategory::Phone: return "PHONE";
    }
    fail(ErrorKind::Precondition, "bad PiiCategory");
}

PiiCategory pii_category_from_string(const std::string& s) {
    if (s == "NAME") return PiiCategory::Name;
    if (s == "ORGANIZATION") return PiiCategory::Organization;
    if (s == "ADDRESS") return PiiCategory::Address;
    if (s == "URL") return PiiCategory::Url;
    if (s == "PHONE") return PiiCategory::Phone;
    fail(ErrorKind::Schema, "unknown PII category: " + s);
}

void AnnotatedSequence::validate() const {
    require(tokens.size() == labels.size(), ErrorKind::Schema,
            "annotated sequence: token/label length mismatch");
    std::vector<int> cover(tokens.size(), 0);
    int prev_end = 0;
    for (const auto& span : spans) {
        require(span.start >= 0 && span.start < span.end &&
                    span.end <= static_cast<int>(tokens.size()),
                ErrorKind::Schema, "annotated sequence: span out of range");
        require(span.start >= prev_end, ErrorKind::Schema,
                "annotated sequence: spans overlap or are unsorted");
        prev_end = span.end;
        for (int i = span.start; i < span.end; ++i) cover[static_cast<std::size_t>(i)]++;
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        require(labels[i] == 0 || labels[i] == 1, ErrorKind::Schema,
                "annotated sequence: labels must be 0/1");
        require((labels[i] == 1) == (cover[i] == 1), ErrorKind::Schema,
                "annotated sequence: labels disagree with span cover");
    }
}

bool AnnotatedSequence::has_pii() const { return !spans.empty(); }

CorpusStats Corpus::stats() const {
    CorpusStats st;
    st.count = samples.size();
    if (samples.empty()) return st;
    double q = 0.0, a = 0.0;
    for (const auto& s : samples) {
        q += static_cast<double>(Tokenizer::split(s.question).size());
        a += static_cast<double>(Tokenizer::split(s.answer).size());
    }
    st.mean_question_tokens = q / static_cast<double>(samples.size());
    st.mean_answer_tokens = a / static_cast<double>(samples.size());
    return st;
}

const Sample& Corpus::sample(const std::string& id) const {
    for (const auto& s : samples) {
        if (s.id == id) return s;
    }
    fail(ErrorKind::Precondition, "no sample with id " + id);
}

std::vector<const Sample*> Corpus::train_samples() const {
    std::vector<const Sample*> out;
    for (const auto& id : train_ids) out.push_back(&sample(id));
    return out;
}

std::vector<const Sample*> Corpus::test_samples() const {
    std::vector<const Sample*> out;
    for (const auto& id : test_ids) out.push_back(&sample(id));
    return out;
}

void Corpus::validate() const {
    std::set<std::string> ids;
    for (const auto& s : samples) {
        require(!s.question.empty() && !s.answer.empty(), ErrorKind::Schema,
                "sample " + s.id + ": question and answer must be non-empty");
        require(ids.insert(s.id).second, ErrorKind::Schema, "duplicate sample id " + s.id);
    }
    if (has_split()) {
        std::set<std::string> seen;
        for (const auto& id : train_ids) {
            require(ids.count(id) != 0, ErrorKind::Schema, "split references unknown id " + id);
            require(seen.insert(id).second, ErrorKind::Schema, "id in both splits: " + id);
        }
        for (const auto& id : test_ids) {
            require(ids.count(id) != 0, ErrorKind::Schema, "split references unknown id " + id);
            require(seen.insert(id).second, ErrorKind::Schema, "id in both splits: " + id);
        }
        require(seen.size() == ids.size(), ErrorKind::Schema, "split does not cover all samples");
    }
}

namespace {

json span_to_json(const PiiSpan& s) {
    return json{{"start", s.start}, {"end", s.end}, {"category", to_string(s.category)}};
}

PiiSpan span_from_json(const json& j) {
    PiiSpan s;
    s.start = j.at("start").get<int>();
    s.end = j.at("end").get<int>();
    s.category = pii_category_from_string(j.at("category").get<std::string>());
    return s;
}

}  // namespace

Corpus load_jsonl(const std::string& path) {
    require(file_exists(path), ErrorKind::Io, "corpus file not found: " + path);
    Corpus corpus;
    corpus.name = path;
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    std::size_t index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse,
                 "line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (j.contains("__provenance__")) continue;  // curated-file header
        for (const char* field : {"question", "answer"}) {
            require(j.contains(field) && j.at(field).is_string(), ErrorKind::Schema,
                    "line " + std::to_string(line_no) + ": missing string field \"" +
                        field + "\"");
        }
        Sample s;
        s.question = j.at("question").get<std::string>();
        s.answer = j.at("answer").get<std::string>();
        s.id = j.contains("id") ? j.at("id").get<std::string>() : std::to_string(index);
        if (j.contains("source")) s.source = j.at("source").get<std::string>();
        if (j.contains("pii")) {
            for (const auto& sp : j.at("pii")) s.answer_pii.push_back(span_from_json(sp));
        }
        corpus.samples.push_back(std::move(s));
        ++index;
    }
    corpus.validate();
    return corpus;
}

void save_jsonl(const Corpus& corpus, const std::string& path, const std::string& provenance) {
    std::ostringstream out;
    if (!provenance.empty()) {
        out << json{{"__provenance__", provenance}, {"name", corpus.name}}.dump() << "\n";
    }
    for (const auto& s : corpus.samples) {
        json j{{"id", s.id}, {"question", s.question}, {"answer", s.answer}, {"source", s.source}};
        if (!s.answer_pii.empty()) {
            json spans = json::array();
            for (const auto& sp : s.answer_pii) spans.push_back(span_to_json(sp));
            j["pii"] = spans;
        }
        out << j.dump() << "\n";
    }
    write_text_file(path, out.str());
}

void save_split(const Corpus& corpus, const std::string& path) {
    json j{{"train", corpus.train_ids}, {"test", corpus.test_ids}};
    write_text_file(path, j.dump(2) + "\n");
}

void load_split(Corpus& corpus, const std::string& path) {
    json j = json::parse(read_text_file(path));
    corpus.train_ids = j.at("train").get<std::vector<std::string>>();
    corpus.test_ids = j.at("test").get<std::vector<std::string>>();
    corpus.validate();
}

// ---------------------------------------------------------------------------
// synthetic generator

namespace {

struct Lexicons {
    std::vector<std::string> names, orgs, diseases, drugs, streets;
    std::vector<std::string> url_words, url_tlds, street_suffixes;
};

Lexicons load_lexicons(const std::string& data_dir) {
    std::string dir = data_dir.empty() ? default_data_dir() : data_dir;
    Lexicons lx;
    lx.names = read_lines(dir + "/lexicons/names.txt");
    lx.orgs = read_lines(dir + "/lexicons/organizations.txt");
    lx.diseases = read_lines(dir + "/lexicons/diseases.txt");
    lx.drugs = read_lines(dir + "/lexicons/drugs.txt");
    lx.streets = read_lines(dir + "/lexicons/streets.txt");
    lx.url_words = {"clinic", "health", "care", "med", "patient", "portal", "wellness", "records"};
    lx.url_tlds = {"org", "com", "net"};
    lx.street_suffixes = {"street", "avenue", "road", "lane", "drive", "boulevard", "court", "way"};
    for (const auto* v : {&lx.names, &lx.orgs, &lx.diseases, &lx.drugs, &lx.streets}) {
        require(!v->empty(), ErrorKind::Io, "empty lexicon file under " + dir);
    }
    return lx;
}

const std::vector<std::string>& question_templates() {
    static const std::vector<std::string> t = {
        "what is the recommended treatment for {disease} ?",
        "what are the common symptoms of {disease} ?",
        "how is {disease} diagnosed in most patients ?",
        "what should a patient with {disease} expect during recovery ?",
        "what is the usual dose of {drug} for adults ?",
        "when should {drug} be avoided by patients ?",
        "what follow up care is advised after treatment for {disease} ?",
        "which lifestyle changes help patients manage {disease} ?",
        "what are the known side effects of {drug} ?",
        "how long does recovery from {disease} usually take ?",
    };
    return t;
}

const std::vector<std::string>& plain_answer_templates() {
    static const std::vector<std::string> t = {
        "patients with {disease} usually receive {drug} twice daily until symptoms improve .",
        "treatment of {disease} depends on the stage of the disease and the strength of the patient .",
        "common symptoms include fatigue , fever and joint pain that worsens at night .",
        "the usual adult dose of {drug} is {num} mg taken with food .",
        "doctors recommend rest , fluids and a gradual return to normal activity .",
        "regular checkups every {num} months help monitor progress after {disease} .",
        "{drug} may cause dizziness , nausea or mild headache in some patients .",
        "early diagnosis of {disease} improves long term outcomes significantly .",
        "most patients tolerate {drug} well when the dose is increased slowly .",
        "screening is advised for adults over {num} with a prior history of {disease} .",
    };
    return t;
}

const std::vector<std::string>& pii_answer_templates() {
    static const std::vector<std::string> t = {
        "{name} visited {org} for {disease} treatment .",
        "dr {name} of {org} prescribed {drug} for this condition .",
        "a recent case at {org} involved {name} who recovered fully .",
        "contact {org} at {phone} to schedule a consultation .",
        "more guidance is available at {url} or by calling {phone} .",
        "{name} was treated at {org} located at {address} .",
        "the facility at {address} offers screening for {disease} .",
        "records from {org} show that {name} responded well to {drug} .",
        "send questions to {org} at {address} or visit {url} .",
        "{name} reported relief after starting {drug} last spring .",
    };
    return t;
}

struct SlotFill {
    std::vector<std::string> tokens;
    std::optional<PiiCategory> category;
};

class SampleBuilder {
public:
    SampleBuilder(const Lexicons& lx, Rng& rng) : lx_(lx), rng_(rng) {}

    SlotFill fill(const std::string& slot) {
        if (slot == "{disease}") return {Tokenizer::split(rng_.pick(lx_.diseases)), std::nullopt};
        if (slot == "{drug}") return {Tokenizer::split(rng_.pick(lx_.drugs)), std::nullopt};
        if (slot == "{num}") return {{std::to_string(rng_.uniform_int(2, 18))}, std::nullopt};
        if (slot == "{name}")
            return {Tokenizer::split(rng_.pick(lx_.names)), PiiCategory::Name};
        if (slot == "{org}")
            return {Tokenizer::split(rng_.pick(lx_.orgs)), PiiCategory::Organization};
        if (slot == "{address}") {
            std::vector<std::string> toks = {std::to_string(rng_.uniform_int(101, 999))};
            toks.push_back(Tokenizer::split(rng_.pick(lx_.streets)).front());
            toks.push_back(rng_.pick(lx_.street_suffixes));
            return {toks, PiiCategory::Address};
        }
        if (slot == "{url}") {
            std::string url = "https://" + rng_.pick(lx_.url_words) + rng_.pick(lx_.url_words) +
                              "." + rng_.pick(lx_.url_tlds) + "/" + rng_.pick(lx_.url_words);
            return {{url}, PiiCategory::Url};
        }
        if (slot == "{phone}") {
            std::ostringstream ph;
            ph << rng_.uniform_int(200, 999) << "-0" << rng_.uniform_int(100, 999);
            return {{ph.str()}, PiiCategory::Phone};
        }
        fail(ErrorKind::Precondition, "unknown template slot " + slot);
    }

    // expands a template into tokens, recording PII spans
    void expand(const std::string& tmpl, std::vector<std::string>& tokens,
                std::vector<PiiSpan>& spans) {
        std::istringstream words(tmpl);
        std::string w;
        while (words >> w) {
            if (w.front() == '{') {
                SlotFill f = fill(w);
                int start = static_cast<int>(tokens.size());
                tokens.insert(tokens.end(), f.tokens.begin(), f.tokens.end());
                if (f.category) {
                    spans.push_back({start, static_cast<int>(tokens.size()), *f.category});
                }
            } else {
                tokens.push_back(w);
            }
        }
    }

private:
    const Lexicons& lx_;
    Rng& rng_;
};

}  // namespace

Corpus synthesize_corpus(const SynthConfig& config) {
    require(config.size >= 1, ErrorKind::Precondition, "synthesize_corpus: size must be >= 1");
    require(config.pii_density >= 0.0 && config.pii_density <= 1.0, ErrorKind::Precondition,
            "synthesize_corpus: pii_density must lie in [0,1]");
    Lexicons lx = load_lexicons(config.data_dir);
    Rng rng(config.seed);
    SampleBuilder builder(lx, rng);

    Corpus corpus;
    corpus.name = "synthetic";
    std::size_t pii_tokens = 0;
    std::size_t total_tokens = 0;
    for (std::size_t i = 0; i < config.size; ++i) {
        Sample s;
        s.id = std::to_string(i);
        s.source = "synthetic";

        std::vector<std::string> q_tokens;
        std::vector<PiiSpan> q_spans;
        builder.expand(rng.pick(question_templates()), q_tokens, q_spans);
        s.question = Tokenizer::join(q_tokens);
        total_tokens += q_tokens.size();

        std::vector<std::string> a_tokens;
        int sentences = rng.uniform_int(1, 2);
        for (int k = 0; k < sentences; ++k) {
            // greedy density control: emit a PII sentence whenever the
            // running PII fraction has fallen below the target
            bool below = static_cast<double>(pii_tokens) <
                         config.pii_density * static_cast<double>(total_tokens + a_tokens.size());
            const auto& pool = (config.pii_density > 0.0 && below) ? pii_answer_templates()
                                                                   : plain_answer_templates();
            builder.expand(rng.pick(pool), a_tokens, s.answer_pii);
        }
        s.answer = Tokenizer::join(a_tokens);
        total_tokens += a_tokens.size();
        for (const auto& span : s.answer_pii) {
            pii_tokens += static_cast<std::size_t>(span.end - span.start);
        }
        corpus.samples.push_back(std::move(s));
    }
    corpus.validate();
    return corpus;
}

void split_corpus(Corpus& corpus, double train_fraction, uint64_t seed) {
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Precondition,
            "split: train_fraction must lie strictly between 0 and 1");
    require(corpus.samples.size() >= 2, ErrorKind::Precondition,
            "split: corpus needs at least 2 samples");
    std::vector<std::string> ids;
    ids.reserve(corpus.samples.size());
    for (const auto& s : corpus.samples) ids.push_back(s.id);
    Rng rng(seed);
    rng.shuffle(ids);
    auto n = static_cast<long>(corpus.samples.size());
    long k = std::lround(train_fraction * static_cast<double>(n));
    k = std::clamp(k, 1l, n - 1);
    corpus.train_ids.assign(ids.begin(), ids.begin() + k);
    corpus.test_ids.assign(ids.begin() + k, ids.end());
    corpus.validate();
}

}  // namespace privlm
