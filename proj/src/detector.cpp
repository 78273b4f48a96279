#include "privlm/detector.hpp"

#include <algorithm>

#include <json.hpp>

#include "privlm/common.hpp"

namespace privlm {

using nlohmann::json;

DetectorConfig DetectorConfig::defaults(const std::string& data_dir) {
    DetectorConfig c;
    c.data_dir = data_dir.empty() ? default_data_dir() : data_dir;
    c.name_lexicon = "lexicons/names.txt";
    c.org_lexicon = "lexicons/organizations.txt";
    return c;
}

namespace {

std::string resolve(const std::string& path, const std::string& data_dir) {
    if (path.empty() || path.front() == '/') return path;
    return (data_dir.empty() ? default_data_dir() : data_dir) + "/" + path;
}

std::vector<std::vector<std::string>> load_entries(const std::string& path,
                                                   double holdout_fraction) {
    std::vector<std::vector<std::string>> entries;
    std::size_t keep_every = 0;
    if (holdout_fraction > 0.0) {
        keep_every = static_cast<std::size_t>(std::max(1.0, 1.0 / holdout_fraction));
    }
    std::size_t index = 0;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        bool held_out = keep_every != 0 && (index % keep_every == 0);
        ++index;
        if (held_out) continue;
        entries.push_back(Tokenizer::split(line));
    }
    return entries;
}

}  // namespace

Detector::Detector(const DetectorConfig& config) : config_(config) {
    require(!config_.categories.empty(), ErrorKind::Config,
            "detector: at least one PII category must be enabled");
    if (config_.categories.count(PiiCategory::Name)) {
        names_ = load_entries(resolve(config_.name_lexicon, config_.data_dir),
                              config_.holdout_fraction);
    }
    if (config_.categories.count(PiiCategory::Organization)) {
        orgs_ = load_entries(resolve(config_.org_lexicon, config_.data_dir), 0.0);
    }
    try {
        url_re_ = std::regex(config_.url_pattern);
        phone_re_ = std::regex(config_.phone_pattern);
        address_re_ = std::regex(config_.address_pattern);
    } catch (const std::regex_error& e) {
        fail(ErrorKind::Config, std::string("detector: pattern does not compile: ") + e.what());
    }
}

int Detector::lexicon_match(const std::vector<std::string>& tokens, std::size_t pos,
                            const std::vector<std::vector<std::string>>& entries) const {
    int best = 0;
    for (const auto& entry : entries) {
        if (entry.empty() || pos + entry.size() > tokens.size()) continue;
        if (static_cast<int>(entry.size()) <= best) continue;
        bool ok = true;
        for (std::size_t k = 0; k < entry.size(); ++k) {
            if (tokens[pos + k] != entry[k]) {
                ok = false;
                break;
            }
        }
        if (ok) best = static_cast<int>(entry.size());
    }
    return best;
}

int Detector::address_match(const std::vector<std::string>& tokens, std::size_t pos) const {
    // windows "number word [word] suffix", longest first
    for (int len = 4; len >= 3; --len) {
        if (pos + static_cast<std::size_t>(len) > tokens.size()) continue;
        std::string window = tokens[pos];
        for (int k = 1; k < len; ++k) window += " " + tokens[pos + static_cast<std::size_t>(k)];
        if (std::regex_match(window, address_re_)) return len;
    }
    return 0;
}

AnnotatedSequence Detector::annotate(const std::string& text, const Tokenizer& tokenizer) const {
    require(!tokenizer.empty(), ErrorKind::Precondition,
            "annotate: tokenizer vocabulary not built");
    std::vector<std::string> tokens = Tokenizer::split(text);
    AnnotatedSequence seq;
    seq.tokens = tokenizer.encode_tokens(tokens);
    seq.labels.assign(tokens.size(), 0);

    std::size_t i = 0;
    while (i < tokens.size()) {
        if (Tokenizer::is_placeholder(tokens[i])) {
            ++i;  // placeholders are never PII
            continue;
        }
        int best_len = 0;
        PiiCategory best_cat = PiiCategory::Name;
        auto consider = [&](int len, PiiCategory cat) {
            if (len > best_len) {
                best_len = len;
                best_cat = cat;
            }
        };
        if (config_.categories.count(PiiCategory::Name)) {
            consider(lexicon_match(tokens, i, names_), PiiCategory::Name);
        }
        if (config_.categories.count(PiiCategory::Organization)) {
            consider(lexicon_match(tokens, i, orgs_), PiiCategory::Organization);
        }
        if (config_.categories.count(PiiCategory::Address)) {
            consider(address_match(tokens, i), PiiCategory::Address);
        }
        if (config_.categories.count(PiiCategory::Url) &&
            std::regex_match(tokens[i], url_re_)) {
            consider(1, PiiCategory::Url);
        }
        if (config_.categories.count(PiiCategory::Phone) &&
            std::regex_match(tokens[i], phone_re_)) {
            consider(1, PiiCategory::Phone);
        }
        if (best_len > 0) {
            PiiSpan span{static_cast<int>(i), static_cast<int>(i) + best_len, best_cat};
            seq.spans.push_back(span);
            for (int k = span.start; k < span.end; ++k) seq.labels[static_cast<std::size_t>(k)] = 1;
            i += static_cast<std::size_t>(best_len);
        } else {
            ++i;
        }
    }
    seq.validate();
    return seq;
}

AnnotationMap Detector::annotate_corpus(const Corpus& corpus, const Tokenizer& tokenizer) const {
    AnnotationMap map;
    for (const auto& s : corpus.samples) {
        CorpusAnnotation ann;
        ann.question = annotate(s.question, tokenizer);
        ann.answer = annotate(s.answer, tokenizer);
        map.emplace(s.id, std::move(ann));
    }
    return map;
}

PiiNGramSet extract_pii_ngrams(const std::vector<const AnnotatedSequence*>& train_annotations) {
    PiiNGramSet set;
    for (const auto* seq : train_annotations) {
        for (const auto& span : seq->spans) {
            for (int i = span.start; i < span.end; ++i) {
                set.unigrams.insert(seq->tokens[static_cast<std::size_t>(i)]);
                if (i + 1 < span.end) {
                    set.bigrams.emplace(seq->tokens[static_cast<std::size_t>(i)],
                                        seq->tokens[static_cast<std::size_t>(i) + 1]);
                }
            }
        }
    }
    return set;
}

PiiNGramSet extract_pii_ngrams(const AnnotationMap& annotations,
                               const std::vector<std::string>& train_ids) {
    std::vector<const AnnotatedSequence*> seqs;
    for (const auto& id : train_ids) {
        auto it = annotations.find(id);
        require(it != annotations.end(), ErrorKind::Precondition,
                "n-gram extraction: missing annotation for train id " + id);
        seqs.push_back(&it->second.question);
        seqs.push_back(&it->second.answer);
    }
    return extract_pii_ngrams(seqs);
}

void PiiNGramSet::save(const std::string& path) const {
    json j;
    j["unigrams"] = std::vector<int>(unigrams.begin(), unigrams.end());
    json bg = json::array();
    for (const auto& [a, b] : bigrams) bg.push_back({a, b});
    j["bigrams"] = bg;
    write_text_file(path, j.dump(2) + "\n");
}

PiiNGramSet PiiNGramSet::load(const std::string& path) {
    json j = json::parse(read_text_file(path));
    PiiNGramSet set;
    for (int id : j.at("unigrams")) set.unigrams.insert(id);
    for (const auto& pair : j.at("bigrams")) {
        set.bigrams.emplace(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
    return set;
}

namespace {

json sequence_to_json(const AnnotatedSequence& seq) {
    json spans = json::array();
    for (const auto& s : seq.spans) {
        spans.push_back({{"start", s.start}, {"end", s.end}, {"category", to_string(s.category)}});
    }
    return json{{"tokens", seq.tokens},
                {"labels", std::vector<int>(seq.labels.begin(), seq.labels.end())},
                {"spans", spans}};
}

AnnotatedSequence sequence_from_json(const json& j) {
    AnnotatedSequence seq;
    seq.tokens = j.at("tokens").get<std::vector<int>>();
    for (int v : j.at("labels")) seq.labels.push_back(static_cast<uint8_t>(v));
    for (const auto& s : j.at("spans")) {
        seq.spans.push_back({s.at("start").get<int>(), s.at("end").get<int>(),
                             pii_category_from_string(s.at("category").get<std::string>())});
    }
    seq.validate();
    return seq;
}

}  // namespace

void save_annotations(const AnnotationMap& map, const std::string& path) {
    json j = json::object();
    for (const auto& [id, ann] : map) {
        j[id] = {{"question", sequence_to_json(ann.question)},
                 {"answer", sequence_to_json(ann.answer)}};
    }
    write_text_file(path, j.dump() + "\n");
}

AnnotationMap load_annotations(const std::string& path) {
    json j = json::parse(read_text_file(path));
    AnnotationMap map;
    for (auto it = j.begin(); it != j.end(); ++it) {
        CorpusAnnotation ann;
        ann.question = sequence_from_json(it.value().at("question"));
        ann.answer = sequence_from_json(it.value().at("answer"));
        map.emplace(it.key(), std::move(ann));
    }
    return map;
}

}  // namespace privlm
