#include "privlm/templates.hpp"

#include <algorithm>

#include <json.hpp>

#include "privlm/common.hpp"

namespace privlm {

using nlohmann::json;

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Vanilla: return "Vanilla";
        case Strategy::Removal: return "Removal";
        case Strategy::Substitution: return "Substitution";
        case Strategy::Penalty: return "Penalty";
        case Strategy::Classifier: return "Classifier";
        case Strategy::Dpo: return "DPO";
        case Strategy::It: return "IT";
        case Strategy::ItPn1: return "IT_PN1";
        case Strategy::ItPn2: return "IT_PN2";
        case Strategy::ItNp1: return "IT_NP1";
        case Strategy::ItNp2: return "IT_NP2";
    }
    fail(ErrorKind::Precondition, "bad Strategy");
}

Strategy strategy_from_string(const std::string& s) {
    for (Strategy st : all_strategies()) {
        if (to_string(st) == s) return st;
    }
    fail(ErrorKind::Config, "unknown strategy: " + s);
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> all = {
        Strategy::Vanilla, Strategy::Removal, Strategy::Substitution, Strategy::Penalty,
        Strategy::Classifier, Strategy::Dpo, Strategy::It, Strategy::ItPn1,
        Strategy::ItPn2, Strategy::ItNp1, Strategy::ItNp2};
    return all;
}

bool is_case_strategy(Strategy s) {
    return s == Strategy::ItPn1 || s == Strategy::ItPn2 || s == Strategy::ItNp1 ||
           s == Strategy::ItNp2;
}

namespace {

constexpr const char* kResponseMarker = "### Response\n";

std::string load_asset(const std::string& data_dir, const std::string& name) {
    std::string dir = data_dir.empty() ? default_data_dir() : data_dir;
    std::string text = read_text_file(dir + "/templates/" + name);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

std::string replace_slot(std::string text, const std::string& slot, const std::string& value) {
    std::string needle = "{{" + slot + "}}";
    std::size_t pos;
    while ((pos = text.find(needle)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
    }
    return text;
}

}  // namespace

TemplateLibrary::TemplateLibrary(const std::string& data_dir) {
    auto parse = [&](const std::string& name) {
        std::string text = load_asset(data_dir, name);
        std::size_t marker = text.rfind(kResponseMarker);
        require(marker != std::string::npos, ErrorKind::Schema,
                "template asset " + name + " lacks a response marker");
        Asset asset;
        std::size_t completion_start = marker + std::string(kResponseMarker).size();
        asset.prompt_template = text.substr(0, completion_start);
        std::string completion = text.substr(completion_start);
        // split completion into literal runs and {{slot}} references
        std::size_t i = 0;
        std::string literal;
        while (i < completion.size()) {
            if (completion.compare(i, 2, "{{") == 0) {
                std::size_t end = completion.find("}}", i);
                require(end != std::string::npos, ErrorKind::Schema,
                        "unterminated slot in template " + name);
                if (!literal.empty()) {
                    asset.completion_pieces.push_back({literal, ""});
                    literal.clear();
                }
                asset.completion_pieces.push_back({"", completion.substr(i + 2, end - i - 2)});
                i = end + 2;
            } else {
                literal.push_back(completion[i]);
                ++i;
            }
        }
        if (!literal.empty()) asset.completion_pieces.push_back({literal, ""});
        return asset;
    };
    vanilla_ = parse("vanilla.txt");
    it_ = parse("it.txt");
    pn1_ = parse("it_pn1.txt");
    pn2_ = parse("it_pn2.txt");
    np1_ = parse("it_np1.txt");
    np2_ = parse("it_np2.txt");
}

const TemplateLibrary::Asset& TemplateLibrary::asset_for(Strategy s) const {
    switch (s) {
        case Strategy::It: return it_;
        case Strategy::ItPn1: return pn1_;
        case Strategy::ItPn2: return pn2_;
        case Strategy::ItNp1: return np1_;
        case Strategy::ItNp2: return np2_;
        default: return vanilla_;  // curated and loss-level arms share the vanilla skeleton
    }
}

TemplateLibrary::Rendered TemplateLibrary::instantiate(Strategy skeleton,
                                                       const std::string& question,
                                                       const std::string& answer,
                                                       const std::string& answer_protected) const {
    const Asset& asset = asset_for(skeleton);
    Rendered out;
    out.prompt = replace_slot(asset.prompt_template, "question", question);
    for (const auto& piece : asset.completion_pieces) {
        if (!piece.slot.empty()) {
            out.completion += piece.slot == "answer_protected" ? answer_protected : answer;
        } else {
            out.completion += piece.literal;
        }
    }
    return out;
}

InstructionRecord TemplateLibrary::render(const Sample& sample,
                                          const AnnotatedSequence& annotated_answer,
                                          Strategy strategy, const Tokenizer& tokenizer) const {
    annotated_answer.validate();
    std::string original = tokenizer.decode(annotated_answer.tokens);
    std::vector<int> substituted_ids = substitute_pii(annotated_answer, tokenizer);
    std::string substituted = tokenizer.decode(substituted_ids);

    std::string answer_slot = original;
    if (strategy == Strategy::Removal) {
        answer_slot = tokenizer.decode(remove_pii(annotated_answer));
        if (answer_slot.empty()) answer_slot = ".";
    } else if (strategy == Strategy::Substitution) {
        answer_slot = substituted;
    } else if (strategy == Strategy::It) {
        // the IT arm trains on the protected response the instruction asks for
        answer_slot = substituted;
    }

    Rendered rendered = instantiate(strategy, sample.question, answer_slot, substituted);

    InstructionRecord record;
    record.prompt = rendered.prompt;
    record.completion = rendered.completion;
    record.strategy = strategy;

    // token-level completion with the PII mask built by construction
    const Asset& asset = asset_for(strategy);
    for (const auto& piece : asset.completion_pieces) {
        if (piece.slot.empty()) {
            for (int id : tokenizer.encode(piece.literal)) {
                record.completion_ids.push_back(id);
                record.pii_mask.push_back(0);
            }
        } else if (piece.slot == "answer_protected") {
            for (int id : substituted_ids) {
                record.completion_ids.push_back(id);
                record.pii_mask.push_back(0);
            }
        } else {
            // the "answer" slot: original for case arms, curated otherwise
            if (strategy == Strategy::Removal) {
                for (int id : tokenizer.encode(answer_slot)) {
                    record.completion_ids.push_back(id);
                    record.pii_mask.push_back(0);
                }
            } else if (strategy == Strategy::Substitution || strategy == Strategy::It) {
                for (int id : substituted_ids) {
                    record.completion_ids.push_back(id);
                    record.pii_mask.push_back(0);
                }
            } else {
                for (std::size_t i = 0; i < annotated_answer.tokens.size(); ++i) {
                    record.completion_ids.push_back(annotated_answer.tokens[i]);
                    record.pii_mask.push_back(annotated_answer.labels[i]);
                }
            }
        }
    }
    return record;
}

std::string TemplateLibrary::inference_prompt(const std::string& question,
                                              Strategy strategy) const {
    const Asset& asset = asset_for(strategy);
    return replace_slot(asset.prompt_template, "question", question);
}

ExtractedAnswer TemplateLibrary::extract_protected_answer(const std::string& generation,
                                                          Strategy strategy) const {
    if (!is_case_strategy(strategy)) return {generation, false};

    const Asset& asset = asset_for(strategy);
    // normalized marker text as it appears in decoded generations
    std::vector<std::string> markers;
    std::vector<std::string> slots;
    for (const auto& piece : asset.completion_pieces) {
        if (!piece.slot.empty()) {
            slots.push_back(piece.slot);
        } else {
            std::string norm = Tokenizer::join(Tokenizer::split(piece.literal));
            if (!norm.empty()) markers.push_back(norm);
        }
    }
    if (markers.size() < 2 || slots.size() < 2) return {generation, true};

    bool protected_first = slots[0] == "answer_protected";
    std::size_t m1 = generation.find(markers[0]);
    std::size_t m2 = generation.find(markers[1], m1 == std::string::npos ? 0 : m1 + 1);
    auto trim = [](std::string text) {
        auto is_ws = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; };
        while (!text.empty() && is_ws(text.front())) text.erase(text.begin());
        while (!text.empty() && is_ws(text.back())) text.pop_back();
        return text;
    };
    if (protected_first) {
        if (m1 == std::string::npos) return {generation, true};
        std::size_t begin = m1 + markers[0].size();
        std::size_t end = m2 == std::string::npos ? generation.size() : m2;
        return {trim(generation.substr(begin, end - begin)), false};
    }
    if (m2 == std::string::npos) return {generation, true};
    return {trim(generation.substr(m2 + markers[1].size())), false};
}

std::vector<PreferencePair> build_dpo_pairs(const Corpus& corpus,
                                            const AnnotationMap& annotations,
                                            const Tokenizer& tokenizer,
                                            const TemplateLibrary& templates) {
    std::vector<PreferencePair> pairs;
    const auto& ids = corpus.has_split() ? corpus.train_ids : [&] {
        std::vector<std::string> all;
        for (const auto& s : corpus.samples) all.push_back(s.id);
        return all;
    }();
    for (const auto& id : ids) {
        auto it = annotations.find(id);
        require(it != annotations.end(), ErrorKind::Precondition,
                "dpo pairs: missing annotation for sample " + id);
        const AnnotatedSequence& ann = it->second.answer;
        if (!ann.has_pii()) continue;  // w would equal l
        const Sample& sample = corpus.sample(id);
        PreferencePair pair;
        pair.id = id;
        pair.prompt = templates.inference_prompt(sample.question, Strategy::Vanilla);
        pair.preferred = tokenizer.decode(substitute_pii(ann, tokenizer));
        pair.dispreferred = tokenizer.decode(ann.tokens);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

void save_records(const std::vector<InstructionRecord>& records, const std::string& path) {
    std::string out;
    for (const auto& r : records) {
        out += json{{"prompt", r.prompt},
                    {"completion", r.completion},
                    {"strategy", to_string(r.strategy)}}
                   .dump() +
               "\n";
    }
    write_text_file(path, out);
}

std::vector<InstructionRecord> load_records(const std::string& path) {
    std::vector<InstructionRecord> records;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse,
                 "line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        InstructionRecord r;
        r.prompt = j.at("prompt").get<std::string>();
        r.completion = j.at("completion").get<std::string>();
        r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace privlm
