#pragma once

#include <optional>
#include <string>
#include <vector>

#include "privlm/corpus.hpp"
#include "privlm/curation.hpp"
#include "privlm/detector.hpp"
#include "privlm/tokenizer.hpp"

namespace privlm {

/// Experiment arms. Penalty/Classifier/Dpo train on the vanilla prompt
/// skeleton; the remaining arms each have their own template.
enum class Strategy {
    Vanilla,
    Removal,
    Substitution,
    Penalty,
    Classifier,
    Dpo,
    It,
    ItPn1,
    ItPn2,
    ItNp1,
    ItNp2,
};

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
const std::vector<Strategy>& all_strategies();
bool is_case_strategy(Strategy s);  // the four positive/negative-case arms

struct InstructionRecord {
    std::string prompt;      // instruction + "### Input" + question + "### Response"
    std::string completion;  // byte-exact template instantiation
    Strategy strategy = Strategy::Vanilla;
    std::vector<int> completion_ids;
    std::vector<uint8_t> pii_mask;  // aligned with completion_ids
};

struct PreferencePair {
    std::string id;
    std::string prompt;        // x
    std::string preferred;     // w: cleaned answer
    std::string dispreferred;  // l: original answer
};

struct ExtractedAnswer {
    std::string text;
    bool used_fallback = false;  // markers missing; whole generation returned
};

/// Parsed template asset: a prompt skeleton with a {{question}} slot and a
/// completion made of literal runs and answer slots.
class TemplateLibrary {
public:
    explicit TemplateLibrary(const std::string& data_dir = "");

    /// Raw text instantiation of one template. Used for golden checks and
    /// by render().
    struct Rendered {
        std::string prompt;
        std::string completion;
    };
    Rendered instantiate(Strategy skeleton, const std::string& question,
                         const std::string& answer, const std::string& answer_protected) const;

    InstructionRecord render(const Sample& sample, const AnnotatedSequence& annotated_answer,
                             Strategy strategy, const Tokenizer& tokenizer) const;

    ExtractedAnswer extract_protected_answer(const std::string& generation,
                                             Strategy strategy) const;

    /// Prompt used at inference time (completion slots left to the model).
    std::string inference_prompt(const std::string& question, Strategy strategy) const;

private:
    struct Piece {
        std::string literal;  // literal run when slot is empty
        std::string slot;     // "answer" or "answer_protected"
    };
    struct Asset {
        std::string prompt_template;  // contains {{question}}
        std::vector<Piece> completion_pieces;
    };
    const Asset& asset_for(Strategy s) const;

    Asset vanilla_, it_, pn1_, pn2_, np1_, np2_;
};

std::vector<PreferencePair> build_dpo_pairs(const Corpus& corpus,
                                            const AnnotationMap& annotations,
                                            const Tokenizer& tokenizer,
                                            const TemplateLibrary& templates);

void save_records(const std::vector<InstructionRecord>& records, const std::string& path);
std::vector<InstructionRecord> load_records(const std::string& path);

}  // namespace privlm
