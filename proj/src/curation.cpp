#include "privlm/curation.hpp"

#include "privlm/common.hpp"

namespace privlm {

std::vector<int> remove_pii(const AnnotatedSequence& seq) {
    seq.validate();
    std::vector<int> out;
    out.reserve(seq.tokens.size());
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (seq.labels[i] == 0) out.push_back(seq.tokens[i]);
    }
    return out;
}

std::vector<int> substitute_pii(const AnnotatedSequence& seq, const Tokenizer& tokenizer,
                                SubstitutionStyle style) {
    seq.validate();
    std::vector<int> out;
    out.reserve(seq.tokens.size());
    std::size_t next_span = 0;
    std::size_t i = 0;
    while (i < seq.tokens.size()) {
        if (next_span < seq.spans.size() &&
            static_cast<int>(i) == seq.spans[next_span].start) {
            const PiiSpan& span = seq.spans[next_span];
            int placeholder = style == SubstitutionStyle::GenericX
                                  ? tokenizer.anon_id()
                                  : tokenizer.special_for_category(to_string(span.category));
            out.push_back(placeholder);
            i = static_cast<std::size_t>(span.end);
            ++next_span;
        } else {
            out.push_back(seq.tokens[i]);
            ++i;
        }
    }
    return out;
}

Corpus curate_corpus(const Corpus& corpus, const AnnotationMap& annotations,
                     const Tokenizer& tokenizer, CurationMode mode, SubstitutionStyle style) {
    Corpus out;
    out.name = corpus.name + (mode == CurationMode::Removal ? "-removal" : "-substitution");
    out.train_ids = corpus.train_ids;
    out.test_ids = corpus.test_ids;
    for (const auto& s : corpus.samples) {
        auto it = annotations.find(s.id);
        require(it != annotations.end(), ErrorKind::Precondition,
                "curation: missing annotation for sample " + s.id);
        Sample copy = s;
        copy.answer_pii.clear();
        std::vector<int> ids = mode == CurationMode::Removal
                                   ? remove_pii(it->second.answer)
                                   : substitute_pii(it->second.answer, tokenizer, style);
        copy.answer = tokenizer.decode(ids);
        if (copy.answer.empty()) copy.answer = ".";  // fully redacted answer
        out.samples.push_back(std::move(copy));
    }
    out.validate();
    return out;
}

}  // namespace privlm
