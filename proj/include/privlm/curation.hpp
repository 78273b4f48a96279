#pragma once

#include <vector>

#include "privlm/corpus.hpp"
#include "privlm/detector.hpp"
#include "privlm/tokenizer.hpp"

namespace privlm {

enum class SubstitutionStyle {
    Category,  // <NAME>, <ORGANIZATION>, ...
    GenericX,  // <X> for every span
};

/// Drops every labeled token; survivors keep their order.
std::vector<int> remove_pii(const AnnotatedSequence& seq);

/// Collapses each span to a single placeholder token. This is the one-way
/// masking map: distinct annotated inputs may produce the same output.
std::vector<int> substitute_pii(const AnnotatedSequence& seq, const Tokenizer& tokenizer,
                                SubstitutionStyle style = SubstitutionStyle::Category);

/// Corpus-level variants; answers are rewritten, questions kept verbatim.
enum class CurationMode { Removal, Substitution };
Corpus curate_corpus(const Corpus& corpus, const AnnotationMap& annotations,
                     const Tokenizer& tokenizer, CurationMode mode,
                     SubstitutionStyle style = SubstitutionStyle::Category);

}  // namespace privlm
