#include "privlm/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "privlm/common.hpp"

namespace privlm {

namespace {

const std::vector<std::string>& specials() {
    static const std::vector<std::string> s = {
        Tokenizer::kPad,  Tokenizer::kBos,          Tokenizer::kEos,
        Tokenizer::kUnk,  Tokenizer::kName,         Tokenizer::kOrganization,
        Tokenizer::kAddress, Tokenizer::kUrl,       Tokenizer::kPhone,
        Tokenizer::kAnon,
    };
    return s;
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-' || c == '_';
}

bool starts_url(const std::string& s, std::size_t i) {
    return s.compare(i, 7, "http://") == 0 || s.compare(i, 8, "https://") == 0 ||
           s.compare(i, 4, "www.") == 0;
}

// <NAME>, <unk>, ... one alpha run between angle brackets
std::size_t placeholder_end(const std::string& s, std::size_t i) {
    if (s[i] != '<') return 0;
    std::size_t j = i + 1;
    while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i + 1 && j < s.size() && s[j] == '>') return j + 1;
    return 0;
}

bool no_space_before(const std::string& tok) {
    if (tok.size() != 1) return false;
    switch (tok[0]) {
        case '.': case ',': case ';': case ':': case '!': case '?':
        case ')': case ']': case '}': case '%':
            return true;
        default:
            return false;
    }
}

bool no_space_after(const std::string& tok) {
    return tok.size() == 1 && (tok[0] == '(' || tok[0] == '[' || tok[0] == '{');
}

}  // namespace

std::vector<std::string> Tokenizer::split(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::size_t end = placeholder_end(text, i); end != 0) {
            out.push_back(text.substr(i, end - i));
            i = end;
            continue;
        }
        if (starts_url(text, i)) {
            std::size_t j = i;
            while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            // strip trailing sentence punctuation off the URL
            while (j > i && (text[j - 1] == '.' || text[j - 1] == ',')) --j;
            out.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        if (is_word_char(c)) {
            std::size_t j = i;
            std::string word;
            while (j < n && is_word_char(text[j])) {
                word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j]))));
                ++j;
            }
            out.push_back(word);
            i = j;
            continue;
        }
        out.push_back(std::string(1, c));
        ++i;
    }
    return out;
}

bool Tokenizer::is_placeholder(const std::string& token) {
    return token.size() >= 3 && token.front() == '<' && token.back() == '>';
}

int Tokenizer::num_specials() { return static_cast<int>(specials().size()); }

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
    std::set<std::string> seen;
    for (const auto& text : texts) {
        for (auto& tok : split(text)) seen.insert(tok);
    }
    std::vector<std::string> vocab = specials();
    for (const auto& tok : seen) {
        if (std::find(vocab.begin(), vocab.end(), tok) == vocab.end()) vocab.push_back(tok);
    }
    return from_vocab(vocab);
}

Tokenizer Tokenizer::from_vocab(const std::vector<std::string>& vocab) {
    require(vocab.size() >= specials().size(), ErrorKind::Schema,
            "vocabulary is missing the reserved special tokens");
    for (std::size_t i = 0; i < specials().size(); ++i) {
        require(vocab[i] == specials()[i], ErrorKind::Schema,
                "vocabulary specials out of order at index " + std::to_string(i));
    }
    Tokenizer t;
    t.id_to_token_ = vocab;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        t.token_to_id_.emplace(vocab[i], static_cast<int>(i));
    }
    require(t.token_to_id_.size() == vocab.size(), ErrorKind::Schema,
            "vocabulary contains duplicate tokens");
    return t;
}

int Tokenizer::token_id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unk_id() : it->second;
}

bool Tokenizer::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

const std::string& Tokenizer::token(int id) const {
    require(id >= 0 && id < vocab_size(), ErrorKind::Precondition,
            "token id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    return encode_tokens(split(text));
}

std::vector<int> Tokenizer::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& tok : tokens) ids.push_back(token_id(tok));
    return ids;
}

std::string Tokenizer::join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        if (!out.empty() && !no_space_before(tok) &&
            !(i > 0 && no_space_after(tokens[i - 1]))) {
            out.push_back(' ');
        }
        out += tok;
    }
    return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::vector<std::string> toks;
    toks.reserve(ids.size());
    for (int id : ids) toks.push_back(token(id));
    return join(toks);
}

int Tokenizer::special_for_category(const std::string& category) const {
    if (category == "NAME") return token_id(kName);
    if (category == "ORGANIZATION") return token_id(kOrganization);
    if (category == "ADDRESS") return token_id(kAddress);
    if (category == "URL") return token_id(kUrl);
    if (category == "PHONE") return token_id(kPhone);
    fail(ErrorKind::Precondition, "unknown PII category: " + category);
}

}  // namespace privlm
