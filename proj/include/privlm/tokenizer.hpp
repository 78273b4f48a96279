#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace privlm {

/// Word-level tokenizer. Words are lowercased, punctuation marks become
/// single-character tokens, URLs (http://, https://, www.) and placeholder
/// tokens such as <NAME> pass through unchanged. Keeping PII words whole
/// keeps the n-gram sets and the leakage detector aligned with the
/// annotation spans.
class Tokenizer {
public:
    // fixed specials, dense ids 0..9, then the learned vocabulary
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kBos = "<bos>";
    static constexpr const char* kEos = "<eos>";
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kName = "<NAME>";
    static constexpr const char* kOrganization = "<ORGANIZATION>";
    static constexpr const char* kAddress = "<ADDRESS>";
    static constexpr const char* kUrl = "<URL>";
    static constexpr const char* kPhone = "<PHONE>";
    static constexpr const char* kAnon = "<X>";

    Tokenizer() = default;

    /// Split and normalize without consulting any vocabulary.
    static std::vector<std::string> split(const std::string& text);

    /// True for tokens of the form <...> (placeholders and reserved tokens).
    static bool is_placeholder(const std::string& token);

    /// Build the vocabulary from raw texts: specials first, then all
    /// distinct tokens in lexicographic order. Deterministic.
    static Tokenizer build(const std::vector<std::string>& texts);

    int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
    bool empty() const { return id_to_token_.empty(); }

    int token_id(const std::string& token) const;  // unk id when absent
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;

    std::vector<int> encode(const std::string& text) const;
    std::vector<int> encode_tokens(const std::vector<std::string>& tokens) const;
    std::string decode(const std::vector<int>& ids) const;
    static std::string join(const std::vector<std::string>& tokens);

    int pad_id() const { return 0; }
    int bos_id() const { return 1; }
    int eos_id() const { return 2; }
    int unk_id() const { return 3; }
    int special_for_category(const std::string& category) const;  // "<NAME>" etc.
    int anon_id() const { return token_id(kAnon); }
    bool is_special_id(int id) const { return id >= 0 && id < num_specials(); }
    static int num_specials();

    const std::vector<std::string>& vocab() const { return id_to_token_; }

    /// Rebuild from an explicit token list (checkpoint loading).
    static Tokenizer from_vocab(const std::vector<std::string>& vocab);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace privlm
