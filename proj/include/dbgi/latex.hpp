#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace dbgi {

// Token table with fixed reserved ids. Non-reserved entries map bijectively
// between token strings and ids.
class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int start_id = 1;
    static constexpr int end_id = 2;
    static constexpr int unknown_id = 3;
    static constexpr int reserved_count = 4;

    Vocabulary() = default;
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
    int id(const std::string& token) const;         // unknown_id when absent
    const std::string& token(int id) const;

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Lexes a LaTeX label: backslash commands are single lexemes, every other
// non-space character stands alone, whitespace only separates.
std::vector<std::string> split_latex(const std::string& label);

struct TokenizeResult {
    std::vector<int> ids;  // starts with start_id, ends with end_id
    int unknown_count = 0;
};

TokenizeResult tokenize_latex(const std::string& label, const Vocabulary& vocab);

// Body tokens joined by single spaces; reserved ids are dropped.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace dbgi
