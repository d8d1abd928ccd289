#include "dbgi/latex.hpp"

#include <cctype>

#include "dbgi/tensor.hpp"

namespace dbgi {

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    v.id_to_token_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
    for (const std::string& t : tokens) {
        if (t.empty()) throw ContractViolation("vocabulary: empty token");
        if (v.token_to_id_.count(t)) continue;
        v.token_to_id_[t] = static_cast<int>(v.id_to_token_.size());
        v.id_to_token_.push_back(t);
    }
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unknown_id : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw ContractViolation("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_latex(const std::string& label) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < label.size()) {
        const char c = label[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '\\') {
            std::string cmd(1, c);
            ++i;
            while (i < label.size() && std::isalpha(static_cast<unsigned char>(label[i])))
                cmd.push_back(label[i++]);
            if (cmd.size() == 1 && i < label.size()) cmd.push_back(label[i++]);  // e.g. "\{"
            out.push_back(cmd);
            continue;
        }
        out.emplace_back(1, c);
        ++i;
    }
    return out;
}

TokenizeResult tokenize_latex(const std::string& label, const Vocabulary& vocab) {
    if (label.empty()) throw ContractViolation("tokenize: empty label");
    TokenizeResult result;
    result.ids.push_back(Vocabulary::start_id);
    for (const std::string& lexeme : split_latex(label)) {
        const int id = vocab.id(lexeme);
        if (id == Vocabulary::unknown_id) ++result.unknown_count;
        result.ids.push_back(id);
    }
    result.ids.push_back(Vocabulary::end_id);
    return result;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < Vocabulary::reserved_count) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

}  // namespace dbgi
