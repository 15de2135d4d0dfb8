// trie.hpp
// Prefix tree over semantic-id token sequences. Every corpus item is one
// root-to-leaf path of M code tokens plus a collision token; beam search
// expands only children present here, so generated items always exist.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "decor/rqvae.hpp"
#include "decor/vocab.hpp"

namespace decor {

struct TrieNode {
    std::map<int32_t, int> children;  // token id -> node index, sorted by token
    std::string item_id;              // set on leaves
};

class SemanticTrie {
public:
    SemanticTrie() { nodes_.emplace_back(); }

    void insert(const std::vector<int32_t>& tokens, const std::string& item_id) {
        int cur = 0;
        for (int32_t t : tokens) {
            auto it = nodes_[static_cast<size_t>(cur)].children.find(t);
            if (it == nodes_[static_cast<size_t>(cur)].children.end()) {
                nodes_.emplace_back();
                int idx = static_cast<int>(nodes_.size()) - 1;
                nodes_[static_cast<size_t>(cur)].children.emplace(t, idx);
                cur = idx;
            } else {
                cur = it->second;
            }
        }
        DECOR_REQUIRE(nodes_[static_cast<size_t>(cur)].item_id.empty(), ConfigError,
                      "duplicate semantic id for items " << nodes_[static_cast<size_t>(cur)].item_id
                                                         << " and " << item_id);
        DECOR_REQUIRE(nodes_[static_cast<size_t>(cur)].children.empty(), ConfigError,
                      "semantic id of " << item_id << " is a prefix of another item");
        nodes_[static_cast<size_t>(cur)].item_id = item_id;
    }

    const TrieNode& node(int idx) const { return nodes_[static_cast<size_t>(idx)]; }
    int root() const { return 0; }

    // leaf lookup; empty string when the path does not end on an item
    std::string find(const std::vector<int32_t>& tokens) const {
        int cur = 0;
        for (int32_t t : tokens) {
            auto it = nodes_[static_cast<size_t>(cur)].children.find(t);
            if (it == nodes_[static_cast<size_t>(cur)].children.end()) return {};
            cur = it->second;
        }
        return nodes_[static_cast<size_t>(cur)].item_id;
    }

    size_t leaf_count() const {
        size_t n = 0;
        for (const auto& node : nodes_)
            if (!node.item_id.empty()) ++n;
        return n;
    }

private:
    std::vector<TrieNode> nodes_;
};

inline std::vector<int32_t> sid_tokens(const SemanticID& sid, const TokenVocab& vocab) {
    std::vector<int32_t> tokens;
    tokens.reserve(sid.codes.size() + 1);
    for (size_t l = 0; l < sid.codes.size(); ++l)
        tokens.push_back(vocab.code_token(static_cast<int>(l), sid.codes[l]));
    tokens.push_back(vocab.collision_token(sid.collision));
    return tokens;
}

inline SemanticTrie build_trie(const std::map<std::string, SemanticID>& sid_map,
                               const TokenVocab& vocab) {
    SemanticTrie trie;
    for (const auto& [item, sid] : sid_map) trie.insert(sid_tokens(sid, vocab), item);
    return trie;
}

}  // namespace decor
