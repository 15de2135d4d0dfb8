// vocab.hpp
// Token id layout shared by the tokenizer, embedding tables, recommender
// and trie: [PAD, BOS, EOS, collision digits..., level-major code tokens...].
#pragma once

#include <cstdint>

#include "decor/common.hpp"

namespace decor {

struct TokenVocab {
    int levels = 0;          // quantization levels M
    int codebook_size = 0;   // codes per level K
    int collision_vocab = 0; // collision digits

    static constexpr int32_t kPad = 0;
    static constexpr int32_t kBos = 1;
    static constexpr int32_t kEos = 2;

    int32_t collision_base() const { return 3; }
    int32_t code_base() const { return 3 + collision_vocab; }
    int32_t size() const { return code_base() + levels * codebook_size; }
    int32_t n_special() const { return code_base(); }  // PAD/BOS/EOS + collision digits

    int32_t code_token(int level, int code) const {
        DECOR_REQUIRE(level >= 0 && level < levels && code >= 0 && code < codebook_size,
                      ConfigError, "code token out of range: level " << level << " code " << code);
        return code_base() + level * codebook_size + code;
    }
    int32_t collision_token(int digit) const {
        DECOR_REQUIRE(digit >= 0 && digit < collision_vocab, CollisionOverflowError,
                      "collision digit " << digit << " exceeds vocabulary of " << collision_vocab);
        return collision_base() + digit;
    }

    bool is_code(int32_t t) const { return t >= code_base() && t < size(); }
    bool is_collision(int32_t t) const { return t >= collision_base() && t < code_base(); }
    int level_of(int32_t t) const {
        DECOR_REQUIRE(is_code(t), ConfigError, "token " << t << " is not a codebook token");
        return (t - code_base()) / codebook_size;
    }
    int code_of(int32_t t) const {
        DECOR_REQUIRE(is_code(t), ConfigError, "token " << t << " is not a codebook token");
        return (t - code_base()) % codebook_size;
    }
    int collision_of(int32_t t) const {
        DECOR_REQUIRE(is_collision(t), ConfigError, "token " << t << " is not a collision token");
        return t - collision_base();
    }
};

}  // namespace decor
