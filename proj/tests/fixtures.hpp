// fixtures.hpp
// Shared test scaffolding: a small synthetic corpus run end to end through
// the tokenizer so recommender-level tests start from a consistent state.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "decor/data.hpp"
#include "decor/recommender.hpp"
#include "decor/rqvae.hpp"
#include "decor/train.hpp"
#include "decor/trie.hpp"

namespace testing_fixtures {

template <typename T>
struct RecFixture {
    decor::SyntheticSpec spec;
    decor::SyntheticData data;
    decor::RqVaeModel<T> tokenizer;
    std::map<std::string, decor::SemanticID> sids;
    decor::TokenVocab vocab;
    decor::SemanticTrie trie;
    decor::LeaveOneOutSplit split;
    decor::RecommenderModel<T> model;
};

template <typename T>
RecFixture<T> make_rec_fixture(int n_items, int n_users, int levels, int k, int d_model,
                               double alpha, int bos_queries, uint64_t seed,
                               int tokenizer_epochs = 15) {
    RecFixture<T> f;
    f.spec.n_categories = 4;
    f.spec.n_subcategories_per_cat = 4;
    f.spec.n_items = n_items;
    f.spec.embed_dim = 16;
    f.spec.n_users = n_users;
    f.spec.seq_len_min = 6;
    f.spec.seq_len_max = 10;
    f.spec.seed = seed;
    f.data = decor::generate_synthetic(f.spec);

    decor::RqVaeConfig tok;
    tok.levels = levels;
    tok.codebook_size = k;
    tok.latent_dim = d_model;
    tok.input_dim = f.spec.embed_dim;
    tok.encoder_hidden = {32};
    tok.epochs = tokenizer_epochs;
    tok.batch_size = 128;
    tok.collision_vocab = 64;
    tok.seed = seed;
    std::vector<T> flat;
    for (const auto& [id, emb] : f.data.items.embeddings)
        for (double v : emb) flat.push_back(static_cast<T>(v));
    auto items = decor::num::Tensor<T>::leaf({n_items, f.spec.embed_dim}, std::move(flat), false);
    f.tokenizer = decor::train_rqvae(items, tok);

    std::map<std::string, std::vector<T>> typed;
    for (const auto& [id, emb] : f.data.items.embeddings)
        typed.emplace(id, std::vector<T>(emb.begin(), emb.end()));
    f.sids = decor::assign_semantic_ids(typed, f.tokenizer);

    f.vocab = decor::TokenVocab{levels, k, tok.collision_vocab};
    f.trie = decor::build_trie(f.sids, f.vocab);
    f.split = decor::leave_one_out_split(decor::filter_5core(f.data.interactions));

    decor::RecommenderConfig rc;
    rc.d_model = d_model;
    rc.enc_layers = 1;
    rc.dec_layers = 1;
    rc.heads = 2;
    rc.ffn_mult = 2;
    rc.dropout = 0.0;
    rc.max_history_items = 10;
    rc.batch_size = 32;
    rc.beam_size = 10;
    rc.val_eval_users = 24;
    rc.seed = seed;
    decor::DecorConfig dc;
    dc.alpha = alpha;
    dc.bos_queries = bos_queries;
    f.model = decor::RecommenderModel<T>::init(rc, dc, f.vocab, decor::export_codebooks(f.tokenizer));
    return f;
}

}  // namespace testing_fixtures
