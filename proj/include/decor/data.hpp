// data.hpp
// Ingestion of item-embedding and interaction files (JSON Lines), 5-core
// filtering to fixpoint, leave-one-out splitting, and a synthetic corpus
// generator with hierarchical item semantics and sticky category sessions.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "decor/common.hpp"

namespace decor {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Item embeddings.
// ---------------------------------------------------------------------------

struct ItemFile {
    int dim = 0;
    std::map<std::string, std::vector<double>> embeddings;
};

inline ItemFile ingest_items(const std::string& path) {
    std::ifstream in(path);
    DECOR_REQUIRE(in.good(), IoError, "cannot open items file: " << path);
    ItemFile items;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Json rec;
        try {
            rec = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ConfigError("items file " + path + " line " + std::to_string(line_no) +
                              ": malformed JSON (" + e.what() + ")");
        }
        DECOR_REQUIRE(rec.contains("item_id") && rec["item_id"].is_string(), ConfigError,
                      "items file line " << line_no << ": missing string item_id");
        DECOR_REQUIRE(rec.contains("embedding") && rec["embedding"].is_array(), ConfigError,
                      "items file line " << line_no << ": missing embedding array");
        std::string id = rec["item_id"].get<std::string>();
        std::vector<double> emb;
        for (const auto& v : rec["embedding"]) {
            DECOR_REQUIRE(v.is_number(), ConfigError,
                          "items file line " << line_no << ": non-numeric embedding entry");
            emb.push_back(v.get<double>());
        }
        DECOR_REQUIRE(!emb.empty(), ConfigError, "items file line " << line_no << ": empty embedding");
        if (items.dim == 0) {
            items.dim = static_cast<int>(emb.size());
        } else {
            DECOR_REQUIRE(static_cast<int>(emb.size()) == items.dim, ConfigError,
                          "items file line " << line_no << ": embedding dim " << emb.size()
                                             << " != " << items.dim);
        }
        DECOR_REQUIRE(items.embeddings.emplace(id, std::move(emb)).second, ConfigError,
                      "items file line " << line_no << ": duplicate item_id " << id);
    }
    DECOR_REQUIRE(!items.embeddings.empty(), ConfigError, "items file " << path << ": no items");
    return items;
}

// ---------------------------------------------------------------------------
// Interactions.
// ---------------------------------------------------------------------------

struct InteractionDataset {
    std::map<std::string, std::vector<std::string>> users;  // chronological item lists
    std::set<std::string> items;

    size_t interaction_count() const {
        size_t n = 0;
        for (const auto& [u, seq] : users) n += seq.size();
        return n;
    }
};

// Accepts either {"user_id", "item_ids": [...]} sequence records or
// {"user_id", "item_id", "timestamp"} triplets (sorted by timestamp, then
// item_id). The first record fixes the format for the whole file.
inline InteractionDataset ingest_interactions(const std::string& path) {
    std::ifstream in(path);
    DECOR_REQUIRE(in.good(), IoError, "cannot open interactions file: " << path);
    InteractionDataset ds;
    std::map<std::string, std::vector<std::pair<std::pair<double, std::string>, std::string>>> triplets;
    int format = 0;  // 0 unknown, 1 sequences, 2 triplets
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Json rec;
        try {
            rec = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ConfigError("interactions file " + path + " line " + std::to_string(line_no) +
                              ": malformed JSON (" + e.what() + ")");
        }
        DECOR_REQUIRE(rec.contains("user_id") && rec["user_id"].is_string(), ConfigError,
                      "interactions line " << line_no << ": missing string user_id");
        int rec_format = rec.contains("item_ids") ? 1 : rec.contains("item_id") ? 2 : 0;
        DECOR_REQUIRE(rec_format != 0, ConfigError,
                      "interactions line " << line_no << ": unknown record format");
        if (format == 0) format = rec_format;
        DECOR_REQUIRE(format == rec_format, ConfigError,
                      "interactions line " << line_no << ": mixed record formats");
        std::string user = rec["user_id"].get<std::string>();
        if (format == 1) {
            DECOR_REQUIRE(rec["item_ids"].is_array(), ConfigError,
                          "interactions line " << line_no << ": item_ids must be an array");
            auto& seq = ds.users[user];
            for (const auto& v : rec["item_ids"]) {
                DECOR_REQUIRE(v.is_string(), ConfigError,
                              "interactions line " << line_no << ": non-string item id");
                seq.push_back(v.get<std::string>());
            }
        } else {
            DECOR_REQUIRE(rec.contains("timestamp") && rec["timestamp"].is_number(), ConfigError,
                          "interactions line " << line_no << ": triplet missing numeric timestamp");
            std::string item = rec["item_id"].get<std::string>();
            double ts = rec["timestamp"].get<double>();
            triplets[user].push_back({{ts, item}, item});
        }
    }
    if (format == 2) {
        for (auto& [user, events] : triplets) {
            std::sort(events.begin(), events.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            auto& seq = ds.users[user];
            for (auto& e : events) seq.push_back(std::move(e.second));
        }
    }
    DECOR_REQUIRE(!ds.users.empty(), ConfigError, "interactions file " << path << ": no records");
    for (const auto& [user, seq] : ds.users)
        for (const auto& item : seq) ds.items.insert(item);
    return ds;
}

// ---------------------------------------------------------------------------
// 5-core filter: alternately drop users and items with fewer than
// min_count interactions until nothing changes.
// ---------------------------------------------------------------------------

inline InteractionDataset filter_core(const InteractionDataset& input, size_t min_count = 5) {
    InteractionDataset ds = input;
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto it = ds.users.begin(); it != ds.users.end();) {
            if (it->second.size() < min_count) {
                it = ds.users.erase(it);
                changed = true;
            } else {
                ++it;
            }
        }
        std::map<std::string, size_t> item_counts;
        for (const auto& [user, seq] : ds.users)
            for (const auto& item : seq) ++item_counts[item];
        std::set<std::string> dead;
        for (const auto& [item, count] : item_counts)
            if (count < min_count) dead.insert(item);
        if (!dead.empty()) {
            changed = true;
            for (auto& [user, seq] : ds.users) {
                seq.erase(std::remove_if(seq.begin(), seq.end(),
                                         [&dead](const std::string& i) { return dead.count(i) > 0; }),
                          seq.end());
            }
        }
    }
    ds.items.clear();
    for (const auto& [user, seq] : ds.users)
        for (const auto& item : seq) ds.items.insert(item);
    DECOR_REQUIRE(!ds.users.empty() && !ds.items.empty(), ConfigError,
                  "5-core filter removed the entire dataset");
    return ds;
}

inline InteractionDataset filter_5core(const InteractionDataset& input) {
    return filter_core(input, 5);
}

// ---------------------------------------------------------------------------
// Leave-one-out split.
// ---------------------------------------------------------------------------

struct SplitExample {
    std::string user_id;
    std::vector<std::string> context;  // chronological, oldest first
    std::string target;
};

struct LeaveOneOutSplit {
    std::vector<SplitExample> train;
    std::vector<SplitExample> val;
    std::vector<SplitExample> test;
};

inline LeaveOneOutSplit leave_one_out_split(const InteractionDataset& ds) {
    LeaveOneOutSplit split;
    for (const auto& [user, seq] : ds.users) {
        size_t n = seq.size();
        DECOR_REQUIRE(n >= 3, ConfigError,
                      "user " << user << " has only " << n << " interactions; need >= 3 for the split");
        for (size_t t = 1; t + 2 < n; ++t) {
            split.train.push_back({user, {seq.begin(), seq.begin() + static_cast<long>(t)}, seq[t]});
        }
        split.val.push_back({user, {seq.begin(), seq.end() - 2}, seq[n - 2]});
        split.test.push_back({user, {seq.begin(), seq.end() - 1}, seq[n - 1]});
    }
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic corpus.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    int n_categories = 8;
    int n_subcategories_per_cat = 8;
    int n_items = 2048;
    int embed_dim = 64;
    int n_users = 5000;
    int seq_len_min = 10;
    int seq_len_max = 20;
    double category_markov_stickiness = 0.8;
    double noise_scale = 0.15;
    double subcat_scale = 0.4;
    double zipf_exponent = 1.0;
    uint64_t seed = 2025;

    void validate() const {
        DECOR_REQUIRE(n_categories >= 1 && n_subcategories_per_cat >= 1, ConfigError,
                      "synthetic: category counts must be positive");
        DECOR_REQUIRE(n_items >= n_categories * n_subcategories_per_cat, ConfigError,
                      "synthetic: n_items (" << n_items << ") < categories x subcategories ("
                                             << n_categories * n_subcategories_per_cat << ")");
        DECOR_REQUIRE(embed_dim >= 1 && n_users >= 1, ConfigError, "synthetic: bad dims");
        DECOR_REQUIRE(seq_len_min >= 1 && seq_len_max >= seq_len_min, ConfigError,
                      "synthetic: bad sequence length range");
        DECOR_REQUIRE(category_markov_stickiness > 0.0 && category_markov_stickiness <= 1.0,
                      ConfigError, "synthetic: stickiness must be in (0, 1]");
        DECOR_REQUIRE(noise_scale >= 0.0, ConfigError, "synthetic: noise_scale must be >= 0");
    }
};

struct ItemTruth {
    int category = 0;
    int subcategory = 0;
};

struct SyntheticData {
    ItemFile items;
    InteractionDataset interactions;
    std::map<std::string, ItemTruth> truth;
};

inline std::string synthetic_item_id(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "item_%05d", i);
    return buf;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData data;
    data.items.dim = spec.embed_dim;
    std::mt19937_64 rng(derive_seed(spec.seed, "synthetic"));
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Category and subcategory prototypes.
    int d = spec.embed_dim;
    std::vector<std::vector<double>> cat_means(static_cast<size_t>(spec.n_categories));
    std::vector<std::vector<std::vector<double>>> sub_offsets(static_cast<size_t>(spec.n_categories));
    for (int c = 0; c < spec.n_categories; ++c) {
        cat_means[static_cast<size_t>(c)].resize(static_cast<size_t>(d));
        for (double& v : cat_means[static_cast<size_t>(c)]) v = gauss(rng);
        sub_offsets[static_cast<size_t>(c)].resize(static_cast<size_t>(spec.n_subcategories_per_cat));
        for (auto& off : sub_offsets[static_cast<size_t>(c)]) {
            off.resize(static_cast<size_t>(d));
            for (double& v : off) v = gauss(rng) * spec.subcat_scale;
        }
    }

    // Items spread round-robin over (category, subcategory) cells.
    int cells = spec.n_categories * spec.n_subcategories_per_cat;
    std::vector<std::vector<std::string>> items_by_cat(static_cast<size_t>(spec.n_categories));
    for (int i = 0; i < spec.n_items; ++i) {
        int cell = i % cells;
        int cat = cell / spec.n_subcategories_per_cat;
        int sub = cell % spec.n_subcategories_per_cat;
        std::string id = synthetic_item_id(i);
        std::vector<double> emb(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) {
            emb[static_cast<size_t>(j)] = cat_means[static_cast<size_t>(cat)][static_cast<size_t>(j)] +
                                          sub_offsets[static_cast<size_t>(cat)][static_cast<size_t>(sub)][static_cast<size_t>(j)] +
                                          gauss(rng) * spec.noise_scale;
        }
        data.items.embeddings.emplace(id, std::move(emb));
        data.truth.emplace(id, ItemTruth{cat, sub});
        items_by_cat[static_cast<size_t>(cat)].push_back(id);
    }

    // Within-category popularity: Zipf-like over the category's item list.
    std::vector<std::vector<double>> pop_cum(static_cast<size_t>(spec.n_categories));
    for (int c = 0; c < spec.n_categories; ++c) {
        double acc = 0.0;
        auto& cum = pop_cum[static_cast<size_t>(c)];
        for (size_t r = 0; r < items_by_cat[static_cast<size_t>(c)].size(); ++r) {
            acc += 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent);
            cum.push_back(acc);
        }
    }
    auto sample_item = [&](int cat, double u) {
        const auto& cum = pop_cum[static_cast<size_t>(cat)];
        double x = u * cum.back();
        size_t lo = static_cast<size_t>(std::lower_bound(cum.begin(), cum.end(), x) - cum.begin());
        if (lo >= cum.size()) lo = cum.size() - 1;
        return items_by_cat[static_cast<size_t>(cat)][lo];
    };
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> cat_pick(0, spec.n_categories - 1);
    std::uniform_int_distribution<int> len_pick(spec.seq_len_min, spec.seq_len_max);

    for (int u = 0; u < spec.n_users; ++u) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "user_%06d", u);
        int len = len_pick(rng);
        int cat = cat_pick(rng);
        std::vector<std::string> seq;
        seq.reserve(static_cast<size_t>(len));
        for (int t = 0; t < len; ++t) {
            if (t > 0 && uni(rng) >= spec.category_markov_stickiness && spec.n_categories > 1) {
                int jump = cat_pick(rng);
                while (jump == cat) jump = cat_pick(rng);
                cat = jump;
            }
            seq.push_back(sample_item(cat, uni(rng)));
        }
        data.interactions.users.emplace(buf, std::move(seq));
    }
    for (const auto& [user, seq] : data.interactions.users)
        for (const auto& item : seq) data.interactions.items.insert(item);
    return data;
}

// ---------------------------------------------------------------------------
// JSON Lines writers.
// ---------------------------------------------------------------------------

inline void write_items_jsonl(const ItemFile& items, const std::string& path) {
    std::ofstream out(path);
    DECOR_REQUIRE(out.good(), IoError, "cannot write items file: " << path);
    for (const auto& [id, emb] : items.embeddings) {
        Json rec;
        rec["item_id"] = id;
        rec["embedding"] = emb;
        out << rec.dump() << "\n";
    }
    DECOR_REQUIRE(out.good(), IoError, "write failed: " << path);
}

inline void write_interactions_jsonl(const InteractionDataset& ds, const std::string& path) {
    std::ofstream out(path);
    DECOR_REQUIRE(out.good(), IoError, "cannot write interactions file: " << path);
    for (const auto& [user, seq] : ds.users) {
        Json rec;
        rec["user_id"] = user;
        rec["item_ids"] = seq;
        out << rec.dump() << "\n";
    }
    DECOR_REQUIRE(out.good(), IoError, "write failed: " << path);
}

inline void write_truth_jsonl(const std::map<std::string, ItemTruth>& truth, const std::string& path) {
    std::ofstream out(path);
    DECOR_REQUIRE(out.good(), IoError, "cannot write truth file: " << path);
    for (const auto& [id, t] : truth) {
        Json rec;
        rec["item_id"] = id;
        rec["category"] = t.category;
        rec["subcategory"] = t.subcategory;
        out << rec.dump() << "\n";
    }
    DECOR_REQUIRE(out.good(), IoError, "write failed: " << path);
}

}  // namespace decor
