// config.hpp
// One JSON document drives the pipeline. Unknown keys are rejected; a
// single top-level seed feeds every component; CLI --set overrides apply
// by dotted path before validation.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "decor/data.hpp"
#include "decor/recommender.hpp"
#include "decor/rqvae.hpp"

namespace decor {

struct DataPaths {
    std::string items;
    std::string interactions;
    std::string sids;
    std::string tokenizer_ckpt;
};

struct PipelineConfig {
    RqVaeConfig tokenizer;
    RecommenderConfig recommender;
    DecorConfig decor;
    SyntheticSpec synthetic;
    DataPaths data;
    uint64_t seed = 2025;

    void propagate_seed() {
        tokenizer.seed = seed;
        recommender.seed = seed;
        synthetic.seed = seed;
    }

    void validate() const {
        tokenizer.validate();
        recommender.validate();
        decor.validate();
        synthetic.validate();
    }
};

namespace cfg_detail {

template <typename T>
void read_field(const Json& obj, const std::string& key, T& out);

template <>
inline void read_field<int>(const Json& obj, const std::string& key, int& out) {
    DECOR_REQUIRE(obj.is_number_integer(), ConfigError, "config key " << key << " must be an integer");
    out = obj.get<int>();
}
template <>
inline void read_field<double>(const Json& obj, const std::string& key, double& out) {
    DECOR_REQUIRE(obj.is_number(), ConfigError, "config key " << key << " must be a number");
    out = obj.get<double>();
}
template <>
inline void read_field<bool>(const Json& obj, const std::string& key, bool& out) {
    DECOR_REQUIRE(obj.is_boolean(), ConfigError, "config key " << key << " must be a boolean");
    out = obj.get<bool>();
}
template <>
inline void read_field<std::string>(const Json& obj, const std::string& key, std::string& out) {
    DECOR_REQUIRE(obj.is_string(), ConfigError, "config key " << key << " must be a string");
    out = obj.get<std::string>();
}
template <>
inline void read_field<uint64_t>(const Json& obj, const std::string& key, uint64_t& out) {
    DECOR_REQUIRE(obj.is_number_integer(), ConfigError, "config key " << key << " must be an integer");
    out = obj.get<uint64_t>();
}
template <>
inline void read_field<std::vector<int>>(const Json& obj, const std::string& key,
                                         std::vector<int>& out) {
    DECOR_REQUIRE(obj.is_array(), ConfigError, "config key " << key << " must be an int array");
    out.clear();
    for (const auto& v : obj) {
        DECOR_REQUIRE(v.is_number_integer(), ConfigError, "config key " << key << " must hold integers");
        out.push_back(v.get<int>());
    }
}

class SectionReader {
public:
    SectionReader(const Json& section, std::string name) : section_(section), name_(std::move(name)) {
        DECOR_REQUIRE(section.is_object(), ConfigError, "config section " << name_ << " must be an object");
    }

    template <typename T>
    void field(const std::string& key, T& out) {
        known_.push_back(key);
        auto it = section_.find(key);
        if (it != section_.end()) read_field<T>(*it, name_ + "." + key, out);
    }

    void finish() const {
        for (auto it = section_.begin(); it != section_.end(); ++it) {
            bool ok = false;
            for (const auto& k : known_)
                if (k == it.key()) ok = true;
            DECOR_REQUIRE(ok, ConfigError, "unknown config key " << name_ << "." << it.key());
        }
    }

private:
    const Json& section_;
    std::string name_;
    std::vector<std::string> known_;
};

}  // namespace cfg_detail

inline void apply_config_json(PipelineConfig& cfg, const Json& root) {
    DECOR_REQUIRE(root.is_object(), ConfigError, "config root must be a JSON object");
    std::vector<std::string> sections = {"tokenizer", "recommender", "decor", "synthetic", "data", "seed"};
    for (auto it = root.begin(); it != root.end(); ++it) {
        bool ok = false;
        for (const auto& s : sections)
            if (s == it.key()) ok = true;
        DECOR_REQUIRE(ok, ConfigError, "unknown config section " << it.key());
    }
    if (root.contains("seed")) cfg_detail::read_field<uint64_t>(root["seed"], "seed", cfg.seed);
    if (root.contains("tokenizer")) {
        cfg_detail::SectionReader r(root["tokenizer"], "tokenizer");
        r.field("levels", cfg.tokenizer.levels);
        r.field("codebook_size", cfg.tokenizer.codebook_size);
        r.field("latent_dim", cfg.tokenizer.latent_dim);
        r.field("beta", cfg.tokenizer.beta);
        r.field("input_dim", cfg.tokenizer.input_dim);
        r.field("encoder_hidden", cfg.tokenizer.encoder_hidden);
        r.field("learning_rate", cfg.tokenizer.learning_rate);
        r.field("epochs", cfg.tokenizer.epochs);
        r.field("batch_size", cfg.tokenizer.batch_size);
        r.field("collision_vocab", cfg.tokenizer.collision_vocab);
        r.field("kmeans_init", cfg.tokenizer.kmeans_init);
        r.field("kmeans_iters", cfg.tokenizer.kmeans_iters);
        r.finish();
    }
    if (root.contains("recommender")) {
        cfg_detail::SectionReader r(root["recommender"], "recommender");
        r.field("d_model", cfg.recommender.d_model);
        r.field("enc_layers", cfg.recommender.enc_layers);
        r.field("dec_layers", cfg.recommender.dec_layers);
        r.field("heads", cfg.recommender.heads);
        r.field("ffn_mult", cfg.recommender.ffn_mult);
        r.field("dropout", cfg.recommender.dropout);
        r.field("learning_rate", cfg.recommender.learning_rate);
        r.field("warmup_steps", cfg.recommender.warmup_steps);
        r.field("weight_decay", cfg.recommender.weight_decay);
        r.field("max_grad_norm", cfg.recommender.max_grad_norm);
        r.field("batch_size", cfg.recommender.batch_size);
        r.field("max_epochs", cfg.recommender.max_epochs);
        r.field("early_stop_patience", cfg.recommender.early_stop_patience);
        r.field("beam_size", cfg.recommender.beam_size);
        r.field("max_history_items", cfg.recommender.max_history_items);
        r.field("examples_per_epoch", cfg.recommender.examples_per_epoch);
        r.field("val_eval_users", cfg.recommender.val_eval_users);
        r.field("val_every", cfg.recommender.val_every);
        r.finish();
    }
    if (root.contains("decor")) {
        cfg_detail::SectionReader r(root["decor"], "decor");
        r.field("alpha", cfg.decor.alpha);
        r.field("bos_queries", cfg.decor.bos_queries);
        r.field("encoder_side_composition", cfg.decor.encoder_side_composition);
        r.field("share_head_across_levels", cfg.decor.share_head_across_levels);
        r.finish();
    }
    if (root.contains("synthetic")) {
        cfg_detail::SectionReader r(root["synthetic"], "synthetic");
        r.field("n_categories", cfg.synthetic.n_categories);
        r.field("n_subcategories_per_cat", cfg.synthetic.n_subcategories_per_cat);
        r.field("n_items", cfg.synthetic.n_items);
        r.field("embed_dim", cfg.synthetic.embed_dim);
        r.field("n_users", cfg.synthetic.n_users);
        r.field("seq_len_min", cfg.synthetic.seq_len_min);
        r.field("seq_len_max", cfg.synthetic.seq_len_max);
        r.field("category_markov_stickiness", cfg.synthetic.category_markov_stickiness);
        r.field("noise_scale", cfg.synthetic.noise_scale);
        r.field("subcat_scale", cfg.synthetic.subcat_scale);
        r.field("zipf_exponent", cfg.synthetic.zipf_exponent);
        r.finish();
    }
    if (root.contains("data")) {
        cfg_detail::SectionReader r(root["data"], "data");
        r.field("items", cfg.data.items);
        r.field("interactions", cfg.data.interactions);
        r.field("sids", cfg.data.sids);
        r.field("tokenizer_ckpt", cfg.data.tokenizer_ckpt);
        r.finish();
    }
    cfg.propagate_seed();
}

inline Json config_to_json(const PipelineConfig& cfg) {
    Json root;
    root["seed"] = cfg.seed;
    Json& t = root["tokenizer"];
    t["levels"] = cfg.tokenizer.levels;
    t["codebook_size"] = cfg.tokenizer.codebook_size;
    t["latent_dim"] = cfg.tokenizer.latent_dim;
    t["beta"] = cfg.tokenizer.beta;
    t["input_dim"] = cfg.tokenizer.input_dim;
    t["encoder_hidden"] = cfg.tokenizer.encoder_hidden;
    t["learning_rate"] = cfg.tokenizer.learning_rate;
    t["epochs"] = cfg.tokenizer.epochs;
    t["batch_size"] = cfg.tokenizer.batch_size;
    t["collision_vocab"] = cfg.tokenizer.collision_vocab;
    t["kmeans_init"] = cfg.tokenizer.kmeans_init;
    t["kmeans_iters"] = cfg.tokenizer.kmeans_iters;
    Json& r = root["recommender"];
    r["d_model"] = cfg.recommender.d_model;
    r["enc_layers"] = cfg.recommender.enc_layers;
    r["dec_layers"] = cfg.recommender.dec_layers;
    r["heads"] = cfg.recommender.heads;
    r["ffn_mult"] = cfg.recommender.ffn_mult;
    r["dropout"] = cfg.recommender.dropout;
    r["learning_rate"] = cfg.recommender.learning_rate;
    r["warmup_steps"] = cfg.recommender.warmup_steps;
    r["weight_decay"] = cfg.recommender.weight_decay;
    r["max_grad_norm"] = cfg.recommender.max_grad_norm;
    r["batch_size"] = cfg.recommender.batch_size;
    r["max_epochs"] = cfg.recommender.max_epochs;
    r["early_stop_patience"] = cfg.recommender.early_stop_patience;
    r["beam_size"] = cfg.recommender.beam_size;
    r["max_history_items"] = cfg.recommender.max_history_items;
    r["examples_per_epoch"] = cfg.recommender.examples_per_epoch;
    r["val_eval_users"] = cfg.recommender.val_eval_users;
    r["val_every"] = cfg.recommender.val_every;
    Json& d = root["decor"];
    d["alpha"] = cfg.decor.alpha;
    d["bos_queries"] = cfg.decor.bos_queries;
    d["encoder_side_composition"] = cfg.decor.encoder_side_composition;
    d["share_head_across_levels"] = cfg.decor.share_head_across_levels;
    Json& s = root["synthetic"];
    s["n_categories"] = cfg.synthetic.n_categories;
    s["n_subcategories_per_cat"] = cfg.synthetic.n_subcategories_per_cat;
    s["n_items"] = cfg.synthetic.n_items;
    s["embed_dim"] = cfg.synthetic.embed_dim;
    s["n_users"] = cfg.synthetic.n_users;
    s["seq_len_min"] = cfg.synthetic.seq_len_min;
    s["seq_len_max"] = cfg.synthetic.seq_len_max;
    s["category_markov_stickiness"] = cfg.synthetic.category_markov_stickiness;
    s["noise_scale"] = cfg.synthetic.noise_scale;
    s["subcat_scale"] = cfg.synthetic.subcat_scale;
    s["zipf_exponent"] = cfg.synthetic.zipf_exponent;
    Json& p = root["data"];
    p["items"] = cfg.data.items;
    p["interactions"] = cfg.data.interactions;
    p["sids"] = cfg.data.sids;
    p["tokenizer_ckpt"] = cfg.data.tokenizer_ckpt;
    return root;
}

inline PipelineConfig load_config(const std::string& path) {
    PipelineConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        DECOR_REQUIRE(in.good(), IoError, "cannot open config: " << path);
        Json root;
        try {
            root = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        apply_config_json(cfg, root);
    }
    cfg.propagate_seed();
    return cfg;
}

// --set decor.alpha=0.4 style overrides, applied to the JSON form.
inline void apply_override(Json& root, const std::string& assignment) {
    size_t eq = assignment.find('=');
    DECOR_REQUIRE(eq != std::string::npos && eq > 0, ConfigError,
                  "--set expects key.path=value, got: " << assignment);
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const Json::parse_error&) {
        parsed = value;  // bare strings stay strings
    }
    Json* node = &root;
    size_t start = 0;
    while (true) {
        size_t dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        DECOR_REQUIRE(!key.empty(), ConfigError, "--set has an empty path segment: " << assignment);
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline PipelineConfig load_config_with_overrides(const std::string& path,
                                                 const std::vector<std::string>& sets,
                                                 bool seed_given = false, uint64_t seed = 0) {
    Json root = Json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        DECOR_REQUIRE(in.good(), IoError, "cannot open config: " << path);
        try {
            root = Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
    }
    for (const auto& s : sets) apply_override(root, s);
    if (seed_given) root["seed"] = seed;
    PipelineConfig cfg;
    apply_config_json(cfg, root);
    return cfg;
}

}  // namespace decor
