// decor_main.cpp
// Single-binary pipeline CLI: synth, train-tokenizer, tokenize, train-rec,
// evaluate, analyze, print-config. stdout carries machine-readable JSON
// only; diagnostics go to stderr. Exit codes: 0 ok, 2 config/validation,
// 3 io, 4 divergence, 5 collision overflow, 6 item-universe mismatch.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "decor/checkpoint.hpp"
#include "decor/config.hpp"
#include "decor/data.hpp"
#include "decor/evaluate.hpp"
#include "decor/train.hpp"

namespace {

using decor::Json;
using Real = float;

struct GlobalArgs {
    std::string config_path;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
};

void add_common(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "pipeline config JSON");
    cmd->add_option("--set", g.sets, "override config keys, e.g. --set decor.alpha=0.4");
    cmd->add_option("--seed", g.seed, "global seed override")->each([&g](const std::string&) {
        g.seed_given = true;
    });
    cmd->add_option("--threads", g.threads, "worker thread budget");
}

decor::PipelineConfig resolve_config(const GlobalArgs& g) {
    decor::PipelineConfig cfg =
        decor::load_config_with_overrides(g.config_path, g.sets, g.seed_given, g.seed);
    if (g.threads > 0) decor::set_thread_budget(g.threads);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Semantic-id file io.
// ---------------------------------------------------------------------------

void write_sids(const std::map<std::string, decor::SemanticID>& sids, const std::string& path) {
    std::ofstream out(path);
    DECOR_REQUIRE(out.good(), IoError, "cannot write sids file: " << path);
    for (const auto& [id, sid] : sids) {
        Json rec;
        rec["item_id"] = id;
        rec["codes"] = sid.codes;
        rec["collision"] = sid.collision;
        out << rec.dump() << "\n";
    }
    DECOR_REQUIRE(out.good(), IoError, "write failed: " << path);
}

std::map<std::string, decor::SemanticID> read_sids(const std::string& path) {
    std::ifstream in(path);
    DECOR_REQUIRE(in.good(), IoError, "cannot open sids file: " << path);
    std::map<std::string, decor::SemanticID> sids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Json rec;
        try {
            rec = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw decor::ConfigError("sids file line " + std::to_string(line_no) + ": " + e.what());
        }
        DECOR_REQUIRE(rec.contains("item_id") && rec.contains("codes") && rec.contains("collision"),
                      ConfigError, "sids file line " << line_no << ": missing fields");
        decor::SemanticID sid;
        for (const auto& c : rec["codes"]) sid.codes.push_back(c.get<int>());
        sid.collision = rec["collision"].get<int>();
        DECOR_REQUIRE(sids.emplace(rec["item_id"].get<std::string>(), sid).second, ConfigError,
                      "sids file line " << line_no << ": duplicate item");
    }
    DECOR_REQUIRE(!sids.empty(), ConfigError, "sids file " << path << ": no records");
    return sids;
}

// ---------------------------------------------------------------------------
// Checkpoint assembly.
// ---------------------------------------------------------------------------

decor::Checkpoint make_tokenizer_checkpoint(const decor::PipelineConfig& cfg,
                                            decor::RqVaeModel<Real>& model) {
    decor::Checkpoint ckpt;
    ckpt.config_json = decor::config_to_json(cfg).dump();
    Json aux;
    aux["kind"] = "tokenizer";
    ckpt.aux_json = aux.dump();
    decor::ParamSet<Real> params;
    model.collect_params(params);
    decor::store_params(ckpt, params);
    return ckpt;
}

decor::RqVaeModel<Real> load_tokenizer_model(const decor::Checkpoint& ckpt,
                                             decor::PipelineConfig* cfg_out = nullptr) {
    decor::PipelineConfig cfg;
    decor::apply_config_json(cfg, Json::parse(ckpt.config_json));
    Json aux = Json::parse(ckpt.aux_json);
    DECOR_REQUIRE(aux.value("kind", "") == "tokenizer", ConfigError,
                  "checkpoint is not a tokenizer checkpoint");
    decor::RqVaeModel<Real> model = decor::RqVaeModel<Real>::init(cfg.tokenizer);
    decor::ParamSet<Real> params;
    model.collect_params(params);
    decor::load_params(ckpt, params);
    if (cfg_out != nullptr) *cfg_out = cfg;
    return model;
}

struct RecBundle {
    decor::PipelineConfig cfg;
    decor::TokenVocab vocab;
    decor::RecommenderModel<Real> model;
};

decor::TokenVocab vocab_from(const decor::PipelineConfig& cfg) {
    return decor::TokenVocab{cfg.tokenizer.levels, cfg.tokenizer.codebook_size,
                             cfg.tokenizer.collision_vocab};
}

RecBundle load_recommender_model(const decor::Checkpoint& ckpt, bool use_best) {
    RecBundle b;
    decor::apply_config_json(b.cfg, Json::parse(ckpt.config_json));
    Json aux = Json::parse(ckpt.aux_json);
    DECOR_REQUIRE(aux.value("kind", "") == "recommender", ConfigError,
                  "checkpoint is not a recommender checkpoint");
    b.vocab = vocab_from(b.cfg);
    const decor::CheckpointBlob& pre_blob = ckpt.get("embed.E_pre");
    decor::FrozenCodebooks<Real> pre;
    pre.levels = b.cfg.tokenizer.levels;
    pre.codebook_size = b.cfg.tokenizer.codebook_size;
    pre.dim = b.cfg.recommender.d_model;
    pre.data.assign(pre_blob.data.begin(), pre_blob.data.end());
    b.model = decor::RecommenderModel<Real>::init(b.cfg.recommender, b.cfg.decor, b.vocab, pre);
    decor::ParamSet<Real> params;
    b.model.collect_params(params);
    decor::load_params(ckpt, params);
    if (use_best && ckpt.has("best." + params.at(0).name)) {
        decor::load_params(ckpt, params, "best.");
    }
    return b;
}

// ---------------------------------------------------------------------------
// Dataset assembly shared by train-rec / evaluate / analyze.
// ---------------------------------------------------------------------------

struct EvalData {
    decor::InteractionDataset filtered;
    decor::LeaveOneOutSplit split;
    std::map<std::string, decor::SemanticID> sids;
    decor::SemanticTrie trie;
};

EvalData load_eval_data(const std::string& sids_path, const std::string& interactions_path,
                        const decor::TokenVocab& vocab) {
    EvalData d;
    d.sids = read_sids(sids_path);
    decor::InteractionDataset raw = decor::ingest_interactions(interactions_path);
    d.filtered = decor::filter_5core(raw);
    for (const auto& item : d.filtered.items) {
        DECOR_REQUIRE(d.sids.count(item) > 0, UniverseMismatchError,
                      "interaction item " << item << " missing from the semantic-id file");
    }
    d.split = decor::leave_one_out_split(d.filtered);
    d.trie = decor::build_trie(d.sids, vocab);
    return d;
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

int cmd_synth(const GlobalArgs& g, const std::string& out_dir) {
    decor::PipelineConfig cfg = resolve_config(g);
    decor::SyntheticData data = decor::generate_synthetic(cfg.synthetic);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    DECOR_REQUIRE(!ec, IoError, "cannot create output directory " << out_dir << ": " << ec.message());
    decor::write_items_jsonl(data.items, out_dir + "/items.jsonl");
    decor::write_interactions_jsonl(data.interactions, out_dir + "/interactions.jsonl");
    decor::write_truth_jsonl(data.truth, out_dir + "/truth.jsonl");
    Json out;
    out["items"] = data.items.embeddings.size();
    out["users"] = data.interactions.users.size();
    out["interactions"] = data.interactions.interaction_count();
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_train_tokenizer(const GlobalArgs& g, const std::string& items_path,
                        const std::string& out_path) {
    decor::PipelineConfig cfg = resolve_config(g);
    decor::ItemFile items = decor::ingest_items(items_path);
    DECOR_REQUIRE(items.dim == cfg.tokenizer.input_dim, ConfigError,
                  "items have dim " << items.dim << " but tokenizer.input_dim is "
                                    << cfg.tokenizer.input_dim);
    std::vector<Real> flat;
    flat.reserve(items.embeddings.size() * static_cast<size_t>(items.dim));
    for (const auto& [id, emb] : items.embeddings)
        for (double v : emb) flat.push_back(static_cast<Real>(v));
    decor::num::Tensor<Real> data = decor::num::Tensor<Real>::leaf(
        {static_cast<int64_t>(items.embeddings.size()), items.dim}, std::move(flat), false);

    decor::RqVaeTrainLog log;
    decor::RqVaeModel<Real> model = decor::train_rqvae(data, cfg.tokenizer, &log);

    // a no-grad pass for the reported losses (valid for epochs == 0 too)
    double recon, rq;
    {
        decor::num::NoGradGuard ng;
        decor::num::Tensor<Real> z0 = model.encode(data);
        decor::QuantizationTrace<Real> trace = decor::quantize(z0, model);
        decor::RqVaeLosses<Real> losses = decor::rqvae_losses(data, trace, model);
        recon = static_cast<double>(losses.recon.item());
        rq = static_cast<double>(losses.rq.item());
    }
    DECOR_REQUIRE(std::isfinite(recon) && std::isfinite(rq), DivergenceError,
                  "tokenizer produced non-finite losses");

    decor::Checkpoint ckpt = make_tokenizer_checkpoint(cfg, model);
    decor::save_checkpoint(ckpt, out_path);

    Json out;
    out["L_RECON"] = recon;
    out["L_RQ"] = rq;
    out["L_SQ"] = recon + rq;
    out["epochs"] = log.epochs.size();
    if (!log.epochs.empty()) out["codebook_usage"] = log.epochs.back().codebook_usage;
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_tokenize(const GlobalArgs& g, const std::string& ckpt_path, const std::string& items_path,
                 const std::string& out_path) {
    if (g.threads > 0) decor::set_thread_budget(g.threads);
    decor::Checkpoint ckpt = decor::load_checkpoint(ckpt_path);
    decor::RqVaeModel<Real> model = load_tokenizer_model(ckpt);
    decor::ItemFile items = decor::ingest_items(items_path);
    DECOR_REQUIRE(items.dim == model.config.input_dim, ConfigError,
                  "items have dim " << items.dim << " but tokenizer.input_dim is "
                                    << model.config.input_dim);
    std::map<std::string, std::vector<Real>> typed;
    for (const auto& [id, emb] : items.embeddings)
        typed.emplace(id, std::vector<Real>(emb.begin(), emb.end()));
    std::map<std::string, decor::SemanticID> sids = decor::assign_semantic_ids(typed, model);
    write_sids(sids, out_path);
    Json out;
    out["items"] = sids.size();
    std::cout << out.dump() << std::endl;
    return 0;
}

Json log_to_json(const decor::TrainRecLog& log) {
    Json epochs = Json::array();
    for (const auto& e : log.epochs) {
        Json je;
        je["epoch"] = e.epoch;
        je["loss"] = e.loss;
        if (e.val_ndcg10 >= 0.0) je["val_ndcg10"] = e.val_ndcg10;
        je["lr"] = e.lr;
        epochs.push_back(je);
    }
    Json out;
    out["epochs"] = epochs;
    out["best_epoch"] = log.best_epoch;
    out["best_val_ndcg10"] = log.best_val;
    out["early_stopped"] = log.early_stopped;
    return out;
}

int cmd_train_rec(const GlobalArgs& g, const std::string& sids_path,
                  const std::string& interactions_path, const std::string& tokenizer_ckpt_path,
                  const std::string& out_path, const std::string& resume_path,
                  int stop_after_epochs) {
    decor::PipelineConfig cfg;
    decor::Checkpoint resume_ckpt;
    bool resuming = !resume_path.empty();
    if (resuming) {
        resume_ckpt = decor::load_checkpoint(resume_path);
        decor::apply_config_json(cfg, Json::parse(resume_ckpt.config_json));
        if (g.threads > 0) decor::set_thread_budget(g.threads);
    } else {
        cfg = resolve_config(g);
    }

    decor::Checkpoint tok_ckpt = decor::load_checkpoint(tokenizer_ckpt_path);
    decor::PipelineConfig tok_cfg;
    decor::RqVaeModel<Real> tok_model = load_tokenizer_model(tok_ckpt, &tok_cfg);
    if (!resuming) {
        cfg.tokenizer = tok_cfg.tokenizer;  // vocabulary layout follows the tokenizer
        cfg.tokenizer.seed = cfg.seed;
    }
    DECOR_REQUIRE(cfg.tokenizer.latent_dim == cfg.recommender.d_model, ConfigError,
                  "tokenizer latent_dim " << cfg.tokenizer.latent_dim
                                          << " != recommender d_model " << cfg.recommender.d_model);

    decor::TokenVocab vocab = vocab_from(cfg);
    EvalData data = load_eval_data(sids_path, interactions_path, vocab);
    decor::FrozenCodebooks<Real> pre = decor::export_codebooks(tok_model);

    decor::RecommenderModel<Real> model =
        decor::RecommenderModel<Real>::init(cfg.recommender, cfg.decor, vocab, pre);
    decor::ParamSet<Real> params;
    model.collect_params(params);
    decor::AdamW<Real> opt(params, {.weight_decay = cfg.recommender.weight_decay});
    decor::TrainerState<Real> state;

    if (resuming) {
        decor::load_params(resume_ckpt, params);
        Json aux = Json::parse(resume_ckpt.aux_json);
        DECOR_REQUIRE(aux.value("kind", "") == "recommender", ConfigError,
                      "resume checkpoint is not a recommender checkpoint");
        state.epochs_done = aux["epochs_done"].get<int64_t>();
        state.global_step = aux["global_step"].get<int64_t>();
        state.best_val = aux["best_val"].get<double>();
        state.best_epoch = aux["best_epoch"].get<int64_t>();
        state.bad_evals = aux["bad_evals"].get<int64_t>();
        opt.set_step_count(aux["adam_steps"].get<int64_t>());
        state.rng_state = resume_ckpt.rng_state;
        state.best_params.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            const decor::CheckpointBlob& blob = resume_ckpt.get("best." + params.at(i).name);
            state.best_params[i].assign(blob.data.begin(), blob.data.end());
        }
        for (size_t i = 0; i < params.size(); ++i) {
            if (params.at(i).frozen) continue;
            const decor::CheckpointBlob& m = resume_ckpt.get("optim.m." + params.at(i).name);
            const decor::CheckpointBlob& v = resume_ckpt.get("optim.v." + params.at(i).name);
            opt.moments1()[i].assign(m.data.begin(), m.data.end());
            opt.moments2()[i].assign(v.data.begin(), v.data.end());
        }
    }

    decor::TrainRecLog log =
        decor::train_recommender(model, data.split.train, data.split.val, data.sids, data.trie, opt,
                                 state, decor::ForwardPath::Auto, stop_after_epochs);

    decor::Checkpoint ckpt;
    cfg.data.sids = sids_path;
    cfg.data.interactions = interactions_path;
    cfg.data.tokenizer_ckpt = tokenizer_ckpt_path;
    ckpt.config_json = decor::config_to_json(cfg).dump();
    Json aux;
    aux["kind"] = "recommender";
    aux["epochs_done"] = state.epochs_done;
    aux["global_step"] = state.global_step;
    aux["best_val"] = state.best_val;
    aux["best_epoch"] = state.best_epoch;
    aux["bad_evals"] = state.bad_evals;
    aux["adam_steps"] = opt.step_count();
    ckpt.aux_json = aux.dump();
    ckpt.rng_state = state.rng_state;
    decor::store_params(ckpt, params);
    for (size_t i = 0; i < params.size(); ++i) {
        std::vector<int64_t> dims(params.at(i).tensor.shape().begin(), params.at(i).tensor.shape().end());
        ckpt.put("best." + params.at(i).name, dims,
                 std::vector<float>(state.best_params[i].begin(), state.best_params[i].end()));
        if (!params.at(i).frozen) {
            ckpt.put("optim.m." + params.at(i).name, dims,
                     std::vector<float>(opt.moments1()[i].begin(), opt.moments1()[i].end()));
            ckpt.put("optim.v." + params.at(i).name, dims,
                     std::vector<float>(opt.moments2()[i].begin(), opt.moments2()[i].end()));
        }
    }
    decor::save_checkpoint(ckpt, out_path);
    std::cout << log_to_json(log).dump() << std::endl;
    return 0;
}

int cmd_evaluate(const GlobalArgs& g, const std::string& ckpt_path, const std::string& split_name,
                 const std::string& out_path, const std::string& csv_path) {
    if (g.threads > 0) decor::set_thread_budget(g.threads);
    DECOR_REQUIRE(split_name == "test" || split_name == "val", ConfigError,
                  "--split must be test or val");
    decor::Checkpoint ckpt = decor::load_checkpoint(ckpt_path);
    RecBundle b = load_recommender_model(ckpt, /*use_best=*/true);
    EvalData data = load_eval_data(b.cfg.data.sids, b.cfg.data.interactions, b.vocab);
    const std::vector<decor::SplitExample>& examples =
        split_name == "test" ? data.split.test : data.split.val;

    std::string fp = decor::fingerprint(ckpt.config_json);
    decor::EvalResult result = decor::evaluate(b.model, examples, data.sids, data.trie, {5, 10},
                                               b.cfg.recommender.beam_size, fp);

    Json report;
    for (const auto& [k, v] : result.report.metrics) report[k] = v;
    report["n_users"] = result.report.n_users;
    std::ofstream out(out_path);
    DECOR_REQUIRE(out.good(), IoError, "cannot write report: " << out_path);
    out << report.dump(2) << "\n";
    DECOR_REQUIRE(out.good(), IoError, "write failed: " << out_path);

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        DECOR_REQUIRE(csv.good(), IoError, "cannot write csv: " << csv_path);
        csv << "metric,value\n";
        for (const auto& [k, v] : result.report.metrics) csv << k << "," << v << "\n";
        csv << "n_users," << result.report.n_users << "\n";
    }

    Json stdout_json = report;
    stdout_json["config_fingerprint"] = fp;
    stdout_json["split"] = split_name;
    std::cout << stdout_json.dump() << std::endl;
    return 0;
}

int cmd_analyze(const GlobalArgs& g, const std::string& ckpt_path, const std::string& out_path,
                int dump_level, const std::string& dump_path) {
    if (g.threads > 0) decor::set_thread_budget(g.threads);
    decor::Checkpoint ckpt = decor::load_checkpoint(ckpt_path);
    RecBundle b = load_recommender_model(ckpt, /*use_best=*/true);
    EvalData data = load_eval_data(b.cfg.data.sids, b.cfg.data.interactions, b.vocab);

    decor::UtilizationReport report = decor::utilization(b.model, data.split.val, data.sids);
    Json out;
    out["levels"] = Json::array();
    for (const auto& lv : report.levels) {
        Json jl;
        jl["level"] = lv.level;
        jl["static_used"] = lv.static_used;
        jl["composition_active"] = lv.composition_active;
        jl["combined"] = lv.combined;
        out["levels"].push_back(jl);
    }
    out["config_fingerprint"] = decor::fingerprint(ckpt.config_json);
    std::ofstream f(out_path);
    DECOR_REQUIRE(f.good(), IoError, "cannot write utilization report: " << out_path);
    f << out.dump(2) << "\n";
    DECOR_REQUIRE(f.good(), IoError, "write failed: " << out_path);

    if (dump_level > 0) {
        std::string path = dump_path.empty() ? out_path + ".embeddings.jsonl" : dump_path;
        decor::dump_embeddings(b.model, dump_level, data.split.val, data.sids, path);
    }
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_print_config(const GlobalArgs& g) {
    decor::PipelineConfig cfg =
        decor::load_config_with_overrides(g.config_path, g.sets, g.seed_given, g.seed);
    std::cout << decor::config_to_json(cfg).dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DECOR generative recommendation pipeline"};
    app.require_subcommand(1);

    GlobalArgs g;
    std::string out_dir, items_path, out_path, ckpt_path, sids_path, interactions_path;
    std::string tokenizer_ckpt_path, resume_path, split_name = "test", csv_path, dump_path;
    int stop_after_epochs = 0, dump_level = 0;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_common(synth, g);
    synth->add_option("--out", out_dir, "output directory")->required();

    CLI::App* traintok = app.add_subcommand("train-tokenizer", "pretrain the semantic indexer");
    add_common(traintok, g);
    traintok->add_option("--items", items_path, "item embeddings JSONL")->required();
    traintok->add_option("--out", out_path, "output checkpoint")->required();

    CLI::App* tokenize = app.add_subcommand("tokenize", "assign semantic ids");
    add_common(tokenize, g);
    tokenize->add_option("--ckpt", ckpt_path, "tokenizer checkpoint")->required();
    tokenize->add_option("--items", items_path, "item embeddings JSONL")->required();
    tokenize->add_option("--out", out_path, "output sids JSONL")->required();

    CLI::App* trainrec = app.add_subcommand("train-rec", "train the recommender");
    add_common(trainrec, g);
    trainrec->add_option("--sids", sids_path, "semantic ids JSONL")->required();
    trainrec->add_option("--interactions", interactions_path, "interactions JSONL")->required();
    trainrec->add_option("--tokenizer-ckpt", tokenizer_ckpt_path, "tokenizer checkpoint")->required();
    trainrec->add_option("--out", out_path, "output checkpoint")->required();
    trainrec->add_option("--resume", resume_path, "resume from a recommender checkpoint");
    trainrec->add_option("--stop-after-epochs", stop_after_epochs,
                         "interrupt after N epochs (schedule unchanged)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "full-ranking evaluation");
    add_common(evaluate, g);
    evaluate->add_option("--ckpt", ckpt_path, "recommender checkpoint")->required();
    evaluate->add_option("--split", split_name, "test or val");
    evaluate->add_option("--out", out_path, "report JSON path")->required();
    evaluate->add_option("--csv", csv_path, "optional CSV metric export");

    CLI::App* analyze = app.add_subcommand("analyze", "embedding-utilization analysis");
    add_common(analyze, g);
    analyze->add_option("--ckpt", ckpt_path, "recommender checkpoint")->required();
    analyze->add_option("--out", out_path, "utilization JSON path")->required();
    analyze->add_option("--dump-embeddings", dump_level, "dump embeddings for this level (1-based)");
    analyze->add_option("--dump-out", dump_path, "embedding dump path");

    CLI::App* printcfg = app.add_subcommand("print-config", "print the merged configuration");
    add_common(printcfg, g);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(g, out_dir);
        if (traintok->parsed()) return cmd_train_tokenizer(g, items_path, out_path);
        if (tokenize->parsed()) return cmd_tokenize(g, ckpt_path, items_path, out_path);
        if (trainrec->parsed())
            return cmd_train_rec(g, sids_path, interactions_path, tokenizer_ckpt_path, out_path,
                                 resume_path, stop_after_epochs);
        if (evaluate->parsed()) return cmd_evaluate(g, ckpt_path, split_name, out_path, csv_path);
        if (analyze->parsed()) return cmd_analyze(g, ckpt_path, out_path, dump_level, dump_path);
        if (printcfg->parsed()) return cmd_print_config(g);
    } catch (const decor::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const decor::IoError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    } catch (const decor::DivergenceError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    } catch (const decor::CollisionOverflowError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 5;
    } catch (const decor::UniverseMismatchError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 6;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
