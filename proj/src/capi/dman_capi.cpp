#include "dman/dman.h"

#include <cstring>
#include <string>

#include "core/runner.hpp"
#include "json.hpp"

using nlohmann::json;

struct dman_bundle {
  dman::DatasetBundle data;
};

struct dman_config {
  dman::RunConfig cfg;
  std::string json_cache;
};

struct dman_model {
  dman::Checkpoint checkpoint;
  dman::DmanModel model;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

// Every API body runs under this wrapper so each core exception class lands
// on its status code.
template <typename Fn>
dman_status guarded(Fn&& fn) {
  try {
    fn();
    return DMAN_OK;
  } catch (const dman::DimensionError& e) {
    set_error(e.what());
    return DMAN_ERR_DIMENSION;
  } catch (const dman::DomainError& e) {
    set_error(e.what());
    return DMAN_ERR_DOMAIN;
  } catch (const dman::StateError& e) {
    set_error(e.what());
    return DMAN_ERR_STATE;
  } catch (const dman::ConfigError& e) {
    set_error(e.what());
    return DMAN_ERR_CONFIG;
  } catch (const dman::InputError& e) {
    set_error(e.what());
    return DMAN_ERR_INPUT;
  } catch (const dman::CorruptError& e) {
    set_error(e.what());
    return DMAN_ERR_CORRUPT;
  } catch (const dman::IoError& e) {
    set_error(e.what());
    return DMAN_ERR_IO;
  } catch (const std::exception& e) {
    set_error(e.what());
    return DMAN_ERR_INTERNAL;
  } catch (...) {
    set_error("unknown error");
    return DMAN_ERR_INTERNAL;
  }
}

dman_status invalid(const char* msg) {
  set_error(msg);
  return DMAN_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* dman_version(void) { return "0.1.0"; }

const char* dman_status_name(dman_status status) {
  switch (status) {
    case DMAN_OK: return "ok";
    case DMAN_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DMAN_ERR_DIMENSION: return "dimension";
    case DMAN_ERR_DOMAIN: return "domain";
    case DMAN_ERR_STATE: return "state";
    case DMAN_ERR_CONFIG: return "config";
    case DMAN_ERR_INPUT: return "input";
    case DMAN_ERR_IO: return "io";
    case DMAN_ERR_CORRUPT: return "corrupt";
    default: return "internal";
  }
}

const char* dman_last_error(void) { return g_last_error.c_str(); }

dman_status dman_config_create(dman_config** out) {
  if (!out) return invalid("dman_config_create: out is null");
  return guarded([&] { *out = new dman_config{dman::default_run_config(), {}}; });
}

dman_status dman_config_load(const char* path, dman_config** out) {
  if (!path || !out) return invalid("dman_config_load: null argument");
  return guarded([&] { *out = new dman_config{dman::load_run_config(path), {}}; });
}

void dman_config_free(dman_config* cfg) { delete cfg; }

dman_status dman_config_set(dman_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return invalid("dman_config_set: null argument");
  return guarded([&] {
    // Apply the dotted path onto the serialized document, then re-parse so
    // key and value validation is the same as for a config file.
    json doc = json::parse(dman::run_config_json(cfg->cfg));
    json parsed_value;
    try {
      parsed_value = json::parse(value);
    } catch (const json::exception&) {
      parsed_value = std::string(value);
    }
    json* cursor = &doc;
    std::string path(key);
    size_t start = 0;
    while (true) {
      const size_t dot = path.find('.', start);
      const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw dman::ConfigError("config: empty key segment in \"" + path + "\"");
      if (dot == std::string::npos) {
        (*cursor)[part] = parsed_value;
        break;
      }
      cursor = &(*cursor)[part];
      start = dot + 1;
    }
    cfg->cfg = dman::parse_run_config(doc.dump());
  });
}

dman_status dman_config_set_seed(dman_config* cfg, uint64_t seed) {
  if (!cfg) return invalid("dman_config_set_seed: cfg is null");
  cfg->cfg.seed = seed;
  return DMAN_OK;
}

const char* dman_config_json(dman_config* cfg) {
  if (!cfg) return "";
  cfg->json_cache = dman::run_config_json(cfg->cfg);
  return cfg->json_cache.c_str();
}

dman_status dman_synthetic_spec_init(dman_synthetic_spec* spec) {
  if (!spec) return invalid("dman_synthetic_spec_init: spec is null");
  const dman::SyntheticSpec d;
  spec->topics = d.topics;
  spec->nodes_per_topic = d.nodes_per_topic;
  spec->regions = d.regions;
  spec->feature_dim = d.feature_dim;
  spec->vocab = d.vocab;
  spec->words_per_topic = d.words_per_topic;
  spec->signature_regions = d.signature_regions;
  spec->signature_scale = d.signature_scale;
  spec->noise_sigma = d.noise_sigma;
  spec->word_prob = d.word_prob;
  spec->co_label_prob = d.co_label_prob;
  spec->test_fraction = d.test_fraction;
  spec->seed = d.seed;
  spec->with_images = d.with_images ? 1 : 0;
  spec->image_channels = d.image_channels;
  spec->image_height = d.image_height;
  spec->image_width = d.image_width;
  return DMAN_OK;
}

dman_status dman_generate(const dman_synthetic_spec* spec, const char* out_dir) {
  if (!spec || !out_dir) return invalid("dman_generate: null argument");
  return guarded([&] {
    dman::SyntheticSpec s;
    s.topics = spec->topics;
    s.nodes_per_topic = spec->nodes_per_topic;
    s.regions = spec->regions;
    s.feature_dim = spec->feature_dim;
    s.vocab = spec->vocab;
    s.words_per_topic = spec->words_per_topic;
    s.signature_regions = spec->signature_regions;
    s.signature_scale = spec->signature_scale;
    s.noise_sigma = spec->noise_sigma;
    s.word_prob = spec->word_prob;
    s.co_label_prob = spec->co_label_prob;
    s.test_fraction = spec->test_fraction;
    s.seed = spec->seed;
    s.with_images = spec->with_images != 0;
    s.image_channels = spec->image_channels;
    s.image_height = spec->image_height;
    s.image_width = spec->image_width;
    dman::runner::generate(s, out_dir);
  });
}

dman_status dman_bundle_open(const char* dir, dman_bundle** out) {
  if (!dir || !out) return invalid("dman_bundle_open: null argument");
  return guarded([&] { *out = new dman_bundle{dman::load_bundle(dir)}; });
}

void dman_bundle_free(dman_bundle* bundle) { delete bundle; }

dman_status dman_bundle_counts(const dman_bundle* bundle, uint32_t* nodes, uint32_t* vocab, uint32_t* regions,
                               uint32_t* feature_dim, uint32_t* classes) {
  if (!bundle) return invalid("dman_bundle_counts: bundle is null");
  const auto& m = bundle->data.manifest;
  if (nodes) *nodes = m.node_count;
  if (vocab) *vocab = m.vocab;
  if (regions) *regions = m.regions;
  if (feature_dim) *feature_dim = m.feature_dim;
  if (classes) *classes = m.classes;
  return DMAN_OK;
}

dman_status dman_build_graph(const dman_bundle* bundle, uint32_t max_links, uint64_t seed, const char* split,
                             const char* out_path, uint64_t* edges_out) {
  if (!bundle || !split || !out_path) return invalid("dman_build_graph: null argument");
  return guarded([&] {
    auto summary = dman::runner::build_graph_file(bundle->data, max_links, seed, split, out_path);
    if (edges_out) *edges_out = summary.final_edges;
  });
}

dman_status dman_train(const dman_bundle* bundle, const dman_config* cfg, const char* graph_path,
                       const char* checkpoint_out, const char* report_out, double* final_joint_out) {
  if (!bundle || !cfg || !checkpoint_out) return invalid("dman_train: null argument");
  return guarded([&] {
    dman::TrainReport report = dman::runner::run_train(bundle->data, cfg->cfg, graph_path ? graph_path : "",
                                                       checkpoint_out, report_out ? report_out : "");
    if (final_joint_out && !report.epochs.empty()) *final_joint_out = report.epochs.back().joint;
  });
}

dman_status dman_model_open(const char* checkpoint_path, dman_model** out) {
  if (!checkpoint_path || !out) return invalid("dman_model_open: null argument");
  return guarded([&] {
    dman::Checkpoint ckpt = dman::load_checkpoint(checkpoint_path);
    dman::DmanModel model = dman::model_from_checkpoint(ckpt);
    *out = new dman_model{std::move(ckpt), std::move(model)};
  });
}

void dman_model_free(dman_model* model) { delete model; }

dman_status dman_model_info(const dman_model* model, uint32_t* vocab, uint32_t* regions, uint32_t* feature_dim,
                            int32_t* epoch) {
  if (!model) return invalid("dman_model_info: model is null");
  const auto& mc = model->model.config();
  if (vocab) *vocab = static_cast<uint32_t>(mc.vocab);
  if (regions) *regions = static_cast<uint32_t>(mc.regions);
  if (feature_dim) *feature_dim = static_cast<uint32_t>(mc.feature_dim);
  if (epoch) *epoch = model->checkpoint.epoch;
  return DMAN_OK;
}

dman_status dman_embed(const dman_model* model, const dman_bundle* bundle, const char* split,
                       const char* out_path) {
  if (!model || !bundle || !split || !out_path) return invalid("dman_embed: null argument");
  return guarded([&] { dman::runner::run_embed(model->model, bundle->data, split, out_path); });
}

dman_status dman_export_attention(const dman_model* model, const dman_bundle* bundle, const uint32_t* node_ids,
                                  size_t node_count, const uint32_t* word_ids, size_t word_count,
                                  const char* out_dir) {
  if (!model || !bundle || !node_ids || !word_ids || !out_dir) {
    return invalid("dman_export_attention: null argument");
  }
  return guarded([&] {
    std::vector<uint32_t> nodes(node_ids, node_ids + node_count);
    std::vector<uint32_t> words(word_ids, word_ids + word_count);
    dman::runner::run_export_attention(model->model, bundle->data, nodes, words, out_dir);
  });
}

dman_status dman_eval_classify(const dman_bundle* bundle, const char* train_embeddings, const char* test_embeddings,
                               const dman_config* cfg, const char* table_out, const char* kv_out,
                               double* micro_f1_out, double* map_out) {
  if (!bundle || !train_embeddings || !test_embeddings || !cfg) {
    return invalid("dman_eval_classify: null argument");
  }
  return guarded([&] {
    auto outcome = dman::runner::run_eval_classify(bundle->data, train_embeddings, test_embeddings, cfg->cfg,
                                                   table_out ? table_out : "", kv_out ? kv_out : "");
    if (micro_f1_out) *micro_f1_out = outcome.metrics.micro_f1;
    if (map_out) *map_out = outcome.metrics.map;
  });
}

dman_status dman_eval_search(const dman_bundle* bundle, const char* embeddings_path, const uint32_t* ks,
                             size_t k_count, const char* table_out, const char* kv_out, double* p_at_k_out) {
  if (!bundle || !embeddings_path || !ks || k_count == 0) return invalid("dman_eval_search: null argument");
  return guarded([&] {
    std::vector<size_t> k_values(ks, ks + k_count);
    auto result = dman::runner::run_eval_search(bundle->data, embeddings_path, k_values, table_out ? table_out : "",
                                                kv_out ? kv_out : "");
    if (p_at_k_out) {
      for (size_t i = 0; i < k_count; ++i) p_at_k_out[i] = result.p_at_k[i];
    }
  });
}

dman_status dman_gradcheck(const char* table_out, double* max_rel_err_out) {
  return guarded([&] {
    auto report = dman::runner::run_gradcheck(table_out ? table_out : "");
    if (max_rel_err_out) *max_rel_err_out = report.max_rel_err;
  });
}

dman_status dman_bench_complexity(const dman_config* cfg, const uint32_t* sizes, size_t size_count,
                                  const char* table_out, double* slope_out) {
  if (!cfg || !sizes || size_count == 0) return invalid("dman_bench_complexity: null argument");
  return guarded([&] {
    std::vector<size_t> n(sizes, sizes + size_count);
    auto result = dman::runner::run_bench(n, cfg->cfg, table_out ? table_out : "");
    if (slope_out) *slope_out = result.loglog_slope;
  });
}

}  // extern "C"
