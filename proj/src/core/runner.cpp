#include "core/runner.hpp"

#include <algorithm>
#include <filesystem>

namespace dman::runner {

namespace fs = std::filesystem;

void generate(const SyntheticSpec& spec, const std::string& out_dir) {
  save_bundle(generate_synthetic(spec), out_dir);
}

GraphSummary build_graph_file(const DatasetBundle& bundle, uint32_t max_links, uint64_t seed,
                              const std::string& split, const std::string& out_path) {
  std::vector<uint32_t> include;
  if (split == "train") include = bundle.manifest.train_ids;
  else if (split != "all") throw InputError("build_graph: split must be \"train\" or \"all\", got \"" + split + "\"");
  MultimodalGraph graph = build_graph(bundle.nodes, max_links, seed, include);
  save_graph(out_path, graph, seed);
  return {graph.node_count, graph.precap_edges, graph.final_edges, graph.capped_nodes};
}

TrainReport run_train(const DatasetBundle& bundle, const RunConfig& cfg, const std::string& graph_path,
                      const std::string& checkpoint_out, const std::string& report_out) {
  MultimodalGraph graph = graph_path.empty()
                              ? build_graph(bundle.nodes, cfg.graph_max_links, graph_seed(cfg),
                                            bundle.manifest.train_ids)
                              : load_graph(graph_path, bundle.manifest.node_count);

  DmanModel model(make_model_config(cfg, bundle.manifest));
  auto provider = bundle.make_provider();

  TrainConfig tc = cfg.train;
  tc.seed = train_seed(cfg);

  auto on_checkpoint = [&](int epoch, const DmanModel& m, const SgdOptimizer& opt, Rng& rng) {
    if (!checkpoint_out.empty()) save_checkpoint(checkpoint_out, m, opt, epoch, rng.state_string());
  };
  TrainReport report =
      train(graph, bundle.nodes, *provider, model, cfg.triplet, cfg.joint, tc, bundle.manifest.train_ids,
            on_checkpoint);
  if (!report_out.empty()) write_train_report(report_out, report);
  return report;
}

TrainReport run_train(const std::string& bundle_dir, const RunConfig& cfg, const std::string& graph_path,
                      const std::string& checkpoint_out, const std::string& report_out) {
  return run_train(load_bundle(bundle_dir), cfg, graph_path, checkpoint_out, report_out);
}

std::vector<uint32_t> split_ids(const BundleManifest& manifest, const std::string& split) {
  std::vector<uint32_t> ids;
  if (split == "train") ids = manifest.train_ids;
  else if (split == "test") ids = manifest.test_ids;
  else if (split == "all") {
    ids.resize(manifest.node_count);
    for (uint32_t i = 0; i < manifest.node_count; ++i) ids[i] = i;
  } else {
    throw InputError("split must be \"train\", \"test\" or \"all\", got \"" + split + "\"");
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

EmbeddingSet compute_embeddings(const DatasetBundle& bundle, const DmanModel& model,
                                const std::vector<uint32_t>& ids) {
  auto provider = bundle.make_provider();
  EmbeddingSet set;
  set.dim = model.config().vocab;
  set.ids = ids;
  set.data.reserve(ids.size() * set.dim);
  for (uint32_t id : ids) {
    Tape tape(false);
    DmanModel::Forward f = model.forward(tape, provider->regions_for(id), /*training=*/false);
    set.data.insert(set.data.end(), f.embedding.values().begin(), f.embedding.values().end());
    set.labels.push_back(bundle.nodes[id].labels);
  }
  return set;
}

void run_embed(const DmanModel& model, const DatasetBundle& bundle, const std::string& split,
               const std::string& out_path) {
  if (model.config().vocab != bundle.manifest.vocab || model.config().regions != bundle.manifest.regions ||
      model.config().feature_dim != bundle.manifest.feature_dim) {
    throw InputError("embed: model dimensions do not match the bundle");
  }
  save_embeddings(out_path, compute_embeddings(bundle, model, split_ids(bundle.manifest, split)));
}

void run_embed(const std::string& checkpoint_path, const std::string& bundle_dir, const std::string& split,
               const std::string& out_path) {
  DmanModel model = model_from_checkpoint(load_checkpoint(checkpoint_path));
  run_embed(model, load_bundle(bundle_dir), split, out_path);
}

ClassifyOutcome run_eval_classify(const DatasetBundle& bundle, const std::string& train_embeddings,
                                  const std::string& test_embeddings, const RunConfig& cfg,
                                  const std::string& table_out, const std::string& kv_out) {
  EmbeddingSet train_set = load_embeddings(train_embeddings, bundle);
  EmbeddingSet test_set = load_embeddings(test_embeddings, bundle);

  ClassifierConfig ccfg = cfg.classifier;
  ccfg.seed = classifier_seed(cfg);
  DownstreamClassifier classifier(train_set.dim, bundle.manifest.classes, ccfg);

  ClassifyOutcome outcome;
  outcome.final_train_bce = classifier.fit(train_set);
  outcome.absent_classes = classifier.absent_classes().size();

  Matrix predictions = classifier.predict(test_set);
  Matrix truth = truth_matrix(test_set.labels, bundle.manifest.classes);
  outcome.metrics = classify_metrics(predictions, truth, ccfg.threshold);
  size_t excluded = 0;
  outcome.metrics.map = mean_average_precision(predictions, truth, &excluded);
  outcome.metrics.map_excluded_classes = excluded;

  const ClassifyMetrics& m = outcome.metrics;
  if (!table_out.empty()) {
    write_table(table_out, {"model", "micro_p", "micro_r", "micro_f1", "macro_p", "macro_r", "macro_f1", "map"},
                {{"dman", format_double(m.micro_p, 6), format_double(m.micro_r, 6), format_double(m.micro_f1, 6),
                  format_double(m.macro_p, 6), format_double(m.macro_r, 6), format_double(m.macro_f1, 6),
                  format_double(m.map, 6)}});
  }
  if (!kv_out.empty()) {
    write_kv(kv_out, {{"micro_p", format_double(m.micro_p, 6)},
                      {"micro_r", format_double(m.micro_r, 6)},
                      {"micro_f1", format_double(m.micro_f1, 6)},
                      {"macro_p", format_double(m.macro_p, 6)},
                      {"macro_r", format_double(m.macro_r, 6)},
                      {"macro_f1", format_double(m.macro_f1, 6)},
                      {"map", format_double(m.map, 6)},
                      {"zero_precision_classes", std::to_string(m.zero_precision_classes)},
                      {"zero_recall_classes", std::to_string(m.zero_recall_classes)},
                      {"map_excluded_classes", std::to_string(m.map_excluded_classes)},
                      {"absent_train_classes", std::to_string(outcome.absent_classes)},
                      {"final_train_bce", format_double(outcome.final_train_bce, 6)}});
  }
  return outcome;
}

std::vector<SearchQuery> label_queries(const BundleManifest& manifest) {
  std::vector<SearchQuery> queries;
  for (uint32_t c = 0; c < manifest.classes; ++c) {
    const std::string& word = manifest.label_names[c];
    const auto it = std::find(manifest.vocabulary.begin(), manifest.vocabulary.end(), word);
    if (it == manifest.vocabulary.end()) {
      throw InputError("label word \"" + word + "\" is not in the vocabulary");
    }
    queries.push_back({c, static_cast<uint32_t>(it - manifest.vocabulary.begin())});
  }
  return queries;
}

SearchResult run_eval_search(const DatasetBundle& bundle, const std::string& embeddings_path,
                             const std::vector<size_t>& ks, const std::string& table_out,
                             const std::string& kv_out) {
  EmbeddingSet set = load_embeddings(embeddings_path, bundle);
  SearchResult result = cross_modal_search(label_queries(bundle.manifest), set, ks);

  std::vector<std::string> header = {"model"};
  std::vector<std::string> row = {"dman"};
  std::vector<std::pair<std::string, std::string>> kv = {{"queries", std::to_string(result.query_count)}};
  for (size_t i = 0; i < result.ks.size(); ++i) {
    header.push_back("p@" + std::to_string(result.ks[i]));
    row.push_back(format_double(result.p_at_k[i], 6));
    kv.emplace_back("p@" + std::to_string(result.ks[i]), format_double(result.p_at_k[i], 6));
  }
  if (!table_out.empty()) write_table(table_out, header, {row});
  if (!kv_out.empty()) write_kv(kv_out, kv);
  return result;
}

void run_export_attention(const DmanModel& model, const DatasetBundle& bundle,
                          const std::vector<uint32_t>& node_ids, const std::vector<uint32_t>& word_ids,
                          const std::string& out_dir) {
  if (node_ids.empty()) throw InputError("export-attention: no node ids");
  if (word_ids.empty()) throw InputError("export-attention: no word ids");
  auto provider = bundle.make_provider();

  for (uint32_t w : word_ids)
    if (w >= bundle.manifest.vocab) throw InputError("export-attention: word id out of range");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  for (uint32_t node : node_ids) {
    if (node >= bundle.manifest.node_count) throw InputError("export-attention: node id out of range");
    Tape tape(false);
    DmanModel::Forward f = model.forward(tape, provider->regions_for(node), false);
    AttentionExport exp;
    exp.vocab = bundle.manifest.vocab;
    exp.regions = bundle.manifest.regions;
    exp.node_id = node;
    exp.words = word_ids;
    exp.rows.reserve(word_ids.size() * exp.regions);
    for (uint32_t w : word_ids)
      for (uint32_t d = 0; d < exp.regions; ++d) exp.rows.push_back(f.attention.at(w, d));
    save_attention(out_dir + "/attention_node" + std::to_string(node) + ".bin", exp);
  }
}

GradCheckReport run_gradcheck(const std::string& table_out) {
  GradCheckReport report = run_gradient_checks();
  if (!table_out.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : report.entries) {
      rows.push_back({e.name, format_double(e.max_rel_err, 10), std::to_string(e.checked)});
    }
    write_table(table_out, {"check", "max_rel_err", "partials"}, rows);
  }
  return report;
}

ProbeResult run_bench(const std::vector<size_t>& sizes, const RunConfig& cfg, const std::string& table_out) {
  auto make_instance = [&cfg](size_t n) {
    SyntheticSpec spec;
    spec.topics = 5;
    if (n % spec.topics != 0 || n < spec.topics * 2) {
      throw ConfigError("bench: sizes must be multiples of 5 and at least 10");
    }
    spec.nodes_per_topic = static_cast<uint32_t>(n / spec.topics);
    spec.vocab = 30;
    spec.words_per_topic = 6;
    spec.regions = 8;
    spec.feature_dim = 20;
    spec.signature_regions = 4;
    spec.noise_sigma = 0.3;
    spec.co_label_prob = 0.05;
    spec.seed = derive_seed(cfg.seed, "bench-" + std::to_string(n));
    DatasetBundle bundle = generate_synthetic(spec);

    ProbeInstance inst;
    inst.graph = build_graph(bundle.nodes, cfg.graph_max_links, derive_seed(spec.seed, "graph"),
                             bundle.manifest.train_ids);
    inst.provider = bundle.make_provider();
    inst.nodes = std::move(bundle.nodes);
    inst.train_ids = bundle.manifest.train_ids;
    return inst;
  };

  ModelConfig mc;
  mc.vocab = 30;
  mc.regions = 8;
  mc.feature_dim = 20;
  mc.lfc_hidden1 = 32;
  mc.lfc_hidden2 = 16;
  mc.dropout = 0.5;
  mc.init_seed = derive_seed(cfg.seed, "bench-model");

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "bench-train");

  ProbeResult result = complexity_probe(sizes, make_instance, mc, cfg.triplet, cfg.joint, tc, 2);

  if (!table_out.empty()) {
    std::string out = "n\tseconds_per_epoch\n";
    for (const auto& p : result.points) {
      out += std::to_string(p.n) + "\t" + format_double(p.seconds_per_epoch, 6) + "\n";
    }
    out += "# loglog_slope=" + format_double(result.loglog_slope, 4) + "\n";
    write_text_file_atomic(table_out, out);
  }
  return result;
}

}  // namespace dman::runner
