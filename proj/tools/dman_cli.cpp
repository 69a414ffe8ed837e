// dman command-line front end. Talks to the shared library exclusively
// through the C interface in dman/dman.h.

#include <sys/stat.h>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dman/dman.h"

namespace {

// Relative bundle paths that do not resolve from the working directory fall
// back to $DMAN_DATA_DIR.
std::string resolve_data_dir(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  struct stat st{};
  if (::stat(path.c_str(), &st) == 0) return path;
  const char* base = std::getenv("DMAN_DATA_DIR");
  if (!base || !*base) return path;
  return std::string(base) + "/" + path;
}

int exit_code_for(dman_status st) {
  switch (st) {
    case DMAN_OK:
      return 0;
    case DMAN_ERR_DIMENSION:
    case DMAN_ERR_DOMAIN:
    case DMAN_ERR_STATE:
    case DMAN_ERR_INTERNAL:
      return 1;
    default:
      return 2;  // bad usage, bad input, missing or corrupt files
  }
}

int fail(dman_status st) {
  std::fprintf(stderr, "error: %s: %s\n", dman_status_name(st), dman_last_error());
  return exit_code_for(st);
}

#define DMAN_CHECK(expr)                        \
  do {                                          \
    const dman_status st_ = (expr);             \
    if (st_ != DMAN_OK) return fail(st_);       \
  } while (0)

struct ConfigDeleter {
  void operator()(dman_config* c) const { dman_config_free(c); }
};
using ConfigPtr = std::unique_ptr<dman_config, ConfigDeleter>;

struct BundleDeleter {
  void operator()(dman_bundle* b) const { dman_bundle_free(b); }
};
using BundlePtr = std::unique_ptr<dman_bundle, BundleDeleter>;

struct ModelDeleter {
  void operator()(dman_model* m) const { dman_model_free(m); }
};
using ModelPtr = std::unique_ptr<dman_model, ModelDeleter>;

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;  // key=value pairs for dman_config_set
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "run configuration file (JSON)");
  sub->add_option("--seed", opts.seed, "master seed override")->each([&opts](const std::string&) {
    opts.seed_set = true;
  });
  sub->add_option("--set", opts.overrides, "config override as section.key=value (repeatable)");
}

int make_config(const CommonOpts& opts, ConfigPtr& out) {
  dman_config* raw = nullptr;
  if (!opts.config_path.empty()) {
    DMAN_CHECK(dman_config_load(opts.config_path.c_str(), &raw));
  } else {
    DMAN_CHECK(dman_config_create(&raw));
  }
  out.reset(raw);
  for (const std::string& kv : opts.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: config: --set expects key=value, got \"%s\"\n", kv.c_str());
      return 2;
    }
    DMAN_CHECK(dman_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (opts.seed_set) DMAN_CHECK(dman_config_set_seed(out.get(), opts.seed));
  return 0;
}

int open_bundle(const std::string& dir, BundlePtr& out) {
  dman_bundle* raw = nullptr;
  DMAN_CHECK(dman_bundle_open(resolve_data_dir(dir).c_str(), &raw));
  out.reset(raw);
  return 0;
}

int open_model(const std::string& path, ModelPtr& out) {
  dman_model* raw = nullptr;
  DMAN_CHECK(dman_model_open(path.c_str(), &raw));
  out.reset(raw);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dman: image-text graph embedding with per-word visual attention"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dman_version()));

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic planted-structure dataset bundle");
  std::string gen_out;
  dman_synthetic_spec spec;
  dman_synthetic_spec_init(&spec);
  bool gen_with_images = false;
  CommonOpts gen_common;
  gen->add_option("--out", gen_out, "output bundle directory")->required();
  gen->add_option("--topics", spec.topics, "number of planted topics");
  gen->add_option("--nodes-per-topic", spec.nodes_per_topic, "nodes per topic");
  gen->add_option("--regions", spec.regions, "regions per image");
  gen->add_option("--feature-dim", spec.feature_dim, "region feature width");
  gen->add_option("--vocab", spec.vocab, "vocabulary size");
  gen->add_option("--words-per-topic", spec.words_per_topic, "words owned by each topic");
  gen->add_option("--signature-regions", spec.signature_regions, "planted regions per node");
  gen->add_option("--signature-scale", spec.signature_scale, "magnitude of planted signature coordinates");
  gen->add_option("--noise", spec.noise_sigma, "feature noise level");
  gen->add_option("--word-prob", spec.word_prob, "per-word presence probability");
  gen->add_option("--co-label", spec.co_label_prob, "cross-topic second-label probability");
  gen->add_option("--test-fraction", spec.test_fraction, "test split fraction");
  gen->add_flag("--with-images", gen_with_images, "also write raw images for the patch-projection path");
  gen->add_option("--seed", spec.seed, "generator seed");

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "build and save the shared-label link graph");
  std::string bg_bundle, bg_out, bg_split = "train";
  uint32_t bg_max_links = 50;
  uint64_t bg_seed = 0;
  bool bg_seed_set = false;
  bg->add_option("--bundle", bg_bundle, "bundle directory")->required();
  bg->add_option("--out", bg_out, "output graph file")->required();
  bg->add_option("--max-links", bg_max_links, "per-node link cap");
  bg->add_option("--split", bg_split, "train|all");
  bg->add_option("--seed", bg_seed, "sampling seed")->each([&bg_seed_set](const std::string&) {
    bg_seed_set = true;
  });

  // train
  auto* tr = app.add_subcommand("train", "train a model on a bundle's training split");
  std::string tr_bundle, tr_graph, tr_ckpt, tr_report;
  CommonOpts tr_common;
  tr->add_option("--bundle", tr_bundle, "bundle directory")->required();
  tr->add_option("--checkpoint-out", tr_ckpt, "output checkpoint path")->required();
  tr->add_option("--report-out", tr_report, "per-epoch report table path");
  tr->add_option("--graph", tr_graph, "pre-built graph file (defaults to building one)");
  add_common(tr, tr_common);

  // embed
  auto* em = app.add_subcommand("embed", "compute evaluation-mode embeddings");
  std::string em_ckpt, em_bundle, em_out, em_split = "test";
  em->add_option("--checkpoint", em_ckpt, "checkpoint path")->required();
  em->add_option("--bundle", em_bundle, "bundle directory")->required();
  em->add_option("--out", em_out, "output embedding file")->required();
  em->add_option("--split", em_split, "train|test|all");
  uint64_t em_seed = 0;
  em->add_option("--seed", em_seed, "accepted for interface uniformity; embedding is deterministic");

  // eval-classify
  auto* ec = app.add_subcommand("eval-classify", "downstream multi-label classification metrics");
  std::string ec_bundle, ec_train, ec_test, ec_table, ec_kv;
  CommonOpts ec_common;
  ec->add_option("--bundle", ec_bundle, "bundle directory")->required();
  ec->add_option("--train-embeddings", ec_train, "training-split embedding file")->required();
  ec->add_option("--test-embeddings", ec_test, "test-split embedding file")->required();
  ec->add_option("--table-out", ec_table, "metric table path")->required();
  ec->add_option("--kv-out", ec_kv, "machine-readable key=value path")->required();
  add_common(ec, ec_common);

  // eval-search
  auto* es = app.add_subcommand("eval-search", "cross-modal label-query retrieval (p@k)");
  std::string es_bundle, es_emb, es_table, es_kv;
  std::vector<uint32_t> es_ks = {1, 5, 10};
  uint64_t es_seed = 0;
  es->add_option("--bundle", es_bundle, "bundle directory")->required();
  es->add_option("--embeddings", es_emb, "embedding file")->required();
  es->add_option("--k", es_ks, "k values, e.g. --k 1 5 10")->delimiter(',');
  es->add_option("--table-out", es_table, "metric table path")->required();
  es->add_option("--kv-out", es_kv, "machine-readable key=value path")->required();
  es->add_option("--seed", es_seed, "accepted for interface uniformity; retrieval is deterministic");

  // export-attention
  auto* ea = app.add_subcommand("export-attention", "write per-word attention maps for chosen nodes");
  std::string ea_ckpt, ea_bundle, ea_out;
  std::vector<uint32_t> ea_nodes, ea_words;
  uint64_t ea_seed = 0;
  ea->add_option("--checkpoint", ea_ckpt, "checkpoint path")->required();
  ea->add_option("--bundle", ea_bundle, "bundle directory")->required();
  ea->add_option("--nodes", ea_nodes, "node ids")->required()->delimiter(',');
  ea->add_option("--words", ea_words, "word ids")->required()->delimiter(',');
  ea->add_option("--out", ea_out, "output directory")->required();
  ea->add_option("--seed", ea_seed, "accepted for interface uniformity; export is deterministic");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification suite");
  std::string gc_table;
  double gc_tolerance = 1e-4;
  uint64_t gc_seed = 0;
  gc->add_option("--table-out", gc_table, "per-check table path");
  gc->add_option("--tolerance", gc_tolerance, "max allowed relative error");
  gc->add_option("--seed", gc_seed, "accepted for interface uniformity; the suite is fixed-seed");

  // bench-complexity
  auto* bc = app.add_subcommand("bench-complexity", "seconds-per-epoch scaling across problem sizes");
  std::vector<uint32_t> bc_sizes = {250, 500, 1000, 2000};
  std::string bc_table;
  CommonOpts bc_common;
  bc->add_option("--sizes", bc_sizes, "node counts (multiples of 5)")->delimiter(',');
  bc->add_option("--table-out", bc_table, "timing table path");
  add_common(bc, bc_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  if (gen->parsed()) {
    spec.with_images = gen_with_images ? 1 : 0;
    DMAN_CHECK(dman_generate(&spec, gen_out.c_str()));
    std::printf("generated bundle at %s (%" PRIu32 " nodes)\n", gen_out.c_str(), spec.topics * spec.nodes_per_topic);
    return 0;
  }

  if (bg->parsed()) {
    BundlePtr bundle;
    if (int rc = open_bundle(bg_bundle, bundle)) return rc;
    uint64_t edges = 0;
    DMAN_CHECK(dman_build_graph(bundle.get(), bg_max_links, bg_seed_set ? bg_seed : 0, bg_split.c_str(),
                                bg_out.c_str(), &edges));
    std::printf("graph written to %s (%" PRIu64 " edges)\n", bg_out.c_str(), edges);
    return 0;
  }

  if (tr->parsed()) {
    ConfigPtr cfg;
    if (int rc = make_config(tr_common, cfg)) return rc;
    BundlePtr bundle;
    if (int rc = open_bundle(tr_bundle, bundle)) return rc;
    double final_joint = 0.0;
    DMAN_CHECK(dman_train(bundle.get(), cfg.get(), tr_graph.empty() ? nullptr : tr_graph.c_str(), tr_ckpt.c_str(),
                          tr_report.empty() ? nullptr : tr_report.c_str(), &final_joint));
    std::printf("checkpoint written to %s (final joint loss %.6f)\n", tr_ckpt.c_str(), final_joint);
    return 0;
  }

  if (em->parsed()) {
    BundlePtr bundle;
    if (int rc = open_bundle(em_bundle, bundle)) return rc;
    ModelPtr model;
    if (int rc = open_model(em_ckpt, model)) return rc;
    DMAN_CHECK(dman_embed(model.get(), bundle.get(), em_split.c_str(), em_out.c_str()));
    std::printf("embeddings written to %s\n", em_out.c_str());
    return 0;
  }

  if (ec->parsed()) {
    ConfigPtr cfg;
    if (int rc = make_config(ec_common, cfg)) return rc;
    BundlePtr bundle;
    if (int rc = open_bundle(ec_bundle, bundle)) return rc;
    double micro_f1 = 0.0, map = 0.0;
    DMAN_CHECK(dman_eval_classify(bundle.get(), ec_train.c_str(), ec_test.c_str(), cfg.get(), ec_table.c_str(),
                                  ec_kv.c_str(), &micro_f1, &map));
    std::printf("classification metrics written to %s (micro-F1 %.4f, mAP %.4f)\n", ec_table.c_str(), micro_f1, map);
    return 0;
  }

  if (es->parsed()) {
    BundlePtr bundle;
    if (int rc = open_bundle(es_bundle, bundle)) return rc;
    std::vector<double> p_at_k(es_ks.size(), 0.0);
    DMAN_CHECK(dman_eval_search(bundle.get(), es_emb.c_str(), es_ks.data(), es_ks.size(), es_table.c_str(),
                                es_kv.c_str(), p_at_k.data()));
    std::printf("search metrics written to %s (", es_table.c_str());
    for (size_t i = 0; i < es_ks.size(); ++i) {
      std::printf("%sp@%" PRIu32 "=%.4f", i ? ", " : "", es_ks[i], p_at_k[i]);
    }
    std::printf(")\n");
    return 0;
  }

  if (ea->parsed()) {
    BundlePtr bundle;
    if (int rc = open_bundle(ea_bundle, bundle)) return rc;
    ModelPtr model;
    if (int rc = open_model(ea_ckpt, model)) return rc;
    DMAN_CHECK(dman_export_attention(model.get(), bundle.get(), ea_nodes.data(), ea_nodes.size(), ea_words.data(),
                                     ea_words.size(), ea_out.c_str()));
    std::printf("attention maps written to %s\n", ea_out.c_str());
    return 0;
  }

  if (gc->parsed()) {
    double max_err = 0.0;
    DMAN_CHECK(dman_gradcheck(gc_table.empty() ? nullptr : gc_table.c_str(), &max_err));
    const bool ok = max_err <= gc_tolerance;
    std::printf("gradcheck: max relative error %.3e (tolerance %.3e): %s\n", max_err, gc_tolerance,
                ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
  }

  if (bc->parsed()) {
    ConfigPtr cfg;
    if (int rc = make_config(bc_common, cfg)) return rc;
    double slope = 0.0;
    DMAN_CHECK(dman_bench_complexity(cfg.get(), bc_sizes.data(), bc_sizes.size(),
                                     bc_table.empty() ? nullptr : bc_table.c_str(), &slope));
    std::printf("bench-complexity: log-log slope %.4f over %zu sizes\n", slope, bc_sizes.size());
    return 0;
  }

  return 2;
}
