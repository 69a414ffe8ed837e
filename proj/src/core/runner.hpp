#pragma once

#include <string>
#include <vector>

#include "core/dataio.hpp"
#include "core/gradcheck.hpp"

namespace dman::runner {

// File-level orchestration of the library: every function here corresponds
// to one C-API entry point / CLI subcommand. The primary forms take loaded
// objects; the path forms load and delegate.

void generate(const SyntheticSpec& spec, const std::string& out_dir);

struct GraphSummary {
  size_t nodes = 0;
  size_t precap_edges = 0;
  size_t final_edges = 0;
  size_t capped_nodes = 0;
};

// split: "train" (edges among training nodes only, what run_train uses) or
// "all".
GraphSummary build_graph_file(const DatasetBundle& bundle, uint32_t max_links, uint64_t seed,
                              const std::string& split, const std::string& out_path);

TrainReport run_train(const DatasetBundle& bundle, const RunConfig& cfg, const std::string& graph_path,
                      const std::string& checkpoint_out, const std::string& report_out);
TrainReport run_train(const std::string& bundle_dir, const RunConfig& cfg, const std::string& graph_path,
                      const std::string& checkpoint_out, const std::string& report_out);

// split: "train", "test" or "all"; ids are written in ascending order.
void run_embed(const DmanModel& model, const DatasetBundle& bundle, const std::string& split,
               const std::string& out_path);
void run_embed(const std::string& checkpoint_path, const std::string& bundle_dir, const std::string& split,
               const std::string& out_path);

struct ClassifyOutcome {
  ClassifyMetrics metrics;
  double final_train_bce = 0.0;
  size_t absent_classes = 0;
};

ClassifyOutcome run_eval_classify(const DatasetBundle& bundle, const std::string& train_embeddings,
                                  const std::string& test_embeddings, const RunConfig& cfg,
                                  const std::string& table_out, const std::string& kv_out);

SearchResult run_eval_search(const DatasetBundle& bundle, const std::string& embeddings_path,
                             const std::vector<size_t>& ks, const std::string& table_out,
                             const std::string& kv_out);

void run_export_attention(const DmanModel& model, const DatasetBundle& bundle,
                          const std::vector<uint32_t>& node_ids, const std::vector<uint32_t>& word_ids,
                          const std::string& out_dir);

GradCheckReport run_gradcheck(const std::string& table_out);  // empty path skips the table

ProbeResult run_bench(const std::vector<size_t>& sizes, const RunConfig& cfg, const std::string& table_out);

// Building blocks shared with the test suites.
EmbeddingSet compute_embeddings(const DatasetBundle& bundle, const DmanModel& model,
                                const std::vector<uint32_t>& ids);
std::vector<SearchQuery> label_queries(const BundleManifest& manifest);
std::vector<uint32_t> split_ids(const BundleManifest& manifest, const std::string& split);

}  // namespace dman::runner
