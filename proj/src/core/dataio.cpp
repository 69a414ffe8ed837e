#include "core/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace dman {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where, const std::vector<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("config: unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

class ByteWriter {
 public:
  void bytes(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  const std::string& str() const { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  void bytes(void* out, size_t n) {
    if (pos_ + n > data_.size()) {
      throw CorruptError(origin_ + ": truncated, needed " + std::to_string(n) + " bytes at offset " +
                         std::to_string(pos_) + " of " + std::to_string(data_.size()));
    }
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (pos_ != data_.size()) throw CorruptError(origin_ + ": trailing bytes after payload");
  }

 private:
  const std::string& data_;
  std::string origin_;
  size_t pos_ = 0;
};

std::string read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path);
  return data;
}

void write_binary_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + " failed: " + ec.message());
}

json manifest_to_json(const BundleManifest& m) {
  json j;
  j["format"] = "dman-bundle";
  j["version"] = m.version;
  j["node_count"] = m.node_count;
  j["vocab"] = m.vocab;
  j["regions"] = m.regions;
  j["feature_dim"] = m.feature_dim;
  j["classes"] = m.classes;
  j["vocabulary"] = m.vocabulary;
  j["label_names"] = m.label_names;
  j["split"] = json{{"train", m.train_ids}, {"test", m.test_ids}};
  if (m.has_images) {
    j["images"] = json{{"channels", m.image_channels}, {"height", m.image_height}, {"width", m.image_width}};
  }
  if (m.synthetic.present) {
    const auto& s = m.synthetic;
    j["synthetic"] = json{{"topics", s.topics},
                          {"nodes_per_topic", s.nodes_per_topic},
                          {"words_per_topic", s.words_per_topic},
                          {"signature_regions", s.signature_regions},
                          {"signature_scale", s.signature_scale},
                          {"noise_sigma", s.noise_sigma},
                          {"word_prob", s.word_prob},
                          {"co_label_prob", s.co_label_prob},
                          {"seed", s.seed}};
  }
  return j;
}

BundleManifest manifest_from_json(const json& j) {
  require_keys(j, "manifest", {"format", "version", "node_count", "vocab", "regions", "feature_dim", "classes",
                               "vocabulary", "label_names", "split", "images", "synthetic"});
  if (!j.contains("format") || j.at("format") != "dman-bundle") {
    throw CorruptError("manifest: missing or wrong format marker");
  }
  BundleManifest m;
  m.version = j.at("version").get<uint32_t>();
  if (m.version != 1) throw CorruptError("manifest: unsupported bundle version " + std::to_string(m.version));
  m.node_count = j.at("node_count").get<uint32_t>();
  m.vocab = j.at("vocab").get<uint32_t>();
  m.regions = j.at("regions").get<uint32_t>();
  m.feature_dim = j.at("feature_dim").get<uint32_t>();
  m.classes = j.at("classes").get<uint32_t>();
  m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  m.label_names = j.at("label_names").get<std::vector<std::string>>();
  const json& split = j.at("split");
  require_keys(split, "manifest.split", {"train", "test"});
  m.train_ids = split.at("train").get<std::vector<uint32_t>>();
  m.test_ids = split.at("test").get<std::vector<uint32_t>>();
  if (j.contains("images")) {
    const json& im = j.at("images");
    require_keys(im, "manifest.images", {"channels", "height", "width"});
    m.has_images = true;
    m.image_channels = im.at("channels").get<uint32_t>();
    m.image_height = im.at("height").get<uint32_t>();
    m.image_width = im.at("width").get<uint32_t>();
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    require_keys(s, "manifest.synthetic", {"topics", "nodes_per_topic", "words_per_topic", "signature_regions",
                                           "signature_scale", "noise_sigma", "word_prob", "co_label_prob", "seed"});
    m.synthetic.present = true;
    m.synthetic.topics = s.at("topics").get<uint32_t>();
    m.synthetic.nodes_per_topic = s.at("nodes_per_topic").get<uint32_t>();
    m.synthetic.words_per_topic = s.at("words_per_topic").get<uint32_t>();
    m.synthetic.signature_regions = s.at("signature_regions").get<uint32_t>();
    m.synthetic.signature_scale = s.at("signature_scale").get<double>();
    m.synthetic.noise_sigma = s.at("noise_sigma").get<double>();
    m.synthetic.word_prob = s.at("word_prob").get<double>();
    m.synthetic.co_label_prob = s.at("co_label_prob").get<double>();
    m.synthetic.seed = s.at("seed").get<uint64_t>();
  }
  return m;
}

void validate_manifest(const BundleManifest& m) {
  if (m.node_count < 1) throw CorruptError("manifest: node_count must be >= 1");
  if (m.vocab < 1 || m.regions < 1 || m.feature_dim < 1 || m.classes < 1) {
    throw CorruptError("manifest: vocab, regions, feature_dim and classes must be >= 1");
  }
  if (m.vocabulary.size() != m.vocab) throw CorruptError("manifest: vocabulary length differs from vocab");
  if (m.label_names.size() != m.classes) throw CorruptError("manifest: label_names length differs from classes");
  std::vector<char> seen(m.node_count, 0);
  auto mark = [&](const std::vector<uint32_t>& ids, const char* which) {
    for (uint32_t id : ids) {
      if (id >= m.node_count) throw CorruptError(std::string("manifest: ") + which + " id out of range");
      if (seen[id]) throw CorruptError(std::string("manifest: duplicate id in split"));
      seen[id] = 1;
    }
  };
  mark(m.train_ids, "train");
  mark(m.test_ids, "test");
  for (uint32_t i = 0; i < m.node_count; ++i) {
    if (!seen[i]) throw CorruptError("manifest: split does not cover node " + std::to_string(i));
  }
}

}  // namespace

std::shared_ptr<RegionProvider> DatasetBundle::make_provider() const {
  return std::make_shared<PrecomputedRegions>(manifest.node_count, manifest.regions, manifest.feature_dim, features);
}

std::shared_ptr<RegionProvider> DatasetBundle::make_patch_provider(uint64_t seed) const {
  if (!manifest.has_images) throw InputError("bundle has no raw images for the patch-projection path");
  auto store = std::make_shared<RawImageStore>(images);
  return std::make_shared<PatchProjector>(store, manifest.regions, manifest.feature_dim, seed);
}

void validate(const SyntheticSpec& spec) {
  if (spec.topics < 2) throw ConfigError("synthetic: at least two topics required");
  if (spec.nodes_per_topic < 1) throw ConfigError("synthetic: nodes_per_topic must be >= 1");
  if (spec.regions < 1 || spec.feature_dim < 1) throw ConfigError("synthetic: regions and feature_dim must be >= 1");
  if (spec.words_per_topic < 1) throw ConfigError("synthetic: words_per_topic must be >= 1");
  if (static_cast<uint64_t>(spec.topics) * spec.words_per_topic > spec.vocab) {
    throw ConfigError("synthetic: topic word subsets overlap (topics*words_per_topic exceeds vocab)");
  }
  if (spec.feature_dim < spec.topics) {
    throw ConfigError("synthetic: feature_dim must be >= topics for disjoint signatures");
  }
  if (spec.signature_regions < 1 || spec.signature_regions > spec.regions) {
    throw ConfigError("synthetic: signature_regions must be in [1, regions]");
  }
  if (!(spec.signature_scale > 0.0)) throw ConfigError("synthetic: signature_scale must be > 0");
  if (spec.noise_sigma < 0.0) throw ConfigError("synthetic: noise_sigma must be >= 0");
  if (!(spec.word_prob > 0.0 && spec.word_prob <= 1.0)) throw ConfigError("synthetic: word_prob must be in (0, 1]");
  if (spec.co_label_prob < 0.0 || spec.co_label_prob > 1.0) {
    throw ConfigError("synthetic: co_label_prob must be in [0, 1]");
  }
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("synthetic: test_fraction must be in (0, 1)");
  }
  if (spec.with_images && (spec.image_channels < 1 || spec.image_height < 1 || spec.image_width < 1)) {
    throw ConfigError("synthetic: image dims must be >= 1");
  }
}

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const uint32_t n = spec.topics * spec.nodes_per_topic;
  if (n < 2) throw ConfigError("synthetic: need at least two nodes");

  DatasetBundle bundle;
  BundleManifest& m = bundle.manifest;
  m.node_count = n;
  m.vocab = spec.vocab;
  m.regions = spec.regions;
  m.feature_dim = spec.feature_dim;
  m.classes = spec.topics;
  m.vocabulary.reserve(spec.vocab);
  for (uint32_t w = 0; w < spec.vocab; ++w) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%04u", w);
    m.vocabulary.emplace_back(buf);
  }
  for (uint32_t p = 0; p < spec.topics; ++p) {
    m.label_names.push_back(m.vocabulary[p * spec.words_per_topic]);  // label word = first owned word
  }
  m.synthetic = {true,
                 spec.topics,
                 spec.nodes_per_topic,
                 spec.words_per_topic,
                 spec.signature_regions,
                 spec.signature_scale,
                 spec.noise_sigma,
                 spec.word_prob,
                 spec.co_label_prob,
                 spec.seed};

  // Disjoint coordinate blocks as topic signatures; exactly orthogonal.
  const uint32_t block = spec.feature_dim / spec.topics;
  auto signature_coord = [&](uint32_t topic, uint32_t coord) -> double {
    return (coord >= topic * block && coord < (topic + 1) * block) ? spec.signature_scale : 0.0;
  };

  Rng rng(spec.seed);
  bundle.features.resize(static_cast<size_t>(n) * spec.regions * spec.feature_dim);
  bundle.signature_regions.resize(n);
  bundle.nodes.resize(n);
  if (spec.with_images) {
    bundle.images.channels = spec.image_channels;
    bundle.images.height = spec.image_height;
    bundle.images.width = spec.image_width;
    bundle.images.data.resize(static_cast<size_t>(n) * bundle.images.pixels_per_image());
    m.has_images = true;
    m.image_channels = spec.image_channels;
    m.image_height = spec.image_height;
    m.image_width = spec.image_width;
  }

  for (uint32_t id = 0; id < n; ++id) {
    const uint32_t topic = id / spec.nodes_per_topic;
    MultimodalNode& node = bundle.nodes[id];
    node.id = id;

    node.labels.push_back(topic);
    if (rng.uniform() < spec.co_label_prob) {
      uint32_t other = static_cast<uint32_t>(rng.index(spec.topics - 1));
      if (other >= topic) ++other;
      node.labels.push_back(other);
    }
    std::sort(node.labels.begin(), node.labels.end());

    const uint32_t word_base = topic * spec.words_per_topic;
    for (uint32_t w = 0; w < spec.words_per_topic; ++w) {
      if (rng.uniform() < spec.word_prob) node.words.push_back(word_base + w);
    }
    if (node.words.empty()) node.words.push_back(word_base);  // text must stay nonempty

    auto sig = rng.sample_indices(spec.regions, spec.signature_regions);
    std::sort(sig.begin(), sig.end());
    bundle.signature_regions[id].assign(sig.begin(), sig.end());

    float* row = bundle.features.data() + static_cast<size_t>(id) * spec.regions * spec.feature_dim;
    for (uint32_t r = 0; r < spec.regions; ++r) {
      const bool planted = std::binary_search(sig.begin(), sig.end(), static_cast<size_t>(r));
      for (uint32_t c = 0; c < spec.feature_dim; ++c) {
        const double base = planted ? signature_coord(topic, c) : 0.0;
        row[r * spec.feature_dim + c] = static_cast<float>(base + spec.noise_sigma * rng.normal());
      }
    }

    if (spec.with_images) {
      float* img = bundle.images.data.data() + static_cast<size_t>(id) * bundle.images.pixels_per_image();
      const double tone = (static_cast<double>(topic) + 1.0) / static_cast<double>(spec.topics);
      for (size_t px = 0; px < bundle.images.pixels_per_image(); ++px) {
        img[px] = static_cast<float>(tone + spec.noise_sigma * rng.normal());
      }
    }
  }

  // 4:1-style split, stratified per topic so every topic appears in both
  // sides at the configured ratio.
  for (uint32_t p = 0; p < spec.topics; ++p) {
    std::vector<uint32_t> ids(spec.nodes_per_topic);
    for (uint32_t i = 0; i < spec.nodes_per_topic; ++i) ids[i] = p * spec.nodes_per_topic + i;
    rng.shuffle(ids);
    size_t n_test = static_cast<size_t>(std::llround(spec.test_fraction * static_cast<double>(ids.size())));
    n_test = std::min<size_t>(std::max<size_t>(n_test, 1), ids.size() - 1);
    m.test_ids.insert(m.test_ids.end(), ids.begin(), ids.begin() + static_cast<ptrdiff_t>(n_test));
    m.train_ids.insert(m.train_ids.end(), ids.begin() + static_cast<ptrdiff_t>(n_test), ids.end());
  }
  std::sort(m.test_ids.begin(), m.test_ids.end());
  std::sort(m.train_ids.begin(), m.train_ids.end());
  return bundle;
}

void save_bundle(const DatasetBundle& bundle, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  write_text_file_atomic(dir + "/manifest.json", manifest_to_json(bundle.manifest).dump(2) + "\n");

  json nodes = json::array();
  for (size_t i = 0; i < bundle.nodes.size(); ++i) {
    const auto& node = bundle.nodes[i];
    json entry;
    entry["id"] = node.id;
    entry["labels"] = node.labels;
    entry["words"] = node.words;
    if (i < bundle.signature_regions.size() && !bundle.signature_regions[i].empty()) {
      entry["sig_regions"] = bundle.signature_regions[i];
    }
    nodes.push_back(std::move(entry));
  }
  write_text_file_atomic(dir + "/nodes.json", json{{"nodes", std::move(nodes)}}.dump() + "\n");

  ByteWriter features;
  for (float v : bundle.features) features.f32(v);
  write_binary_file_atomic(dir + "/features.f32", features.str());

  if (bundle.manifest.has_images) {
    ByteWriter images;
    for (float v : bundle.images.data) images.f32(v);
    write_binary_file_atomic(dir + "/images.f32", images.str());
  }
}

DatasetBundle load_bundle(const std::string& dir) {
  if (!fs::exists(dir + "/manifest.json")) throw IoError("bundle manifest not found: " + dir + "/manifest.json");

  DatasetBundle bundle;
  json mj;
  try {
    mj = json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw CorruptError("manifest.json: " + std::string(e.what()));
  }
  bundle.manifest = manifest_from_json(mj);
  validate_manifest(bundle.manifest);
  const BundleManifest& m = bundle.manifest;

  json nj;
  try {
    nj = json::parse(read_text_file(dir + "/nodes.json"));
  } catch (const json::exception& e) {
    throw CorruptError("nodes.json: " + std::string(e.what()));
  }
  require_keys(nj, "nodes.json", {"nodes"});
  const json& arr = nj.at("nodes");
  if (arr.size() != m.node_count) {
    throw CorruptError("nodes.json: " + std::to_string(arr.size()) + " entries, manifest says " +
                       std::to_string(m.node_count));
  }
  bundle.nodes.resize(m.node_count);
  bundle.signature_regions.assign(m.node_count, {});
  for (size_t i = 0; i < arr.size(); ++i) {
    const json& e = arr[i];
    require_keys(e, "nodes.json entry", {"id", "labels", "words", "sig_regions"});
    MultimodalNode node;
    node.id = e.at("id").get<uint32_t>();
    if (node.id != i) throw CorruptError("nodes.json: ids must be dense and ascending, entry " + std::to_string(i));
    node.labels = e.at("labels").get<std::vector<uint32_t>>();
    node.words = e.at("words").get<std::vector<uint32_t>>();
    std::sort(node.labels.begin(), node.labels.end());
    node.labels.erase(std::unique(node.labels.begin(), node.labels.end()), node.labels.end());
    std::sort(node.words.begin(), node.words.end());
    node.words.erase(std::unique(node.words.begin(), node.words.end()), node.words.end());
    if (node.words.empty()) throw CorruptError("nodes.json: node " + std::to_string(i) + " has empty text");
    for (uint32_t w : node.words)
      if (w >= m.vocab) throw CorruptError("nodes.json: word index out of range in node " + std::to_string(i));
    for (uint32_t l : node.labels)
      if (l >= m.classes) throw CorruptError("nodes.json: label index out of range in node " + std::to_string(i));
    if (e.contains("sig_regions")) {
      bundle.signature_regions[i] = e.at("sig_regions").get<std::vector<uint32_t>>();
      for (uint32_t r : bundle.signature_regions[i])
        if (r >= m.regions) throw CorruptError("nodes.json: sig_region out of range in node " + std::to_string(i));
    }
    bundle.nodes[i] = std::move(node);
  }

  const std::string raw = read_binary_file(dir + "/features.f32");
  const size_t expected = static_cast<size_t>(m.node_count) * m.regions * m.feature_dim * 4;
  if (raw.size() != expected) {
    const long long diff = static_cast<long long>(expected) - static_cast<long long>(raw.size());
    throw CorruptError("features.f32: expected " + std::to_string(expected) + " bytes, found " +
                       std::to_string(raw.size()) +
                       (diff > 0 ? " (deficit " + std::to_string(diff) + ")" : " (excess " + std::to_string(-diff) + ")"));
  }
  ByteReader fr(raw, "features.f32");
  bundle.features.resize(expected / 4);
  for (auto& v : bundle.features) {
    v = fr.f32();
    if (!std::isfinite(v)) throw CorruptError("features.f32: non-finite value");
  }

  if (m.has_images) {
    const std::string iraw = read_binary_file(dir + "/images.f32");
    const size_t ibytes =
        static_cast<size_t>(m.node_count) * m.image_channels * m.image_height * m.image_width * 4;
    if (iraw.size() != ibytes) {
      throw CorruptError("images.f32: expected " + std::to_string(ibytes) + " bytes, found " +
                         std::to_string(iraw.size()));
    }
    bundle.images.channels = m.image_channels;
    bundle.images.height = m.image_height;
    bundle.images.width = m.image_width;
    ByteReader ir(iraw, "images.f32");
    bundle.images.data.resize(ibytes / 4);
    for (auto& v : bundle.images.data) v = ir.f32();
  }
  return bundle;
}

RunConfig default_run_config() { return RunConfig{}; }

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  require_keys(j, "config", {"seed", "graph", "model", "loss", "train", "classifier"});
  RunConfig cfg;
  read_if(j, "seed", cfg.seed);
  if (j.contains("graph")) {
    const json& g = j.at("graph");
    require_keys(g, "config.graph", {"max_links"});
    read_if(g, "max_links", cfg.graph_max_links);
  }
  if (j.contains("model")) {
    const json& mo = j.at("model");
    require_keys(mo, "config.model", {"lfc_hidden1", "lfc_hidden2", "dropout", "embedding", "uniform_attention"});
    read_if(mo, "lfc_hidden1", cfg.lfc_hidden1);
    read_if(mo, "lfc_hidden2", cfg.lfc_hidden2);
    read_if(mo, "dropout", cfg.dropout);
    if (mo.contains("embedding")) {
      const std::string e = mo.at("embedding").get<std::string>();
      if (e == "confidence") cfg.embed_logits = false;
      else if (e == "logits") cfg.embed_logits = true;
      else throw ConfigError("config.model.embedding: expected \"confidence\" or \"logits\", got \"" + e + "\"");
    }
    read_if(mo, "uniform_attention", cfg.uniform_attention);
  }
  if (j.contains("loss")) {
    const json& lo = j.at("loss");
    require_keys(lo, "config.loss", {"margin", "similarity", "triplet_reduction", "lambda", "beta", "clip_eps"});
    read_if(lo, "margin", cfg.triplet.margin);
    if (lo.contains("similarity")) {
      const std::string s = lo.at("similarity").get<std::string>();
      if (s == "sum_norm") cfg.triplet.similarity = SimilarityKind::sum_norm;
      else if (s == "cosine") cfg.triplet.similarity = SimilarityKind::cosine;
      else throw ConfigError("config.loss.similarity: expected \"sum_norm\" or \"cosine\", got \"" + s + "\"");
    }
    if (lo.contains("triplet_reduction")) {
      const std::string r = lo.at("triplet_reduction").get<std::string>();
      if (r == "sum") cfg.triplet.reduction = TripletReduction::sum;
      else if (r == "mean_per_anchor") cfg.triplet.reduction = TripletReduction::mean_per_anchor;
      else throw ConfigError("config.loss.triplet_reduction: expected \"sum\" or \"mean_per_anchor\"");
    }
    read_if(lo, "lambda", cfg.joint.lambda_pos);
    read_if(lo, "beta", cfg.joint.beta);
    read_if(lo, "clip_eps", cfg.joint.clip_eps);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, "config.train",
                 {"lr", "momentum", "nesterov", "epochs", "batch_size", "negatives", "checkpoint_every", "grad_clip"});
    read_if(t, "lr", cfg.train.lr);
    read_if(t, "momentum", cfg.train.momentum);
    read_if(t, "nesterov", cfg.train.nesterov);
    read_if(t, "epochs", cfg.train.epochs);
    read_if(t, "batch_size", cfg.train.batch_size);
    read_if(t, "negatives", cfg.train.negatives);
    read_if(t, "checkpoint_every", cfg.train.checkpoint_every);
    read_if(t, "grad_clip", cfg.train.grad_clip);
  }
  if (j.contains("classifier")) {
    const json& c = j.at("classifier");
    require_keys(c, "config.classifier",
                 {"hidden1", "hidden2", "epochs", "batch_size", "lr", "momentum", "nesterov", "threshold"});
    read_if(c, "hidden1", cfg.classifier.hidden1);
    read_if(c, "hidden2", cfg.classifier.hidden2);
    read_if(c, "epochs", cfg.classifier.epochs);
    read_if(c, "batch_size", cfg.classifier.batch_size);
    read_if(c, "lr", cfg.classifier.lr);
    read_if(c, "momentum", cfg.classifier.momentum);
    read_if(c, "nesterov", cfg.classifier.nesterov);
    read_if(c, "threshold", cfg.classifier.threshold);
  }
  validate(cfg.triplet);
  validate(cfg.joint);
  validate(cfg.train);
  validate(cfg.classifier);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path);
  return parse_run_config(read_text_file(path));
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["graph"] = json{{"max_links", cfg.graph_max_links}};
  j["model"] = json{{"lfc_hidden1", cfg.lfc_hidden1},
                    {"lfc_hidden2", cfg.lfc_hidden2},
                    {"dropout", cfg.dropout},
                    {"embedding", cfg.embed_logits ? "logits" : "confidence"},
                    {"uniform_attention", cfg.uniform_attention}};
  j["loss"] = json{{"margin", cfg.triplet.margin},
                   {"similarity", cfg.triplet.similarity == SimilarityKind::cosine ? "cosine" : "sum_norm"},
                   {"triplet_reduction",
                    cfg.triplet.reduction == TripletReduction::mean_per_anchor ? "mean_per_anchor" : "sum"},
                   {"lambda", cfg.joint.lambda_pos},
                   {"beta", cfg.joint.beta},
                   {"clip_eps", cfg.joint.clip_eps}};
  j["train"] = json{{"lr", cfg.train.lr},
                    {"momentum", cfg.train.momentum},
                    {"nesterov", cfg.train.nesterov},
                    {"epochs", cfg.train.epochs},
                    {"batch_size", cfg.train.batch_size},
                    {"negatives", cfg.train.negatives},
                    {"checkpoint_every", cfg.train.checkpoint_every},
                    {"grad_clip", cfg.train.grad_clip}};
  j["classifier"] = json{{"hidden1", cfg.classifier.hidden1},
                         {"hidden2", cfg.classifier.hidden2},
                         {"epochs", cfg.classifier.epochs},
                         {"batch_size", cfg.classifier.batch_size},
                         {"lr", cfg.classifier.lr},
                         {"momentum", cfg.classifier.momentum},
                         {"nesterov", cfg.classifier.nesterov},
                         {"threshold", cfg.classifier.threshold}};
  return j.dump(2) + "\n";
}

uint64_t graph_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "graph"); }
uint64_t model_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "model-init"); }
uint64_t train_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "train"); }
uint64_t classifier_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "classifier"); }

ModelConfig make_model_config(const RunConfig& cfg, const BundleManifest& manifest) {
  ModelConfig mc;
  mc.vocab = manifest.vocab;
  mc.regions = manifest.regions;
  mc.feature_dim = manifest.feature_dim;
  mc.lfc_hidden1 = cfg.lfc_hidden1;
  mc.lfc_hidden2 = cfg.lfc_hidden2;
  mc.dropout = cfg.dropout;
  mc.embed_logits = cfg.embed_logits;
  mc.uniform_attention = cfg.uniform_attention;
  mc.init_seed = model_seed(cfg);
  return mc;
}

namespace {
constexpr char kCheckpointMagic[9] = "DMANCKP1";
constexpr char kEmbeddingMagic[9] = "DMANEMB1";
constexpr char kAttentionMagic[9] = "DMANATT1";
}  // namespace

void save_checkpoint(const std::string& path, const DmanModel& model, const SgdOptimizer& opt, int epoch,
                     const std::string& rng_state) {
  const ModelConfig& mc = model.config();
  json header;
  header["version"] = 1;
  header["model"] = json{{"vocab", mc.vocab},
                         {"regions", mc.regions},
                         {"feature_dim", mc.feature_dim},
                         {"lfc_hidden1", mc.lfc_hidden1},
                         {"lfc_hidden2", mc.lfc_hidden2},
                         {"dropout", mc.dropout},
                         {"embed_logits", mc.embed_logits},
                         {"uniform_attention", mc.uniform_attention},
                         {"init_seed", mc.init_seed}};
  header["epoch"] = epoch;
  header["rng_state"] = rng_state;
  json params = json::array();
  for (const auto& p : model.parameters()) {
    params.push_back(json{{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  header["params"] = std::move(params);
  const std::string header_text = header.dump();

  ByteWriter payload;
  for (const auto& p : model.parameters())
    for (double v : p.tensor.values()) payload.f64(v);
  for (const auto& vel : opt.velocity())
    for (double v : vel) payload.f64(v);

  Fnv1a hash;
  hash.update(payload.str().data(), payload.size());

  ByteWriter out;
  out.bytes(kCheckpointMagic, 8);
  out.u32(static_cast<uint32_t>(header_text.size()));
  out.bytes(header_text.data(), header_text.size());
  out.bytes(payload.str().data(), payload.size());
  out.u64(hash.digest());
  write_binary_file_atomic(path, out.str());
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
  const std::string raw = read_binary_file(path);
  ByteReader r(raw, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CorruptError(path + ": not a checkpoint file");
  const uint32_t hlen = r.u32();
  std::string header_text(hlen, '\0');
  r.bytes(header_text.data(), hlen);
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw CorruptError(path + ": bad checkpoint header: " + e.what());
  }
  if (header.at("version").get<int>() != 1) throw CorruptError(path + ": unsupported checkpoint version");

  Checkpoint ckpt;
  const json& mj = header.at("model");
  ckpt.model.vocab = mj.at("vocab").get<size_t>();
  ckpt.model.regions = mj.at("regions").get<size_t>();
  ckpt.model.feature_dim = mj.at("feature_dim").get<size_t>();
  ckpt.model.lfc_hidden1 = mj.at("lfc_hidden1").get<size_t>();
  ckpt.model.lfc_hidden2 = mj.at("lfc_hidden2").get<size_t>();
  ckpt.model.dropout = mj.at("dropout").get<double>();
  ckpt.model.embed_logits = mj.at("embed_logits").get<bool>();
  ckpt.model.uniform_attention = mj.at("uniform_attention").get<bool>();
  ckpt.model.init_seed = mj.at("init_seed").get<uint64_t>();
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();

  const size_t payload_begin = r.pos();
  for (const json& pj : header.at("params")) {
    const std::string name = pj.at("name").get<std::string>();
    const Shape shape = pj.at("shape").get<Shape>();
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = r.f64();
    ckpt.params.emplace_back(name, Tensor::from(shape, std::move(values), true));
  }
  for (const auto& [name, tensor] : ckpt.params) {
    std::vector<double> vel(tensor.size());
    for (double& v : vel) v = r.f64();
    ckpt.velocity.push_back(std::move(vel));
  }
  const size_t payload_end = r.pos();
  Fnv1a hash;
  hash.update(raw.data() + payload_begin, payload_end - payload_begin);
  const uint64_t stored = r.u64();
  if (stored != hash.digest()) throw CorruptError(path + ": checksum mismatch, payload corrupted");
  r.expect_end();
  return ckpt;
}

DmanModel model_from_checkpoint(const Checkpoint& ckpt) {
  DmanModel model(ckpt.model);
  auto& params = model.parameters();
  if (params.size() != ckpt.params.size()) throw CorruptError("checkpoint: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt.params[i].first || params[i].tensor.shape() != ckpt.params[i].second.shape()) {
      throw CorruptError("checkpoint: parameter layout mismatch at " + params[i].name);
    }
    auto dst = params[i].tensor.mutable_values();
    auto src = ckpt.params[i].second.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return model;
}

void save_embeddings(const std::string& path, const EmbeddingSet& embeddings) {
  ByteWriter out;
  out.bytes(kEmbeddingMagic, 8);
  out.u32(static_cast<uint32_t>(embeddings.count()));
  out.u32(static_cast<uint32_t>(embeddings.dim));
  for (uint32_t id : embeddings.ids) out.u32(id);
  ByteWriter payload;
  for (double v : embeddings.data) payload.f64(v);
  Fnv1a hash;
  hash.update(payload.str().data(), payload.size());
  out.bytes(payload.str().data(), payload.size());
  out.u64(hash.digest());
  write_binary_file_atomic(path, out.str());
}

EmbeddingSet load_embeddings(const std::string& path, const DatasetBundle& bundle) {
  if (!fs::exists(path)) throw IoError("embedding file not found: " + path);
  const std::string raw = read_binary_file(path);
  ByteReader r(raw, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kEmbeddingMagic, 8) != 0) throw CorruptError(path + ": not an embedding file");
  EmbeddingSet set;
  const uint32_t count = r.u32();
  set.dim = r.u32();
  set.ids.resize(count);
  for (auto& id : set.ids) {
    id = r.u32();
    if (id >= bundle.manifest.node_count) throw CorruptError(path + ": node id out of range");
  }
  const size_t payload_begin = r.pos();
  set.data.resize(static_cast<size_t>(count) * set.dim);
  for (double& v : set.data) v = r.f64();
  Fnv1a hash;
  hash.update(raw.data() + payload_begin, r.pos() - payload_begin);
  if (r.u64() != hash.digest()) throw CorruptError(path + ": checksum mismatch");
  r.expect_end();
  set.labels.reserve(count);
  for (uint32_t id : set.ids) set.labels.push_back(bundle.nodes[id].labels);
  return set;
}

void save_attention(const std::string& path, const AttentionExport& exp) {
  if (exp.rows.size() != exp.words.size() * exp.regions) throw DimensionError("save_attention: row size mismatch");
  ByteWriter out;
  out.bytes(kAttentionMagic, 8);
  out.u32(exp.vocab);
  out.u32(exp.regions);
  out.u32(exp.node_id);
  out.u32(static_cast<uint32_t>(exp.words.size()));
  for (uint32_t w : exp.words) out.u32(w);
  for (double v : exp.rows) out.f64(v);
  write_binary_file_atomic(path, out.str());
}

AttentionExport load_attention(const std::string& path) {
  const std::string raw = read_binary_file(path);
  ByteReader r(raw, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kAttentionMagic, 8) != 0) throw CorruptError(path + ": not an attention export");
  AttentionExport exp;
  exp.vocab = r.u32();
  exp.regions = r.u32();
  exp.node_id = r.u32();
  const uint32_t words = r.u32();
  exp.words.resize(words);
  for (auto& w : exp.words) w = r.u32();
  exp.rows.resize(static_cast<size_t>(words) * exp.regions);
  for (auto& v : exp.rows) v = r.f64();
  r.expect_end();
  return exp;
}

void save_graph(const std::string& path, const MultimodalGraph& graph, uint64_t seed) {
  std::string out = "dman-graph 1\n";
  out += "nodes " + std::to_string(graph.node_count) + "\n";
  out += "max_links " + std::to_string(graph.max_links) + "\n";
  out += "seed " + std::to_string(seed) + "\n";
  out += "precap_edges " + std::to_string(graph.precap_edges) + "\n";
  out += "capped_nodes " + std::to_string(graph.capped_nodes) + "\n";
  out += "edges " + std::to_string(graph.final_edges) + "\n";
  for (size_t i = 0; i < graph.node_count; ++i)
    for (uint32_t j : graph.adjacency[i]) {
      if (j > i) out += std::to_string(i) + " " + std::to_string(j) + "\n";
    }
  write_text_file_atomic(path, out);
}

MultimodalGraph load_graph(const std::string& path, size_t expected_nodes) {
  if (!fs::exists(path)) throw IoError("graph file not found: " + path);
  std::istringstream in(read_text_file(path));
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "dman-graph" || version != 1) throw CorruptError(path + ": not a graph file");
  MultimodalGraph g;
  size_t edges = 0;
  uint64_t seed = 0;
  auto read_field = [&](const char* name, auto& out) {
    in >> tag >> out;
    if (tag != name || !in) throw CorruptError(path + ": expected field " + std::string(name));
  };
  read_field("nodes", g.node_count);
  read_field("max_links", g.max_links);
  read_field("seed", seed);
  read_field("precap_edges", g.precap_edges);
  read_field("capped_nodes", g.capped_nodes);
  read_field("edges", edges);
  if (expected_nodes != 0 && g.node_count != expected_nodes) {
    throw CorruptError(path + ": graph has " + std::to_string(g.node_count) + " nodes, bundle has " +
                       std::to_string(expected_nodes));
  }
  g.adjacency.assign(g.node_count, {});
  for (size_t e = 0; e < edges; ++e) {
    size_t i = 0, j = 0;
    in >> i >> j;
    if (!in) throw CorruptError(path + ": truncated edge list");
    if (i >= g.node_count || j >= g.node_count || i == j) throw CorruptError(path + ": bad edge");
    g.adjacency[i].push_back(static_cast<uint32_t>(j));
    g.adjacency[j].push_back(static_cast<uint32_t>(i));
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    if (std::adjacent_find(adj.begin(), adj.end()) != adj.end()) throw CorruptError(path + ": duplicate edge");
  }
  g.final_edges = edges;
  return g;
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out += "\t";
    out += header[i];
  }
  out += "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += "\t";
      out += row[i];
    }
    out += "\n";
  }
  write_text_file_atomic(path, out);
}

void write_kv(const std::string& path, std::vector<std::pair<std::string, std::string>> pairs) {
  std::sort(pairs.begin(), pairs.end());
  std::string out;
  for (const auto& [k, v] : pairs) out += k + "=" + v + "\n";
  write_text_file_atomic(path, out);
}

void write_train_report(const std::string& path, const TrainReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : report.epochs) {
    rows.push_back({std::to_string(e.epoch), format_double(e.joint, 6), format_double(e.hinge, 6),
                    format_double(e.bce, 6), std::to_string(e.triplets), std::to_string(e.skipped_anchors),
                    format_double(e.seconds, 3)});
  }
  std::string out;
  const std::vector<std::string> header = {"epoch", "joint", "hinge", "bce", "triplets", "skipped_anchors", "seconds"};
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out += "\t";
    out += header[i];
  }
  out += "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += "\t";
      out += row[i];
    }
    out += "\n";
  }
  out += "# param_checksum=" + to_hex(report.param_checksum) + "\n";
  write_text_file_atomic(path, out);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path);
  return data;
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
  write_binary_file_atomic(path, content);
}

}  // namespace dman
