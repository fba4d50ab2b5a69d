#include "ntsf/dataio.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>

namespace ntsf {

namespace {

constexpr char kMatrixMagic[4] = {'N', 'T', 'S', 'F'};
constexpr char kCheckpointMagic[4] = {'N', 'T', 'S', 'C'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<uint32_t>(v)); }

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw InputError("read: truncated file while reading " + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw InputError("read: truncated file while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}

void put_floats(std::ostream& os, const float* data, size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  } else {
    for (size_t i = 0; i < count; ++i) put_f32(os, data[i]);
  }
}

void get_floats(std::istream& is, float* data, size_t count, const std::string& what) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4)))
      throw InputError("read: truncated payload in " + what);
  } else {
    for (size_t i = 0; i < count; ++i) data[i] = get_f32(is, what);
  }
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw InputError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw InputError("cannot open: " + path);
  return is;
}

void expect_magic(std::istream& is, const char (&magic)[4], const std::string& path) {
  char b[4];
  if (!is.read(b, 4) || std::memcmp(b, magic, 4) != 0)
    throw InputError("bad magic in " + path);
  const uint32_t version = get_u32(is, "version");
  if (version != kFormatVersion)
    throw InputError("unsupported version " + std::to_string(version) + " in " + path);
}

}  // namespace

void write_matrix(const std::string& path, const FeatureMatrix& m) {
  auto os = open_out(path, true);
  os.write(kMatrixMagic, 4);
  put_u32(os, kFormatVersion);
  put_u64(os, static_cast<uint64_t>(m.n));
  put_u64(os, static_cast<uint64_t>(m.d));
  put_floats(os, m.data.data(), m.data.size());
  if (!os) throw InputError("write failed: " + path);
}

FeatureMatrix read_matrix(const std::string& path) {
  auto is = open_in(path, true);
  expect_magic(is, kMatrixMagic, path);
  FeatureMatrix m;
  m.n = static_cast<int64_t>(get_u64(is, "rows of " + path));
  m.d = static_cast<int64_t>(get_u64(is, "cols of " + path));
  check_input(m.n >= 0 && m.d >= 0 && m.n * m.d < (int64_t(1) << 40),
              "read: implausible matrix shape in " + path);
  m.data.resize(static_cast<size_t>(m.n * m.d));
  get_floats(is, m.data.data(), m.data.size(), path);
  for (float v : m.data)
    if (!std::isfinite(v)) throw InputError("read: non-finite feature value in " + path);
  return m;
}

void write_edges_tsv(const std::string& path, const std::vector<Edge>& edges) {
  auto os = open_out(path, false);
  for (const auto& [a, b] : edges)
    os << a << '\t' << b << '\n';
  if (!os) throw InputError("write failed: " + path);
}

std::vector<Edge> read_edges_tsv(const std::string& path) {
  auto is = open_in(path, false);
  std::vector<Edge> edges;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    int64_t a = 0, b = 0;
    if (std::sscanf(line.c_str(), "%" SCNd64 "\t%" SCNd64, &a, &b) != 2)
      throw InputError("malformed edge at " + path + ":" + std::to_string(lineno));
    edges.emplace_back(a, b);
  }
  return edges;
}

void write_labels_tsv(const std::string& path, const std::vector<int32_t>& labels) {
  auto os = open_out(path, false);
  for (size_t i = 0; i < labels.size(); ++i) os << i << '\t' << labels[i] << '\n';
  if (!os) throw InputError("write failed: " + path);
}

std::vector<int32_t> read_labels_tsv(const std::string& path) {
  auto is = open_in(path, false);
  std::map<int64_t, int32_t> by_id;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    int64_t id = 0;
    int32_t label = 0;
    if (std::sscanf(line.c_str(), "%" SCNd64 "\t%d", &id, &label) != 2)
      throw InputError("malformed label at " + path + ":" + std::to_string(lineno));
    if (!by_id.emplace(id, label).second)
      throw InputError("duplicate node_id " + std::to_string(id) + " in " + path);
  }
  std::vector<int32_t> labels(by_id.size());
  for (const auto& [id, label] : by_id) {
    check_input(id >= 0 && id < static_cast<int64_t>(labels.size()),
                "node_id values in " + path + " must be dense in [0,N)");
    labels[id] = label;
  }
  return labels;
}

void save_dataset(const std::string& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  write_edges_tsv(dir + "/edges.tsv", data.edges);
  write_matrix(dir + "/features_text.bin", data.text);
  write_matrix(dir + "/features_visual.bin", data.visual);
  write_labels_tsv(dir + "/labels.tsv", data.labels);
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.edges = read_edges_tsv(dir + "/edges.tsv");
  d.text = read_matrix(dir + "/features_text.bin");
  d.text.modality = Modality::text;
  d.visual = read_matrix(dir + "/features_visual.bin");
  d.visual.modality = Modality::visual;
  d.labels = read_labels_tsv(dir + "/labels.tsv");
  check_input(d.text.n == d.visual.n, "dataset: modality row counts differ in " + dir);
  check_input(static_cast<int64_t>(d.labels.size()) == d.text.n,
              "dataset: label count does not match features in " + dir);
  return d;
}

namespace {

const char* miss_name(SplitSpec::Miss m) {
  switch (m) {
    case SplitSpec::Miss::text: return "text";
    case SplitSpec::Miss::visual: return "visual";
    default: return "none";
  }
}

SplitSpec::Miss miss_from_name(const std::string& s, const std::string& path) {
  if (s == "text") return SplitSpec::Miss::text;
  if (s == "visual") return SplitSpec::Miss::visual;
  if (s == "none") return SplitSpec::Miss::none;
  throw InputError("unknown miss group '" + s + "' in " + path);
}

}  // namespace

void save_splits(const std::string& path, const SplitSpec& split, uint64_t seed) {
  nlohmann::ordered_json j;
  j["version"] = kFormatVersion;
  j["seed"] = seed;
  j["labeled_train"] = split.labeled_train;
  j["unlabeled_train"] = split.unlabeled_train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  auto names = [](const std::vector<SplitSpec::Miss>& v) {
    std::vector<std::string> out;
    for (auto m : v) out.push_back(miss_name(m));
    return out;
  };
  j["validation_miss"] = names(split.val_miss);
  j["test_miss"] = names(split.test_miss);
  auto os = open_out(path, false);
  os << j.dump(2) << '\n';
  if (!os) throw InputError("write failed: " + path);
}

SplitSpec load_splits(const std::string& path, uint64_t* seed_out) {
  auto is = open_in(path, false);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid json in " + path + ": " + e.what());
  }
  SplitSpec s;
  try {
    if (j.at("version").get<uint32_t>() != kFormatVersion)
      throw InputError("unsupported splits version in " + path);
    if (seed_out) *seed_out = j.at("seed").get<uint64_t>();
    s.labeled_train = j.at("labeled_train").get<std::vector<int64_t>>();
    s.unlabeled_train = j.at("unlabeled_train").get<std::vector<int64_t>>();
    s.validation = j.at("validation").get<std::vector<int64_t>>();
    s.test = j.at("test").get<std::vector<int64_t>>();
    for (const auto& name : j.at("validation_miss").get<std::vector<std::string>>())
      s.val_miss.push_back(miss_from_name(name, path));
    for (const auto& name : j.at("test_miss").get<std::vector<std::string>>())
      s.test_miss.push_back(miss_from_name(name, path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("missing field in " + path + ": " + e.what());
  }
  check_input(s.val_miss.size() == s.validation.size() && s.test_miss.size() == s.test.size(),
              "splits: miss assignment length mismatch in " + path);
  return s;
}

void save_checkpoint(const std::string& path, const Model<float>& model) {
  auto os = open_out(path, true);
  os.write(kCheckpointMagic, 4);
  put_u32(os, kFormatVersion);
  const std::string cfg = model.cfg.to_json();
  put_u64(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  auto params = model.named_parameters();
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<uint32_t>(p.tensor.shape.size()));
    for (int64_t d : p.tensor.shape) put_u64(os, static_cast<uint64_t>(d));
    put_floats(os, p.tensor.cptr(), static_cast<size_t>(p.tensor.numel()));
  }
  if (!os) throw InputError("write failed: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
  auto is = open_in(path, true);
  expect_magic(is, kCheckpointMagic, path);
  const uint64_t cfg_len = get_u64(is, "config length of " + path);
  check_input(cfg_len < (1u << 20), "checkpoint: implausible config length in " + path);
  std::string cfg_text(cfg_len, '\0');
  if (!is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len)))
    throw InputError("read: truncated config in " + path);
  auto cfg = ModelConfig::from_json(cfg_text);
  auto model = Model<float>::init(cfg, 0);

  auto params = model.named_parameters();
  std::map<std::string, Parameter<float>*> by_name;
  for (auto& p : params) by_name[p.name] = &p;

  const uint32_t count = get_u32(is, "parameter count of " + path);
  check_input(count == params.size(), "checkpoint: expected " + std::to_string(params.size()) +
                                          " parameters, found " + std::to_string(count) + " in " +
                                          path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is, "name length");
    check_input(name_len < 4096, "checkpoint: implausible name length in " + path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw InputError("read: truncated name in " + path);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw InputError("checkpoint: unknown parameter '" + name + "' in " + path);
    Parameter<float>& p = *it->second;
    const uint32_t ndim = get_u32(is, "rank of " + name);
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = static_cast<int64_t>(get_u64(is, "shape of " + name));
    check_input(shape == p.tensor.shape, "checkpoint: shape mismatch for '" + name + "' in " +
                                             path);
    get_floats(is, p.tensor.ptr(), static_cast<size_t>(p.tensor.numel()), name);
  }
  return model;
}

void write_history_csv(const std::string& path, const History& history) {
  auto os = open_out(path, false);
  os << "epoch,loss_ce,loss_st,loss_moe,val_acc\n";
  char line[256];
  for (const auto& e : history) {
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(e.epoch), e.loss_ce, e.loss_st, e.loss_moe, e.val_acc);
    os << line;
  }
  if (!os) throw InputError("write failed: " + path);
}

void write_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["text_miss"] = report.text_miss;
  j["visual_miss"] = report.visual_miss;
  j["no_miss"] = report.no_miss;
  j["all"] = report.all;
  j["counts"]["text_miss"] = report.n_text_miss;
  j["counts"]["visual_miss"] = report.n_visual_miss;
  j["counts"]["no_miss"] = report.n_no_miss;
  auto os = open_out(path, false);
  os << j.dump(2) << '\n';
  if (!os) throw InputError("write failed: " + path);
}

void write_multiseed_json(const std::string& path, const MultiseedReport& report) {
  nlohmann::ordered_json j;
  j["seeds"] = report.seeds;
  auto put = [&j](const char* key, const ConditionStats& s) {
    j[key]["mean"] = s.mean;
    j[key]["stddev"] = s.stddev;
    j[key]["per_seed"] = s.per_seed;
  };
  put("text_miss", report.text_miss);
  put("visual_miss", report.visual_miss);
  put("no_miss", report.no_miss);
  put("all", report.all);
  auto os = open_out(path, false);
  os << j.dump(2) << '\n';
  if (!os) throw InputError("write failed: " + path);
}

}  // namespace ntsf
