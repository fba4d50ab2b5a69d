#pragma once

#include <string>

#include "ntsf/dataset.hpp"
#include "ntsf/model.hpp"
#include "ntsf/split.hpp"
#include "ntsf/trainer.hpp"

namespace ntsf {

// Binary matrix format: magic "NTSF", u32 version=1, u64 rows, u64 cols,
// then rows*cols little-endian IEEE f32, row-major. Serialization is
// byte-explicit, so the payload is little-endian on any host.
void write_matrix(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_matrix(const std::string& path);

// edges.tsv: two tab-separated integer columns, one undirected edge per line
void write_edges_tsv(const std::string& path, const std::vector<Edge>& edges);
std::vector<Edge> read_edges_tsv(const std::string& path);

// labels.tsv: node_id <tab> label (-1 = unlabeled); ids must be dense [0,N)
void write_labels_tsv(const std::string& path, const std::vector<int32_t>& labels);
std::vector<int32_t> read_labels_tsv(const std::string& path);

// dataset directory: edges.tsv, features_text.bin, features_visual.bin,
// labels.tsv
void save_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir);

void save_splits(const std::string& path, const SplitSpec& split, uint64_t seed);
SplitSpec load_splits(const std::string& path, uint64_t* seed_out = nullptr);

// Checkpoint: magic "NTSC", u32 version=1, a JSON model-config blob, then
// named parameter blobs (name, shape, f32 data). Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Model<float>& model);
Model<float> load_checkpoint(const std::string& path);

void write_history_csv(const std::string& path, const History& history);

void write_report_json(const std::string& path, const EvalReport& report);

// per-condition mean, sample deviation and per-seed values
void write_multiseed_json(const std::string& path, const MultiseedReport& report);

}  // namespace ntsf
