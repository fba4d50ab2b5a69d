#include "ntsf/datagen.hpp"

#include <cmath>

namespace ntsf {

void SynthSpec::validate() const {
  check_input(n >= 1, "synth: n must be >= 1");
  check_input(classes >= 2, "synth: classes must be >= 2");
  check_input(text_dim >= 1 && visual_dim >= 1, "synth: feature dims must be >= 1");
  check_input(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0,
              "synth: need 0 <= p_out <= p_in <= 1");
  check_input(noise >= 0.0, "synth: noise must be >= 0");
  check_input(mean_sep >= 0.0, "synth: mean_sep must be >= 0");
}

namespace {

// class means drawn so the expected pairwise distance is about mean_sep
std::vector<std::vector<float>> class_means(int64_t classes, int64_t dim, double mean_sep,
                                            Rng& rng) {
  const double scale = mean_sep / std::sqrt(2.0 * static_cast<double>(dim));
  std::vector<std::vector<float>> means(static_cast<size_t>(classes));
  for (auto& mu : means) {
    mu.resize(static_cast<size_t>(dim));
    for (auto& v : mu) v = static_cast<float>(rng.normal() * scale);
  }
  return means;
}

FeatureMatrix sample_features(const std::vector<int32_t>& labels, int64_t dim,
                              const std::vector<std::vector<float>>& means, double noise,
                              Modality modality, Rng& rng) {
  FeatureMatrix x = FeatureMatrix::zeros(static_cast<int64_t>(labels.size()), dim, modality);
  for (size_t i = 0; i < labels.size(); ++i) {
    const auto& mu = means[static_cast<size_t>(labels[i])];
    float* row = x.row(static_cast<int64_t>(i));
    for (int64_t j = 0; j < dim; ++j)
      row[j] = mu[j] + static_cast<float>(rng.normal() * noise);
  }
  return x;
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng = Rng::keyed(spec.seed, Rng::kDataGen);

  Dataset data;
  // balanced classes, randomly placed
  data.labels.resize(static_cast<size_t>(spec.n));
  for (int64_t i = 0; i < spec.n; ++i)
    data.labels[i] = static_cast<int32_t>(i % spec.classes);
  rng.shuffle(data.labels);

  auto text_means = class_means(spec.classes, spec.text_dim, spec.mean_sep, rng);
  auto visual_means = class_means(spec.classes, spec.visual_dim, spec.mean_sep, rng);
  data.text = sample_features(data.labels, spec.text_dim, text_means, spec.noise, Modality::text,
                              rng);
  data.visual = sample_features(data.labels, spec.visual_dim, visual_means, spec.noise,
                                Modality::visual, rng);

  for (int64_t i = 0; i < spec.n; ++i)
    for (int64_t j = i + 1; j < spec.n; ++j) {
      const double p = data.labels[i] == data.labels[j] ? spec.p_in : spec.p_out;
      if (rng.uniform() < p) data.edges.emplace_back(i, j);
    }
  return data;
}

}  // namespace ntsf
