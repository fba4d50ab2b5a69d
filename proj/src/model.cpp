#include "ntsf/model.hpp"

#include <json.hpp>

namespace ntsf {

void ModelConfig::validate() const {
  check_input(input_dim >= 1, "model: input_dim must be >= 1");
  check_input(hidden_dim >= 1, "model: hidden_dim must be >= 1");
  check_input(n_classes >= 2, "model: n_classes must be >= 2");
  check_input(hops >= 1, "model: hops must be >= 1");
  check_input(n_experts >= 1, "model: n_experts must be >= 1");
  check_input(top_k >= 1 && top_k <= n_experts, "model: top_k must lie in [1, n_experts]");
  check_input(n_layers >= 0, "model: n_layers must be >= 0");
  check_input(n_heads >= 1 && hidden_dim % n_heads == 0,
              "model: n_heads must divide hidden_dim");
  check_input(ffn_mult >= 1, "model: ffn_mult must be >= 1");
  check_input(dropout_in >= 0.0 && dropout_in < 1.0, "model: dropout_in must be in [0,1)");
  check_input(dropout_hidden >= 0.0 && dropout_hidden < 1.0,
              "model: dropout_hidden must be in [0,1)");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["input_dim"] = input_dim;
  j["hidden_dim"] = hidden_dim;
  j["n_classes"] = n_classes;
  j["hops"] = hops;
  j["n_experts"] = n_experts;
  j["top_k"] = top_k;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["ffn_mult"] = ffn_mult;
  j["dropout_in"] = dropout_in;
  j["dropout_hidden"] = dropout_hidden;
  j["scale_by_head_dim"] = scale_by_head_dim;
  j["moe"] = moe;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model config: invalid json: ") + e.what());
  }
  ModelConfig c;
  try {
    c.input_dim = j.at("input_dim").get<int64_t>();
    c.hidden_dim = j.at("hidden_dim").get<int64_t>();
    c.n_classes = j.at("n_classes").get<int64_t>();
    c.hops = j.at("hops").get<int64_t>();
    c.n_experts = j.at("n_experts").get<int64_t>();
    c.top_k = j.at("top_k").get<int64_t>();
    c.n_layers = j.at("n_layers").get<int64_t>();
    c.n_heads = j.at("n_heads").get<int64_t>();
    c.ffn_mult = j.at("ffn_mult").get<int64_t>();
    c.dropout_in = j.at("dropout_in").get<double>();
    c.dropout_hidden = j.at("dropout_hidden").get<double>();
    c.scale_by_head_dim = j.at("scale_by_head_dim").get<bool>();
    c.moe = j.at("moe").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model config: missing field: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

template <typename T>
Tensor<T> init_normal(std::vector<int64_t> shape, Rng& rng, double sigma) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = static_cast<T>(rng.normal() * sigma);
  return t;
}

template <typename T>
Tensor<T> init_trunc_normal(std::vector<int64_t> shape, Rng& rng, double sigma) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = static_cast<T>(rng.truncated_normal(sigma));
  return t;
}

template <typename T>
Tensor<T> init_const(std::vector<int64_t> shape, T value) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape), true);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

constexpr double kInitStd = 0.02;

template <typename T>
Mlp2<T> init_mlp(int64_t in, int64_t mid, int64_t out, Rng& rng) {
  Mlp2<T> m;
  m.w1 = init_trunc_normal<T>({in, mid}, rng, kInitStd);
  m.b1 = init_const<T>({mid}, T(0));
  m.w2 = init_trunc_normal<T>({mid, out}, rng, kInitStd);
  m.b2 = init_const<T>({out}, T(0));
  return m;
}

template <typename T>
NormParams<T> init_norm(int64_t d) {
  return {init_const<T>({d}, T(1)), init_const<T>({d}, T(0))};
}

}  // namespace

template <typename T>
Model<T> Model<T>::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::keyed(seed, Rng::kInit);
  const int64_t d_in = cfg.input_dim, d = cfg.hidden_dim, len = cfg.seq_len();
  Model<T> m;
  m.cfg = cfg;
  m.miss_text = init_normal<T>({d_in}, rng, kInitStd);
  m.miss_visual = init_normal<T>({d_in}, rng, kInitStd);
  m.student_token = init_normal<T>({d}, rng, kInitStd);
  m.teacher_token = init_normal<T>({d}, rng, kInitStd);
  m.gate_weight = init_trunc_normal<T>({d_in + len, cfg.n_experts}, rng, kInitStd);
  for (int64_t e = 0; e < cfg.n_experts; ++e) {
    m.experts.push_back(init_mlp<T>(d_in, d, d, rng));
    m.expert_norms.push_back(init_norm<T>(d));
  }
  m.shared_expert = init_mlp<T>(d_in, d, d, rng);
  m.shared_norm = init_norm<T>(d);
  m.pos_enc = init_normal<T>({len, d}, rng, kInitStd);
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    EncoderLayer<T> layer;
    layer.attn_q = init_trunc_normal<T>({d, d}, rng, kInitStd);
    layer.attn_k = init_trunc_normal<T>({d, d}, rng, kInitStd);
    layer.attn_v = init_trunc_normal<T>({d, d}, rng, kInitStd);
    layer.attn_out = init_trunc_normal<T>({d, d}, rng, kInitStd);
    layer.ffn = init_mlp<T>(d, cfg.ffn_mult * d, d, rng);
    layer.norm_attn = init_norm<T>(d);
    layer.norm_ffn = init_norm<T>(d);
    m.layers.push_back(std::move(layer));
  }
  m.student_head = init_mlp<T>(d, d, cfg.n_classes, rng);
  m.teacher_head = init_mlp<T>(d, d, cfg.n_classes, rng);
  return m;
}

template <typename T>
std::vector<Parameter<T>> Model<T>::named_parameters() const {
  std::vector<Parameter<T>> out;
  auto put = [&out](const Tensor<T>& t, std::string name) {
    out.push_back(Parameter<T>{t, std::move(name), true});
  };
  auto put_mlp = [&put](const Mlp2<T>& m, const std::string& prefix) {
    put(m.w1, prefix + ".w1");
    put(m.b1, prefix + ".b1");
    put(m.w2, prefix + ".w2");
    put(m.b2, prefix + ".b2");
  };
  auto put_norm = [&put](const NormParams<T>& n, const std::string& prefix) {
    put(n.gain, prefix + "_gain");
    put(n.bias, prefix + "_bias");
  };
  put(miss_text, "miss_text");
  put(miss_visual, "miss_visual");
  put(student_token, "student_token");
  put(teacher_token, "teacher_token");
  if (cfg.moe) put(gate_weight, "gate_weight");
  for (size_t e = 0; e < experts.size() && cfg.moe; ++e) {
    const std::string prefix = "expert" + std::to_string(e);
    put_mlp(experts[e], prefix);
    put_norm(expert_norms[e], prefix + ".norm");
  }
  put_mlp(shared_expert, "shared_expert");
  put_norm(shared_norm, "shared_expert.norm");
  put(pos_enc, "pos_enc");
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    put(layers[l].attn_q, prefix + ".attn_q");
    put(layers[l].attn_k, prefix + ".attn_k");
    put(layers[l].attn_v, prefix + ".attn_v");
    put(layers[l].attn_out, prefix + ".attn_out");
    put_mlp(layers[l].ffn, prefix + ".ffn");
    put_norm(layers[l].norm_attn, prefix + ".norm_attn");
    put_norm(layers[l].norm_ffn, prefix + ".norm_ffn");
  }
  put_mlp(student_head, "student_head");
  put_mlp(teacher_head, "teacher_head");
  return out;
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model<T> copy = *this;
  auto deep = [](Tensor<T>& t) {
    if (!t.data) return;
    t.data = std::make_shared<std::vector<T>>(*t.data);
    if (t.grad) t.grad = std::make_shared<std::vector<T>>(t.grad->size(), T(0));
  };
  auto deep_mlp = [&deep](Mlp2<T>& m) {
    deep(m.w1);
    deep(m.b1);
    deep(m.w2);
    deep(m.b2);
  };
  auto deep_norm = [&deep](NormParams<T>& n) {
    deep(n.gain);
    deep(n.bias);
  };
  deep(copy.miss_text);
  deep(copy.miss_visual);
  deep(copy.student_token);
  deep(copy.teacher_token);
  deep(copy.gate_weight);
  for (auto& e : copy.experts) deep_mlp(e);
  for (auto& n : copy.expert_norms) deep_norm(n);
  deep_mlp(copy.shared_expert);
  deep_norm(copy.shared_norm);
  deep(copy.pos_enc);
  for (auto& l : copy.layers) {
    deep(l.attn_q);
    deep(l.attn_k);
    deep(l.attn_v);
    deep(l.attn_out);
    deep_mlp(l.ffn);
    deep_norm(l.norm_attn);
    deep_norm(l.norm_ffn);
  }
  deep_mlp(copy.student_head);
  deep_mlp(copy.teacher_head);
  return copy;
}

template <typename T>
void Model<T>::zero_grads() const {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

template <typename T>
std::vector<Parameter<T>*> parameter_pointers(std::vector<Parameter<T>>& params) {
  std::vector<Parameter<T>*> out;
  out.reserve(params.size());
  for (auto& p : params) out.push_back(&p);
  return out;
}

template struct Model<float>;
template struct Model<double>;
template std::vector<Parameter<float>*> parameter_pointers(std::vector<Parameter<float>>&);
template std::vector<Parameter<double>*> parameter_pointers(std::vector<Parameter<double>>&);

}  // namespace ntsf
