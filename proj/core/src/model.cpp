#include "pdanet/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace pdanet {

const char* to_string(Branch b) { return b == Branch::DenseDad ? "dense-DAD" : "sparse-DAD"; }

Branch route_for(double prob) { return prob >= 0.5 ? Branch::DenseDad : Branch::SparseDad; }

namespace {

// Density heads: small weights and a positive bias, so every cell starts above
// the output rectifier.
constexpr double kHeadWeightBound = 0.01;
constexpr double kHeadBias = 0.05;

template <typename T>
void init_density_head(Conv2d<T>& head, InitRng& rng) {
  for (auto& w : head.weight.value.values()) w = static_cast<T>(rng.uniform(-kHeadWeightBound, kHeadWeightBound));
  head.bias.value.fill(static_cast<T>(kHeadBias));
}

}  // namespace

// ---------------------------------------------------------------- blocks

template <typename T>
ContextConv<T>::ContextConv(const std::string& name, int channels, int reduced, int dilation)
    : reduce(name + ".reduce", channels, reduced, 1),
      pointwise(name + ".conv1", reduced, channels, 1),
      dilated(name + ".conv3", reduced, channels, 3, dilation) {}

template <typename T>
void ContextConv<T>::init(InitRng& rng) {
  reduce.init(rng);
  pointwise.init(rng);
  dilated.init(rng);
}

template <typename T>
void ContextConv<T>::collect(std::vector<Parameter<T>*>& out) {
  for (auto* c : {&reduce, &pointwise, &dilated}) {
    out.push_back(&c->weight);
    out.push_back(&c->bias);
  }
}

template <typename T>
Var<T> ContextConv<T>::forward(Tape<T>& tape, const Var<T>& x) {
  auto r = ops::conv2d(tape, x, reduce);
  return ops::add(tape, ops::conv2d(tape, r, pointwise), ops::conv2d(tape, r, dilated));
}

template <typename T>
DecoderLayer<T>::DecoderLayer(const std::string& name, int in, int reduced, int out, int dilation)
    : reduce(name + ".reduce", in, reduced, 1),
      conv(name + ".conv", reduced, out, 3, dilation),
      attention(name + ".attention", out) {}

template <typename T>
void DecoderLayer<T>::init(InitRng& rng) {
  reduce.init(rng);
  conv.init(rng);
  attention.init(rng);
}

template <typename T>
void DecoderLayer<T>::collect(std::vector<Parameter<T>*>& out) {
  for (auto* c : {&reduce, &conv}) {
    out.push_back(&c->weight);
    out.push_back(&c->bias);
  }
  attention.collect(out);
}

template <typename T>
Var<T> DecoderLayer<T>::forward(Tape<T>& tape, const Var<T>& x) {
  auto h = ops::relu(tape, ops::conv2d(tape, ops::conv2d(tape, x, reduce), conv));
  return attention.forward(tape, h);
}

template <typename T>
DensityBranch<T>::DensityBranch(const std::string& name, int in, int reduced, int mid, int out,
                                int dilation)
    : first(name + ".0", in, reduced, mid, dilation),
      second(name + ".1", mid, reduced, out, dilation),
      head(name + ".head", out, 1, 1) {}

template <typename T>
void DensityBranch<T>::init(InitRng& rng) {
  first.init(rng);
  second.init(rng);
  init_density_head(head, rng);
}

template <typename T>
void DensityBranch<T>::collect(std::vector<Parameter<T>*>& out) {
  first.collect(out);
  second.collect(out);
  out.push_back(&head.weight);
  out.push_back(&head.bias);
}

template <typename T>
typename DensityBranch<T>::Output DensityBranch<T>::forward(Tape<T>& tape, const Var<T>& x) {
  auto feat = second.forward(tape, first.forward(tape, x));
  return {feat, ops::relu(tape, ops::conv2d(tape, feat, head))};
}

template <typename T>
DensityAwareDecoder<T>::DensityAwareDecoder(const std::string& name, const PdanetConfig& cfg,
                                            int in_channels) {
  const auto& ch = cfg.dad_channels;
  const int r = cfg.scaled(cfg.dad_reduced_channels);
  const int d = cfg.dilation_rate;
  shared0 = DecoderLayer<T>(name + ".shared.0", in_channels, r, cfg.scaled(ch[0]), d);
  shared1 = DecoderLayer<T>(name + ".shared.1", cfg.scaled(ch[0]), r, cfg.scaled(ch[1]), d);
  dense_branch = DensityBranch<T>(name + ".dense_branch", cfg.scaled(ch[1]), r, cfg.scaled(ch[2]),
                                  cfg.scaled(ch[3]), d);
}

template <typename T>
void DensityAwareDecoder<T>::init(InitRng& rng) {
  shared0.init(rng);
  shared1.init(rng);
  dense_branch.init(rng);
}

template <typename T>
void DensityAwareDecoder<T>::collect(std::vector<Parameter<T>*>& out) {
  shared0.collect(out);
  shared1.collect(out);
  dense_branch.collect(out);
}

// ---------------------------------------------------------------- model

template <typename T>
PdanetModel<T>::PdanetModel(PdanetConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& cfg = config_;

  int in = 3, idx = 0;
  for (int c : cfg.backbone_channels) {
    if (c == 0) {
      layout_.push_back(-1);
      continue;
    }
    const int out = cfg.scaled(c);
    backbone_convs_.emplace_back("backbone.conv" + std::to_string(idx), in, out, 3, 1);
    layout_.push_back(idx++);
    in = out;
  }
  feature_channels_ = in;
  const int C = feature_channels_;
  const int pr = cfg.scaled(cfg.pfe_reduced_channels);
  const int n_p = static_cast<int>(cfg.pfe_scales.size()) + 1;

  backbone_attention_ = Csse<T>("backbone.attention", C);
  pfe_context_ = ContextConv<T>("pfe.context", C, pr, cfg.dilation_rate);
  pfe_fuse_ = Conv2d<T>("pfe.fuse", n_p * C, C, 1);
  pfe_gate_ = ContextConv<T>("pfe.gate", C, pr, cfg.dilation_rate);
  pfe_csse_ = Csse<T>("pfe.attention", C);
  classifier_ = Linear<T>("classifier.fc", C, 1);
  dad_sparse_ = DensityAwareDecoder<T>("dad_sparse", cfg, C);
  dad_dense_ = DensityAwareDecoder<T>("dad_dense", cfg, C);
  const int r = cfg.scaled(cfg.dad_reduced_channels);
  sparse_branch_ = DensityBranch<T>("sparse_branch", cfg.scaled(cfg.dad_channels[1]), r,
                                    cfg.scaled(cfg.dad_channels[2]), cfg.scaled(cfg.dad_channels[3]),
                                    cfg.dilation_rate);
  fusion_head_ = Conv2d<T>("fusion.head", cfg.scaled(cfg.dad_channels[3]), 1, 1);

  InitRng rng(cfg.seed);
  for (auto& c : backbone_convs_) c.init(rng);
  backbone_attention_.init(rng);
  pfe_context_.init(rng);
  pfe_fuse_.init(rng);
  pfe_gate_.init(rng);
  pfe_csse_.init(rng);
  classifier_.init(rng);
  dad_sparse_.init(rng);
  dad_dense_.init(rng);
  sparse_branch_.init(rng);
  init_density_head(fusion_head_, rng);
}

template <typename T>
std::vector<Parameter<T>*> PdanetModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& c : backbone_convs_) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  backbone_attention_.collect(out);
  pfe_context_.collect(out);
  out.push_back(&pfe_fuse_.weight);
  out.push_back(&pfe_fuse_.bias);
  pfe_gate_.collect(out);
  pfe_csse_.collect(out);
  out.push_back(&classifier_.weight);
  out.push_back(&classifier_.bias);
  dad_sparse_.collect(out);
  dad_dense_.collect(out);
  sparse_branch_.collect(out);
  out.push_back(&fusion_head_.weight);
  out.push_back(&fusion_head_.bias);
  return out;
}

template <typename T>
std::size_t PdanetModel<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void PdanetModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
void PdanetModel<T>::check_input_size(int height, int width) const {
  if (height % 8 != 0 || width % 8 != 0 || height < 8 || width < 8) {
    throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by 8");
  }
  const int fh = height / 8, fw = width / 8;
  if (fh % 4 != 0 || fw % 4 != 0) {
    throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                " must be divisible by 32 for the pyramid attention pooling");
  }
  const int smax = config_.pfe_scales.back();
  if (fh < smax || fw < smax) {
    throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                " too small for pyramid scale " + std::to_string(smax));
  }
}

template <typename T>
Var<T> PdanetModel<T>::backbone_forward(Tape<T>& tape, const Var<T>& image) {
  const Tensor<T>& img = image->value;
  if (img.channels() != 3) throw std::invalid_argument("backbone: expected 3 input channels");
  if (img.height() % 8 != 0 || img.width() % 8 != 0) {
    throw std::invalid_argument("backbone: input " + std::to_string(img.height()) + "x" +
                                std::to_string(img.width()) + " is not divisible by 8");
  }
  Var<T> x = image;
  for (int step : layout_) {
    if (step < 0) {
      x = ops::max_pool2(tape, x);
    } else {
      x = ops::relu(tape, ops::conv2d(tape, x, backbone_convs_[step]));
    }
  }
  return x;
}

template <typename T>
Var<T> PdanetModel<T>::pfe_context(Tape<T>& tape, const Var<T>& features, int s) {
  const int H = features->value.height(), W = features->value.width();
  if (s < 1 || H < s || W < s) {
    throw std::invalid_argument("pfe: scale " + std::to_string(s) + " exceeds feature size " +
                                std::to_string(H) + "x" + std::to_string(W));
  }
  auto pooled = ops::adaptive_avg_pool(tape, features, H / s, W / s);
  return ops::upsample_bilinear(tape, pfe_context_.forward(tape, pooled), H, W);
}

template <typename T>
Var<T> PdanetModel<T>::pfe_fuse(Tape<T>& tape, const Var<T>& features,
                                const std::vector<Var<T>>& contexts) {
  if (contexts.empty()) throw std::invalid_argument("pfe_fuse: need at least one context feature");
  if (contexts.size() != config_.pfe_scales.size()) {
    throw std::invalid_argument("pfe_fuse: expected " + std::to_string(config_.pfe_scales.size()) +
                                " context features, got " + std::to_string(contexts.size()));
  }
  std::vector<Var<T>> parts(contexts);
  parts.push_back(features);
  return ops::relu(tape, ops::conv2d(tape, ops::concat_channels(tape, parts), pfe_fuse_));
}

template <typename T>
Var<T> PdanetModel<T>::pfe_attention(Tape<T>& tape, const Var<T>& fused) {
  const int H = fused->value.height(), W = fused->value.width();
  if (H % 4 != 0 || W % 4 != 0) {
    throw std::invalid_argument("pfe_attention: feature size " + std::to_string(H) + "x" +
                                std::to_string(W) + " is not divisible by 4");
  }
  auto pooled = ops::adaptive_avg_pool(tape, fused, H / 4, W / 4);
  auto gate = ops::sigmoid(tape, ops::upsample_bilinear(tape, pfe_gate_.forward(tape, pooled), H, W));
  auto a1 = ops::mul(tape, fused, gate);
  auto a2 = pfe_csse_.forward(tape, fused);
  return ops::maximum(tape, a1, a2);
}

template <typename T>
Var<T> PdanetModel<T>::classify(Tape<T>& tape, const Var<T>& features) {
  auto pooled = ops::adaptive_avg_pool(tape, features, 1, 1);
  return ops::sigmoid(tape, ops::linear(tape, pooled, classifier_));
}

template <typename T>
DecoderOutput<T> PdanetModel<T>::dad_forward(Tape<T>& tape, const Var<T>& features, Branch which) {
  if (features->value.channels() != feature_channels_) {
    throw std::invalid_argument("dad: expected " + std::to_string(feature_channels_) +
                                " channels, got " + std::to_string(features->value.channels()));
  }
  DensityAwareDecoder<T>& dad = decoder(which);
  auto shared = dad.shared1.forward(tape, dad.shared0.forward(tape, features));
  auto sparse = sparse_branch_.forward(tape, shared);
  auto dense = dad.dense_branch.forward(tape, shared);
  return {sparse.features, dense.features, sparse.density, dense.density};
}

template <typename T>
Var<T> PdanetModel<T>::fuse_final(Tape<T>& tape, const Var<T>& feat_sparse,
                                  const Var<T>& feat_dense) {
  auto sum = ops::add(tape, feat_sparse, feat_dense);
  auto gated = ops::mul(tape, sum, ops::sigmoid(tape, sum));
  return ops::relu(tape, ops::conv2d(tape, gated, fusion_head_));
}

template <typename T>
ForwardResult<T> PdanetModel<T>::forward(Tape<T>& tape, const Var<T>& image,
                                         std::optional<int> teacher_label) {
  check_input_size(image->value.height(), image->value.width());
  if (teacher_label && *teacher_label != 0 && *teacher_label != 1) {
    throw std::invalid_argument("teacher label must be 0 or 1");
  }
  auto features = backbone_forward(tape, image);
  if (config_.backbone_post_attention) features = backbone_attention_.forward(tape, features);

  std::vector<Var<T>> contexts;
  for (int s : config_.pfe_scales) contexts.push_back(pfe_context(tape, features, s));
  auto attended = pfe_attention(tape, pfe_fuse(tape, features, contexts));

  ForwardResult<T> out;
  out.prob = classify(tape, attended);
  out.routed = teacher_label ? (*teacher_label == 1 ? Branch::DenseDad : Branch::SparseDad)
                             : route_for(static_cast<double>(out.prob->value[0]));
  auto dec = dad_forward(tape, attended, out.routed);
  out.feat_sparse = dec.feat_sparse;
  out.feat_dense = dec.feat_dense;
  out.dm_sparse = dec.dm_sparse;
  out.dm_dense = dec.dm_dense;
  out.dm_final = fuse_final(tape, dec.feat_sparse, dec.feat_dense);
  return out;
}

template <typename T>
ModelOutput PdanetModel<T>::predict(const Tensor<T>& image, std::optional<int> teacher_label) {
  Tape<T> tape(false);
  auto r = forward(tape, tape.constant(image), teacher_label);
  ModelOutput out;
  out.prob = static_cast<double>(r.prob->value[0]);
  out.dm_sparse = to_density_map(r.dm_sparse->value, 8);
  out.dm_dense = to_density_map(r.dm_dense->value, 8);
  out.dm_final = to_density_map(r.dm_final->value, 8);
  out.routed_branch = r.routed;
  return out;
}

template <typename T>
std::vector<std::string> PdanetModel<T>::dense_branch_parameter_names(Branch which) {
  std::vector<Parameter<T>*> ps;
  decoder(which).dense_branch.collect(ps);
  std::vector<std::string> names;
  for (auto* p : ps) names.push_back(p->name);
  return names;
}

template <typename T>
DensityMap to_density_map(const Tensor<T>& t, int stride) {
  if (t.channels() != 1) throw std::invalid_argument("to_density_map: expected one channel");
  DensityMap m(t.height(), t.width(), stride);
  for (std::size_t i = 0; i < t.size(); ++i) m.values[i] = static_cast<float>(t[i]);
  return m;
}

template <typename T>
Tensor<T> to_tensor(const DensityMap& map) {
  Tensor<T> t(1, map.height, map.width);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(map.values[i]);
  return t;
}

template struct ContextConv<float>;
template struct ContextConv<double>;
template struct DecoderLayer<float>;
template struct DecoderLayer<double>;
template struct DensityBranch<float>;
template struct DensityBranch<double>;
template struct DensityAwareDecoder<float>;
template struct DensityAwareDecoder<double>;
template class PdanetModel<float>;
template class PdanetModel<double>;
template DensityMap to_density_map<float>(const Tensor<float>&, int);
template DensityMap to_density_map<double>(const Tensor<double>&, int);
template Tensor<float> to_tensor<float>(const DensityMap&);
template Tensor<double> to_tensor<double>(const DensityMap&);

}  // namespace pdanet
