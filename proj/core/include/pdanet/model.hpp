#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdanet/attention.hpp"
#include "pdanet/config.hpp"
#include "pdanet/data_io.hpp"

namespace pdanet {

enum class Branch { SparseDad, DenseDad };

const char* to_string(Branch b);

/// Shared context block: 1x1 reduce, then a 1x1 and a dilated 3x3 expansion
/// whose outputs are summed.
template <typename T>
struct ContextConv {
  Conv2d<T> reduce;
  Conv2d<T> pointwise;
  Conv2d<T> dilated;

  ContextConv() = default;
  ContextConv(const std::string& name, int channels, int reduced, int dilation);
  void init(InitRng& rng);
  void collect(std::vector<Parameter<T>*>& out);
  Var<T> forward(Tape<T>& tape, const Var<T>& x);
};

/// One decoder layer: 1x1 reduce, dilated 3x3, rectifier, CSSE.
template <typename T>
struct DecoderLayer {
  Conv2d<T> reduce;
  Conv2d<T> conv;
  Csse<T> attention;

  DecoderLayer() = default;
  DecoderLayer(const std::string& name, int in, int reduced, int out, int dilation);
  void init(InitRng& rng);
  void collect(std::vector<Parameter<T>*>& out);
  Var<T> forward(Tape<T>& tape, const Var<T>& x);
};

/// Two decoder layers and a non-negative 1x1 density head.
template <typename T>
struct DensityBranch {
  DecoderLayer<T> first;
  DecoderLayer<T> second;
  Conv2d<T> head;

  struct Output {
    Var<T> features;
    Var<T> density;
  };

  DensityBranch() = default;
  DensityBranch(const std::string& name, int in, int reduced, int mid, int out, int dilation);
  void init(InitRng& rng);
  void collect(std::vector<Parameter<T>*>& out);
  Output forward(Tape<T>& tape, const Var<T>& x);
};

/// A density-aware decoder: two shared layers and its own dense branch. The
/// sparse branch lives on the model and is shared by both decoders.
template <typename T>
struct DensityAwareDecoder {
  DecoderLayer<T> shared0;
  DecoderLayer<T> shared1;
  DensityBranch<T> dense_branch;

  DensityAwareDecoder() = default;
  DensityAwareDecoder(const std::string& name, const PdanetConfig& cfg, int in_channels);
  void init(InitRng& rng);
  void collect(std::vector<Parameter<T>*>& out);
};

template <typename T>
struct DecoderOutput {
  Var<T> feat_sparse;
  Var<T> feat_dense;
  Var<T> dm_sparse;
  Var<T> dm_dense;
};

template <typename T>
struct ForwardResult {
  Var<T> prob;  // (1,1,1)
  Var<T> dm_sparse;
  Var<T> dm_dense;
  Var<T> dm_final;
  Var<T> feat_sparse;
  Var<T> feat_dense;
  Branch routed = Branch::SparseDad;
};

/// Plain-value forward result.
struct ModelOutput {
  double prob = 0.0;
  DensityMap dm_sparse;
  DensityMap dm_dense;
  DensityMap dm_final;
  Branch routed_branch = Branch::SparseDad;
};

/// Dense iff prob >= 0.5.
Branch route_for(double prob);

template <typename T>
class PdanetModel {
 public:
  explicit PdanetModel(PdanetConfig config);

  const PdanetConfig& config() const { return config_; }

  /// Every trainable tensor in a fixed order with unique names.
  std::vector<Parameter<T>*> parameters();
  std::size_t parameter_count();
  void zero_grad();

  /// Channel width of the backbone output (512 at multiplier 1).
  int feature_channels() const { return feature_channels_; }

  /// Truncated VGG16 front end: (3,H,W) -> (C, H/8, W/8).
  Var<T> backbone_forward(Tape<T>& tape, const Var<T>& image);

  /// One pyramid context feature at pooling scale `s`, upsampled back to
  /// the input's spatial size.
  Var<T> pfe_context(Tape<T>& tape, const Var<T>& features, int s);
  /// Concatenates contexts then the input and projects back to C channels.
  Var<T> pfe_fuse(Tape<T>& tape, const Var<T>& features, const std::vector<Var<T>>& contexts);
  /// max(F * sigmoid(up(ContextConv(pool4(F)))), CSSE(F)).
  Var<T> pfe_attention(Tape<T>& tape, const Var<T>& fused);

  /// Dense-class probability (1,1,1).
  Var<T> classify(Tape<T>& tape, const Var<T>& features);

  DecoderOutput<T> dad_forward(Tape<T>& tape, const Var<T>& features, Branch which);

  /// head((fs + fd) * sigmoid(fs + fd)), rectified.
  Var<T> fuse_final(Tape<T>& tape, const Var<T>& feat_sparse, const Var<T>& feat_dense);

  /// Full pipeline. With a teacher label the decoder is chosen by the label,
  /// otherwise by the classifier.
  ForwardResult<T> forward(Tape<T>& tape, const Var<T>& image,
                           std::optional<int> teacher_label = std::nullopt);

  /// Inference without recording.
  ModelOutput predict(const Tensor<T>& image, std::optional<int> teacher_label = std::nullopt);

  /// Throws std::invalid_argument unless (H, W) is a legal input size.
  void check_input_size(int height, int width) const;

  /// Names of the parameters used only by the given decoder's dense branch.
  std::vector<std::string> dense_branch_parameter_names(Branch which);

  // Sub-blocks, exposed for targeted tests.
  std::vector<Conv2d<T>>& backbone_convs() { return backbone_convs_; }
  Csse<T>& backbone_attention() { return backbone_attention_; }
  Conv2d<T>& pfe_reduce() { return pfe_context_.reduce; }
  ContextConv<T>& pfe_context_conv() { return pfe_context_; }
  Csse<T>& pfe_csse() { return pfe_csse_; }
  Linear<T>& classifier() { return classifier_; }
  DensityAwareDecoder<T>& decoder(Branch which) {
    return which == Branch::DenseDad ? dad_dense_ : dad_sparse_;
  }
  DensityBranch<T>& sparse_branch() { return sparse_branch_; }
  Conv2d<T>& fusion_head() { return fusion_head_; }

 private:
  PdanetConfig config_;
  int feature_channels_ = 0;
  std::vector<int> layout_;  // backbone: conv index or -1 for pool
  std::vector<Conv2d<T>> backbone_convs_;
  Csse<T> backbone_attention_;
  ContextConv<T> pfe_context_;
  Conv2d<T> pfe_fuse_;
  ContextConv<T> pfe_gate_;
  Csse<T> pfe_csse_;
  Linear<T> classifier_;
  DensityAwareDecoder<T> dad_sparse_;
  DensityAwareDecoder<T> dad_dense_;
  DensityBranch<T> sparse_branch_;
  Conv2d<T> fusion_head_;
};

/// Copies a (1,H,W) tensor into a density map of the given stride.
template <typename T>
DensityMap to_density_map(const Tensor<T>& t, int stride);
template <typename T>
Tensor<T> to_tensor(const DensityMap& map);

extern template class PdanetModel<float>;
extern template class PdanetModel<double>;

}  // namespace pdanet
