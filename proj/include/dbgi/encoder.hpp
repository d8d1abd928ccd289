#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dbgi/params.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

struct EncoderConfig {
    int stem_channels = 16;
    int growth_rate = 8;
    std::array<int, 3> layers_per_block = {6, 12, 24};
    std::set<int> bam_after = {2, 3};
    int reduction_ratio = 16;
    int spatial_dilation = 4;
    double transition_compression = 0.5;
    // Attention sites sit after each block's transition by default; the
    // ablation harness can flip them to pre-transition.
    bool bam_pre_transition = false;
    bool transition_after_block3 = false;

    void validate() const;

    static EncoderConfig desk_scale();   // growth 8, 2/2/2 layers
    static EncoderConfig paper_scale();  // DenseNet-121 front: 64 stem, growth 32, 6/12/24
};

// Output of the encoder: an N x C x H x W feature map read as L = H*W grid
// positions, each a C-dimensional feature vector.
struct FeatureGrid {
    Tensor features;

    std::int64_t batch() const { return features.dim(0); }
    std::int64_t channels() const { return features.dim(1); }
    std::int64_t height() const { return features.dim(2); }
    std::int64_t width() const { return features.dim(3); }
    std::int64_t positions() const { return height() * width(); }

    Tensor position_matrix() const;  // {L, C}; batch must be 1
};

// ---- building-block layers ----

struct Conv2dLayer {
    Tensor kernel;
    Tensor bias;
    int stride = 1;
    int padding = 0;
    int dilation = 1;

    Conv2dLayer() = default;
    Conv2dLayer(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
                std::int64_t out_channels, int ksize, int stride, int padding, int dilation = 1);

    Tensor forward(const Tensor& x) const { return conv2d(x, kernel, bias, stride, padding, dilation); }
};

struct BatchNormLayer {
    Tensor gamma, beta, running_mean, running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    BatchNormLayer() = default;
    BatchNormLayer(ParameterStore& store, const std::string& prefix, std::int64_t channels);

    Tensor forward(const Tensor& x, bool training) const;
};

struct LinearLayer {
    Tensor weight;  // {out, in}
    Tensor bias;    // {out}

    LinearLayer() = default;
    LinearLayer(ParameterStore& store, const std::string& prefix, std::int64_t in, std::int64_t out);

    Tensor forward(const Tensor& x) const;  // x: {N, in} -> {N, out}
};

// ---- dense connectivity ----

// BN -> ReLU -> 1x1 bottleneck conv (4g channels) -> BN -> ReLU -> 3x3 conv
// (g channels, padding 1). Produces the growth_rate new channels; the caller
// concatenates them with everything that came before.
struct DenseLayer {
    BatchNormLayer bn1, bn2;
    Conv2dLayer conv1, conv2;

    DenseLayer() = default;
    DenseLayer(ParameterStore& store, const std::string& prefix, std::int64_t in_channels, int growth);

    Tensor forward(const Tensor& inputs_so_far, bool training) const;
};

struct DenseBlock {
    std::vector<DenseLayer> layers;
    std::int64_t in_channels = 0;
    int growth = 0;

    DenseBlock() = default;
    DenseBlock(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
               int layer_count, int growth);

    std::int64_t out_channels() const {
        return in_channels + static_cast<std::int64_t>(layers.size()) * growth;
    }
    Tensor forward(const Tensor& x, bool training) const;
};

// 1x1 conv channel compression followed by 2x2 average pooling, stride 2.
struct Transition {
    Conv2dLayer conv;
    std::int64_t out_channels = 0;

    Transition() = default;
    Transition(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
               double compression);

    Tensor forward(const Tensor& x) const;
};

// ---- bottleneck attention ----

struct ChannelAttention {
    LinearLayer reduce, expand;
    BatchNormLayer bn;

    ChannelAttention() = default;
    ChannelAttention(ParameterStore& store, const std::string& prefix, std::int64_t channels,
                     int reduction_ratio);

    // pre-sigmoid logits, {N, C, 1, 1}
    Tensor forward(const Tensor& x, bool training) const;
};

struct SpatialAttention {
    Conv2dLayer squeeze, dilated1, dilated2, collapse;
    BatchNormLayer bn;

    SpatialAttention() = default;
    SpatialAttention(ParameterStore& store, const std::string& prefix, std::int64_t channels,
                     int reduction_ratio, int dilation);

    // pre-sigmoid logits, {N, 1, H, W}
    Tensor forward(const Tensor& x, bool training) const;
};

// M(Q) = sigmoid(channel logits + spatial logits); output Q + Q (x) M(Q).
struct Bam {
    ChannelAttention channel;
    SpatialAttention spatial;

    Bam() = default;
    Bam(ParameterStore& store, const std::string& prefix, std::int64_t channels,
        int reduction_ratio, int dilation);

    Tensor forward(const Tensor& x, bool training) const;
};

// ---- per-layer channel bookkeeping, computable without any tensors ----

struct EncoderPlan {
    std::int64_t stem_out = 0;
    std::array<std::vector<std::int64_t>, 3> layer_inputs;  // input channels per dense layer
    std::array<std::int64_t, 3> block_out = {};
    std::array<std::int64_t, 3> after_transition = {};      // == block_out where no transition
    std::array<std::int64_t, 3> bam_site_channels = {};     // 0 where no BAM attaches
    std::int64_t final_channels = 0;
};

EncoderPlan plan_encoder(const EncoderConfig& config);

// ---- the encoder ----

class DenseBamEncoder {
public:
    DenseBamEncoder(ParameterStore& store, const EncoderConfig& config);

    FeatureGrid forward(const Tensor& image, bool training) const;
    const EncoderConfig& config() const { return config_; }
    const EncoderPlan& plan() const { return plan_; }

    // exposed for composition tests
    Conv2dLayer stem_conv;
    BatchNormLayer stem_bn;
    std::array<DenseBlock, 3> blocks;
    std::array<std::optional<Transition>, 3> transitions;
    std::array<std::optional<Bam>, 3> bams;

private:
    EncoderConfig config_;
    EncoderPlan plan_;
};

}  // namespace dbgi
