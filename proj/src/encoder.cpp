#include "dbgi/encoder.hpp"

#include <cmath>

namespace dbgi {

void EncoderConfig::validate() const {
    if (stem_channels < 1) throw ContractViolation("encoder: stem_channels must be >= 1");
    if (growth_rate < 1) throw ContractViolation("encoder: growth_rate must be >= 1");
    for (int l : layers_per_block)
        if (l < 1) throw ContractViolation("encoder: layers_per_block entries must be >= 1");
    for (int b : bam_after)
        if (b < 1 || b > 3) throw ContractViolation("encoder: bam_after must be a subset of {1,2,3}");
    if (reduction_ratio < 1) throw ContractViolation("encoder: reduction_ratio must be >= 1");
    if (spatial_dilation < 1) throw ContractViolation("encoder: spatial_dilation must be >= 1");
    if (!(transition_compression > 0.0 && transition_compression <= 1.0))
        throw ContractViolation("encoder: transition_compression must be in (0, 1]");
    const EncoderPlan plan = plan_encoder(*this);
    for (int b : bam_after) {
        const std::int64_t c = plan.bam_site_channels[static_cast<std::size_t>(b - 1)];
        if (c % reduction_ratio != 0)
            throw ContractViolation("encoder: reduction_ratio " + std::to_string(reduction_ratio) +
                                    " does not divide the " + std::to_string(c) +
                                    " channels at BAM site " + std::to_string(b));
    }
}

EncoderConfig EncoderConfig::desk_scale() {
    EncoderConfig c;
    c.stem_channels = 16;
    c.growth_rate = 8;
    c.layers_per_block = {2, 2, 2};
    c.bam_after = {2, 3};
    c.reduction_ratio = 16;
    c.spatial_dilation = 4;
    c.transition_compression = 0.5;
    return c;
}

EncoderConfig EncoderConfig::paper_scale() {
    EncoderConfig c;
    c.stem_channels = 64;
    c.growth_rate = 32;
    c.layers_per_block = {6, 12, 24};
    c.bam_after = {2, 3};
    c.reduction_ratio = 16;
    c.spatial_dilation = 4;
    c.transition_compression = 0.5;
    return c;
}

Tensor FeatureGrid::position_matrix() const {
    if (batch() != 1)
        throw ContractViolation("position_matrix requires batch 1, got " +
                                shape_str(features.shape()));
    return transpose(reshape(features, {channels(), positions()}));
}

// ---- layers ----

Conv2dLayer::Conv2dLayer(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
                         std::int64_t out_channels, int ksize, int stride, int padding, int dilation)
    : stride(stride), padding(padding), dilation(dilation) {
    kernel = store.add(prefix + ".weight", {out_channels, in_channels, ksize, ksize},
                       Init::glorot_uniform, /*decay=*/true);
    bias = store.add(prefix + ".bias", {out_channels}, Init::zeros, /*decay=*/false);
}

BatchNormLayer::BatchNormLayer(ParameterStore& store, const std::string& prefix, std::int64_t channels) {
    gamma = store.add(prefix + ".gamma", {channels}, Init::ones, /*decay=*/false);
    beta = store.add(prefix + ".beta", {channels}, Init::zeros, /*decay=*/false);
    running_mean = store.add_buffer(prefix + ".running_mean", {channels}, 0.0);
    running_var = store.add_buffer(prefix + ".running_var", {channels}, 1.0);
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) const {
    Tensor rm = running_mean, rv = running_var;
    return batch_norm(x, gamma, beta, rm, rv, training, momentum, epsilon);
}

LinearLayer::LinearLayer(ParameterStore& store, const std::string& prefix, std::int64_t in,
                         std::int64_t out) {
    weight = store.add(prefix + ".weight", {out, in}, Init::glorot_uniform, /*decay=*/true);
    bias = store.add(prefix + ".bias", {out}, Init::zeros, /*decay=*/false);
}

Tensor LinearLayer::forward(const Tensor& x) const {
    return add(matmul(x, transpose(weight)), bias);
}

// ---- dense block ----

DenseLayer::DenseLayer(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
                       int growth) {
    bn1 = BatchNormLayer(store, prefix + ".bn1", in_channels);
    conv1 = Conv2dLayer(store, prefix + ".conv1", in_channels, 4 * growth, 1, 1, 0);
    bn2 = BatchNormLayer(store, prefix + ".bn2", 4 * growth);
    conv2 = Conv2dLayer(store, prefix + ".conv2", 4 * growth, growth, 3, 1, 1);
}

Tensor DenseLayer::forward(const Tensor& inputs_so_far, bool training) const {
    if (inputs_so_far.dim(1) != bn1.gamma.dim(0))
        throw ContractViolation("dense layer expects " + std::to_string(bn1.gamma.dim(0)) +
                                " input channels, got " + std::to_string(inputs_so_far.dim(1)));
    Tensor h = conv1.forward(relu(bn1.forward(inputs_so_far, training)));
    return conv2.forward(relu(bn2.forward(h, training)));
}

DenseBlock::DenseBlock(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
                       int layer_count, int growth)
    : in_channels(in_channels), growth(growth) {
    std::int64_t c = in_channels;
    for (int l = 0; l < layer_count; ++l) {
        layers.emplace_back(store, prefix + ".layer" + std::to_string(l), c, growth);
        c += growth;
    }
}

Tensor DenseBlock::forward(const Tensor& x, bool training) const {
    Tensor features = x;
    for (const DenseLayer& layer : layers) {
        Tensor fresh = layer.forward(features, training);
        features = concat_channels({features, fresh});
    }
    return features;
}

Transition::Transition(ParameterStore& store, const std::string& prefix, std::int64_t in_channels,
                       double compression) {
    out_channels = static_cast<std::int64_t>(std::floor(static_cast<double>(in_channels) * compression));
    if (out_channels < 1) throw ContractViolation("transition compresses to zero channels");
    conv = Conv2dLayer(store, prefix + ".conv", in_channels, out_channels, 1, 1, 0);
}

Tensor Transition::forward(const Tensor& x) const {
    if (x.dim(2) < 2 || x.dim(3) < 2)
        throw ContractViolation("transition needs spatial extents >= 2, got " + shape_str(x.shape()));
    return avg_pool2d(conv.forward(x), 2, 2);
}

// ---- bottleneck attention ----

ChannelAttention::ChannelAttention(ParameterStore& store, const std::string& prefix,
                                   std::int64_t channels, int reduction_ratio) {
    if (channels % reduction_ratio != 0)
        throw ContractViolation("channel attention: reduction ratio must divide channel count");
    const std::int64_t hidden = channels / reduction_ratio;
    reduce = LinearLayer(store, prefix + ".reduce", channels, hidden);
    expand = LinearLayer(store, prefix + ".expand", hidden, channels);
    bn = BatchNormLayer(store, prefix + ".bn", channels);
}

Tensor ChannelAttention::forward(const Tensor& x, bool training) const {
    const std::int64_t n = x.dim(0), c = x.dim(1);
    Tensor pooled = reshape(global_avg_pool(x), {n, c});
    Tensor h = expand.forward(relu(reduce.forward(pooled)));
    return reshape(bn.forward(h, training), {n, c, 1, 1});
}

SpatialAttention::SpatialAttention(ParameterStore& store, const std::string& prefix,
                                   std::int64_t channels, int reduction_ratio, int dilation) {
    if (channels % reduction_ratio != 0)
        throw ContractViolation("spatial attention: reduction ratio must divide channel count");
    const std::int64_t hidden = channels / reduction_ratio;
    squeeze = Conv2dLayer(store, prefix + ".squeeze", channels, hidden, 1, 1, 0);
    dilated1 = Conv2dLayer(store, prefix + ".dilated1", hidden, hidden, 3, 1, dilation, dilation);
    dilated2 = Conv2dLayer(store, prefix + ".dilated2", hidden, hidden, 3, 1, dilation, dilation);
    collapse = Conv2dLayer(store, prefix + ".collapse", hidden, 1, 1, 1, 0);
    bn = BatchNormLayer(store, prefix + ".bn", 1);
}

Tensor SpatialAttention::forward(const Tensor& x, bool training) const {
    Tensor h = collapse.forward(dilated2.forward(dilated1.forward(squeeze.forward(x))));
    return bn.forward(h, training);
}

Bam::Bam(ParameterStore& store, const std::string& prefix, std::int64_t channels,
         int reduction_ratio, int dilation) {
    channel = ChannelAttention(store, prefix + ".channel", channels, reduction_ratio);
    spatial = SpatialAttention(store, prefix + ".spatial", channels, reduction_ratio, dilation);
}

Tensor Bam::forward(const Tensor& x, bool training) const {
    Tensor gate = sigmoid(add(channel.forward(x, training), spatial.forward(x, training)));
    return add(x, mul(x, gate));
}

// ---- plan ----

EncoderPlan plan_encoder(const EncoderConfig& config) {
    EncoderPlan plan;
    plan.stem_out = config.stem_channels;
    std::int64_t c = config.stem_channels;
    for (int b = 0; b < 3; ++b) {
        auto& inputs = plan.layer_inputs[static_cast<std::size_t>(b)];
        for (int l = 0; l < config.layers_per_block[static_cast<std::size_t>(b)]; ++l) {
            inputs.push_back(c);
            c += config.growth_rate;
        }
        plan.block_out[static_cast<std::size_t>(b)] = c;
        const bool has_transition = b < 2 || config.transition_after_block3;
        const std::int64_t compressed =
            static_cast<std::int64_t>(std::floor(static_cast<double>(c) * config.transition_compression));
        plan.after_transition[static_cast<std::size_t>(b)] = has_transition ? compressed : c;
        if (config.bam_after.count(b + 1)) {
            plan.bam_site_channels[static_cast<std::size_t>(b)] =
                config.bam_pre_transition ? plan.block_out[static_cast<std::size_t>(b)]
                                          : plan.after_transition[static_cast<std::size_t>(b)];
        }
        c = plan.after_transition[static_cast<std::size_t>(b)];
    }
    plan.final_channels = c;
    return plan;
}

// ---- encoder ----

DenseBamEncoder::DenseBamEncoder(ParameterStore& store, const EncoderConfig& config)
    : config_(config), plan_(plan_encoder(config)) {
    config.validate();
    stem_conv = Conv2dLayer(store, "encoder.stem.conv", 1, config.stem_channels, 7, 2, 3);
    stem_bn = BatchNormLayer(store, "encoder.stem.bn", config.stem_channels);
    std::int64_t c = config.stem_channels;
    for (int b = 0; b < 3; ++b) {
        const std::string tag = std::to_string(b + 1);
        blocks[static_cast<std::size_t>(b)] =
            DenseBlock(store, "encoder.block" + tag, c, config.layers_per_block[static_cast<std::size_t>(b)],
                       config.growth_rate);
        c = blocks[static_cast<std::size_t>(b)].out_channels();
        if (b < 2 || config.transition_after_block3) {
            transitions[static_cast<std::size_t>(b)]
                .emplace(store, "encoder.transition" + tag, c, config.transition_compression);
            // pre-transition BAM sees the uncompressed block output
            if (config.bam_after.count(b + 1) && config.bam_pre_transition)
                bams[static_cast<std::size_t>(b)].emplace(store, "encoder.bam" + tag, c,
                                                          config.reduction_ratio, config.spatial_dilation);
            c = transitions[static_cast<std::size_t>(b)]->out_channels;
            if (config.bam_after.count(b + 1) && !config.bam_pre_transition)
                bams[static_cast<std::size_t>(b)].emplace(store, "encoder.bam" + tag, c,
                                                          config.reduction_ratio, config.spatial_dilation);
        } else if (config.bam_after.count(b + 1)) {
            bams[static_cast<std::size_t>(b)].emplace(store, "encoder.bam" + tag, c,
                                                      config.reduction_ratio, config.spatial_dilation);
        }
    }
}

FeatureGrid DenseBamEncoder::forward(const Tensor& image, bool training) const {
    if (image.rank() != 4 || image.dim(1) != 1)
        throw ContractViolation("encoder expects an N x 1 x H x W image, got " +
                                shape_str(image.shape()));
    if (image.dim(2) < 16 || image.dim(3) < 16)
        throw ContractViolation("encoder input too small to survive the stem and transitions: " +
                                shape_str(image.shape()));
    Tensor h = max_pool2d(relu(stem_bn.forward(stem_conv.forward(image), training)), 3, 2, 1);
    for (int b = 0; b < 3; ++b) {
        h = blocks[static_cast<std::size_t>(b)].forward(h, training);
        const auto& bam = bams[static_cast<std::size_t>(b)];
        const auto& transition = transitions[static_cast<std::size_t>(b)];
        if (config_.bam_pre_transition && bam) h = bam->forward(h, training);
        if (transition) h = transition->forward(h);
        if (!config_.bam_pre_transition && bam) h = bam->forward(h, training);
    }
    return FeatureGrid{h};
}

}  // namespace dbgi
