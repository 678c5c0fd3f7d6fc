#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/errors.hpp"
#include "fmpn/nn.hpp"
#include "fmpn/random.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn {

// ---------------------------------------------------------------------------
// FMG: grayscale face -> facial-motion mask.
// Two stride-2 conv stages down, four residual blocks, two transposed conv
// stages back up, sigmoid output. Spatial size is preserved for inputs
// divisible by 4.
// ---------------------------------------------------------------------------

struct FmgArch {
    int base_channels = 64; // encoder widths: 1 -> c -> 2c, trunk at 2c
};

namespace detail {

/// Residual block: conv-bn-relu-conv-bn + identity skip, relu.
struct ResBlock {
    nn::Conv2d conv1, conv2;
    nn::BatchNorm2d bn1, bn2;
    nn::ReLU relu_mid, relu_out;

    explicit ResBlock(int channels = 1)
        : conv1(channels, channels, 3, 1, 1, false), conv2(channels, channels, 3, 1, 1, false),
          bn1(channels), bn2(channels) {}

    void init(Rng& rng) {
        conv1.init(rng);
        conv2.init(rng);
    }

    Tensor forward(const Tensor& x, bool training) {
        Tensor h = relu_mid.forward(bn1.forward(conv1.forward(x), training));
        Tensor h2 = bn2.forward(conv2.forward(h), training);
        for (std::int64_t i = 0; i < h2.size(); ++i) h2[i] += x[i];
        return relu_out.forward(h2);
    }

    Tensor backward(const Tensor& dy) {
        Tensor dsum = relu_out.backward(dy);
        Tensor dbranch = conv1.backward(bn1.backward(relu_mid.backward(conv2.backward(bn2.backward(dsum)))));
        for (std::int64_t i = 0; i < dbranch.size(); ++i) dbranch[i] += dsum[i];
        return dbranch;
    }

    void visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
        conv1.visit_params(prefix + ".conv1", v);
        bn1.visit_params(prefix + ".bn1", v);
        conv2.visit_params(prefix + ".conv2", v);
        bn2.visit_params(prefix + ".bn2", v);
    }

    void visit_buffers(const std::string& prefix, const nn::BufferVisitor& v) {
        bn1.visit_buffers(prefix + ".bn1", v);
        bn2.visit_buffers(prefix + ".bn2", v);
    }
};

} // namespace detail

/// Facial-Motion Mask Generator parameters and forward/backward machinery.
struct FmgParams {
    FmgArch arch;
    nn::Conv2d enc1, enc2;
    nn::BatchNorm2d enc_bn1, enc_bn2;
    nn::ReLU enc_relu1, enc_relu2;
    std::vector<detail::ResBlock> trunk;
    nn::ConvTranspose2d dec1, dec2;
    nn::BatchNorm2d dec_bn1;
    nn::ReLU dec_relu1;
    nn::Sigmoid out_act;
    mutable std::uint64_t forward_calls = 0; // probe used by ablation tests

    explicit FmgParams(FmgArch a = {})
        : arch(a), enc1(1, a.base_channels, 3, 2, 1, false),
          enc2(a.base_channels, 2 * a.base_channels, 3, 2, 1, false),
          enc_bn1(a.base_channels), enc_bn2(2 * a.base_channels),
          dec1(2 * a.base_channels, a.base_channels, 4, 2, 1, false),
          dec2(a.base_channels, 1, 4, 2, 1, true), dec_bn1(a.base_channels) {
        for (int i = 0; i < 4; ++i) trunk.emplace_back(2 * a.base_channels);
    }

    void visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
        enc1.visit_params(prefix + ".enc1", v);
        enc_bn1.visit_params(prefix + ".enc_bn1", v);
        enc2.visit_params(prefix + ".enc2", v);
        enc_bn2.visit_params(prefix + ".enc_bn2", v);
        for (std::size_t i = 0; i < trunk.size(); ++i) {
            trunk[i].visit_params(prefix + ".res" + std::to_string(i + 1), v);
        }
        dec1.visit_params(prefix + ".dec1", v);
        dec_bn1.visit_params(prefix + ".dec_bn1", v);
        dec2.visit_params(prefix + ".dec2", v);
    }

    void visit_buffers(const std::string& prefix, const nn::BufferVisitor& v) {
        enc_bn1.visit_buffers(prefix + ".enc_bn1", v);
        enc_bn2.visit_buffers(prefix + ".enc_bn2", v);
        for (std::size_t i = 0; i < trunk.size(); ++i) {
            trunk[i].visit_buffers(prefix + ".res" + std::to_string(i + 1), v);
        }
        dec_bn1.visit_buffers(prefix + ".dec_bn1", v);
    }
};

/// FMG forward pass: (B, 1, H, W) grayscale in [0,1] -> (B, 1, H, W) mask
/// in (0,1). H and W must be divisible by 4.
inline Tensor fmg_forward(FmgParams& fmg, const Tensor& gray, bool training) {
    if (gray.rank() != 4 || gray.dim(1) != 1) {
        throw ShapeError("fmg_forward: expected (B,1,H,W), got " + gray.shape_str());
    }
    if (gray.dim(2) % 4 != 0 || gray.dim(3) % 4 != 0) {
        throw ShapeError("fmg_forward: spatial size " + gray.shape_str() + " not divisible by 4");
    }
    ++fmg.forward_calls;
    Tensor h = fmg.enc_relu1.forward(fmg.enc_bn1.forward(fmg.enc1.forward(gray), training));
    h = fmg.enc_relu2.forward(fmg.enc_bn2.forward(fmg.enc2.forward(h), training));
    for (auto& block : fmg.trunk) h = block.forward(h, training);
    h = fmg.dec_relu1.forward(fmg.dec_bn1.forward(fmg.dec1.forward(h), training));
    h = fmg.dec2.forward(h);
    return fmg.out_act.forward(h);
}

/// Backward through FMG; accumulates parameter gradients, returns d(input).
inline Tensor fmg_backward(FmgParams& fmg, const Tensor& dmask) {
    Tensor d = fmg.out_act.backward(dmask);
    d = fmg.dec2.backward(d);
    d = fmg.dec1.backward(fmg.dec_bn1.backward(fmg.dec_relu1.backward(d)));
    for (auto it = fmg.trunk.rbegin(); it != fmg.trunk.rend(); ++it) d = it->backward(d);
    d = fmg.enc2.backward(fmg.enc_bn2.backward(fmg.enc_relu2.backward(d)));
    d = fmg.enc1.backward(fmg.enc_bn1.backward(fmg.enc_relu1.backward(d)));
    return d;
}

// ---------------------------------------------------------------------------
// PFN: learned weighted sum of the holistic RGB face and the mask-weighted
// grayscale face, both through 1x1 convolutions with bias.
// ---------------------------------------------------------------------------

struct PfnParams {
    nn::Conv2d holistic; // 3 -> 3
    nn::Conv2d masked;   // 1 -> 3
    Tensor gray_cache;

    PfnParams() : holistic(3, 3, 1, 1, 0, true), masked(1, 3, 1, 1, 0, true) {}

    void visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
        holistic.visit_params(prefix + ".holistic", v);
        masked.visit_params(prefix + ".masked", v);
    }
};

/// Pass-through initialization: the holistic branch starts as the identity,
/// the masked branch replicates its single channel into all three outputs.
/// Early joint training therefore starts from "holistic + masked sum".
inline void init_pfn_passthrough(PfnParams& pfn) {
    Tensor& hw = pfn.holistic.weight(); // (3,3,1,1)
    hw.fill(0.0);
    for (int c = 0; c < 3; ++c) hw.at(c, c, 0, 0) = 1.0;
    pfn.holistic.bias().fill(0.0);
    pfn.masked.weight().fill(1.0); // (3,1,1,1)
    pfn.masked.bias().fill(0.0);
}

/// Fused face: holistic(rgb) + masked(gray * mask). Shapes: rgb (B,3,H,W),
/// gray and mask (B,1,H,W); mask values in [0,1].
inline Tensor pfn_fuse(PfnParams& pfn, const Tensor& rgb, const Tensor& gray, const Tensor& mask) {
    if (rgb.rank() != 4 || rgb.dim(1) != 3) throw ShapeError("pfn_fuse: rgb must be (B,3,H,W)");
    require_same_shape(gray, mask, "pfn_fuse");
    if (gray.dim(0) != rgb.dim(0) || gray.dim(2) != rgb.dim(2) || gray.dim(3) != rgb.dim(3)) {
        throw ShapeError("pfn_fuse: gray " + gray.shape_str() + " inconsistent with rgb " + rgb.shape_str());
    }
    pfn.gray_cache = gray;
    Tensor masked_face = gray;
    for (std::int64_t i = 0; i < masked_face.size(); ++i) masked_face[i] *= mask[i];
    Tensor fused = pfn.holistic.forward(rgb);
    Tensor m = pfn.masked.forward(masked_face);
    for (std::int64_t i = 0; i < fused.size(); ++i) fused[i] += m[i];
    return fused;
}

struct PfnGrads {
    Tensor d_rgb;
    Tensor d_mask;
};

/// Backward through the fusion; accumulates PFN parameter gradients.
inline PfnGrads pfn_backward(PfnParams& pfn, const Tensor& dfused) {
    PfnGrads g;
    g.d_rgb = pfn.holistic.backward(dfused);
    Tensor d_masked_face = pfn.masked.backward(dfused);
    g.d_mask = d_masked_face;
    for (std::int64_t i = 0; i < g.d_mask.size(); ++i) g.d_mask[i] *= pfn.gray_cache[i];
    return g;
}

// ---------------------------------------------------------------------------
// CN: pluggable classification backbone.
// ---------------------------------------------------------------------------

struct BackboneDescriptor {
    std::string name = "tiny";
    int input_size = 224;
    int num_classes = 7;
    nlohmann::json options = nlohmann::json::object();
};

class Backbone {
public:
    virtual ~Backbone() = default;
    virtual void init(Rng& rng) = 0;
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& dlogits) = 0;
    virtual void visit_params(const std::string& prefix, const nn::ParamVisitor& v) = 0;
    virtual void visit_buffers(const std::string& prefix, const nn::BufferVisitor& v) = 0;
};

/// Desk-scale default backbone: three stride-2 conv blocks, global average
/// pooling and a linear head. Inception-class models plug in through the
/// same registry.
class TinyBackbone : public Backbone {
public:
    explicit TinyBackbone(const BackboneDescriptor& desc) {
        const int c = desc.options.value("channels", 16);
        conv1_ = nn::Conv2d(3, c, 3, 2, 1, false);
        conv2_ = nn::Conv2d(c, 2 * c, 3, 2, 1, false);
        conv3_ = nn::Conv2d(2 * c, 4 * c, 3, 2, 1, false);
        bn1_ = nn::BatchNorm2d(c);
        bn2_ = nn::BatchNorm2d(2 * c);
        bn3_ = nn::BatchNorm2d(4 * c);
        fc_ = nn::Linear(4 * c, desc.num_classes);
    }

    void init(Rng& rng) override {
        conv1_.init(rng);
        conv2_.init(rng);
        conv3_.init(rng);
        fc_.init(rng);
    }

    Tensor forward(const Tensor& x, bool training) override {
        Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x), training));
        h = relu2_.forward(bn2_.forward(conv2_.forward(h), training));
        h = relu3_.forward(bn3_.forward(conv3_.forward(h), training));
        return fc_.forward(pool_.forward(h));
    }

    Tensor backward(const Tensor& dlogits) override {
        Tensor d = pool_.backward(fc_.backward(dlogits));
        d = conv3_.backward(bn3_.backward(relu3_.backward(d)));
        d = conv2_.backward(bn2_.backward(relu2_.backward(d)));
        return conv1_.backward(bn1_.backward(relu1_.backward(d)));
    }

    void visit_params(const std::string& prefix, const nn::ParamVisitor& v) override {
        conv1_.visit_params(prefix + ".conv1", v);
        bn1_.visit_params(prefix + ".bn1", v);
        conv2_.visit_params(prefix + ".conv2", v);
        bn2_.visit_params(prefix + ".bn2", v);
        conv3_.visit_params(prefix + ".conv3", v);
        bn3_.visit_params(prefix + ".bn3", v);
        fc_.visit_params(prefix + ".fc", v);
    }

    void visit_buffers(const std::string& prefix, const nn::BufferVisitor& v) override {
        bn1_.visit_buffers(prefix + ".bn1", v);
        bn2_.visit_buffers(prefix + ".bn2", v);
        bn3_.visit_buffers(prefix + ".bn3", v);
    }

private:
    nn::Conv2d conv1_, conv2_, conv3_;
    nn::BatchNorm2d bn1_, bn2_, bn3_;
    nn::ReLU relu1_, relu2_, relu3_;
    nn::GlobalAvgPool pool_;
    nn::Linear fc_;
};

using BackboneFactory = std::function<std::unique_ptr<Backbone>(const BackboneDescriptor&)>;

inline std::map<std::string, BackboneFactory>& backbone_registry() {
    static std::map<std::string, BackboneFactory> registry;
    return registry;
}

inline void register_backbone(const std::string& name, BackboneFactory factory) {
    backbone_registry()[name] = std::move(factory);
}

inline std::unique_ptr<Backbone> make_backbone(const BackboneDescriptor& desc) {
    auto& registry = backbone_registry();
    if (registry.find("tiny") == registry.end()) {
        registry["tiny"] = [](const BackboneDescriptor& d) { return std::make_unique<TinyBackbone>(d); };
    }
    auto it = registry.find(desc.name);
    if (it == registry.end()) {
        throw ConfigError("unknown backbone '" + desc.name + "'");
    }
    return it->second(desc);
}

/// Classification-network parameters: the backbone plus its descriptor.
struct CnParams {
    BackboneDescriptor desc;
    std::unique_ptr<Backbone> net;

    void visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
        net->visit_params(prefix, v);
    }
    void visit_buffers(const std::string& prefix, const nn::BufferVisitor& v) {
        net->visit_buffers(prefix, v);
    }
};

/// CN forward: fused (B, 3, S, S) with S equal to the descriptor's input
/// size -> (B, K) logits.
inline Tensor cn_forward(CnParams& cn, const Tensor& fused, bool training) {
    if (fused.rank() != 4 || fused.dim(1) != 3 || fused.dim(2) != cn.desc.input_size ||
        fused.dim(3) != cn.desc.input_size) {
        throw ShapeError("cn_forward: expected (B,3," + std::to_string(cn.desc.input_size) + "," +
                         std::to_string(cn.desc.input_size) + "), got " + fused.shape_str());
    }
    return cn.net->forward(fused, training);
}

inline Tensor cn_backward(CnParams& cn, const Tensor& dlogits) { return cn.net->backward(dlogits); }

// ---------------------------------------------------------------------------
// Initialization and the model bundle.
// ---------------------------------------------------------------------------

inline FmgParams init_fmg(const FmgArch& arch, std::uint64_t seed) {
    FmgParams fmg(arch);
    Rng rng(mix_seed(seed, 0xF36));
    fmg.enc1.init(rng);
    fmg.enc2.init(rng);
    for (auto& block : fmg.trunk) block.init(rng);
    fmg.dec1.init(rng);
    fmg.dec2.init(rng);
    return fmg;
}

inline PfnParams init_pfn() {
    PfnParams pfn;
    init_pfn_passthrough(pfn);
    return pfn;
}

inline CnParams init_cn(const BackboneDescriptor& desc, std::uint64_t seed) {
    CnParams cn;
    cn.desc = desc;
    cn.net = make_backbone(desc);
    Rng rng(mix_seed(seed, 0xC11));
    cn.net->init(rng);
    return cn;
}

/// How the classifier is fed; mirrors the paper's ablation rows.
enum class PipelineVariant { Full, NoLG, BaselineCnn };

inline std::string variant_name(PipelineVariant v) {
    switch (v) {
        case PipelineVariant::Full: return "full";
        case PipelineVariant::NoLG: return "no_lG";
        case PipelineVariant::BaselineCnn: return "baseline_cnn";
    }
    return "?";
}

inline PipelineVariant variant_from_name(const std::string& name) {
    if (name == "full") return PipelineVariant::Full;
    if (name == "no_lG") return PipelineVariant::NoLG;
    if (name == "baseline_cnn") return PipelineVariant::BaselineCnn;
    throw ConfigError("unknown variant '" + name + "' (expected full, no_lG or baseline_cnn)");
}

/// The complete FMPN model. `input_size` is the network-facing crop size.
struct FmpnModel {
    FmgParams fmg;
    PfnParams pfn;
    CnParams cn;
    int input_size = 0;
    std::vector<std::string> class_names;
    PipelineVariant variant = PipelineVariant::Full;

    void visit_params(const nn::ParamVisitor& v) {
        fmg.visit_params("fmg", v);
        pfn.visit_params("pfn", v);
        cn.visit_params("cn", v);
    }
    void visit_buffers(const nn::BufferVisitor& v) {
        fmg.visit_buffers("fmg", v);
        cn.visit_buffers("cn", v);
    }
    void zero_grad() {
        visit_params([](const std::string&, Tensor&, Tensor& g) { g.fill(0.0); });
    }
};

inline FmpnModel init_model(const FmgArch& fmg_arch, const BackboneDescriptor& cn_desc,
                            std::vector<std::string> class_names, std::uint64_t seed,
                            PipelineVariant variant = PipelineVariant::Full) {
    FmpnModel model{init_fmg(fmg_arch, seed), init_pfn(), init_cn(cn_desc, seed),
                    cn_desc.input_size, std::move(class_names), variant};
    return model;
}

} // namespace fmpn
