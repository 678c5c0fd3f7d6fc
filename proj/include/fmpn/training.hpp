#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/adam.hpp"
#include "fmpn/augment.hpp"
#include "fmpn/errors.hpp"
#include "fmpn/image_io.hpp"
#include "fmpn/losses.hpp"
#include "fmpn/manifest.hpp"
#include "fmpn/maskgen.hpp"
#include "fmpn/networks.hpp"
#include "fmpn/parallel.hpp"
#include "fmpn/schedule.hpp"

namespace fmpn {

/// Everything the two-stage optimization needs. Paper values are the
/// defaults; desk-scale runs override sizes through the config file or CLI.
struct TrainConfig {
    double lambda1 = 10.0;
    double lambda2 = 1.0;
    int stage1_epochs = 300;
    int stage2_epochs = 200;
    double lr_fmg_stage1 = 1e-4;
    double lr_fmg_stage2 = 1e-5;
    double lr_rest = 1e-4;
    int decay_start_stage1 = 150;
    int decay_start_stage2 = 100;
    int batch_size = 16;
    std::uint64_t seed = 1234;
    AdamConfig adam;
    double grad_clip = 0.0; // 0 = off
    int crop_size = 0;      // network input side; 0 = full aligned canvas
    double flip_prob = 0.5;
    int folds = 10;
    int fmg_base_channels = 64;
    std::string backbone = "tiny";
    nlohmann::json backbone_options = nlohmann::json{{"channels", 16}};
    std::string pretrained_cn; // optional checkpoint supplying cn.* tensors
    int checkpoint_every = 0;  // 0 = final checkpoint only

    StageSchedule stage1_schedule() const { return {lr_fmg_stage1, stage1_epochs, decay_start_stage1}; }
    StageSchedule stage2_schedule_fmg() const { return {lr_fmg_stage2, stage2_epochs, decay_start_stage2}; }
    StageSchedule stage2_schedule_rest() const { return {lr_rest, stage2_epochs, decay_start_stage2}; }

    void validate() const {
        if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("config: lambdas must be >= 0");
        if (lr_fmg_stage1 <= 0.0 || lr_fmg_stage2 <= 0.0 || lr_rest <= 0.0) {
            throw ConfigError("config: learning rates must be > 0");
        }
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
        if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("config: epoch counts must be >= 0");
        if (stage1_epochs > 0) stage1_schedule().validate();
        if (stage2_epochs > 0) stage2_schedule_fmg().validate();
        if (folds < 2) throw ConfigError("config: folds must be >= 2");
        if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("config: flip_prob must be in [0,1]");
        if (crop_size != 0 && (crop_size < 32 || crop_size % 4 != 0)) {
            throw ConfigError("config: crop_size must be 0 or a multiple of 4 that is >= 32");
        }
        if (fmg_base_channels < 1) throw ConfigError("config: fmg_base_channels must be >= 1");
        if (grad_clip < 0.0) throw ConfigError("config: grad_clip must be >= 0");
        if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be >= 0");
    }
};

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
    j = nlohmann::ordered_json{
        {"lambda1", c.lambda1},
        {"lambda2", c.lambda2},
        {"stage1_epochs", c.stage1_epochs},
        {"stage2_epochs", c.stage2_epochs},
        {"lr_fmg_stage1", c.lr_fmg_stage1},
        {"lr_fmg_stage2", c.lr_fmg_stage2},
        {"lr_rest", c.lr_rest},
        {"decay_start_stage1", c.decay_start_stage1},
        {"decay_start_stage2", c.decay_start_stage2},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"adam_beta1", c.adam.beta1},
        {"adam_beta2", c.adam.beta2},
        {"adam_eps", c.adam.eps},
        {"grad_clip", c.grad_clip},
        {"crop_size", c.crop_size},
        {"flip_prob", c.flip_prob},
        {"folds", c.folds},
        {"fmg_base_channels", c.fmg_base_channels},
        {"backbone", c.backbone},
        {"pretrained_cn", c.pretrained_cn},
        {"checkpoint_every", c.checkpoint_every},
    };
    j["backbone_options"] = nlohmann::ordered_json::parse(c.backbone_options.dump());
}

/// Partial JSON is fine: absent keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.lr_fmg_stage1 = j.value("lr_fmg_stage1", c.lr_fmg_stage1);
    c.lr_fmg_stage2 = j.value("lr_fmg_stage2", c.lr_fmg_stage2);
    c.lr_rest = j.value("lr_rest", c.lr_rest);
    c.decay_start_stage1 = j.value("decay_start_stage1", c.decay_start_stage1);
    c.decay_start_stage2 = j.value("decay_start_stage2", c.decay_start_stage2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.crop_size = j.value("crop_size", c.crop_size);
    c.flip_prob = j.value("flip_prob", c.flip_prob);
    c.folds = j.value("folds", c.folds);
    c.fmg_base_channels = j.value("fmg_base_channels", c.fmg_base_channels);
    c.backbone = j.value("backbone", c.backbone);
    if (j.contains("backbone_options")) c.backbone_options = j.at("backbone_options");
    c.pretrained_cn = j.value("pretrained_cn", c.pretrained_cn);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    return c;
}

/// Applies one "key=value" override onto the config JSON.
inline void apply_override(nlohmann::json& j, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key=value, got '" + spec + "'");
    }
    const std::string key = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value; // plain string
    }
    j[key] = parsed;
}

// ---------------------------------------------------------------------------
// Data preparation: align once, crop per step.
// ---------------------------------------------------------------------------

/// Aligned faces plus per-class mask targets at canvas resolution.
/// Alignment runs once; training crops views out of this cache.
struct PreparedData {
    std::vector<AlignedFace> faces;
    std::vector<int> labels;
    std::vector<Tensor> class_masks; // empty when training without mask guidance
    int canvas = 0;
    int crop = 0;
    int num_classes = 0;

    bool has_mask_targets() const { return !class_masks.empty(); }
};

inline int effective_crop(const TrainConfig& cfg, int canvas) {
    const int crop = cfg.crop_size > 0 ? cfg.crop_size : canvas;
    if (crop > canvas) {
        throw ConfigError("crop_size " + std::to_string(crop) + " exceeds aligned canvas " +
                          std::to_string(canvas));
    }
    if (crop % 4 != 0) {
        throw ConfigError("network input size " + std::to_string(crop) + " must be divisible by 4");
    }
    return crop;
}

/// Loads and aligns every manifest sample. When a bank is given its masks
/// are resized to the canvas so crop views stay registered with the faces.
inline PreparedData prepare_data(const DatasetManifest& manifest, const MaskBank* bank,
                                 const TrainConfig& cfg) {
    PreparedData data;
    data.canvas = manifest.image_size;
    data.crop = effective_crop(cfg, data.canvas);
    data.num_classes = manifest.num_classes();
    const LandmarkSet reference = reference_landmarks(manifest.image_size);

    data.faces.resize(manifest.samples.size());
    data.labels.resize(manifest.samples.size());
    parallel_for(manifest.samples.size(), [&](std::size_t i) {
        const FaceSample& s = manifest.samples[i];
        Tensor rgb = load_rgb(manifest.resolve(s.image_path));
        data.faces[i] = align_face(rgb, s.landmarks, reference, manifest.image_size);
        data.faces[i].label = s.label;
        data.faces[i].subject_id = s.subject_id;
        data.labels[i] = s.label;
    });

    if (bank) {
        if (static_cast<int>(bank->masks.size()) != manifest.num_classes()) {
            throw CoverageError("mask bank has " + std::to_string(bank->masks.size()) + " masks but manifest has " +
                                std::to_string(manifest.num_classes()) + " classes");
        }
        for (const auto& m : bank->masks) {
            data.class_masks.push_back(bilinear_resize(m.values, data.canvas, data.canvas));
        }
    }
    return data;
}

/// One training batch, already cropped to the network input size.
struct Batch {
    Tensor gray;   // (B,1,S,S)
    Tensor rgb;    // (B,3,S,S)
    Tensor mask;   // (B,1,S,S); empty when no targets
    std::vector<int> labels;
};

inline Batch build_batch(const PreparedData& data, const std::vector<std::size_t>& samples,
                         const std::vector<CropFlipView>& views) {
    const int B = static_cast<int>(samples.size());
    const int S = views.front().crop;
    Batch batch;
    batch.gray = Tensor({B, 1, S, S});
    batch.rgb = Tensor({B, 3, S, S});
    if (data.has_mask_targets()) batch.mask = Tensor({B, 1, S, S});
    batch.labels.resize(static_cast<std::size_t>(B));
    const std::size_t plane = static_cast<std::size_t>(S) * S;
    parallel_for(samples.size(), [&](std::size_t i) {
        const AlignedFace& face = data.faces[samples[i]];
        const CropFlipView& v = views[i];
        Tensor g = apply_view(face.gray, v);
        Tensor c = apply_view(face.rgb, v);
        std::copy(g.data(), g.data() + g.size(), batch.gray.data() + i * plane);
        std::copy(c.data(), c.data() + c.size(), batch.rgb.data() + i * 3 * plane);
        if (data.has_mask_targets()) {
            Tensor m = apply_view(data.class_masks[static_cast<std::size_t>(data.labels[samples[i]])], v);
            std::copy(m.data(), m.data() + m.size(), batch.mask.data() + i * plane);
        }
        batch.labels[i] = data.labels[samples[i]];
    });
    return batch;
}

// ---------------------------------------------------------------------------
// Stage 1: FMG alone against the pseudo ground-truth masks.
// ---------------------------------------------------------------------------

struct Stage1Epoch {
    int epoch = 0;
    double mean_lg = 0.0;
    double lr = 0.0;
};

namespace detail {
constexpr std::uint64_t kTagStage1 = 0x51A6E101;
constexpr std::uint64_t kTagStage2 = 0x51A6E102;

inline std::vector<std::size_t> epoch_order(std::vector<std::size_t> indices, Rng& rng) {
    rng.shuffle(indices);
    return indices;
}
} // namespace detail

/// Trains only FMG for cfg.stage1_epochs epochs with the stage-1 schedule.
/// The training list is reshuffled at the start of every epoch.
inline std::vector<Stage1Epoch> train_stage1(FmgParams& fmg, const PreparedData& data,
                                             const std::vector<std::size_t>& subset,
                                             const TrainConfig& cfg) {
    if (!data.has_mask_targets()) {
        throw CoverageError("train_stage1: mask targets are required (no bank prepared)");
    }
    AdamOptimizer opt(cfg.adam);
    fmg.visit_params("fmg", [&](const std::string&, Tensor& w, Tensor& g) { opt.attach(w, g); });
    const StageSchedule sched = cfg.stage1_schedule();
    const AugmentPolicy policy{data.crop, cfg.flip_prob};

    std::vector<Stage1Epoch> history;
    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
        const double lr = lr_at(sched, epoch);
        Rng rng(mix_seed(mix_seed(cfg.seed, detail::kTagStage1), static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = detail::epoch_order(subset, rng);
        double lg_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> samples(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<CropFlipView> views;
            views.reserve(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i) views.push_back(sample_view(rng, data.canvas, policy));
            Batch batch = build_batch(data, samples, views);

            Tensor mask = fmg_forward(fmg, batch.gray, true);
            const double lg = mask_loss(mask, batch.mask);
            fmg.visit_params("fmg", [](const std::string&, Tensor&, Tensor& g) { g.fill(0.0); });
            fmg_backward(fmg, mask_loss_grad(mask, batch.mask));
            opt.step(lr, cfg.grad_clip);
            lg_sum += lg * static_cast<double>(samples.size());
        }
        history.push_back({epoch, lg_sum / static_cast<double>(order.size()), lr});
    }
    return history;
}

// ---------------------------------------------------------------------------
// Stage 2: joint optimization of the whole framework (Full / NoLG), or the
// plain classifier baseline.
// ---------------------------------------------------------------------------

struct JointEpoch {
    int epoch = 0;
    double mean_lg = 0.0;
    double mean_lc = 0.0;
    double mean_total = 0.0;
    double lr_fmg = 0.0;
    double lr_rest = 0.0;
    double train_acc = 0.0;
};

/// Jointly trains the framework for cfg.stage2_epochs. Gradients from the
/// total loss reach FMG both through the mask loss and through the fused
/// classification path. FMG and the rest use separate schedules.
inline std::vector<JointEpoch> train_joint(FmpnModel& model, const PreparedData& data,
                                           const std::vector<std::size_t>& subset,
                                           const TrainConfig& cfg,
                                           const std::function<void(int)>& on_epoch_end = {}) {
    const bool baseline = model.variant == PipelineVariant::BaselineCnn;
    const bool use_mask_loss = cfg.lambda1 > 0.0 && data.has_mask_targets() && !baseline;

    AdamOptimizer opt_fmg(cfg.adam);
    AdamOptimizer opt_rest(cfg.adam);
    if (!baseline) {
        model.fmg.visit_params("fmg", [&](const std::string&, Tensor& w, Tensor& g) { opt_fmg.attach(w, g); });
        model.pfn.visit_params("pfn", [&](const std::string&, Tensor& w, Tensor& g) { opt_rest.attach(w, g); });
    }
    model.cn.visit_params("cn", [&](const std::string&, Tensor& w, Tensor& g) { opt_rest.attach(w, g); });

    const StageSchedule sched_fmg = cfg.stage2_schedule_fmg();
    const StageSchedule sched_rest = cfg.stage2_schedule_rest();
    const AugmentPolicy policy{data.crop, cfg.flip_prob};

    std::vector<JointEpoch> history;
    for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
        const double lr_fmg = lr_at(sched_fmg, epoch);
        const double lr_rest = lr_at(sched_rest, epoch);
        Rng rng(mix_seed(mix_seed(cfg.seed, detail::kTagStage2), static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = detail::epoch_order(subset, rng);
        double lg_sum = 0.0, lc_sum = 0.0;
        std::int64_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> samples(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<CropFlipView> views;
            views.reserve(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i) views.push_back(sample_view(rng, data.canvas, policy));
            Batch batch = build_batch(data, samples, views);

            double lg = 0.0, lc = 0.0;
            Tensor logits;
            model.zero_grad();
            if (baseline) {
                logits = cn_forward(model.cn, batch.rgb, true);
                lc = classification_loss(logits, batch.labels);
                Tensor dlogits = classification_loss_grad(logits, batch.labels);
                for (std::int64_t i = 0; i < dlogits.size(); ++i) dlogits[i] *= cfg.lambda2;
                cn_backward(model.cn, dlogits);
            } else {
                Tensor mask = fmg_forward(model.fmg, batch.gray, true);
                if (use_mask_loss) lg = mask_loss(mask, batch.mask);
                Tensor fused = pfn_fuse(model.pfn, batch.rgb, batch.gray, mask);
                logits = cn_forward(model.cn, fused, true);
                lc = classification_loss(logits, batch.labels);

                Tensor dlogits = classification_loss_grad(logits, batch.labels);
                for (std::int64_t i = 0; i < dlogits.size(); ++i) dlogits[i] *= cfg.lambda2;
                Tensor dfused = cn_backward(model.cn, dlogits);
                PfnGrads pg = pfn_backward(model.pfn, dfused);
                Tensor dmask = pg.d_mask;
                if (use_mask_loss) {
                    Tensor dm = mask_loss_grad(mask, batch.mask);
                    for (std::int64_t i = 0; i < dmask.size(); ++i) dmask[i] += cfg.lambda1 * dm[i];
                }
                fmg_backward(model.fmg, dmask);
            }
            if (!baseline) opt_fmg.step(lr_fmg, cfg.grad_clip);
            opt_rest.step(lr_rest, cfg.grad_clip);

            const int B = logits.dim(0), K = logits.dim(1);
            for (int b = 0; b < B; ++b) {
                int best = 0;
                const double* row = logits.data() + static_cast<std::size_t>(b) * K;
                for (int k = 1; k < K; ++k) {
                    if (row[k] > row[best]) best = k;
                }
                if (best == batch.labels[static_cast<std::size_t>(b)]) ++correct;
            }
            lg_sum += lg * static_cast<double>(samples.size());
            lc_sum += lc * static_cast<double>(samples.size());
        }
        const double n = static_cast<double>(order.size());
        JointEpoch e;
        e.epoch = epoch;
        e.mean_lg = lg_sum / n;
        e.mean_lc = lc_sum / n;
        e.mean_total = total_loss(e.mean_lg, e.mean_lc, cfg.lambda1, cfg.lambda2);
        e.lr_fmg = lr_fmg;
        e.lr_rest = lr_rest;
        e.train_acc = static_cast<double>(correct) / n;
        history.push_back(e);
        if (on_epoch_end) on_epoch_end(epoch);
    }
    return history;
}

/// History CSV with the fixed schema. Stage-1 rows leave the joint-only
/// columns empty; stage-2 epoch indices restart at 0.
inline void write_history_csv(const std::string& path, const std::vector<Stage1Epoch>& stage1,
                              const std::vector<JointEpoch>& joint) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history: " + path);
    out << "epoch,lG,lC,l_total,lr_fmg,lr_rest,train_acc\n";
    out.precision(17);
    for (const auto& e : stage1) {
        out << e.epoch << "," << e.mean_lg << ",,," << e.lr << ",,\n";
    }
    for (const auto& e : joint) {
        out << e.epoch << "," << e.mean_lg << "," << e.mean_lc << "," << e.mean_total << "," << e.lr_fmg
            << "," << e.lr_rest << "," << e.train_acc << "\n";
    }
}

} // namespace fmpn
