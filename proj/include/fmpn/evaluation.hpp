#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/checkpoint.hpp"
#include "fmpn/folds.hpp"
#include "fmpn/image_io.hpp"
#include "fmpn/maskgen.hpp"
#include "fmpn/networks.hpp"
#include "fmpn/training.hpp"

namespace fmpn {

/// Class prediction for one aligned face: center crop to the network input
/// size, evaluation-mode forward, argmax with ties broken toward the lowest
/// class index.
inline int predict(FmpnModel& model, const AlignedFace& face) {
    const CropFlipView view = center_view(face.gray.dim(0), model.input_size);
    Tensor gray({1, 1, model.input_size, model.input_size});
    Tensor rgb({1, 3, model.input_size, model.input_size});
    {
        Tensor g = apply_view(face.gray, view);
        Tensor c = apply_view(face.rgb, view);
        std::copy(g.data(), g.data() + g.size(), gray.data());
        std::copy(c.data(), c.data() + c.size(), rgb.data());
    }
    Tensor logits;
    if (model.variant == PipelineVariant::BaselineCnn) {
        logits = cn_forward(model.cn, rgb, false);
    } else {
        Tensor mask = fmg_forward(model.fmg, gray, false);
        Tensor fused = pfn_fuse(model.pfn, rgb, gray, mask);
        logits = cn_forward(model.cn, fused, false);
    }
    int best = 0;
    for (int k = 1; k < logits.dim(1); ++k) {
        if (logits[k] > logits[best]) best = k;
    }
    return best;
}

/// Batched evaluation of a sample subset; center crops, eval mode.
inline std::vector<int> evaluate_indices(FmpnModel& model, const PreparedData& data,
                                         const std::vector<std::size_t>& indices, int batch_size = 32) {
    std::vector<int> preds(indices.size(), -1);
    const CropFlipView view = center_view(data.canvas, data.crop);
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::size_t> samples(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<CropFlipView> views(samples.size(), view);
        Batch batch = build_batch(data, samples, views);
        Tensor logits;
        if (model.variant == PipelineVariant::BaselineCnn) {
            logits = cn_forward(model.cn, batch.rgb, false);
        } else {
            Tensor mask = fmg_forward(model.fmg, batch.gray, false);
            Tensor fused = pfn_fuse(model.pfn, batch.rgb, batch.gray, mask);
            logits = cn_forward(model.cn, fused, false);
        }
        const int B = logits.dim(0), K = logits.dim(1);
        for (int b = 0; b < B; ++b) {
            const double* row = logits.data() + static_cast<std::size_t>(b) * K;
            int best = 0;
            for (int k = 1; k < K; ++k) {
                if (row[k] > row[best]) best = k;
            }
            preds[start + static_cast<std::size_t>(b)] = best;
        }
    }
    return preds;
}

/// K x K counts, cell (i, j) = samples with true class i predicted as j.
inline std::vector<long long> confusion_matrix(const std::vector<int>& preds,
                                               const std::vector<int>& labels, int num_classes) {
    if (preds.size() != labels.size()) {
        throw ArgumentError("confusion_matrix: predictions/labels length mismatch");
    }
    std::vector<long long> m(static_cast<std::size_t>(num_classes) * num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes || preds[i] < 0 || preds[i] >= num_classes) {
            throw ArgumentError("confusion_matrix: entry out of range at index " + std::to_string(i));
        }
        ++m[static_cast<std::size_t>(labels[i]) * num_classes + preds[i]];
    }
    return m;
}

/// Cross-validation result. mean_accuracy is sample-weighted; the unweighted
/// fold mean is recorded alongside since the paper does not say which it
/// reports.
struct EvalReport {
    int k = 0;
    std::vector<double> per_fold_accuracy;
    std::vector<int> fold_sizes; // held-out sample counts
    double mean_accuracy = 0.0;
    double mean_accuracy_unweighted = 0.0;
    std::vector<long long> confusion;  // K*K, true x predicted
    std::vector<double> normalized;    // rows sum to 1; all-zero rows flagged
    std::vector<int> zero_rows;
    std::vector<std::string> class_names;
    std::string variant = "full";
    std::string config_digest;

    int num_classes() const { return static_cast<int>(class_names.size()); }
};

namespace detail {

inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline std::string config_digest(const TrainConfig& cfg, int k, const std::string& variant) {
    nlohmann::ordered_json j;
    to_json(j, cfg);
    j["cv_folds"] = k;
    j["variant"] = variant;
    return fnv1a_hex(j.dump());
}

} // namespace detail

inline EvalReport build_report(int k, const std::vector<double>& fold_acc,
                               const std::vector<int>& fold_sizes, std::vector<long long> confusion,
                               std::vector<std::string> class_names, const std::string& variant,
                               const std::string& digest) {
    EvalReport r;
    r.k = k;
    r.per_fold_accuracy = fold_acc;
    r.fold_sizes = fold_sizes;
    r.confusion = std::move(confusion);
    r.class_names = std::move(class_names);
    r.variant = variant;
    r.config_digest = digest;

    double weighted = 0.0, unweighted = 0.0;
    long long total = 0;
    for (std::size_t f = 0; f < fold_acc.size(); ++f) {
        weighted += fold_acc[f] * fold_sizes[f];
        unweighted += fold_acc[f];
        total += fold_sizes[f];
    }
    r.mean_accuracy = total > 0 ? weighted / static_cast<double>(total) : 0.0;
    r.mean_accuracy_unweighted = fold_acc.empty() ? 0.0 : unweighted / static_cast<double>(fold_acc.size());

    const int K = r.num_classes();
    r.normalized.assign(static_cast<std::size_t>(K) * K, 0.0);
    for (int i = 0; i < K; ++i) {
        long long row_sum = 0;
        for (int j = 0; j < K; ++j) row_sum += r.confusion[static_cast<std::size_t>(i) * K + j];
        if (row_sum == 0) {
            r.zero_rows.push_back(i);
            continue;
        }
        for (int j = 0; j < K; ++j) {
            r.normalized[static_cast<std::size_t>(i) * K + j] =
                static_cast<double>(r.confusion[static_cast<std::size_t>(i) * K + j]) /
                static_cast<double>(row_sum);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// The cross-validation protocol.
// ---------------------------------------------------------------------------

namespace detail {

/// Trains and tests one model per fold. `bank` may be null (no mask
/// guidance). Stage 1 runs only for the Full variant when a bank exists.
inline EvalReport run_protocol(const DatasetManifest& manifest, const MaskBank* bank,
                               const TrainConfig& cfg, int k, PipelineVariant variant) {
    cfg.validate();
    const FoldPlan plan = plan_folds(manifest, k);
    const PreparedData data = prepare_data(manifest, bank, cfg);

    std::vector<double> fold_acc;
    std::vector<int> fold_sizes;
    std::vector<long long> confusion(static_cast<std::size_t>(manifest.num_classes()) * manifest.num_classes(), 0);

    for (int fold = 0; fold < k; ++fold) {
        auto [train_idx, test_idx] = fold_split(plan, fold);
        assert_subject_disjoint(manifest, train_idx, test_idx);

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = mix_seed(cfg.seed, 0xF01D0000ULL + static_cast<std::uint64_t>(fold));

        BackboneDescriptor desc{cfg.backbone, data.crop, manifest.num_classes(), cfg.backbone_options};
        FmpnModel model = init_model(FmgArch{cfg.fmg_base_channels}, desc, manifest.class_names,
                                     fold_cfg.seed, variant);
        if (!cfg.pretrained_cn.empty()) load_pretrained_cn(cfg.pretrained_cn, model);

        if (variant == PipelineVariant::Full && bank != nullptr && fold_cfg.stage1_epochs > 0) {
            train_stage1(model.fmg, data, train_idx, fold_cfg);
        }
        train_joint(model, data, train_idx, fold_cfg);

        const std::vector<int> preds = evaluate_indices(model, data, test_idx);
        long long correct = 0;
        std::vector<int> truths;
        truths.reserve(test_idx.size());
        for (std::size_t i = 0; i < test_idx.size(); ++i) {
            truths.push_back(data.labels[test_idx[i]]);
            if (preds[i] == data.labels[test_idx[i]]) ++correct;
        }
        const auto fold_conf = confusion_matrix(preds, truths, manifest.num_classes());
        for (std::size_t i = 0; i < confusion.size(); ++i) confusion[i] += fold_conf[i];
        fold_acc.push_back(test_idx.empty() ? 0.0
                                            : static_cast<double>(correct) / static_cast<double>(test_idx.size()));
        fold_sizes.push_back(static_cast<int>(test_idx.size()));
    }

    return build_report(k, fold_acc, fold_sizes, std::move(confusion), manifest.class_names,
                        variant_name(variant), config_digest(cfg, k, variant_name(variant)));
}

} // namespace detail

/// Subject-independent k-fold cross-validation of the full framework.
inline EvalReport cross_validate(const DatasetManifest& manifest, const MaskBank& bank,
                                 const TrainConfig& cfg, int k) {
    return detail::run_protocol(manifest, &bank, cfg, k, PipelineVariant::Full);
}

/// Ablation rows: `full` is cross_validate; `no_lG` keeps the architecture
/// but removes the mask guidance (lambda1 = 0, no stage-1 pretraining);
/// `baseline_cnn` feeds aligned RGB straight into CN.
inline EvalReport run_ablation(const DatasetManifest& manifest, const MaskBank& bank,
                               const TrainConfig& cfg, PipelineVariant variant) {
    switch (variant) {
        case PipelineVariant::Full:
            return detail::run_protocol(manifest, &bank, cfg, cfg.folds, PipelineVariant::Full);
        case PipelineVariant::NoLG: {
            TrainConfig c = cfg;
            c.lambda1 = 0.0;
            c.stage1_epochs = 0;
            return detail::run_protocol(manifest, nullptr, c, cfg.folds, PipelineVariant::NoLG);
        }
        case PipelineVariant::BaselineCnn:
            return detail::run_protocol(manifest, nullptr, cfg, cfg.folds, PipelineVariant::BaselineCnn);
    }
    throw ConfigError("run_ablation: bad variant");
}

/// Reuses a mask bank built on another corpus as the l_G targets for this
/// one. Class names are reconciled through an explicit mapping (target ->
/// source); identical names map to themselves. FMG stage-1 pretraining is
/// skipped in this protocol.
inline EvalReport transfer_masks(const MaskBank& source_bank, const DatasetManifest& target_manifest,
                                 const TrainConfig& cfg,
                                 const std::map<std::string, std::string>& class_map = {}) {
    MaskBank mapped;
    mapped.class_names = target_manifest.class_names;
    mapped.provenance = source_bank.provenance + " (transferred)";
    for (int k = 0; k < target_manifest.num_classes(); ++k) {
        const std::string& target_name = target_manifest.class_names[static_cast<std::size_t>(k)];
        auto it = class_map.find(target_name);
        const std::string source_name = it != class_map.end() ? it->second : target_name;
        auto pos = std::find(source_bank.class_names.begin(), source_bank.class_names.end(), source_name);
        if (pos == source_bank.class_names.end()) {
            throw MappingError("transfer_masks: no source mask for target class '" + target_name + "'");
        }
        MotionMask m = source_bank.masks[static_cast<std::size_t>(pos - source_bank.class_names.begin())];
        m.class_index = k;
        mapped.masks.push_back(std::move(m));
    }
    TrainConfig c = cfg;
    c.stage1_epochs = 0;
    return detail::run_protocol(target_manifest, &mapped, c, cfg.folds, PipelineVariant::Full);
}

// ---------------------------------------------------------------------------
// Report serialization: JSON, CSV, PNG heatmap.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["k"] = r.k;
    j["variant"] = r.variant;
    j["class_names"] = r.class_names;
    j["per_fold_accuracy"] = r.per_fold_accuracy;
    j["fold_sizes"] = r.fold_sizes;
    j["mean_accuracy"] = r.mean_accuracy;
    j["mean_accuracy_unweighted"] = r.mean_accuracy_unweighted;
    const int K = r.num_classes();
    nlohmann::ordered_json conf = nlohmann::ordered_json::array();
    nlohmann::ordered_json norm = nlohmann::ordered_json::array();
    for (int i = 0; i < K; ++i) {
        nlohmann::ordered_json crow = nlohmann::ordered_json::array();
        nlohmann::ordered_json nrow = nlohmann::ordered_json::array();
        for (int jj = 0; jj < K; ++jj) {
            crow.push_back(r.confusion[static_cast<std::size_t>(i) * K + jj]);
            nrow.push_back(r.normalized[static_cast<std::size_t>(i) * K + jj]);
        }
        conf.push_back(crow);
        norm.push_back(nrow);
    }
    j["confusion"] = conf;
    j["normalized_confusion"] = norm;
    j["zero_rows"] = r.zero_rows;
    j["config_digest"] = r.config_digest;
    return j;
}

inline void write_report_json(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << report_to_json(r).dump(2) << "\n";
}

inline void write_confusion_csv(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write confusion csv: " + path);
    out << "true\\pred";
    for (const auto& name : r.class_names) out << "," << name;
    out << "\n";
    out.precision(17);
    const int K = r.num_classes();
    for (int i = 0; i < K; ++i) {
        out << r.class_names[static_cast<std::size_t>(i)];
        for (int j = 0; j < K; ++j) out << "," << r.normalized[static_cast<std::size_t>(i) * K + j];
        out << "\n";
    }
}

/// Renders the normalized confusion matrix as a PNG heatmap (one colored
/// cell per entry, thin grid lines).
inline void write_confusion_png(const EvalReport& r, const std::string& path, int cell = 28) {
    const int K = r.num_classes();
    const int side = K * cell + (K + 1);
    Tensor img({3, side, side});
    auto colormap = [](double v, double& red, double& green, double& blue) {
        // two-segment gradient, dark violet -> teal -> yellow
        const double s0[3] = {0.267, 0.005, 0.329};
        const double s1[3] = {0.128, 0.567, 0.551};
        const double s2[3] = {0.993, 0.906, 0.144};
        if (v < 0.5) {
            const double t = v / 0.5;
            red = s0[0] + t * (s1[0] - s0[0]);
            green = s0[1] + t * (s1[1] - s0[1]);
            blue = s0[2] + t * (s1[2] - s0[2]);
        } else {
            const double t = (v - 0.5) / 0.5;
            red = s1[0] + t * (s2[0] - s1[0]);
            green = s1[1] + t * (s2[1] - s1[1]);
            blue = s1[2] + t * (s2[2] - s1[2]);
        }
    };
    // grid background
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            img.at(0, y, x) = img.at(1, y, x) = img.at(2, y, x) = 1.0;
        }
    }
    for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) {
            double red, green, blue;
            colormap(r.normalized[static_cast<std::size_t>(i) * K + j], red, green, blue);
            const int y0 = 1 + i * (cell + 1);
            const int x0 = 1 + j * (cell + 1);
            for (int y = y0; y < y0 + cell; ++y) {
                for (int x = x0; x < x0 + cell; ++x) {
                    img.at(0, y, x) = red;
                    img.at(1, y, x) = green;
                    img.at(2, y, x) = blue;
                }
            }
        }
    }
    save_rgb_png(path, img);
}

} // namespace fmpn
