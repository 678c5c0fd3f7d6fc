#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/align.hpp"
#include "fmpn/errors.hpp"
#include "fmpn/image_io.hpp"
#include "fmpn/manifest.hpp"
#include "fmpn/parallel.hpp"
#include "fmpn/random.hpp"
#include "fmpn/tensor.hpp"

namespace fmpn {

/// An aligned expressive/neutral image pair. The key gives the pair a
/// canonical identity so aggregate results do not depend on list order.
struct FacePair {
    std::string key;
    Tensor expressive; // (H, W) gray, aligned
    Tensor neutral;    // (H, W) gray, aligned
};

/// Pseudo ground-truth facial-motion mask of one expression class.
struct MotionMask {
    Tensor values;        // (H, W) in [0,1]
    int class_index = -1;
    int source_count = 0; // contributing pairs
};

/// One mask per class, all at the same resolution.
struct MaskBank {
    std::vector<MotionMask> masks; // indexed by class
    std::vector<std::string> class_names;
    std::string provenance;

    const MotionMask& mask_for(int class_index) const {
        return masks[static_cast<std::size_t>(class_index)];
    }
};

/// Per-pixel mean of |expressive - neutral| over the pair list, accumulated
/// in list order. Inputs in [0,1] keep the output in [0,1].
inline Tensor mean_abs_diff(const std::vector<FacePair>& pairs) {
    if (pairs.empty()) throw ArgumentError("mean_abs_diff: empty pair list");
    const Tensor& first = pairs.front().expressive;
    if (first.rank() != 2) throw ShapeError("mean_abs_diff: expected rank-2 images");
    Tensor acc({first.dim(0), first.dim(1)});
    for (const auto& p : pairs) {
        require_same_shape(p.expressive, acc, "mean_abs_diff");
        require_same_shape(p.neutral, acc, "mean_abs_diff");
        const double* e = p.expressive.data();
        const double* n = p.neutral.data();
        double* a = acc.data();
        const std::int64_t size = acc.size();
        for (std::int64_t i = 0; i < size; ++i) a[i] += std::fabs(e[i] - n[i]);
    }
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] *= inv;
    return acc;
}

/// Histogram equalization on a 256-bin quantization of [0,1]:
/// out = (cdf(level) - cdf_min) / (HW - cdf_min), already in [0,1].
/// A single-level (constant) image maps to all zeros.
inline Tensor equalize_histogram(const Tensor& image) {
    if (image.rank() != 2) throw ShapeError("equalize_histogram: expected rank-2 image");
    const std::int64_t n = image.size();
    std::vector<std::int64_t> hist(256, 0);
    std::vector<int> levels(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = image[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ArgumentError("equalize_histogram: value " + std::to_string(v) + " outside [0,1]");
        }
        const int level = to_u8(v);
        levels[static_cast<std::size_t>(i)] = level;
        ++hist[static_cast<std::size_t>(level)];
    }
    std::vector<std::int64_t> cdf(256, 0);
    std::int64_t running = 0;
    std::int64_t cdf_min = 0;
    bool seen = false;
    for (int l = 0; l < 256; ++l) {
        running += hist[static_cast<std::size_t>(l)];
        cdf[static_cast<std::size_t>(l)] = running;
        if (!seen && hist[static_cast<std::size_t>(l)] > 0) {
            cdf_min = running;
            seen = true;
        }
    }
    Tensor out({image.dim(0), image.dim(1)});
    const std::int64_t denom = n - cdf_min;
    if (denom <= 0) return out; // single occupied level: degenerate, all zeros
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = static_cast<double>(cdf[static_cast<std::size_t>(levels[static_cast<std::size_t>(i)])] - cdf_min) /
                 static_cast<double>(denom);
    }
    return out;
}

/// Pseudo ground-truth mask of one class: histogram-equalized mean absolute
/// difference of its aligned pairs. Pairs are first sorted by key so the
/// accumulation order (and thus the result) is independent of input order.
inline MotionMask compute_class_mask(std::vector<FacePair> pairs, int class_index) {
    if (pairs.empty()) throw ArgumentError("compute_class_mask: empty pair list");
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const FacePair& a, const FacePair& b) { return a.key < b.key; });
    MotionMask mask;
    mask.class_index = class_index;
    mask.source_count = static_cast<int>(pairs.size());
    mask.values = equalize_histogram(mean_abs_diff(pairs));
    return mask;
}

/// Test utility: compute_class_mask must be bit-exactly invariant to pair
/// order.
inline bool mask_order_invariance_check(const std::vector<FacePair>& pairs, int trials = 10,
                                        std::uint64_t seed = 0x5EED) {
    const MotionMask reference = compute_class_mask(pairs, 0);
    Rng rng(seed);
    std::vector<FacePair> shuffled = pairs;
    for (int t = 0; t < trials; ++t) {
        rng.shuffle(shuffled);
        if (!bit_equal(compute_class_mask(shuffled, 0).values, reference.values)) return false;
    }
    return true;
}

/// Aligns every expressive/neutral pair in the manifest and builds one mask
/// per class. The neutral face is aligned with the landmarks of its paired
/// expressive row (one landmark set per manifest row).
inline MaskBank generate_mask_bank(const DatasetManifest& manifest, const LandmarkSet& reference,
                                   std::string provenance = "") {
    struct PairJob {
        std::size_t sample;
        int label;
    };
    std::vector<PairJob> jobs;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        if (manifest.samples[i].neutral_path) jobs.push_back({i, manifest.samples[i].label});
    }

    std::vector<FacePair> aligned(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t j) {
        const FaceSample& s = manifest.samples[jobs[j].sample];
        const Tensor expressive = load_rgb(manifest.resolve(s.image_path));
        const Tensor neutral = load_rgb(manifest.resolve(*s.neutral_path));
        aligned[j].key = s.image_path;
        aligned[j].expressive = align_face(expressive, s.landmarks, reference, manifest.image_size).gray;
        aligned[j].neutral = align_face(neutral, s.landmarks, reference, manifest.image_size).gray;
    });

    std::vector<std::vector<FacePair>> per_class(static_cast<std::size_t>(manifest.num_classes()));
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        per_class[static_cast<std::size_t>(jobs[j].label)].push_back(std::move(aligned[j]));
    }

    MaskBank bank;
    bank.class_names = manifest.class_names;
    bank.provenance = provenance;
    for (int k = 0; k < manifest.num_classes(); ++k) {
        auto& pairs = per_class[static_cast<std::size_t>(k)];
        if (pairs.empty()) {
            throw CoverageError("generate_mask_bank: class '" + manifest.class_names[static_cast<std::size_t>(k)] +
                                "' has no expressive/neutral pairs");
        }
        bank.masks.push_back(compute_class_mask(std::move(pairs), k));
    }
    return bank;
}

/// On-disk layout: one 8-bit grayscale PNG per class plus bank.json.
inline void save_mask_bank(const MaskBank& bank, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["class_names"] = bank.class_names;
    j["provenance"] = bank.provenance;
    j["height"] = bank.masks.front().values.dim(0);
    j["width"] = bank.masks.front().values.dim(1);
    std::vector<int> counts;
    for (const auto& m : bank.masks) counts.push_back(m.source_count);
    j["source_counts"] = counts;
    std::ofstream meta(std::filesystem::path(dir) / "bank.json");
    if (!meta) throw IoError("cannot write bank.json under " + dir);
    meta << j.dump(2) << "\n";
    for (std::size_t k = 0; k < bank.masks.size(); ++k) {
        const std::string file = (std::filesystem::path(dir) / (bank.class_names[k] + ".png")).string();
        save_gray_png(file, bank.masks[k].values);
    }
}

/// Loads and validates a mask bank: every class must have its PNG and all
/// masks must share one resolution.
inline MaskBank load_mask_bank(const std::string& dir) {
    std::ifstream meta(std::filesystem::path(dir) / "bank.json");
    if (!meta) throw IoError("cannot open bank.json under " + dir);
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bank.json: " + std::string(e.what()));
    }
    MaskBank bank;
    bank.class_names = j.at("class_names").get<std::vector<std::string>>();
    bank.provenance = j.value("provenance", "");
    const int h = j.at("height").get<int>();
    const int w = j.at("width").get<int>();
    const auto counts = j.at("source_counts").get<std::vector<int>>();
    if (counts.size() != bank.class_names.size()) {
        throw ValidationError("bank.json: source_counts/class_names length mismatch");
    }
    for (std::size_t k = 0; k < bank.class_names.size(); ++k) {
        const std::string file = (std::filesystem::path(dir) / (bank.class_names[k] + ".png")).string();
        if (!std::filesystem::exists(file)) {
            throw CoverageError("mask bank incomplete: missing '" + bank.class_names[k] + ".png'");
        }
        MotionMask m;
        m.class_index = static_cast<int>(k);
        m.source_count = counts[k];
        m.values = load_gray(file);
        if (m.values.dim(0) != h || m.values.dim(1) != w) {
            throw ValidationError("mask bank: '" + bank.class_names[k] + ".png' has inconsistent size");
        }
        bank.masks.push_back(std::move(m));
    }
    return bank;
}

} // namespace fmpn
