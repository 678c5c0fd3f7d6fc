#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
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
#include "fmpn/similarity.hpp"

namespace fmpn {

/// Axis-aligned rectangle in canonical (aligned-frame) pixel coordinates.
struct DeformRect {
    int x0 = 0, y0 = 0, w = 0, h = 0;

    bool contains(int x, int y) const { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
};

/// Recipe for a deterministic face-like corpus. Each class deforms the
/// neutral face only inside its own rectangles, which is exactly the
/// locality the mask pipeline is supposed to recover.
struct SynthSpec {
    int num_classes = 7;
    int subjects = 20;
    int samples_per_subject_per_class = 3;
    int image_size = 64;
    std::vector<std::string> class_names;
    std::vector<std::vector<DeformRect>> region_layout; // one rect set per class
    double noise_sigma = 0.02;
    double deform_amplitude = 0.35;
    double pose_jitter = 1.0; // scales the per-subject pose perturbation
    std::uint64_t seed = 20230907;

    void validate() const {
        if (num_classes < 1) throw ConfigError("synth: num_classes must be >= 1");
        if (subjects < 1) throw ConfigError("synth: subjects must be >= 1");
        if (samples_per_subject_per_class < 0) throw ConfigError("synth: samples must be >= 0");
        if (image_size < 32) throw ConfigError("synth: image_size must be >= 32");
        if (noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be >= 0");
        if (static_cast<int>(class_names.size()) != num_classes ||
            static_cast<int>(region_layout.size()) != num_classes) {
            throw ConfigError("synth: class_names/region_layout must match num_classes");
        }
        for (int k = 0; k < num_classes; ++k) {
            for (const auto& r : region_layout[static_cast<std::size_t>(k)]) {
                if (r.w < 2 || r.h < 2 || r.x0 < 0 || r.y0 < 0 || r.x0 + r.w > image_size ||
                    r.y0 + r.h > image_size) {
                    throw ConfigError("synth: rectangle out of bounds in class '" +
                                      class_names[static_cast<std::size_t>(k)] + "'");
                }
            }
            for (int other = 0; other < k; ++other) {
                const auto& a = region_layout[static_cast<std::size_t>(k)];
                const auto& b = region_layout[static_cast<std::size_t>(other)];
                bool identical = a.size() == b.size();
                for (std::size_t i = 0; identical && i < a.size(); ++i) {
                    identical = a[i].x0 == b[i].x0 && a[i].y0 == b[i].y0 && a[i].w == b[i].w && a[i].h == b[i].h;
                }
                if (identical) {
                    throw ConfigError("synth: classes '" + class_names[static_cast<std::size_t>(k)] + "' and '" +
                                      class_names[static_cast<std::size_t>(other)] + "' share an identical layout");
                }
            }
        }
    }
};

namespace detail {
inline DeformRect frac_rect(double fx, double fy, double fw, double fh, int s) {
    return {static_cast<int>(std::lround(fx * s)), static_cast<int>(std::lround(fy * s)),
            static_cast<int>(std::lround(fw * s)), static_cast<int>(std::lround(fh * s))};
}
} // namespace detail

/// Seven-expression default: rectangle placement loosely follows where the
/// corresponding muscles move (brows, eyes, nose, mouth corners).
inline SynthSpec default_synth_spec(int image_size = 64) {
    SynthSpec spec;
    spec.image_size = image_size;
    spec.class_names = {"anger", "contempt", "disgust", "fear", "happiness", "sadness", "surprise"};
    const int s = image_size;
    using detail::frac_rect;
    spec.region_layout = {
        {frac_rect(0.28, 0.22, 0.44, 0.12, s)},                                     // anger: brows
        {frac_rect(0.20, 0.66, 0.22, 0.16, s)},                                     // contempt: left mouth corner
        {frac_rect(0.36, 0.46, 0.28, 0.16, s)},                                     // disgust: nose wrinkle
        {frac_rect(0.18, 0.34, 0.26, 0.14, s), frac_rect(0.56, 0.34, 0.26, 0.14, s)}, // fear: eyes
        {frac_rect(0.28, 0.64, 0.44, 0.22, s)},                                     // happiness: mouth
        {frac_rect(0.22, 0.72, 0.18, 0.14, s), frac_rect(0.60, 0.72, 0.18, 0.14, s)}, // sadness: corners
        {frac_rect(0.34, 0.60, 0.32, 0.26, s), frac_rect(0.28, 0.20, 0.44, 0.10, s)}, // surprise: jaw + brows
    };
    return spec;
}

inline nlohmann::ordered_json synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::ordered_json j;
    j["num_classes"] = spec.num_classes;
    j["subjects"] = spec.subjects;
    j["samples_per_subject_per_class"] = spec.samples_per_subject_per_class;
    j["image_size"] = spec.image_size;
    j["class_names"] = spec.class_names;
    nlohmann::ordered_json layout = nlohmann::ordered_json::array();
    for (const auto& rects : spec.region_layout) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rects) arr.push_back({{"x0", r.x0}, {"y0", r.y0}, {"w", r.w}, {"h", r.h}});
        layout.push_back(arr);
    }
    j["region_layout"] = layout;
    j["noise_sigma"] = spec.noise_sigma;
    j["deform_amplitude"] = spec.deform_amplitude;
    j["pose_jitter"] = spec.pose_jitter;
    j["seed"] = spec.seed;
    return j;
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec spec = default_synth_spec(j.value("image_size", 64));
    spec.num_classes = j.value("num_classes", spec.num_classes);
    spec.subjects = j.value("subjects", spec.subjects);
    spec.samples_per_subject_per_class =
        j.value("samples_per_subject_per_class", spec.samples_per_subject_per_class);
    if (j.contains("class_names")) spec.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("region_layout")) {
        spec.region_layout.clear();
        for (const auto& arr : j.at("region_layout")) {
            std::vector<DeformRect> rects;
            for (const auto& r : arr) {
                rects.push_back({r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("w").get<int>(),
                                 r.at("h").get<int>()});
            }
            spec.region_layout.push_back(std::move(rects));
        }
    }
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.deform_amplitude = j.value("deform_amplitude", spec.deform_amplitude);
    spec.pose_jitter = j.value("pose_jitter", spec.pose_jitter);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

namespace detail {

/// Raised-cosine window over a rectangle, zero on the border.
inline double rect_window(const DeformRect& r, int x, int y) {
    const double tx = (x - r.x0 + 0.5) / static_cast<double>(r.w);
    const double ty = (y - r.y0 + 0.5) / static_cast<double>(r.h);
    const double wx = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * tx);
    const double wy = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * ty);
    return wx * wy;
}

/// Procedural neutral face in the canonical frame: background gradient,
/// skin ellipse, eye/nose/mouth features, subject-specific smooth texture
/// and channel tints. Returns (3, S, S).
inline Tensor canonical_face(Rng& rng, int s) {
    const double skin = rng.uniform(0.55, 0.75);
    double wave_a[3], wave_fx[3], wave_fy[3], wave_p[3];
    for (int i = 0; i < 3; ++i) {
        wave_a[i] = rng.uniform(0.015, 0.045);
        wave_fx[i] = rng.uniform(0.5, 2.5);
        wave_fy[i] = rng.uniform(0.5, 2.5);
        wave_p[i] = rng.uniform(0.0, 6.283185307179586);
    }
    double tint[3];
    for (int i = 0; i < 3; ++i) tint[i] = rng.uniform(0.88, 1.04);

    const double cx = 0.50 * s, cy = 0.52 * s;
    const double rx = 0.38 * s, ry = 0.46 * s;
    const LandmarkSet ref = reference_landmarks(s);

    Tensor img({3, s, s});
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            double v = 0.22 + 0.10 * (static_cast<double>(y) / s); // background
            const double ex = (x - cx) / rx, ey = (y - cy) / ry;
            if (ex * ex + ey * ey <= 1.0) {
                v = skin;
                // eyes
                for (int e = 0; e < 2; ++e) {
                    const double dx = (x - ref[static_cast<std::size_t>(e)].x) / (0.055 * s);
                    const double dy = (y - ref[static_cast<std::size_t>(e)].y) / (0.038 * s);
                    if (dx * dx + dy * dy <= 1.0) v = 0.16;
                }
                // nose
                {
                    const double dx = (x - ref[2].x) / (0.045 * s);
                    const double dy = (y - ref[2].y) / (0.065 * s);
                    if (dx * dx + dy * dy <= 1.0) v = skin - 0.12;
                }
                // mouth band between the mouth corners
                if (x >= ref[3].x && x <= ref[4].x && std::abs(y - ref[3].y) <= 0.022 * s) v = 0.28;
            }
            double tex = 0.0;
            for (int i = 0; i < 3; ++i) {
                tex += wave_a[i] * std::cos(6.283185307179586 * (wave_fx[i] * x + wave_fy[i] * y) / s + wave_p[i]);
            }
            v = std::clamp(v + tex, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(v * tint[c], 0.0, 1.0);
        }
    }
    return img;
}

/// Class deformation: inside each rectangle, shift the content by a
/// feathered local translation and add an intensity bump. Writes stay
/// confined to the rectangles.
inline Tensor deform(const Tensor& face, const std::vector<DeformRect>& rects, double amplitude,
                     double shift_x, double shift_y) {
    Tensor out = face;
    if (amplitude == 0.0) return out;
    const int s = face.dim(1);
    for (const auto& r : rects) {
        for (int c = 0; c < 3; ++c) {
            const double* src = face.data() + static_cast<std::size_t>(c) * s * s;
            for (int y = r.y0; y < r.y0 + r.h; ++y) {
                for (int x = r.x0; x < r.x0 + r.w; ++x) {
                    const double wgt = rect_window(r, x, y);
                    double v = sample_bilinear_clamp(src, s, s, y - shift_y * wgt, x - shift_x * wgt);
                    v += amplitude * wgt;
                    out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return out;
}

inline Tensor warp_rgb(const Tensor& rgb, const SimilarityTransform& pose, int s) {
    Tensor out({3, s, s});
    for (int c = 0; c < 3; ++c) {
        Tensor channel({s, s});
        const double* src = rgb.data() + static_cast<std::size_t>(c) * s * s;
        std::copy(src, src + channel.size(), channel.data());
        Tensor warped = warp_similarity(channel, pose, s, s);
        std::copy(warped.data(), warped.data() + warped.size(), out.data() + static_cast<std::size_t>(c) * s * s);
    }
    return out;
}

} // namespace detail

/// Generates the corpus under out_dir and returns its manifest (also saved
/// as out_dir/manifest.csv + .json, with the spec as synthspec.json).
/// Bit-identical output for equal specs: every random draw comes from a
/// per-subject stream in a fixed order.
inline DatasetManifest generate(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("synth: cannot create output directory " + out_dir);
    }
    {
        std::ofstream probe(std::filesystem::path(out_dir) / ".writable");
        if (!probe) throw IoError("synth: output directory not writable: " + out_dir);
    }
    std::filesystem::remove(std::filesystem::path(out_dir) / ".writable", ec);

    const int s = spec.image_size;
    std::vector<std::vector<FaceSample>> rows(static_cast<std::size_t>(spec.subjects));

    parallel_for(static_cast<std::size_t>(spec.subjects), [&](std::size_t si) {
        Rng rng(mix_seed(spec.seed, 0x5B000000ULL + si));
        char sid[16];
        std::snprintf(sid, sizeof(sid), "s%03d", static_cast<int>(si));
        const std::string subject_id(sid);

        const Tensor canonical = detail::canonical_face(rng, s);

        SimilarityTransform pose;
        if (spec.pose_jitter > 0.0) {
            pose.scale = 1.0 + spec.pose_jitter * rng.uniform(-0.06, 0.06);
            pose.rotation = spec.pose_jitter * rng.uniform(-0.10, 0.10);
            const double tx = spec.pose_jitter * rng.uniform(-2.5, 2.5);
            const double ty = spec.pose_jitter * rng.uniform(-2.5, 2.5);
            // rotate/scale about the image center, then jitter
            const double c = pose.scale * std::cos(pose.rotation);
            const double sn = pose.scale * std::sin(pose.rotation);
            const double cxy = 0.5 * (s - 1);
            pose.translation = {cxy - (c * cxy - sn * cxy) + tx, cxy - (sn * cxy + c * cxy) + ty};
        }
        const LandmarkSet landmarks = pose.apply(reference_landmarks(s));

        const std::string neutral_rel = subject_id + "_neutral.png";
        save_rgb_png((std::filesystem::path(out_dir) / neutral_rel).string(),
                     detail::warp_rgb(canonical, pose, s));

        for (int k = 0; k < spec.num_classes; ++k) {
            for (int j = 0; j < spec.samples_per_subject_per_class; ++j) {
                const double amp = spec.deform_amplitude * rng.uniform(0.75, 1.25);
                const double shift_x = rng.uniform(-1.5, 1.5);
                const double shift_y = rng.uniform(-1.5, 1.5);
                Tensor expressive = detail::deform(canonical, spec.region_layout[static_cast<std::size_t>(k)],
                                                   spec.deform_amplitude == 0.0 ? 0.0 : amp, shift_x, shift_y);
                Tensor posed = detail::warp_rgb(expressive, pose, s);
                if (spec.noise_sigma > 0.0) {
                    for (int y = 0; y < s; ++y) {
                        for (int x = 0; x < s; ++x) {
                            const double n = spec.noise_sigma * rng.normal();
                            for (int c = 0; c < 3; ++c) {
                                posed.at(c, y, x) = std::clamp(posed.at(c, y, x) + n, 0.0, 1.0);
                            }
                        }
                    }
                }
                char name[64];
                std::snprintf(name, sizeof(name), "%s_c%02d_e%02d.png", subject_id.c_str(), k, j);
                save_rgb_png((std::filesystem::path(out_dir) / name).string(), posed);

                FaceSample sample;
                sample.image_path = name;
                sample.label = k;
                sample.subject_id = subject_id;
                sample.landmarks = landmarks;
                sample.neutral_path = neutral_rel;
                rows[si].push_back(std::move(sample));
            }
        }
    });

    DatasetManifest manifest;
    manifest.class_names = spec.class_names;
    manifest.image_size = s;
    manifest.root = out_dir;
    for (auto& subject_rows : rows) {
        for (auto& r : subject_rows) manifest.samples.push_back(std::move(r));
    }
    save_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.csv").string());
    std::ofstream spec_out(std::filesystem::path(out_dir) / "synthspec.json");
    spec_out << synth_spec_to_json(spec).dump(2) << "\n";
    return manifest;
}

/// Certifies that the corpus is learnable: a nearest-class-template rule on
/// aligned grayscale pixels must reach 99% accuracy. Classes collapse to
/// near-chance when the deformation amplitude is zero.
inline bool verify_separability(const DatasetManifest& manifest) {
    if (manifest.samples.empty()) return true;
    const LandmarkSet reference = reference_landmarks(manifest.image_size);
    std::vector<Tensor> grays(manifest.samples.size());
    parallel_for(manifest.samples.size(), [&](std::size_t i) {
        const FaceSample& fs = manifest.samples[i];
        grays[i] = align_face(load_rgb(manifest.resolve(fs.image_path)), fs.landmarks, reference,
                              manifest.image_size).gray;
    });

    const int K = manifest.num_classes();
    const std::int64_t plane = grays.front().size();
    std::vector<Tensor> templates(static_cast<std::size_t>(K), Tensor({manifest.image_size, manifest.image_size}));
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    for (std::size_t i = 0; i < grays.size(); ++i) {
        const int k = manifest.samples[i].label;
        Tensor& t = templates[static_cast<std::size_t>(k)];
        for (std::int64_t p = 0; p < plane; ++p) t[p] += grays[i][p];
        ++counts[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < K; ++k) {
        if (counts[static_cast<std::size_t>(k)] == 0) continue;
        Tensor& t = templates[static_cast<std::size_t>(k)];
        for (std::int64_t p = 0; p < plane; ++p) t[p] /= counts[static_cast<std::size_t>(k)];
    }

    std::int64_t correct = 0;
    for (std::size_t i = 0; i < grays.size(); ++i) {
        int best = -1;
        double best_d = 0.0;
        for (int k = 0; k < K; ++k) {
            if (counts[static_cast<std::size_t>(k)] == 0) continue;
            const Tensor& t = templates[static_cast<std::size_t>(k)];
            double d = 0.0;
            for (std::int64_t p = 0; p < plane; ++p) {
                const double diff = grays[i][p] - t[p];
                d += diff * diff;
            }
            if (best < 0 || d < best_d) {
                best = k;
                best_d = d;
            }
        }
        if (best == manifest.samples[i].label) ++correct;
    }
    return static_cast<double>(correct) >= 0.99 * static_cast<double>(grays.size());
}

/// Fraction of the mask's top-decile pixels that fall inside the given
/// rectangles. Ties at the decile threshold are resolved by pixel index so
/// the result is deterministic.
inline double top_decile_inside(const Tensor& mask, const std::vector<DeformRect>& rects) {
    const int h = mask.dim(0), w = mask.dim(1);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(mask.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        if (mask[a] != mask[b]) return mask[a] > mask[b];
        return a < b;
    });
    const std::size_t take = std::max<std::size_t>(1, idx.size() / 10);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < take; ++i) {
        const int y = static_cast<int>(idx[i] / w);
        const int x = static_cast<int>(idx[i] % w);
        for (const auto& r : rects) {
            if (r.contains(x, y)) {
                ++inside;
                break;
            }
        }
    }
    (void)h;
    return static_cast<double>(inside) / static_cast<double>(take);
}

} // namespace fmpn
