#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/errors.hpp"
#include "fmpn/landmarks.hpp"

namespace fmpn {

constexpr const char* kManifestHeader =
    "path,label,subject_id,lm_x1,lm_y1,lm_x2,lm_y2,lm_x3,lm_y3,lm_x4,lm_y4,lm_x5,lm_y5,neutral_path";

/// One expressive face: image path, class index, subject identity, five
/// landmarks, and (optionally) the path of the subject's neutral face.
struct FaceSample {
    std::string image_path;
    int label = -1;
    std::string subject_id;
    LandmarkSet landmarks;
    std::optional<std::string> neutral_path;
};

/// A dataset: ordered samples plus the class vocabulary and the side length
/// of the aligned canvas. Immutable after load.
struct DatasetManifest {
    std::vector<FaceSample> samples;
    std::vector<std::string> class_names;
    int image_size = 0;
    std::string root; // directory manifest-relative paths resolve against

    int num_classes() const { return static_cast<int>(class_names.size()); }

    std::string resolve(const std::string& path) const {
        std::filesystem::path p(path);
        if (p.is_absolute() || root.empty()) return path;
        return (std::filesystem::path(root) / p).string();
    }
};

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_coord(const std::string& s, int row, const char* what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("manifest row " + std::to_string(row) + ": bad " + what + " value '" + s + "'");
    }
}

inline std::string sidecar_path(const std::string& manifest_path) {
    std::filesystem::path p(manifest_path);
    p.replace_extension(".json");
    return p.string();
}

} // namespace detail

/// Loads a manifest CSV plus its JSON sidecar (class_names, image_size).
/// Rows are numbered from 1 (first data row) in error messages.
inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream csv(path);
    if (!csv) throw IoError("cannot open manifest: " + path);

    const std::string sidecar = detail::sidecar_path(path);
    std::ifstream meta(sidecar);
    if (!meta) throw IoError("cannot open manifest sidecar: " + sidecar);

    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest sidecar " + sidecar + ": " + e.what());
    }

    DatasetManifest m;
    m.root = std::filesystem::path(path).parent_path().string();
    try {
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.image_size = j.at("image_size").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest sidecar " + sidecar + ": " + e.what());
    }
    if (m.class_names.size() < 2) throw ValidationError("manifest: need at least 2 classes");
    if (m.image_size < 32) throw ValidationError("manifest: image_size must be >= 32");

    std::unordered_map<std::string, int> class_index;
    for (std::size_t i = 0; i < m.class_names.size(); ++i) {
        if (!class_index.emplace(m.class_names[i], static_cast<int>(i)).second) {
            throw ValidationError("manifest: duplicate class name '" + m.class_names[i] + "'");
        }
    }

    std::string line;
    if (!std::getline(csv, line)) throw ParseError("manifest: missing header row");
    {
        auto fields = detail::split_csv_row(line);
        std::string joined;
        for (std::size_t i = 0; i < fields.size(); ++i) joined += (i ? "," : "") + fields[i];
        if (joined != kManifestHeader) {
            throw ParseError("manifest: unexpected header '" + line + "'");
        }
    }

    int row = 0;
    while (std::getline(csv, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        auto fields = detail::split_csv_row(line);
        if (fields.size() != 14) {
            throw ParseError("manifest row " + std::to_string(row) + ": expected 14 fields, got " +
                             std::to_string(fields.size()));
        }
        FaceSample s;
        s.image_path = fields[0];
        auto it = class_index.find(fields[1]);
        if (it == class_index.end()) {
            throw ValidationError("manifest row " + std::to_string(row) + ": unknown class '" + fields[1] + "'");
        }
        s.label = it->second;
        s.subject_id = fields[2];
        if (s.subject_id.empty()) {
            throw ValidationError("manifest row " + std::to_string(row) + ": empty subject_id");
        }
        for (int p = 0; p < 5; ++p) {
            s.landmarks[p].x = detail::parse_coord(fields[3 + 2 * p], row, "landmark x");
            s.landmarks[p].y = detail::parse_coord(fields[4 + 2 * p], row, "landmark y");
        }
        s.landmarks.validate();
        if (!fields[13].empty()) {
            s.neutral_path = fields[13];
            if (!std::filesystem::exists(m.resolve(*s.neutral_path))) {
                throw ValidationError("manifest row " + std::to_string(row) + ": neutral_path '" +
                                      *s.neutral_path + "' does not exist");
            }
        }
        m.samples.push_back(std::move(s));
    }
    return m;
}

/// Writes manifest CSV + JSON sidecar. Landmark coordinates round-trip
/// exactly (%.17g).
inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream csv(path);
    if (!csv) throw IoError("cannot write manifest: " + path);
    csv << kManifestHeader << "\n";
    char buf[32];
    for (const auto& s : m.samples) {
        csv << s.image_path << "," << m.class_names[static_cast<std::size_t>(s.label)] << "," << s.subject_id;
        for (int p = 0; p < 5; ++p) {
            std::snprintf(buf, sizeof(buf), "%.17g", s.landmarks[p].x);
            csv << "," << buf;
            std::snprintf(buf, sizeof(buf), "%.17g", s.landmarks[p].y);
            csv << "," << buf;
        }
        csv << "," << (s.neutral_path ? *s.neutral_path : "") << "\n";
    }
    nlohmann::ordered_json j;
    j["class_names"] = m.class_names;
    j["image_size"] = m.image_size;
    std::ofstream meta(detail::sidecar_path(path));
    if (!meta) throw IoError("cannot write manifest sidecar for: " + path);
    meta << j.dump(2) << "\n";
}

} // namespace fmpn
