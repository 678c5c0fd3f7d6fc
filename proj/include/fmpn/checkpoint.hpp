#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmpn/errors.hpp"
#include "fmpn/networks.hpp"

namespace fmpn {

namespace detail {
constexpr char kCheckpointMagic[8] = {'F', 'M', 'P', 'N', 'C', 'K', 'P', 'T'};
}

/// Checkpoint format: 8-byte magic, u64 header length, JSON header
/// (architecture, seed, epoch, tensor directory), then the raw
/// little-endian doubles of every tensor in directory order. Parameters
/// and batch-norm running statistics are both stored.
inline void save_checkpoint(const std::string& path, FmpnModel& model, std::uint64_t seed, int epoch) {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    model.visit_params([&](const std::string& name, Tensor& value, Tensor&) {
        tensors.emplace_back(name, &value);
    });
    model.visit_buffers([&](const std::string& name, Tensor& value) {
        tensors.emplace_back(name, &value);
    });

    nlohmann::ordered_json header;
    header["format"] = "fmpn-checkpoint";
    header["version"] = 1;
    header["arch"] = {
        {"fmg_base_channels", model.fmg.arch.base_channels},
        {"backbone", model.cn.desc.name},
        {"input_size", model.input_size},
        {"num_classes", model.cn.desc.num_classes},
        {"variant", variant_name(model.variant)},
    };
    header["arch"]["backbone_options"] = nlohmann::ordered_json::parse(model.cn.desc.options.dump());
    header["class_names"] = model.class_names;
    header["seed"] = seed;
    header["epoch"] = epoch;
    nlohmann::ordered_json dir = nlohmann::ordered_json::array();
    for (const auto& [name, t] : tensors) {
        dir.push_back({{"name", name}, {"shape", t->dims()}});
    }
    header["tensors"] = dir;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    const std::string hs = header.dump();
    const std::uint64_t hlen = hs.size();
    out.write(detail::kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * static_cast<std::int64_t>(sizeof(double))));
    }
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epoch = 0;
};

/// Reads a checkpoint header; throws LoadError on anything unexpected.
inline nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
        throw LoadError("not a checkpoint file: " + path);
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen == 0 || hlen > (1ull << 30)) throw LoadError("corrupt checkpoint header: " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw LoadError("truncated checkpoint header: " + path);
    try {
        return nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("bad checkpoint header in " + path + ": " + e.what());
    }
}

/// Rebuilds the model described by the checkpoint and fills every tensor.
inline FmpnModel load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    const nlohmann::json header = read_checkpoint_header(in, path);

    FmpnModel model;
    try {
        const auto& arch = header.at("arch");
        FmgArch fmg_arch{arch.at("fmg_base_channels").get<int>()};
        BackboneDescriptor desc;
        desc.name = arch.at("backbone").get<std::string>();
        desc.options = arch.at("backbone_options");
        desc.input_size = arch.at("input_size").get<int>();
        desc.num_classes = arch.at("num_classes").get<int>();
        model = init_model(fmg_arch, desc, header.at("class_names").get<std::vector<std::string>>(), 0,
                           variant_from_name(arch.at("variant").get<std::string>()));
        if (meta) {
            meta->seed = header.at("seed").get<std::uint64_t>();
            meta->epoch = header.at("epoch").get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("incomplete checkpoint header in " + path + ": " + e.what());
    }

    std::vector<std::pair<std::string, Tensor*>> tensors;
    model.visit_params([&](const std::string& name, Tensor& value, Tensor&) {
        tensors.emplace_back(name, &value);
    });
    model.visit_buffers([&](const std::string& name, Tensor& value) {
        tensors.emplace_back(name, &value);
    });

    const auto& dir = header.at("tensors");
    if (dir.size() != tensors.size()) {
        throw LoadError("checkpoint tensor count mismatch in " + path + ": file has " +
                        std::to_string(dir.size()) + ", model needs " + std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& entry = dir[i];
        if (entry.at("name").get<std::string>() != tensors[i].first ||
            entry.at("shape").get<std::vector<int>>() != tensors[i].second->dims()) {
            throw LoadError("checkpoint tensor '" + entry.at("name").get<std::string>() +
                            "' incompatible with model tensor '" + tensors[i].first + "'");
        }
        in.read(reinterpret_cast<char*>(tensors[i].second->data()),
                static_cast<std::streamsize>(tensors[i].second->size() *
                                             static_cast<std::int64_t>(sizeof(double))));
        if (!in) throw LoadError("truncated checkpoint data in " + path);
    }
    return model;
}

/// Loads only the CN tensors from a checkpoint into an existing model
/// ("pretrained backbone" path). Names must match the cn.* entries.
inline void load_pretrained_cn(const std::string& path, FmpnModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pretrained weights: " + path);
    const nlohmann::json header = read_checkpoint_header(in, path);

    std::vector<std::pair<std::string, Tensor*>> wanted;
    model.cn.visit_params("cn", [&](const std::string& name, Tensor& value, Tensor&) {
        wanted.emplace_back(name, &value);
    });
    model.cn.visit_buffers("cn", [&](const std::string& name, Tensor& value) {
        wanted.emplace_back(name, &value);
    });

    const auto data_start = in.tellg();
    const auto& dir = header.at("tensors");
    for (auto& [name, tensor] : wanted) {
        std::uint64_t offset = 0;
        bool found = false;
        for (const auto& entry : dir) {
            const auto shape = entry.at("shape").get<std::vector<int>>();
            std::uint64_t count = 1;
            for (int d : shape) count *= static_cast<std::uint64_t>(d);
            if (entry.at("name").get<std::string>() == name) {
                if (shape != tensor->dims()) {
                    throw LoadError("pretrained tensor '" + name + "' shape mismatch in " + path);
                }
                found = true;
                break;
            }
            offset += count;
        }
        if (!found) throw LoadError("pretrained weights missing tensor '" + name + "' in " + path);
        in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(double)));
        in.read(reinterpret_cast<char*>(tensor->data()),
                static_cast<std::streamsize>(tensor->size() * static_cast<std::int64_t>(sizeof(double))));
        if (!in) throw LoadError("truncated pretrained weights in " + path);
    }
}

} // namespace fmpn
