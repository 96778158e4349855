// SPDX-License-Identifier: Apache-2.0
#include "bseg/models/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bseg::models {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'B', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

json shape_json(const nn::Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

nn::Shape shape_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("archive: malformed shape");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace

void write_archive(const std::filesystem::path& path, const json& header,
                   const std::vector<std::pair<std::string, const nn::Tensor*>>& tensors) {
    json h = header;
    json entries = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        entries.push_back(json{{"name", name},
                               {"shape", shape_json(t->shape())},
                               {"offset", offset},
                               {"count", t->numel()}});
        offset += t->numel();
    }
    h["tensors"] = entries;
    const std::string text = h.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        const std::uint32_t version = kArchiveVersion;
        const std::uint64_t length = text.size();
        out.write(kMagic, sizeof(kMagic));
        out.write(reinterpret_cast<const char*>(&version), sizeof(version));
        out.write(reinterpret_cast<const char*>(&length), sizeof(length));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : tensors) {
            out.write(reinterpret_cast<const char*>(t->data()),
                      static_cast<std::streamsize>(t->numel() * sizeof(float)));
        }
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[sizeof(kMagic)];
    std::uint32_t version = 0;
    std::uint64_t length = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&length), sizeof(length));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error(path.string() + " is not a bseg archive");
    }
    if (version != kArchiveVersion) {
        throw std::runtime_error(path.string() + ": unsupported archive version " +
                                 std::to_string(version));
    }
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (!in) throw std::runtime_error(path.string() + ": truncated header");

    TensorArchive archive;
    archive.header = json::parse(text);
    const std::streampos base = in.tellg();
    for (const auto& e : archive.header.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        nn::Tensor t(shape_from_json(e.at("shape")));
        if (t.numel() != e.at("count").get<std::size_t>()) {
            throw std::runtime_error(path.string() + ": count mismatch for " + name);
        }
        in.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>() *
                                                    sizeof(float)));
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) throw std::runtime_error(path.string() + ": truncated tensor " + name);
        archive.order.push_back(name);
        archive.tensors.emplace(name, std::move(t));
    }
    return archive;
}

std::vector<std::pair<std::string, const nn::Tensor*>> model_tensors(SegmentationModel& model) {
    std::vector<std::pair<std::string, const nn::Tensor*>> out;
    for (const auto& p : model.store().parameters()) out.emplace_back(p.name, &p.var->value);
    for (const auto& b : model.store().buffers()) out.emplace_back(b.name, b.tensor);
    return out;
}

void save_checkpoint(const std::filesystem::path& path, SegmentationModel& model,
                     const json& metadata) {
    const json header{{"kind", "checkpoint"}, {"spec", to_json(model.spec())}, {"metadata", metadata}};
    write_archive(path, header, model_tensors(model));
}

void load_weights(const TensorArchive& archive, SegmentationModel& model) {
    if (archive.header.contains("spec")) {
        const ModelSpec stored = model_spec_from_json(archive.header.at("spec"));
        if (!(stored.encoder == model.spec().encoder) || !(stored.decoder == model.spec().decoder)) {
            throw std::runtime_error("checkpoint spec does not match the model graph");
        }
    }
    auto targets = model_tensors(model);
    if (targets.size() != archive.tensors.size()) {
        throw std::runtime_error("checkpoint holds " + std::to_string(archive.tensors.size()) +
                                 " tensors, model expects " + std::to_string(targets.size()));
    }
    for (const auto& [name, target] : targets) {
        const auto it = archive.tensors.find(name);
        if (it == archive.tensors.end()) throw std::runtime_error("checkpoint lacks tensor " + name);
        if (!(it->second.shape() == target->shape())) {
            throw std::runtime_error("checkpoint tensor " + name + " has shape " +
                                     nn::to_string(it->second.shape()) + ", model expects " +
                                     nn::to_string(target->shape()));
        }
    }
    for (const auto& [name, target] : targets) {
        *const_cast<nn::Tensor*>(target) = archive.tensors.at(name);
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    TensorArchive archive = read_archive(path);
    if (!archive.header.contains("spec")) {
        throw std::runtime_error(path.string() + " carries no model spec");
    }
    LoadedCheckpoint out;
    out.model = build_model(model_spec_from_json(archive.header.at("spec")), 0);
    load_weights(archive, *out.model);
    out.metadata = archive.header.value("metadata", json::object());
    return out;
}

}  // namespace bseg::models
