// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "bseg/models/network.hpp"

namespace bseg::models {

/// Binary container: magic "BSEGCKPT", u32 version, u64 header length, JSON
/// header, then raw little-endian float32 blobs in header order.
struct TensorArchive {
    nlohmann::json header;  // free-form metadata; "tensors" is managed by the writer
    std::map<std::string, nn::Tensor> tensors;
    std::vector<std::string> order;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

/// Writes atomically (temporary file + rename).
void write_archive(const std::filesystem::path& path, const nlohmann::json& header,
                   const std::vector<std::pair<std::string, const nn::Tensor*>>& tensors);
TensorArchive read_archive(const std::filesystem::path& path);

/// Parameters and batch-norm statistics of `model`, keyed by layer path.
std::vector<std::pair<std::string, const nn::Tensor*>> model_tensors(SegmentationModel& model);

void save_checkpoint(const std::filesystem::path& path, SegmentationModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Copies archived weights into `model` after checking the archived spec and
/// every tensor name/shape against the built graph.
void load_weights(const TensorArchive& archive, SegmentationModel& model);

struct LoadedCheckpoint {
    std::unique_ptr<SegmentationModel> model;
    nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bseg::models
