#pragma once

#include "hbac/nn/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace hbac::nn {

// JSON manifest (topology, hyperparameters, seed, tensor table) plus a flat
// little-endian float32 blob. Batchnorm running statistics are included.
struct Checkpoint {
  nlohmann::json manifest;
  std::string blob;
};

template <typename T>
Checkpoint make_checkpoint(ModelGraph<T>& model, const nlohmann::json& extra = nlohmann::json::object());

// Copies values into an existing graph; ids, shapes and the blob hash must match.
template <typename T>
void restore_checkpoint(ModelGraph<T>& model, const Checkpoint& ckpt);

template <typename T>
ModelGraph<T> model_from_checkpoint(const Checkpoint& ckpt);

// `<stem>.json` + `<stem>.bin`, each written atomically.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& stem);
Checkpoint read_checkpoint(const std::filesystem::path& stem);

}  // namespace hbac::nn
