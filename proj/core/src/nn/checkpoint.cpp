#include "hbac/nn/checkpoint.hpp"

#include "hbac/io.hpp"

#include <stdexcept>

namespace hbac::nn {

namespace {

constexpr const char* kFormat = "hbac-checkpoint/1";

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> all_tensors(ModelGraph<T>& model) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto* p : model.parameters()) out.emplace_back(p->id, &p->value);
  for (auto& b : model.buffers()) out.push_back(b);
  return out;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

template <typename T>
Checkpoint make_checkpoint(ModelGraph<T>& model, const nlohmann::json& extra) {
  Checkpoint c;
  std::vector<float> flat;
  nlohmann::json table = nlohmann::json::array();
  const auto params = model.parameters().size();
  std::size_t n = 0;
  for (auto& [id, t] : all_tensors(model)) {
    table.push_back({{"id", id},
                     {"role", n++ < params ? "parameter" : "buffer"},
                     {"shape", t->shape()},
                     {"offset", flat.size()},
                     {"count", t->size()}});
    for (auto v : t->values()) flat.push_back(static_cast<float>(v));
  }
  c.blob = io::encode_f32_le(flat);
  c.manifest = {{"format", kFormat},
                {"dtype", "float32"},
                {"byte_order", "little"},
                {"model", model.spec().to_json()},
                {"seed", model.spec().seed},
                {"tensors", std::move(table)},
                {"values", flat.size()},
                {"sha256", io::sha256_hex(c.blob)}};
  if (!extra.is_null() && !extra.empty()) c.manifest["extra"] = extra;
  return c;
}

template <typename T>
void restore_checkpoint(ModelGraph<T>& model, const Checkpoint& ckpt) {
  const auto& m = ckpt.manifest;
  if (m.value("format", "") != kFormat) throw std::invalid_argument("checkpoint: unsupported format");
  if (io::sha256_hex(ckpt.blob) != m.at("sha256").get<std::string>())
    throw std::invalid_argument("checkpoint: blob hash mismatch");
  std::vector<float> flat = io::decode_f32_le(
      std::span(reinterpret_cast<const std::uint8_t*>(ckpt.blob.data()), ckpt.blob.size()));
  const auto& table = m.at("tensors");
  auto tensors = all_tensors(model);
  if (table.size() != tensors.size())
    throw std::invalid_argument("checkpoint: " + std::to_string(table.size()) + " tensors, model has " +
                                std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& [id, t] = tensors[i];
    const auto& e = table[i];
    if (e.at("id").get<std::string>() != id)
      throw std::invalid_argument("checkpoint: expected tensor '" + id + "', found '" + e.at("id").get<std::string>() +
                                  "'");
    if (e.at("shape").get<Shape>() != t->shape())
      throw std::invalid_argument("checkpoint: shape mismatch for '" + id + "'");
    const auto off = e.at("offset").get<std::size_t>();
    const auto count = e.at("count").get<std::size_t>();
    if (count != t->size() || off + count > flat.size())
      throw std::invalid_argument("checkpoint: tensor '" + id + "' out of range");
    for (std::size_t k = 0; k < count; ++k) (*t)[k] = static_cast<T>(flat[off + k]);
  }
}

template <typename T>
ModelGraph<T> model_from_checkpoint(const Checkpoint& ckpt) {
  ModelGraph<T> model(ModelSpec::from_json(ckpt.manifest.at("model")));
  restore_checkpoint(model, ckpt);
  return model;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& stem) {
  io::write_atomic(with_suffix(stem, ".bin"), ckpt.blob);
  io::write_atomic(with_suffix(stem, ".json"), ckpt.manifest.dump(2) + "\n");
}

Checkpoint read_checkpoint(const std::filesystem::path& stem) {
  Checkpoint c;
  const auto mpath = with_suffix(stem, ".json");
  try {
    c.manifest = nlohmann::json::parse(io::read_text(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(mpath.string() + ": " + e.what());
  }
  c.blob = io::read_text(with_suffix(stem, ".bin"));
  return c;
}

template Checkpoint make_checkpoint(ModelGraph<float>&, const nlohmann::json&);
template Checkpoint make_checkpoint(ModelGraph<double>&, const nlohmann::json&);
template void restore_checkpoint(ModelGraph<float>&, const Checkpoint&);
template void restore_checkpoint(ModelGraph<double>&, const Checkpoint&);
template ModelGraph<float> model_from_checkpoint(const Checkpoint&);
template ModelGraph<double> model_from_checkpoint(const Checkpoint&);

}  // namespace hbac::nn
