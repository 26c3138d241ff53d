// SPDX-License-Identifier: Apache-2.0
#include "csa/checkpoint.hpp"

#include <limits>
#include <map>

#include "binary_io.hpp"

namespace csa {
namespace {

constexpr const char* kMomentumPrefix = "optimizer.momentum.";

void put_tensor(detail::ByteWriter& w, const std::string& name, const MatrixF& m) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw std::invalid_argument("checkpoint: tensor name too long: " + name);
  }
  w.put(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.put(static_cast<std::uint8_t>(2));
  w.put(static_cast<std::uint64_t>(m.rows()));
  w.put(static_cast<std::uint64_t>(m.cols()));
  w.floats(m.values());
}

nlohmann::json config_record(const Checkpoint& c) {
  return nlohmann::json{{"encoder", c.config},
                        {"progress",
                         {{"epoch", c.progress.epoch},
                          {"step", c.progress.step},
                          {"total_steps", c.progress.total_steps},
                          {"best_validation_map", c.progress.best_validation_map}}},
                        {"has_momentum", c.momentum.has_value()},
                        {"run", c.run_config}};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes("CSAC");
  w.put(kCheckpointVersion);
  const std::size_t count = ckpt.params.tensor_count() * (ckpt.momentum ? 2 : 1);
  w.put(static_cast<std::uint32_t>(count));
  ckpt.params.visit([&](const std::string& name, const MatrixF& m, TensorRole) {
    put_tensor(w, name, m);
  });
  if (ckpt.momentum) {
    ckpt.momentum->visit([&](const std::string& name, const MatrixF& m, TensorRole) {
      put_tensor(w, kMomentumPrefix + name, m);
    });
  }
  const std::string record = config_record(ckpt).dump();
  w.put(static_cast<std::uint32_t>(record.size()));
  w.bytes(record);
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect("CSAC", "checkpoint");
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), version_at);
  }
  const auto count = r.get<std::uint32_t>("tensor count");

  struct Entry {
    MatrixF value;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> tensors;
  std::vector<std::string> order;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto entry_at = r.offset();
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    std::string name = r.string(name_len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    if (rank == 0 || rank > 2) {
      throw FormatError("checkpoint: tensor '" + name + "' has unsupported rank " +
                            std::to_string(rank),
                        entry_at);
    }
    std::uint64_t dims[2] = {1, 1};
    for (std::uint8_t d = 0; d < rank; ++d) dims[d] = r.get<std::uint64_t>("tensor dims");
    if (rank == 1) std::swap(dims[0], dims[1]);
    if (dims[1] != 0 && dims[0] > (r.remaining() / 4) / dims[1]) {
      throw FormatError("checkpoint: truncated payload in tensor '" + name + "'", r.offset());
    }
    MatrixF m(dims[0], dims[1]);
    r.floats(m.values(), "tensor values");
    order.push_back(name);
    if (!tensors.emplace(name, Entry{std::move(m), entry_at}).second) {
      throw FormatError("checkpoint: duplicate tensor '" + name + "'", entry_at);
    }
  }
  const auto record_at = r.offset();
  const auto record_len = r.get<std::uint32_t>("config record length");
  const std::string record_text = r.string(record_len, "config record");
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(record_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed config record: ") + e.what(), record_at);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes", r.offset());

  Checkpoint ckpt;
  try {
    ckpt.config = record.at("encoder").get<EncoderConfig>();
    const auto& p = record.at("progress");
    ckpt.progress.epoch = p.at("epoch").get<std::uint64_t>();
    ckpt.progress.step = p.at("step").get<std::uint64_t>();
    ckpt.progress.total_steps = p.at("total_steps").get<std::uint64_t>();
    ckpt.progress.best_validation_map = p.at("best_validation_map").get<double>();
    ckpt.run_config = record.value("run", nlohmann::json::object());
    ckpt.params = make_params<float>(ckpt.config);
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: invalid config record: ") + e.what(), record_at);
  }

  auto take = [&](const std::string& name, MatrixF& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'", record_at);
    if (!it->second.value.same_shape(dst)) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + it->second.value.shape() +
                            ", config expects " + dst.shape(),
                        it->second.offset);
    }
    dst = std::move(it->second.value);
    tensors.erase(it);
  };
  ckpt.params.visit([&](const std::string& name, MatrixF& m, TensorRole) { take(name, m); });
  if (record.value("has_momentum", false)) {
    ckpt.momentum = ckpt.params.zeros_like();
    ckpt.momentum->visit(
        [&](const std::string& name, MatrixF& m, TensorRole) { take(kMomentumPrefix + name, m); });
  }
  if (!tensors.empty()) {
    const auto& [name, entry] = *tensors.begin();
    throw FormatError("checkpoint: unexpected tensor '" + name + "'", entry.offset);
  }
  return ckpt;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".json";
  return p;
}

nlohmann::json checkpoint_summary(const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  ckpt.params.visit([&](const std::string& name, const MatrixF& m, TensorRole) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  });
  nlohmann::json j = config_record(ckpt);
  j["parameter_count"] = ckpt.params.parameter_count();
  j["tensors"] = std::move(tensors);
  return j;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  detail::write_file_bytes(path, bytes);
  detail::write_file_text(sidecar_path(path), checkpoint_summary(ckpt).dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_checkpoint(bytes);
}

}  // namespace csa
