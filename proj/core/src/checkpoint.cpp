#include "lfr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"
#include "lfr/run_config.hpp"

namespace lfr {

namespace {

using nlohmann::json;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Canonical tensor order; save and load must agree exactly.
std::vector<NamedTensor> tensor_directory(const TrainState& state) {
  std::vector<NamedTensor> out;
  auto add_mlp = [&out](const std::string& prefix, const Mlp& net) {
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      out.push_back({prefix + ".layer" + std::to_string(i) + ".weight", net.layers()[i].weight});
      out.push_back({prefix + ".layer" + std::to_string(i) + ".bias", net.layers()[i].bias});
    }
  };
  add_mlp("encoder", state.encoder.net);
  for (std::size_t k = 0; k < state.predictors.size(); ++k) {
    add_mlp("predictor" + std::to_string(k), state.predictors[k].net);
  }
  for (std::size_t k = 0; k < state.projectors.size(); ++k) {
    add_mlp("projector" + std::to_string(k), state.projectors[k].net);
  }
  auto add_moments = [&out](const std::string& prefix, const Optimizer& opt) {
    const auto& m = opt.moment1();
    for (std::size_t i = 0; i < m.size(); ++i) {
      out.push_back({prefix + ".m" + std::to_string(i), m[i]});
    }
    const auto& v = opt.moment2();
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back({prefix + ".v" + std::to_string(i), v[i]});
    }
  };
  add_moments("opt_theta", state.opt_theta);
  add_moments("opt_phi", state.opt_phi);
  return out;
}

void append_u64_le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg,
                     const json& config_echo, std::int64_t input_dim) {
  auto dir = tensor_directory(state);

  json tensors = json::array();
  std::int64_t offset = 0;
  for (const auto& nt : dir) {
    tensors.push_back(json{{"name", nt.name},
                           {"shape", nt.tensor.shape()},
                           {"offset", offset},
                           {"count", nt.tensor.numel()}});
    offset += nt.tensor.numel();
  }

  json selection{{"chosen_indices", state.selection.chosen_indices},
                 {"candidate_count", state.selection.candidate_count},
                 {"singular_fill", state.selection.singular_fill},
                 {"probe_batch_hash", state.probe_batch_hash},
                 {"degenerate_candidates", state.degenerate_candidates}};
  if (std::isfinite(state.selection.log_det)) {
    selection["log_det"] = state.selection.log_det;
  }

  json proj_seeds = json::array();
  json proj_dims = json::array();
  for (const auto& p : state.projectors) {
    proj_seeds.push_back(p.init_seed);
    proj_dims.push_back(p.output_dim);
  }

  json meta{{"format_version", 1},
            {"config", config_echo},
            {"train", train_config_to_json(cfg)},
            {"input_dim", input_dim},
            {"epoch", state.epoch},
            {"encoder_steps", state.encoder_steps},
            {"last_m_loss", state.last_m_loss},
            {"rng_seed", cfg.seed},
            {"selection", selection},
            {"projector_init_seeds", proj_seeds},
            {"projector_output_dims", proj_dims},
            {"opt_theta_steps", state.opt_theta.step_count()},
            {"opt_phi_steps", state.opt_phi.step_count()},
            {"tensors", tensors}};

  std::string buf;
  buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string meta_str = meta.dump();
  append_u64_le(buf, meta_str.size());
  buf += meta_str;
  for (const auto& nt : dir) {
    const auto v = nt.tensor.values();
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  append_u64_le(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing checkpoint (disk full?): " + path +
                            "; partial file may remain on disk");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kCheckpointMagic) + 16) {
    throw DataError("checkpoint too small: " + path);
  }
  if (std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw DataError("bad checkpoint magic in " + path);
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  const std::uint64_t stored_digest = read_u64_le(bytes + buf.size() - 8);
  const std::uint64_t actual_digest = fnv1a64(buf.data(), buf.size() - 8);
  if (stored_digest != actual_digest) {
    throw DataError("checkpoint digest mismatch in " + path + "; refusing to load");
  }

  const std::uint64_t meta_len = read_u64_le(bytes + sizeof(kCheckpointMagic));
  const std::size_t meta_begin = sizeof(kCheckpointMagic) + 8;
  if (meta_begin + meta_len + 8 > buf.size()) {
    throw DataError("checkpoint metadata length out of range in " + path);
  }
  json meta;
  try {
    meta = json::parse(buf.substr(meta_begin, meta_len));
  } catch (const json::exception& e) {
    throw DataError("checkpoint metadata parse error: " + std::string(e.what()));
  }
  if (meta.at("format_version").get<int>() != 1) {
    throw DataError("unsupported checkpoint format_version");
  }

  LoadedCheckpoint loaded;
  loaded.config_echo = meta.at("config");
  loaded.cfg = train_config_from_json(meta.at("train"));
  loaded.input_dim = meta.at("input_dim").get<std::int64_t>();
  loaded.file_digest = stored_digest;

  TrainState& state = loaded.state;
  const TrainConfig& cfg = loaded.cfg;
  state.epoch = meta.at("epoch").get<int>();
  state.encoder_steps = meta.at("encoder_steps").get<std::int64_t>();
  state.last_m_loss = meta.at("last_m_loss").get<double>();
  state.degenerate_candidates = meta.at("selection").at("degenerate_candidates").get<int>();
  state.probe_batch_hash = meta.at("selection").at("probe_batch_hash").get<std::uint64_t>();
  state.selection.chosen_indices =
      meta.at("selection").at("chosen_indices").get<std::vector<int>>();
  state.selection.candidate_count = meta.at("selection").at("candidate_count").get<int>();
  state.selection.singular_fill = meta.at("selection").at("singular_fill").get<bool>();
  state.selection.log_det = meta.at("selection").contains("log_det")
                                ? meta.at("selection").at("log_det").get<double>()
                                : -std::numeric_limits<double>::infinity();

  // Rebuild model skeletons, then overwrite every parameter from the blob.
  state.encoder = make_encoder(loaded.input_dim, cfg.encoder_hidden, cfg.encoder_layers,
                               cfg.latent_dim, CounterRng(0));
  const auto seeds = meta.at("projector_init_seeds").get<std::vector<std::uint64_t>>();
  const auto dims = meta.at("projector_output_dims").get<std::vector<std::int64_t>>();
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    state.projectors.push_back(make_projector(loaded.input_dim, cfg.projector_hidden,
                                              cfg.projector_layers, dims[k], cfg.init, seeds[k]));
    state.predictors.push_back(
        make_predictor(cfg.latent_dim, cfg.predictor_hidden, dims[k], CounterRng(0)));
  }
  state.opt_theta = Optimizer(cfg.optimizer, state.theta_params());
  state.opt_phi = Optimizer(cfg.optimizer, state.phi_params());
  state.opt_theta.set_step_count(meta.at("opt_theta_steps").get<std::int64_t>());
  state.opt_phi.set_step_count(meta.at("opt_phi_steps").get<std::int64_t>());

  auto dir = tensor_directory(state);
  const auto& tensors = meta.at("tensors");
  if (tensors.size() != dir.size()) {
    throw DataError("checkpoint tensor directory size mismatch: file has " +
                    std::to_string(tensors.size()) + ", model expects " +
                    std::to_string(dir.size()));
  }
  const std::size_t blob_begin = meta_begin + meta_len;
  const std::size_t blob_len = buf.size() - 8 - blob_begin;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != dir[i].name) {
      throw DataError("checkpoint tensor name mismatch at index " + std::to_string(i) + ": '" +
                      entry.at("name").get<std::string>() + "' vs '" + dir[i].name + "'");
    }
    const auto offset = entry.at("offset").get<std::int64_t>();
    const auto count = entry.at("count").get<std::int64_t>();
    if (count != dir[i].tensor.numel()) {
      throw DataError("checkpoint tensor size mismatch for " + dir[i].name);
    }
    const std::size_t byte_off = static_cast<std::size_t>(offset) * sizeof(float);
    const std::size_t byte_len = static_cast<std::size_t>(count) * sizeof(float);
    if (byte_off + byte_len > blob_len) {
      throw DataError("checkpoint blob out of range for " + dir[i].name);
    }
    std::memcpy(dir[i].tensor.mutable_values().data(), buf.data() + blob_begin + byte_off,
                byte_len);
  }

  // Restore the frozen/trainable split.
  state.encoder.net.set_requires_grad(true);
  for (auto& p : state.projectors) p.net.set_requires_grad(false);
  for (auto& p : state.predictors) p.net.set_requires_grad(true);
  return loaded;
}

std::uint64_t checkpoint_file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8) throw DataError("checkpoint too small: " + path);
  return read_u64_le(reinterpret_cast<const unsigned char*>(buf.data()) + buf.size() - 8);
}

}  // namespace lfr
