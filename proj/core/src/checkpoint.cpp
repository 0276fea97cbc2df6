#include "hiermatch/checkpoint.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hiermatch/config.hpp"

namespace hiermatch {

namespace {

std::string hex16(std::uint64_t h) {
  std::ostringstream out;
  out << std::hex;
  for (int shift = 60; shift >= 0; shift -= 4) out << ((h >> shift) & 0xF);
  return out.str();
}

std::string tensor_checksum(const std::vector<double>& values) {
  return hex16(fnv1a64(values.data(), values.size() * sizeof(double)));
}

// Hex-float rendering so the loss bookkeeping round-trips bit-exactly.
std::string exact_double(double v) {
  std::ostringstream out;
  out << std::hexfloat << v;
  return out.str();
}

double parse_exact_double(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}

struct NamedBuffer {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  const std::vector<double>* values = nullptr;
};

RunConfig parse_embedded_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string pair;
  while (in >> pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw DataError("checkpoint config entry is malformed: " + pair);
    apply_config_override(cfg, pair.substr(0, eq), pair.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& prefix, const TrainState& state,
                     const RunConfig& cfg, std::size_t d_raw) {
  std::vector<NamedBuffer> buffers;
  const auto& entries = state.params.store.entries();
  std::vector<std::vector<double>> param_copies;
  param_copies.reserve(entries.size());
  for (const auto& e : entries) {
    const auto vals = e.tensor.values();
    param_copies.emplace_back(vals.begin(), vals.end());
  }
  for (std::size_t i = 0; i < entries.size(); ++i)
    buffers.push_back({entries[i].name, entries[i].tensor.rows(),
                       entries[i].tensor.cols(), &param_copies[i]});
  const auto& opt = state.opt;
  for (std::size_t i = 0; i < entries.size(); ++i)
    buffers.push_back({"adam.m." + entries[i].name, 1,
                       opt.first_moments()[i].size(), &opt.first_moments()[i]});
  for (std::size_t i = 0; i < entries.size(); ++i)
    buffers.push_back({"adam.v." + entries[i].name, 1,
                       opt.second_moments()[i].size(),
                       &opt.second_moments()[i]});

  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot write checkpoint binary: " + prefix + ".bin");
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& b : buffers) {
    offsets.push_back(offset);
    const std::size_t bytes = b.values->size() * sizeof(double);
    bin.write(reinterpret_cast<const char*>(b.values->data()),
              static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  bin.close();

  std::ofstream manifest(prefix + ".manifest");
  if (!manifest)
    throw DataError("cannot write checkpoint manifest: " + prefix + ".manifest");
  manifest << "hiermatch-checkpoint\n";
  manifest << "version 1\n";
  manifest << "config " << canonical_config(cfg) << "\n";
  manifest << "d_raw " << d_raw << "\n";
  manifest << "epoch " << state.next_epoch << "\n";
  manifest << "adam_step " << state.opt.step_count() << "\n";
  manifest << "best_loss " << exact_double(state.best_loss) << "\n";
  manifest << "plateau " << state.plateau << "\n";
  for (std::size_t i = 0; i < buffers.size(); ++i)
    manifest << "tensor " << buffers[i].name << ' ' << buffers[i].rows << ' '
             << buffers[i].cols << ' ' << offsets[i] << ' '
             << tensor_checksum(*buffers[i].values) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
  std::ifstream manifest(prefix + ".manifest");
  if (!manifest)
    throw DataError("cannot open checkpoint manifest: " + prefix + ".manifest");

  std::string line;
  if (!std::getline(manifest, line) || line != "hiermatch-checkpoint")
    throw DataError("not a hiermatch checkpoint: " + prefix);

  LoadedCheckpoint loaded;
  std::uint64_t adam_step = 0;
  struct TensorEntry {
    std::string name;
    std::size_t rows, cols, offset;
    std::string checksum;
  };
  std::vector<TensorEntry> tensor_entries;

  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "version") {
      std::size_t v;
      in >> v;
      if (v != 1)
        throw DataError("unsupported checkpoint version " + std::to_string(v));
    } else if (tag == "config") {
      std::string rest;
      std::getline(in, rest);
      loaded.cfg = parse_embedded_config(rest);
    } else if (tag == "d_raw") {
      in >> loaded.d_raw;
    } else if (tag == "epoch") {
      in >> loaded.state.next_epoch;
    } else if (tag == "adam_step") {
      in >> adam_step;
    } else if (tag == "best_loss") {
      std::string v;
      in >> v;
      loaded.state.best_loss = parse_exact_double(v);
    } else if (tag == "plateau") {
      in >> loaded.state.plateau;
    } else if (tag == "tensor") {
      TensorEntry e;
      if (!(in >> e.name >> e.rows >> e.cols >> e.offset >> e.checksum))
        throw DataError("malformed tensor entry in checkpoint manifest");
      tensor_entries.push_back(std::move(e));
    } else {
      throw DataError("unknown checkpoint manifest tag: " + tag);
    }
  }
  if (loaded.d_raw == 0) throw DataError("checkpoint manifest is missing d_raw");

  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin)
    throw DataError("cannot open checkpoint binary: " + prefix + ".bin");
  std::vector<unsigned char> payload(
      (std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  // Rebuild parameters with the right shapes, then overwrite from the file.
  Rng scratch_rng(0);
  loaded.state.params =
      make_model_params(loaded.d_raw, loaded.cfg.model, scratch_rng);
  AdamOptimizer::Hyper hyper;
  hyper.lr = loaded.cfg.train.lr;
  loaded.state.opt = AdamOptimizer(loaded.state.params.store, hyper);

  auto read_values = [&payload, &prefix](const TensorEntry& e,
                                         std::vector<double>& out) {
    const std::size_t bytes = e.rows * e.cols * sizeof(double);
    if (e.offset + bytes > payload.size())
      throw DataError("checkpoint binary is truncated: " + prefix);
    out.resize(e.rows * e.cols);
    std::memcpy(out.data(), payload.data() + e.offset, bytes);
    if (tensor_checksum(out) != e.checksum)
      throw DataError("checksum mismatch for checkpoint tensor " + e.name);
  };

  auto& store = loaded.state.params.store;
  std::vector<std::vector<double>> adam_m(store.size()), adam_v(store.size());
  std::size_t restored_params = 0;
  for (const auto& e : tensor_entries) {
    std::vector<double> values;
    if (e.name.rfind("adam.m.", 0) == 0 || e.name.rfind("adam.v.", 0) == 0) {
      const bool is_m = e.name[5] == 'm';
      const std::string param_name = e.name.substr(7);
      std::size_t index = store.size();
      for (std::size_t i = 0; i < store.size(); ++i)
        if (store.entries()[i].name == param_name) index = i;
      if (index == store.size())
        throw DataError("checkpoint has moments for unknown parameter " +
                        param_name);
      read_values(e, is_m ? adam_m[index] : adam_v[index]);
    } else {
      if (!store.contains(e.name))
        throw DataError("checkpoint parameter not in this model: " + e.name);
      Tensor& t = store.at(e.name);
      if (t.rows() != e.rows || t.cols() != e.cols)
        throw DataError("checkpoint shape mismatch for " + e.name);
      read_values(e, values);
      auto dst = t.mutable_values();
      std::copy(values.begin(), values.end(), dst.begin());
      ++restored_params;
    }
  }
  if (restored_params != store.size())
    throw DataError("checkpoint is missing parameters (" +
                    std::to_string(restored_params) + " of " +
                    std::to_string(store.size()) + ")");
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (adam_m[i].size() != store.entries()[i].tensor.size() ||
        adam_v[i].size() != store.entries()[i].tensor.size())
      throw DataError("checkpoint is missing optimizer moments");
  }
  loaded.state.opt.restore(std::move(adam_m), std::move(adam_v), adam_step);
  rebind_param_views(loaded.state.params);
  return loaded;
}

std::string checkpoint_fingerprint(const std::string& prefix) {
  std::ifstream manifest(prefix + ".manifest");
  if (!manifest)
    throw DataError("cannot open checkpoint manifest: " + prefix + ".manifest");
  std::stringstream buffer;
  buffer << manifest.rdbuf();
  return fnv1a64_hex(buffer.str());
}

}  // namespace hiermatch
