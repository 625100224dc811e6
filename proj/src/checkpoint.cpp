#include "xlat/checkpoint.hpp"

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "xlat/errors.hpp"

namespace fs = std::filesystem;

namespace xlat::train {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kDtype = "float32-le";

uint32_t crc_of(const Tensor<float>& t) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(t.data()),
            static_cast<uInt>(t.numel() * sizeof(float))));
}

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return &nt.value;
  return nullptr;
}

const Tensor<float>& Checkpoint::require(const std::string& name) const {
  const Tensor<float>* t = find(name);
  if (!t) throw LoadError("checkpoint is missing tensor \"" + name + "\"");
  return *t;
}

void Checkpoint::add_params(const std::vector<nn::ParamRef<float>>& params) {
  for (const auto& p : params) tensors.push_back({p.name, *p.value});
}

void Checkpoint::add_buffers(const std::vector<nn::BufferRef<float>>& buffers) {
  for (const auto& b : buffers) tensors.push_back({b.name, *b.value});
}

void Checkpoint::add_adam(const std::string& opt_name,
                          const std::vector<nn::ParamRef<float>>& params,
                          const AdamStateT<float>& state) {
  for (size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({opt_name + ".m." + params[i].name, state.m[i]});
    tensors.push_back({opt_name + ".v." + params[i].name, state.v[i]});
  }
}

void Checkpoint::restore_params(const std::vector<nn::ParamRef<float>>& params) const {
  for (const auto& p : params) {
    const Tensor<float>& src = require(p.name);
    if (!src.same_shape(*p.value))
      throw LoadError("checkpoint tensor \"" + p.name + "\" has shape " +
                      Tensor<float>::shape_str(src.shape()) + ", expected " +
                      Tensor<float>::shape_str(p.value->shape()));
    *p.value = src;
  }
}

void Checkpoint::restore_buffers(const std::vector<nn::BufferRef<float>>& buffers) const {
  for (const auto& b : buffers) {
    const Tensor<float>& src = require(b.name);
    if (!src.same_shape(*b.value))
      throw LoadError("checkpoint tensor \"" + b.name + "\" has unexpected shape");
    *b.value = src;
  }
}

AdamStateT<float> Checkpoint::restore_adam(
    const std::string& opt_name, const std::vector<nn::ParamRef<float>>& params) const {
  AdamStateT<float> st = AdamStateT<float>::init_like(params);
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor<float>& m = require(opt_name + ".m." + params[i].name);
    const Tensor<float>& v = require(opt_name + ".v." + params[i].name);
    if (!m.same_shape(*params[i].value) || !v.same_shape(*params[i].value))
      throw LoadError("checkpoint moment for \"" + params[i].name + "\" has unexpected shape");
    st.m[i] = m;
    st.v[i] = v;
  }
  return st;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  fs::create_directories(dir);

  ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["config"] = ckpt.config.to_json();
  ordered_json counters;
  counters["step1_epochs_done"] = ckpt.step1_epochs_done;
  counters["step1_iters"] = ckpt.step1_iters;
  counters["step2_iters"] = ckpt.step2_iters;
  counters["adam_g_t"] = ckpt.adam_g_t;
  counters["adam_d_t"] = ckpt.adam_d_t;
  counters["adam_e_t"] = ckpt.adam_e_t;
  manifest["counters"] = counters;
  ordered_json rng;
  rng["seed"] = ckpt.config.seed;
  rng["step1_draws"] = ckpt.step1_rng_draws;
  rng["step2_draws"] = ckpt.step2_rng_draws;
  manifest["rng"] = rng;
  ordered_json nets;
  nets["g"] = ckpt.has_g;
  nets["d"] = ckpt.has_d;
  nets["e"] = ckpt.has_e;
  manifest["networks"] = nets;

  ordered_json table = ordered_json::array();
  int64_t offset = 0;
  for (const auto& nt : ckpt.tensors) {
    ordered_json row;
    row["name"] = nt.name;
    row["dtype"] = kDtype;
    row["shape"] = nt.value.shape();
    row["offset"] = offset;
    row["nbytes"] = nt.value.numel() * static_cast<int64_t>(sizeof(float));
    row["crc32"] = crc_of(nt.value);
    table.push_back(row);
    offset += nt.value.numel() * static_cast<int64_t>(sizeof(float));
  }
  manifest["tensors"] = table;

  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json under " + dir);
    out << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "tensors.bin", std::ios::binary);
    if (!out) throw IoError("cannot write tensors.bin under " + dir);
    for (const auto& nt : ckpt.tensors)
      out.write(reinterpret_cast<const char*>(nt.value.data()),
                static_cast<std::streamsize>(nt.value.numel() * sizeof(float)));
    if (!out) throw IoError("tensor blob write failed under " + dir);
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream manifest_in(fs::path(dir) / "manifest.json");
  if (!manifest_in) throw LoadError("missing manifest.json under " + dir);
  json manifest;
  try {
    manifest_in >> manifest;
  } catch (const json::exception& e) {
    throw LoadError(std::string("manifest.json is not valid JSON: ") + e.what());
  }

  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<int>() != kFormatVersion)
    throw LoadError("checkpoint format version mismatch (expected " +
                    std::to_string(kFormatVersion) + ")");

  Checkpoint ckpt;
  ckpt.config = RunConfig::from_json(manifest.at("config"));
  const auto& counters = manifest.at("counters");
  ckpt.step1_epochs_done = counters.at("step1_epochs_done").get<int64_t>();
  ckpt.step1_iters = counters.at("step1_iters").get<int64_t>();
  ckpt.step2_iters = counters.at("step2_iters").get<int64_t>();
  ckpt.adam_g_t = counters.at("adam_g_t").get<int64_t>();
  ckpt.adam_d_t = counters.at("adam_d_t").get<int64_t>();
  ckpt.adam_e_t = counters.at("adam_e_t").get<int64_t>();
  const auto& rng = manifest.at("rng");
  ckpt.step1_rng_draws = rng.at("step1_draws").get<uint64_t>();
  ckpt.step2_rng_draws = rng.at("step2_draws").get<uint64_t>();
  const auto& nets = manifest.at("networks");
  ckpt.has_g = nets.at("g").get<bool>();
  ckpt.has_d = nets.at("d").get<bool>();
  ckpt.has_e = nets.at("e").get<bool>();

  std::ifstream blob(fs::path(dir) / "tensors.bin", std::ios::binary | std::ios::ate);
  if (!blob) throw LoadError("missing tensors.bin under " + dir);
  const int64_t blob_size = static_cast<int64_t>(blob.tellg());

  std::set<std::string> seen;
  for (const auto& row : manifest.at("tensors")) {
    NamedTensor nt;
    nt.name = row.at("name").get<std::string>();
    if (!seen.insert(nt.name).second)
      throw LoadError("duplicate tensor \"" + nt.name + "\" in manifest");
    if (row.at("dtype").get<std::string>() != kDtype)
      throw LoadError("tensor \"" + nt.name + "\" has unsupported dtype");
    const std::vector<int64_t> shape = row.at("shape").get<std::vector<int64_t>>();
    const int64_t offset = row.at("offset").get<int64_t>();
    const int64_t nbytes = row.at("nbytes").get<int64_t>();
    nt.value = Tensor<float>(shape);
    if (nt.value.numel() * static_cast<int64_t>(sizeof(float)) != nbytes)
      throw LoadError("tensor \"" + nt.name + "\": manifest shape " +
                      Tensor<float>::shape_str(shape) + " disagrees with byte length " +
                      std::to_string(nbytes));
    if (offset < 0 || offset + nbytes > blob_size)
      throw LoadError("tensor \"" + nt.name + "\": blob is truncated");
    blob.seekg(offset);
    blob.read(reinterpret_cast<char*>(nt.value.data()), nbytes);
    if (blob.gcount() != nbytes)
      throw LoadError("tensor \"" + nt.name + "\": short read from tensors.bin");
    if (crc_of(nt.value) != row.at("crc32").get<uint32_t>())
      throw LoadError("tensor \"" + nt.name + "\": checksum mismatch");
    ckpt.tensors.push_back(std::move(nt));
  }
  return ckpt;
}

}  // namespace xlat::train
