#include "dsal/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "dsal/error.hpp"
#include "dsal/model.hpp"

namespace dsal {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void put_u32(FILE* f, uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
void put_i64(FILE* f, int64_t v) { std::fwrite(&v, sizeof(v), 1, f); }

uint32_t get_u32(FILE* f, const std::string& path) {
  uint32_t v;
  if (std::fread(&v, sizeof(v), 1, f) != 1)
    throw Error("checkpoint-error", "truncated file " + path);
  return v;
}

int64_t get_i64(FILE* f, const std::string& path) {
  int64_t v;
  if (std::fread(&v, sizeof(v), 1, f) != 1)
    throw Error("checkpoint-error", "truncated file " + path);
  return v;
}

void put_str(FILE* f, const std::string& s) {
  put_u32(f, static_cast<uint32_t>(s.size()));
  std::fwrite(s.data(), 1, s.size(), f);
}

std::string get_str(FILE* f, const std::string& path) {
  const uint32_t n = get_u32(f, path);
  std::string s(n, '\0');
  if (n && std::fread(s.data(), 1, n, f) != n)
    throw Error("checkpoint-error", "truncated file " + path);
  return s;
}

}  // namespace

const Tensor* TensorFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void TensorFile::write(const std::string& path) const {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("io-error", "cannot write " + path);
  std::fwrite(kMagic, 1, 4, f.get());
  put_u32(f.get(), kVersion);
  put_u32(f.get(), static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(f.get(), k);
    put_str(f.get(), v);
  }
  put_u32(f.get(), static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_str(f.get(), name);
    put_u32(f.get(), static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); i++) put_i64(f.get(), t.dim(i));
    if (std::fwrite(t.data(), sizeof(float),
                    static_cast<size_t>(t.numel()),
                    f.get()) != static_cast<size_t>(t.numel()))
      throw Error("io-error", "short write to " + path);
  }
}

TensorFile TensorFile::read(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw Error("io-error", "cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kMagic, 4) != 0)
    throw Error("checkpoint-error", "bad magic in " + path);
  if (get_u32(f.get(), path) != kVersion)
    throw Error("checkpoint-error", "unsupported version in " + path);
  TensorFile tf;
  const uint32_t nmeta = get_u32(f.get(), path);
  for (uint32_t i = 0; i < nmeta; i++) {
    std::string k = get_str(f.get(), path);
    tf.meta[k] = get_str(f.get(), path);
  }
  const uint32_t ntensors = get_u32(f.get(), path);
  for (uint32_t i = 0; i < ntensors; i++) {
    std::string name = get_str(f.get(), path);
    const uint32_t ndim = get_u32(f.get(), path);
    std::vector<int64_t> shape(ndim);
    for (uint32_t d = 0; d < ndim; d++) shape[d] = get_i64(f.get(), path);
    Tensor t(shape);
    if (std::fread(t.data(), sizeof(float), static_cast<size_t>(t.numel()),
                   f.get()) != static_cast<size_t>(t.numel()))
      throw Error("checkpoint-error", "truncated tensor data in " + path);
    tf.tensors.emplace_back(std::move(name), std::move(t));
  }
  return tf;
}

namespace {

void fill_meta(TensorFile& tf, const CheckpointMeta& meta) {
  tf.meta["epoch"] = std::to_string(meta.epoch);
  tf.meta["step"] = std::to_string(meta.step);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", meta.best_val_cc);
  tf.meta["best_val_cc"] = buf;
  tf.meta["has_best_val"] = meta.has_best_val ? "1" : "0";
  tf.meta["rng_state"] = meta.rng_state;
  tf.meta["config"] = meta.config_snapshot;
  tf.meta["variant"] = meta.variant;
}

CheckpointMeta meta_from(const TensorFile& tf) {
  CheckpointMeta m;
  auto get = [&tf](const std::string& k) -> std::string {
    auto it = tf.meta.find(k);
    return it == tf.meta.end() ? "" : it->second;
  };
  if (!get("epoch").empty()) m.epoch = std::stoi(get("epoch"));
  if (!get("step").empty()) m.step = std::stoll(get("step"));
  if (!get("best_val_cc").empty()) m.best_val_cc = std::stod(get("best_val_cc"));
  m.has_best_val = get("has_best_val") == "1";
  m.rng_state = get("rng_state");
  m.config_snapshot = get("config");
  m.variant = get("variant");
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, SaliencyModel& model,
                     const CheckpointMeta& meta) {
  TensorFile tf;
  fill_meta(tf, meta);
  for (Param* p : model.store().params()) {
    tf.tensors.emplace_back(p->name, p->value);
    tf.tensors.emplace_back(p->name + "#momentum", p->momentum);
  }
  for (NamedBuffer* b : model.store().buffers())
    tf.tensors.emplace_back(b->name, b->value);
  tf.write(path);
}

CheckpointMeta load_checkpoint(const std::string& path,
                               SaliencyModel& model) {
  TensorFile tf = TensorFile::read(path);
  std::string problems;
  auto apply = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = tf.find(name);
    if (!src) {
      problems += "\n  missing tensor " + name;
      return;
    }
    if (src->shape() != dst.shape()) {
      problems += "\n  shape mismatch for " + name + ": checkpoint " +
                  src->shape_str() + " vs model " + dst.shape_str();
      return;
    }
    std::memcpy(dst.data(), src->data(),
                sizeof(float) * static_cast<size_t>(dst.numel()));
  };
  size_t expected = 0;
  for (Param* p : model.store().params()) {
    apply(p->name, p->value);
    apply(p->name + "#momentum", p->momentum);
    expected += 2;
  }
  for (NamedBuffer* b : model.store().buffers()) {
    apply(b->name, b->value);
    expected++;
  }
  if (tf.tensors.size() != expected) {
    std::map<std::string, bool> known;
    for (Param* p : model.store().params()) {
      known[p->name] = true;
      known[p->name + "#momentum"] = true;
    }
    for (NamedBuffer* b : model.store().buffers()) known[b->name] = true;
    for (const auto& [name, t] : tf.tensors)
      if (!known.count(name)) problems += "\n  unexpected tensor " + name;
  }
  if (!problems.empty())
    throw Error("checkpoint-error",
                "checkpoint " + path + " does not match the model:" + problems);
  return meta_from(tf);
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  // Reads the whole file; checkpoints are small enough at desk scale that a
  // dedicated header-only path is not worth the second format.
  return meta_from(TensorFile::read(path));
}

}  // namespace dsal
