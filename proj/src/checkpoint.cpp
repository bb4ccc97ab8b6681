// SPDX-License-Identifier: Apache-2.0
#include "pfd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "pfd/errors.hpp"
#include "pfd/hashing.hpp"

namespace pfd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'F', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError(path_ + ": truncated checkpoint");
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    bytes(&v, 8);
    return v;
  }
  std::string string(std::size_t limit = 1u << 26) {
    const auto n = u64();
    if (n > limit) throw DataError(path_ + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

std::vector<std::pair<std::string, Tensor*>> named_tensors(const ModelGraph& graph) {
  std::vector<std::pair<std::string, Tensor*>> out;
  std::set<std::string> names;
  for (Param* p : graph.all_params()) {
    if (!names.insert(p->name).second) throw ContractError("duplicate parameter name " + p->name);
    out.emplace_back(p->name, &p->value);
  }
  for (auto& [name, t] : graph.buffers()) {
    if (!names.insert(name).second) throw ContractError("duplicate buffer name " + name);
    out.emplace_back(name, t);
  }
  return out;
}

void save_checkpoint(const ModelGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  put_string(out, graph.config.to_key_values().to_text());
  put_string(out, graph.schema.to_json());
  const auto tensors = named_tensors(graph);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u64(out, t->rank());
    for (std::size_t d : t->shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * 8));
  }
  if (!out) throw DataError("write failed: " + path);
}

ModelGraph load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  Reader r(in, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw DataError(path + ": not a checkpoint");
  std::uint32_t version = 0;
  r.bytes(&version, 4);
  if (version != kVersion) throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto cfg = ModelConfig::from_key_values(KeyValues::parse(r.string()));
  const auto schema = FeatureSchema::from_json(r.string());
  ModelGraph g = build_model(cfg, schema);

  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : named_tensors(g)) slots[name] = t;
  const auto count = r.u64();
  if (count != slots.size()) throw DataError(path + ": tensor count does not match the model");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.string(4096);
    auto it = slots.find(name);
    if (it == slots.end()) throw DataError(path + ": unexpected tensor " + name);
    const auto rank = r.u64();
    if (rank > 8) throw DataError(path + ": bad rank for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64();
    Tensor& t = *it->second;
    if (shape != t.shape()) throw DataError(path + ": shape mismatch for " + name);
    r.bytes(t.data(), t.size() * 8);
    slots.erase(it);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes");
  return g;
}

std::string checkpoint_hash(const std::string& path) { return file_sha256(path); }

}  // namespace pfd
