#include "advrep/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "advrep/common.hpp"

namespace advrep {

namespace {

constexpr char kMagic[4] = {'A', 'R', 'C', 'P'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  ADVREP_REQUIRE(is.good(), DataError, "checkpoint truncated");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  ADVREP_REQUIRE(is.good(), DataError, "checkpoint truncated");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  const uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

float get_f32(std::istream& is) {
  const uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ADVREP_REQUIRE(os.good(), DataError, "cannot open ", path, " for writing");
  os.write(kMagic, 4);
  put_u32(os, ckpt.version);
  put_u64(os, ckpt.master_seed);
  put_u64(os, ckpt.epoch);
  put_f64(os, ckpt.lr);
  put_u32(os, ckpt.patience);
  put_u32(os, ckpt.halvings);
  put_f64(os, ckpt.best_monitor);
  put_u32(os, static_cast<uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    ADVREP_REQUIRE(e.name.size() < 65536, InternalError,
                   "parameter name too long");
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    os.put(static_cast<char>(e.group));
    os.put(static_cast<char>(e.trainable));
    put_u32(os, static_cast<uint32_t>(e.shape.size()));
    uint64_t numel = 1;
    for (uint64_t d : e.shape) {
      put_u64(os, d);
      numel *= d;
    }
    ADVREP_REQUIRE(numel == e.values.size(), InternalError,
                   "checkpoint entry ", e.name, " shape/value mismatch");
    for (float v : e.values) put_f32(os, v);
  }
  ADVREP_REQUIRE(os.good(), DataError, "write failed for ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ADVREP_REQUIRE(is.good(), DataError, "cannot open ", path);
  char magic[4];
  is.read(magic, 4);
  ADVREP_REQUIRE(is.good() && std::memcmp(magic, kMagic, 4) == 0, DataError,
                 path, " is not a checkpoint file");
  Checkpoint c;
  c.version = get_u32(is);
  ADVREP_REQUIRE(c.version == 1, DataError, "unsupported checkpoint version ",
                 c.version);
  c.master_seed = get_u64(is);
  c.epoch = get_u64(is);
  c.lr = get_f64(is);
  c.patience = get_u32(is);
  c.halvings = get_u32(is);
  c.best_monitor = get_f64(is);
  const uint32_t n = get_u32(is);
  c.entries.resize(n);
  for (auto& e : c.entries) {
    const uint32_t len = get_u32(is);
    e.name.resize(len);
    is.read(e.name.data(), len);
    int g = is.get();
    int t = is.get();
    ADVREP_REQUIRE(is.good(), DataError, "checkpoint truncated");
    e.group = static_cast<uint8_t>(g);
    e.trainable = static_cast<uint8_t>(t);
    const uint32_t nd = get_u32(is);
    ADVREP_REQUIRE(nd <= 8, DataError, "implausible rank in checkpoint");
    e.shape.resize(nd);
    uint64_t numel = 1;
    for (auto& d : e.shape) {
      d = get_u64(is);
      numel *= d;
    }
    ADVREP_REQUIRE(numel < (1ULL << 32), DataError,
                   "implausible entry size in checkpoint");
    e.values.resize(numel);
    for (auto& v : e.values) v = get_f32(is);
  }
  return c;
}

Checkpoint checkpoint_from_params(const ParamSet<float>& params) {
  Checkpoint c;
  for (const auto& e : params.entries()) {
    CheckpointEntry ce;
    ce.name = e.name;
    ce.group = static_cast<uint8_t>(e.group);
    ce.trainable = e.trainable ? 1 : 0;
    for (size_t d : e.tensor.shape()) ce.shape.push_back(d);
    ce.values = e.tensor.values();
    c.entries.push_back(std::move(ce));
  }
  return c;
}

void checkpoint_to_params(const Checkpoint& ckpt, ParamSet<float>& params) {
  ADVREP_REQUIRE(ckpt.entries.size() == params.entries().size(), DataError,
                 "checkpoint has ", ckpt.entries.size(),
                 " entries, model expects ", params.entries().size());
  for (size_t i = 0; i < ckpt.entries.size(); ++i) {
    const auto& ce = ckpt.entries[i];
    auto& pe = params.entries()[i];
    ADVREP_REQUIRE(ce.name == pe.name, DataError, "checkpoint entry ", i,
                   " is ", ce.name, ", model expects ", pe.name);
    ADVREP_REQUIRE(ce.group == static_cast<uint8_t>(pe.group) &&
                       ce.trainable == (pe.trainable ? 1 : 0),
                   DataError, "checkpoint metadata mismatch for ", ce.name);
    ADVREP_REQUIRE(ce.values.size() == pe.tensor.numel(), DataError,
                   "checkpoint size mismatch for ", ce.name);
    for (size_t d = 0; d < ce.shape.size(); ++d)
      ADVREP_REQUIRE(d < pe.tensor.ndim() && ce.shape[d] == pe.tensor.dim(d),
                     DataError, "checkpoint shape mismatch for ", ce.name);
    pe.tensor.values().assign(ce.values.begin(), ce.values.end());
  }
}

}  // namespace advrep
