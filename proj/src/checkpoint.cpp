#include "cain/checkpoint.h"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace cain {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'I', 'N'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t at = 0;

  void need(size_t n) const {
    check(at + n <= buf.size(), "checkpoint: truncated file");
  }
  uint8_t u8() {
    need(1);
    return buf[at++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[at++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[at++]) << (8 * i);
    return v;
  }
};

}  // namespace

void Checkpoint::add(const std::string& name, const Tensor<float>& t) {
  check(!contains(name), "checkpoint: duplicate entry '" + name + "'");
  NamedTensor e;
  e.name = name;
  e.dtype = 0;
  e.dims = t.dims();
  e.f32.assign(t.data().begin(), t.data().end());
  entries.push_back(std::move(e));
}

void Checkpoint::add(const std::string& name, const Tensor<double>& t) {
  check(!contains(name), "checkpoint: duplicate entry '" + name + "'");
  NamedTensor e;
  e.name = name;
  e.dtype = 1;
  e.dims = t.dims();
  e.f64.assign(t.data().begin(), t.data().end());
  entries.push_back(std::move(e));
}

void Checkpoint::add_scalar_f64(const std::string& name, double v) {
  check(!contains(name), "checkpoint: duplicate entry '" + name + "'");
  NamedTensor e;
  e.name = name;
  e.dtype = 1;
  e.dims = {1, 1, 1, 1};
  e.f64 = {v};
  entries.push_back(std::move(e));
}

const NamedTensor& Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& e : entries)
    if (e.name == name) return e;
  throw Error("checkpoint: no entry named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const NamedTensor& e : entries)
    if (e.name == name) return true;
  return false;
}

void Checkpoint::load_into(const std::string& name, Tensor<float>& t) const {
  const NamedTensor& e = find(name);
  check(e.dtype == 0, "checkpoint: '" + name + "' is not 32-bit");
  check(e.dims == t.dims(), "checkpoint: '" + name + "' dims " +
                                shape_str(e.dims) + " do not match " +
                                shape_str(t.dims()));
  std::copy(e.f32.begin(), e.f32.end(), t.ptr());
}

void Checkpoint::load_into(const std::string& name, Tensor<double>& t) const {
  const NamedTensor& e = find(name);
  check(e.dtype == 1, "checkpoint: '" + name + "' is not 64-bit");
  check(e.dims == t.dims(), "checkpoint: '" + name + "' dims " +
                                shape_str(e.dims) + " do not match " +
                                shape_str(t.dims()));
  std::copy(e.f64.begin(), e.f64.end(), t.ptr());
}

double Checkpoint::scalar_f64(const std::string& name) const {
  const NamedTensor& e = find(name);
  check(e.dtype == 1 && e.numel() == 1,
        "checkpoint: '" + name + "' is not a 64-bit scalar");
  return e.f64[0];
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, c.version);
  put_u64(out, static_cast<uint64_t>(c.entries.size()));
  for (const NamedTensor& e : c.entries) {
    check(e.dtype == 0 || e.dtype == 1, "checkpoint: bad dtype tag");
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(e.dtype);
    out.push_back(static_cast<uint8_t>(e.dims.size()));
    for (int64_t d : e.dims) put_u64(out, static_cast<uint64_t>(d));
    if (e.dtype == 0) {
      check(static_cast<int64_t>(e.f32.size()) == e.numel(),
            "checkpoint: '" + e.name + "' payload size mismatch");
      for (float v : e.f32) put_u32(out, std::bit_cast<uint32_t>(v));
    } else {
      check(static_cast<int64_t>(e.f64.size()) == e.numel(),
            "checkpoint: '" + e.name + "' payload size mismatch");
      for (double v : e.f64) put_u64(out, std::bit_cast<uint64_t>(v));
    }
  }
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  put_u32(out, crc);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
  check(bytes.size() >= 4 + 4 + 8 + 4, "checkpoint: truncated file");
  check(std::memcmp(bytes.data(), kMagic, 4) == 0,
        "checkpoint: bad magic bytes");
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  uint32_t actual_crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size() - 4)));
  check(stored_crc == actual_crc, "checkpoint: checksum failure");

  Reader r{bytes, 4};
  Checkpoint c;
  c.version = r.u32();
  check(c.version == 1, "checkpoint: unsupported version " +
                            std::to_string(c.version));
  uint64_t count = r.u64();
  size_t payload_end = bytes.size() - 4;
  for (uint64_t k = 0; k < count; ++k) {
    NamedTensor e;
    uint32_t name_len = r.u32();
    r.need(name_len);
    e.name.assign(reinterpret_cast<const char*>(bytes.data()) + r.at,
                  name_len);
    r.at += name_len;
    e.dtype = r.u8();
    check(e.dtype == 0 || e.dtype == 1, "checkpoint: bad dtype tag");
    uint8_t rank = r.u8();
    for (uint8_t i = 0; i < rank; ++i) {
      uint64_t d = r.u64();
      check(d >= 1 && d <= (1ull << 32), "checkpoint: implausible dim");
      e.dims.push_back(static_cast<int64_t>(d));
    }
    int64_t n = e.numel();
    if (e.dtype == 0) {
      e.f32.reserve(n);
      for (int64_t i = 0; i < n; ++i)
        e.f32.push_back(std::bit_cast<float>(r.u32()));
    } else {
      e.f64.reserve(n);
      for (int64_t i = 0; i < n; ++i)
        e.f64.push_back(std::bit_cast<double>(r.u64()));
    }
    c.entries.push_back(std::move(e));
  }
  check(r.at == payload_end, "checkpoint: trailing bytes after last entry");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::vector<uint8_t> bytes = encode_checkpoint(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "checkpoint: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  f.close();
  check(f.good(), "checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  check(f.good(), "checkpoint: cannot open '" + path + "'");
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  check(f.good(), "checkpoint: read from '" + path + "' failed");
  return decode_checkpoint(bytes);
}

}  // namespace cain
