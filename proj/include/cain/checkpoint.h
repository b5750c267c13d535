#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cain/tensor.h"

namespace cain {

// One serialized tensor. dtype 0 holds f32 data, dtype 1 holds f64; exactly
// one of the two buffers is populated.
struct NamedTensor {
  std::string name;
  uint8_t dtype = 0;
  Shape dims;
  std::vector<float> f32;
  std::vector<double> f64;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
};

// Ordered bag of named tensors; order is part of the byte format.
struct Checkpoint {
  uint32_t version = 1;
  std::vector<NamedTensor> entries;

  void add(const std::string& name, const Tensor<float>& t);
  void add(const std::string& name, const Tensor<double>& t);
  void add_scalar_f64(const std::string& name, double v);

  const NamedTensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;

  // Copies an entry's payload into an existing tensor (dims must match).
  void load_into(const std::string& name, Tensor<float>& t) const;
  void load_into(const std::string& name, Tensor<double>& t) const;
  double scalar_f64(const std::string& name) const;
};

// Binary layout: "CAIN" magic, version u32 LE, entry count u64 LE; per
// entry: name length u32 + UTF-8 bytes, dtype u8 (0 f32, 1 f64), rank u8,
// dims u64 each, raw little-endian IEEE-754 payload; trailing CRC32 of all
// preceding bytes.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);

}  // namespace cain
