// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace harness {

namespace {

constexpr char kMagic[8] = {'I', 'T', 'S', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  const auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

template <typename T>
void write_entry(std::ofstream& out, const std::string& name, const diffnet::Tensor<T>& t,
                 std::uint8_t dtype) {
  write_string(out, name);
  write_pod(out, dtype);
  write_pod(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) write_pod(out, static_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
diffnet::Tensor<T> read_payload(std::ifstream& in, const diffnet::Shape& shape) {
  diffnet::Tensor<T> t(shape);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(ckpt.f32.size() + ckpt.f64.size()));
  for (const auto& [name, t] : ckpt.f32) write_entry(out, name, t, 4);
  for (const auto& [name, t] : ckpt.f64) write_entry(out, name, t, 8);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("checkpoint: '" + path + "' has the wrong magic");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = read_pod<std::uint64_t>(in);
  Checkpoint ckpt;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    const auto dtype = read_pod<std::uint8_t>(in);
    const auto rank = read_pod<std::uint32_t>(in);
    diffnet::Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    if (dtype == 4)
      ckpt.f32.emplace(name, read_payload<float>(in, shape));
    else if (dtype == 8)
      ckpt.f64.emplace(name, read_payload<double>(in, shape));
    else
      throw std::runtime_error("checkpoint: unknown dtype tag " + std::to_string(dtype));
    if (!in) throw std::runtime_error("checkpoint: truncated payload in '" + path + "'");
  }
  return ckpt;
}

}  // namespace harness
