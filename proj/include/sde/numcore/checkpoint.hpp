#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sde/numcore/adam.hpp"
#include "sde/numcore/parameter.hpp"

namespace sde {

/// Binary checkpoint layout (all integers and values little-endian):
///
///   "SDECKPT\0" u32 version u32 scalar_bytes u64 num_params
///   per parameter: u32 name_len, name, u32 ndims(=2), u64 rows, u64 cols, values
///   u8 has_optimizer; if set: f64 lr, f64 beta1, f64 beta2, f64 eps, u64 step,
///   u8 has_moments; if set: first then second moment per parameter
inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'E', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename Scalar>
void write_values(std::ostream& out, const Matrix<Scalar>& m) {
  for (Index i = 0; i < m.size(); ++i) write_le<Scalar>(out, m.data()[i]);
}

template <typename Scalar>
void read_values(std::istream& in, Matrix<Scalar>& m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = read_le<Scalar>(in);
}

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<Scalar>& params,
                     const AdamState<Scalar>* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, sizeof(Scalar));
  detail::write_le<std::uint64_t>(out, params.count());
  for (const auto& p : params) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_le<std::uint32_t>(out, 2);
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    detail::write_values(out, p->value);
  }
  detail::write_le<std::uint8_t>(out, optimizer ? 1 : 0);
  if (optimizer) {
    detail::write_le<double>(out, optimizer->learning_rate);
    detail::write_le<double>(out, optimizer->beta1);
    detail::write_le<double>(out, optimizer->beta2);
    detail::write_le<double>(out, optimizer->epsilon);
    detail::write_le<std::uint64_t>(out, optimizer->step);
    const bool moments = optimizer->first_moment.size() == params.count();
    detail::write_le<std::uint8_t>(out, moments ? 1 : 0);
    if (moments) {
      for (const auto& m : optimizer->first_moment) detail::write_values(out, m);
      for (const auto& v : optimizer->second_moment) detail::write_values(out, v);
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

/// Loads values into an already-constructed parameter set; names, order and
/// shapes must match.
template <typename Scalar>
void load_checkpoint(const std::filesystem::path& path, ParameterSet<Scalar>& params,
                     AdamState<Scalar>* optimizer = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto width = detail::read_le<std::uint32_t>(in);
  if (width != sizeof(Scalar)) throw std::runtime_error("checkpoint scalar width " + std::to_string(width) + " does not match");
  const auto count = detail::read_le<std::uint64_t>(in);
  if (count != params.count()) throw std::runtime_error("checkpoint has " + std::to_string(count) + " parameters, model has " + std::to_string(params.count()));
  for (std::size_t i = 0; i < count; ++i) {
    auto& p = params[i];
    const auto len = detail::read_le<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (name != p.name) throw std::runtime_error("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    if (detail::read_le<std::uint32_t>(in) != 2) throw std::runtime_error("unsupported tensor rank in checkpoint");
    const auto rows = detail::read_le<std::uint64_t>(in);
    const auto cols = detail::read_le<std::uint64_t>(in);
    if (static_cast<Index>(rows) != p.value.rows() || static_cast<Index>(cols) != p.value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    detail::read_values(in, p.value);
  }
  const auto has_optimizer = detail::read_le<std::uint8_t>(in);
  if (has_optimizer && optimizer) {
    optimizer->learning_rate = detail::read_le<double>(in);
    optimizer->beta1 = detail::read_le<double>(in);
    optimizer->beta2 = detail::read_le<double>(in);
    optimizer->epsilon = detail::read_le<double>(in);
    optimizer->step = detail::read_le<std::uint64_t>(in);
    optimizer->first_moment.clear();
    optimizer->second_moment.clear();
    if (detail::read_le<std::uint8_t>(in)) {
      for (int pass = 0; pass < 2; ++pass) {
        auto& moments = pass == 0 ? optimizer->first_moment : optimizer->second_moment;
        for (std::size_t i = 0; i < params.count(); ++i) {
          Matrix<Scalar> m(params[i].value.rows(), params[i].value.cols());
          detail::read_values(in, m);
          moments.push_back(std::move(m));
        }
      }
    }
  }
}

}  // namespace sde
