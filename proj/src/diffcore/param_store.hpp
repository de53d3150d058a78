#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "diffcore/tensor.hpp"

namespace anchorforge::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable parameters in insertion order, with Adam state.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> param;
    Buffer<T> m;
    Buffer<T> v;
  };

  /// Registers a parameter; names must be unique.
  Tensor<T> add(const std::string& name, Array<T> init);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t scalar_count() const;
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }

  void zero_grad();
  /// Bias-corrected Adam update on every parameter. Throws if any parameter
  /// has no gradient buffer.
  void adam_step(const AdamConfig& cfg);

  template <typename U>
  ParamStore<U> cast() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

/// One record of the checkpoint container.
struct NamedArray {
  std::string name;
  Array<float> array;
};

inline constexpr char kCheckpointMagic[] = "ANCHORFORGE1";

/// Container layout: the 12-byte magic, then per record a u32 name length,
/// the name bytes, a u32 rank, rank u32 extents and the values as float32.
/// All integers and floats are little-endian. Records run to end of file.
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& records);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

/// Parameters plus Adam moments ("adam.m/<name>", "adam.v/<name>") and the
/// step counter ("adam.step").
void save_params(const std::filesystem::path& path, const ParamStore<float>& store);
/// Loads into a store whose parameter names and shapes already match.
void load_params(const std::filesystem::path& path, ParamStore<float>& store);

}  // namespace anchorforge::diff
