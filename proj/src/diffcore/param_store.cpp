#include "diffcore/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace anchorforge::diff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Array<T> init) {
  if (index_.count(name)) throw DiffError("param_store", "duplicate parameter '" + name + "'");
  Entry e;
  e.name = name;
  e.m.assign(init.data.size(), T{0});
  e.v.assign(init.data.size(), T{0});
  e.param = Tensor<T>::variable(std::move(init));
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(e));
  return entries_.back().param;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DiffError("param_store", "no parameter '" + name + "'");
  return entries_[it->second].param;
}

template <typename T>
std::int64_t ParamStore<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.param.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) {
    Tensor<T> p = e.param;
    p.mutable_grad().assign(static_cast<std::size_t>(p.size()), T{0});
  }
}

template <typename T>
void ParamStore<T>::adam_step(const AdamConfig& cfg) {
  for (const auto& e : entries_) {
    if (e.param.grad().size() != static_cast<std::size_t>(e.param.size())) {
      throw DiffError("adam_step", "parameter '" + e.name + "' has no gradient");
    }
  }
  ++step_;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(step_)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(step_)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  for (auto& e : entries_) {
    Tensor<T> p = e.param;
    auto& w = p.mutable_value().data;
    const auto& g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.m[i] = b1 * e.m[i] + (T{1} - b1) * g[i];
      e.v[i] = b2 * e.v[i] + (T{1} - b2) * g[i] * g[i];
      const T mhat = e.m[i] / c1;
      const T vhat = e.v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    check_finite(p.value(), "adam_step");
  }
}

template <typename T>
template <typename U>
ParamStore<U> ParamStore<T>::cast() const {
  ParamStore<U> out;
  for (const auto& e : entries_) out.add(e.name, e.param.value().template cast<U>());
  out.set_step(step_);
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<double> ParamStore<float>::cast<double>() const;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<float> ParamStore<float>::cast<float>() const;

namespace {

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

bool get_u32(std::istream& is, std::uint32_t& v) {
  is.read(reinterpret_cast<char*>(&v), 4);
  return is.gcount() == 4;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  for (const auto& r : records) {
    put_u32(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(os, static_cast<std::uint32_t>(r.array.shape.size()));
    for (auto e : r.array.shape) put_u32(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(r.array.data.data()),
             static_cast<std::streamsize>(r.array.data.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[sizeof(kCheckpointMagic) - 1];
  is.read(magic, sizeof(magic));
  if (is.gcount() != sizeof(magic) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not an anchorforge checkpoint: " + path.string());
  }
  std::vector<NamedArray> out;
  std::uint32_t name_len = 0;
  while (get_u32(is, name_len)) {
    NamedArray r;
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    std::uint32_t rank = 0;
    if (is.gcount() != name_len || !get_u32(is, rank) || rank > 16) {
      throw std::runtime_error("truncated checkpoint record in " + path.string());
    }
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t e = 0;
      if (!get_u32(is, e)) throw std::runtime_error("truncated checkpoint record in " + path.string());
      r.array.shape.push_back(e);
    }
    r.array.data.resize(static_cast<std::size_t>(numel(r.array.shape)));
    const auto bytes = static_cast<std::streamsize>(r.array.data.size() * sizeof(float));
    is.read(reinterpret_cast<char*>(r.array.data.data()), bytes);
    if (is.gcount() != bytes) throw std::runtime_error("truncated checkpoint values in " + path.string());
    out.push_back(std::move(r));
  }
  if (!is.eof()) throw std::runtime_error("read error in checkpoint " + path.string());
  return out;
}

void save_params(const std::filesystem::path& path, const ParamStore<float>& store) {
  std::vector<NamedArray> records;
  for (const auto& e : store.entries()) records.push_back({e.name, e.param.value()});
  for (const auto& e : store.entries()) {
    records.push_back({"adam.m/" + e.name, Array<float>(e.param.shape(), e.m)});
    records.push_back({"adam.v/" + e.name, Array<float>(e.param.shape(), e.v)});
  }
  records.push_back({"adam.step", Array<float>(Shape{1}, std::vector<float>{static_cast<float>(store.step())})});
  write_checkpoint(path, records);
}

void load_params(const std::filesystem::path& path, ParamStore<float>& store) {
  std::unordered_map<std::string, Array<float>> by_name;
  for (auto& r : read_checkpoint(path)) {
    if (!by_name.emplace(r.name, std::move(r.array)).second) {
      throw std::runtime_error("duplicate record '" + r.name + "' in " + path.string());
    }
  }
  auto take = [&](const std::string& name, const Shape& shape) -> Array<float>* {
    auto it = by_name.find(name);
    if (it == by_name.end()) return nullptr;
    if (it->second.shape != shape) {
      throw std::runtime_error("checkpoint shape " + shape_str(it->second.shape) + " for '" + name +
                               "' does not match model shape " + shape_str(shape));
    }
    return &it->second;
  };
  for (auto& e : store.entries()) {
    Array<float>* p = take(e.name, e.param.shape());
    if (!p) throw std::runtime_error("checkpoint " + path.string() + " lacks parameter '" + e.name + "'");
    e.param.mutable_value() = *p;
    if (auto* m = take("adam.m/" + e.name, e.param.shape())) e.m = m->data;
    if (auto* v = take("adam.v/" + e.name, e.param.shape())) e.v = v->data;
  }
  if (auto* s = take("adam.step", Shape{1})) store.set_step(static_cast<std::int64_t>(s->data[0]));
}

}  // namespace anchorforge::diff
