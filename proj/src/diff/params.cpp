#include "textsplat/diff/params.hpp"

#include <cmath>
#include <sstream>

#include "textsplat/diff/rng.hpp"

namespace textsplat::diff {

std::string InitSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::zeros: os << "zeros"; break;
    case Kind::ones: os << "ones"; break;
    case Kind::uniform: os << "uniform(+-" << bound << ",seed=" << seed << ")"; break;
  }
  return os.str();
}

template <typename T>
void ParameterStore<T>::fill(std::span<T> values, const InitSpec& init) {
  switch (init.kind) {
    case InitSpec::Kind::zeros:
      for (auto& v : values) v = T(0);
      break;
    case InitSpec::Kind::ones:
      for (auto& v : values) v = T(1);
      break;
    case InitSpec::Kind::uniform: {
      Rng rng(init.seed);
      for (auto& v : values) v = static_cast<T>(rng.uniform(-init.bound, init.bound));
      break;
    }
  }
}

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, InitSpec init) {
  if (entries_.count(name)) throw std::invalid_argument("parameter store: duplicate entry '" + name + "'");
  auto t = Tensor<T>::zeros(std::move(shape));
  fill(t.mutable_values(), init);
  t.set_requires_grad(true);
  entries_.emplace(name, Entry{t, init});
  return t;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("parameter store: no entry '" + name + "'");
  return it->second.tensor;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(name);
  }
  return out;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.tensor.size();
  return n;
}

template <typename T>
void ParameterStore<T>::reinitialize() {
  for (auto& [name, e] : entries_) {
    fill(e.tensor.mutable_values(), e.init);
    e.tensor.zero_grad();
  }
  moments_.clear();
  step_ = 0;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, e] : entries_) e.tensor.zero_grad();
}

template <typename T>
double ParameterStore<T>::grad_norm() const {
  double acc = 0.0;
  for (const auto& [name, e] : entries_) {
    for (T g : e.tensor.grad()) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

template <typename T>
ParamScope<T> ParamScope<T>::child(const std::string& name) const {
  ParamScope c = *this;
  c.prefix_ = full_name(name);
  c.local_ = local_name(name);
  return c;
}

template <typename T>
std::string ParamScope<T>::full_name(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

template <typename T>
std::string ParamScope<T>::local_name(const std::string& name) const {
  return local_.empty() ? name : local_ + "." + name;
}

template <typename T>
Tensor<T> ParamScope<T>::uniform(const std::string& name, Shape shape, std::size_t fan_in) const {
  InitSpec init;
  init.kind = InitSpec::Kind::uniform;
  init.bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  init.seed = mix_seed(seed_, local_name(name));
  return store_->add(full_name(name), std::move(shape), init);
}

template <typename T>
Tensor<T> ParamScope<T>::zeros(const std::string& name, Shape shape) const {
  return store_->add(full_name(name), std::move(shape), InitSpec{InitSpec::Kind::zeros, 0.0, 0});
}

template <typename T>
Tensor<T> ParamScope<T>::ones(const std::string& name, Shape shape) const {
  return store_->add(full_name(name), std::move(shape), InitSpec{InitSpec::Kind::ones, 0.0, 0});
}

template <typename T>
void adam_step(ParameterStore<T>& store, const AdamConfig& cfg) {
  for (const auto& [name, e] : store.entries()) {
    if (!e.tensor.has_grad()) throw MissingGradient("adam_step: parameter '" + name + "' has no gradient");
  }
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto& moments = store.moments();
  for (const auto& [name, e] : store.entries()) {
    Tensor<T> p = e.tensor;
    auto values = p.mutable_values();
    auto grad = p.grad();
    auto& mom = moments[name];
    if (mom.m.size() != values.size()) {
      mom.m.assign(values.size(), T(0));
      mom.v.assign(values.size(), T(0));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      const double m = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      const double update = cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
      values[i] = static_cast<T>(values[i] - update);
    }
    p.zero_grad();
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class ParamScope<float>;
template class ParamScope<double>;
template void adam_step(ParameterStore<float>&, const AdamConfig&);
template void adam_step(ParameterStore<double>&, const AdamConfig&);

}  // namespace textsplat::diff
