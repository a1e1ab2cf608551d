#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "textsplat/diff/tensor.hpp"

namespace textsplat::diff {

// How an entry is (re)initialized. `seed` is the entry's own stream, derived
// from the owning module's seed and the entry's module-local name.
struct InitSpec {
  enum class Kind { zeros, ones, uniform };
  Kind kind = Kind::zeros;
  double bound = 0.0;  // uniform(-bound, +bound)
  std::uint64_t seed = 0;

  std::string describe() const;
};

class MissingGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> tensor;
    InitSpec init;
  };
  struct Moments {
    std::vector<T> m, v;
  };

  explicit ParameterStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  std::uint64_t rng_seed() const { return rng_seed_; }

  // Registers and initializes a trainable entry. Names must be unique.
  Tensor<T> add(const std::string& name, Shape shape, InitSpec init);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;

  // Re-applies every entry's InitSpec in place; drops optimizer state.
  void reinitialize();
  void zero_grad();
  double grad_norm() const;

  // Adam state, keyed like the entries.
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

 private:
  static void fill(std::span<T> values, const InitSpec& init);

  std::uint64_t rng_seed_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, Moments> moments_;
  std::uint64_t step_ = 0;
};

// Hierarchical registration helper. Entry seeds depend on the scope seed and
// the path below the scope root only, so two modules built from the same seed
// get identical weights regardless of where they live in the store.
template <typename T>
class ParamScope {
 public:
  ParamScope(ParameterStore<T>& store, std::string prefix, std::uint64_t seed)
      : store_(&store), prefix_(std::move(prefix)), seed_(seed) {}

  ParamScope child(const std::string& name) const;

  // uniform(±1/sqrt(fan_in))
  Tensor<T> uniform(const std::string& name, Shape shape, std::size_t fan_in) const;
  Tensor<T> zeros(const std::string& name, Shape shape) const;
  Tensor<T> ones(const std::string& name, Shape shape) const;

  const std::string& prefix() const { return prefix_; }
  ParameterStore<T>& store() const { return *store_; }

 private:
  std::string full_name(const std::string& name) const;
  std::string local_name(const std::string& name) const;

  ParameterStore<T>* store_;
  std::string prefix_;
  std::string local_;
  std::uint64_t seed_;
};

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every entry, then zeroes gradients.
// Throws MissingGradient if an entry has no gradient.
template <typename T>
void adam_step(ParameterStore<T>& store, const AdamConfig& cfg);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class ParamScope<float>;
extern template class ParamScope<double>;

}  // namespace textsplat::diff
