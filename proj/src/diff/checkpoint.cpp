#include "textsplat/diff/checkpoint.hpp"

#include <fstream>
#include <map>

namespace textsplat::diff {

using util::read_u32;
using util::write_u32;

void write_checkpoint_records(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  util::write_magic(os, "ASPT");
  write_u32(os, kCheckpointVersion);
  for (const auto& r : records) {
    if (numel(r.shape) != r.values.size()) throw CheckpointError("checkpoint record '" + r.name + "' is inconsistent");
    write_u32(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    util::write_u8(os, static_cast<std::uint8_t>(r.dtype));
    write_u32(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) write_u32(os, static_cast<std::uint32_t>(e));
    for (double v : r.values) {
      if (r.dtype == DType::f32) {
        util::write_f32(os, static_cast<float>(v));
      } else {
        util::write_f64(os, v);
      }
    }
  }
  if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  util::expect_magic(is, "ASPT", path.string());
  const auto version = read_u32(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointRecord> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    CheckpointRecord r;
    const auto name_len = read_u32(is, "record name length");
    r.name.resize(name_len);
    if (!is.read(r.name.data(), name_len)) throw CheckpointError("truncated record name");
    const auto dt = util::read_u8(is, "record dtype");
    if (dt > 1) throw CheckpointError("record '" + r.name + "': unknown dtype " + std::to_string(dt));
    r.dtype = static_cast<DType>(dt);
    const auto rank = read_u32(is, "record rank");
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(read_u32(is, "record extent"));
    const std::size_t n = numel(r.shape);
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.values[i] = r.dtype == DType::f32 ? static_cast<double>(util::read_f32(is, "record payload"))
                                          : util::read_f64(is, "record payload");
    }
    out.push_back(std::move(r));
  }
  return out;
}

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::filesystem::path& path) {
  constexpr DType dt = dtype_of<T>();
  std::vector<CheckpointRecord> records;
  for (const auto& [name, e] : store.entries()) {
    records.push_back({name, dt, e.tensor.shape(), {e.tensor.values().begin(), e.tensor.values().end()}});
  }
  for (const auto& [name, mom] : store.moments()) {
    const Shape shape = store.get(name).shape();
    records.push_back({"opt.m." + name, dt, shape, {mom.m.begin(), mom.m.end()}});
    records.push_back({"opt.v." + name, dt, shape, {mom.v.begin(), mom.v.end()}});
  }
  records.push_back({"opt.step", DType::f64, {}, {static_cast<double>(store.step())}});
  write_checkpoint_records(path, records);
}

template <typename T>
void load_checkpoint(ParameterStore<T>& store, const std::filesystem::path& path) {
  auto records = read_checkpoint_records(path);
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;

  auto as_t = [](const CheckpointRecord& r) {
    std::vector<T> v(r.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(r.values[i]);
    return v;
  };
  for (const auto& r : records) {
    if (r.name.rfind("opt.", 0) != 0 && !store.contains(r.name)) {
      throw CheckpointError(path.string() + ": unexpected entry '" + r.name + "' (config/checkpoint mismatch)");
    }
  }
  for (const auto& [name, e] : store.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(path.string() + ": missing entry '" + name + "'");
    if (it->second->shape != e.tensor.shape()) {
      throw CheckpointError(path.string() + ": shape mismatch for '" + name + "': checkpoint " +
                            shape_str(it->second->shape) + " vs config " + shape_str(e.tensor.shape()));
    }
  }
  store.moments().clear();
  for (const auto& [name, e] : store.entries()) {
    Tensor<T> t = e.tensor;
    auto vals = as_t(*by_name[name]);
    std::copy(vals.begin(), vals.end(), t.mutable_values().begin());
    t.zero_grad();
    auto m = by_name.find("opt.m." + name);
    auto v = by_name.find("opt.v." + name);
    if (m != by_name.end() && v != by_name.end()) {
      store.moments()[name] = {as_t(*m->second), as_t(*v->second)};
    }
  }
  auto step = by_name.find("opt.step");
  store.set_step(step != by_name.end() && step->second->values.size() == 1
                     ? static_cast<std::uint64_t>(step->second->values[0])
                     : 0);
}

template void save_checkpoint(const ParameterStore<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParameterStore<double>&, const std::filesystem::path&);
template void load_checkpoint(ParameterStore<float>&, const std::filesystem::path&);
template void load_checkpoint(ParameterStore<double>&, const std::filesystem::path&);

}  // namespace textsplat::diff
