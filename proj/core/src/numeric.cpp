#include "rkgcn/numeric.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>

namespace rkgcn {

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> out(scores.size());
  softmax<double>(scores, out);
  return out;
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

double FiniteDiffReport::tensor_error(std::string_view name) const {
  for (const auto& t : per_tensor)
    if (t.name == name) return t.max_rel_error;
  throw Error("tensor not checked: " + std::string(name));
}

FiniteDiffReport finite_diff_check(const std::function<double()>& loss, ParamStore<double>& params,
                                   FiniteDiffOptions options) {
  FiniteDiffReport report;
  Rng rng(options.seed);
  for (auto& t : params.tensors()) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.grad[i] != 0.0) active.push_back(i);
    std::shuffle(active.begin(), active.end(), rng);
    if (active.size() > options.active_per_tensor) active.resize(options.active_per_tensor);
    if (t.size() > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
      for (std::size_t k = 0; k < options.random_per_tensor; ++k) active.push_back(pick(rng));
    }

    FiniteDiffReport::PerTensor entry{t.name, 0.0, 0};
    for (auto i : active) {
      const double saved = t.value[i];
      t.value[i] = saved + options.h;
      const double up = loss();
      t.value[i] = saved - options.h;
      const double down = loss();
      t.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double analytic = t.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
      ++entry.coordinates;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.coordinates += entry.coordinates;
    report.per_tensor.push_back(std::move(entry));
  }
  return report;
}

namespace {

constexpr char kMagic[8] = {'R', 'K', 'G', 'C', 'N', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated parameter snapshot: " + path.string());
  return v;
}

template <typename Stored, typename Real>
void read_values(std::istream& in, std::vector<Real>& dst, const std::filesystem::path& path) {
  if constexpr (std::is_same_v<Stored, Real>) {
    in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(Real)));
    if (!in) throw DataError("truncated parameter snapshot: " + path.string());
  } else {
    std::vector<Stored> tmp(dst.size());
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(Stored)));
    if (!in) throw DataError("truncated parameter snapshot: " + path.string());
    std::transform(tmp.begin(), tmp.end(), dst.begin(), [](Stored v) { return static_cast<Real>(v); });
  }
}

}  // namespace

template <typename Real>
void save_params(const ParamStore<Real>& params, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, sizeof(Real));
    put<std::uint64_t>(out, params.size());
    for (const auto& t : params.tensors()) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.value.data()),
                static_cast<std::streamsize>(t.value.size() * sizeof(Real)));
    }
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Real>
ParamStore<Real> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a parameter snapshot: " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw DataError("unsupported snapshot version");
  auto scalar = get<std::uint32_t>(in, path);
  if (scalar != 4 && scalar != 8) throw DataError("bad scalar width in snapshot");
  auto count = get<std::uint64_t>(in, path);
  ParamStore<Real> params;
  for (std::uint64_t k = 0; k < count; ++k) {
    auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    auto rank = get<std::uint32_t>(in, path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    auto& t = params.add(std::move(name), std::move(shape));
    if (scalar == 4)
      read_values<float>(in, t.value, path);
    else
      read_values<double>(in, t.value, path);
  }
  return params;
}

template void save_params<float>(const ParamStore<float>&, const std::filesystem::path&);
template void save_params<double>(const ParamStore<double>&, const std::filesystem::path&);
template ParamStore<float> load_params<float>(const std::filesystem::path&);
template ParamStore<double> load_params<double>(const std::filesystem::path&);

}  // namespace rkgcn
