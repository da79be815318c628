#include "har/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "har/errors.hpp"
#include "har/rng.hpp"
#include "har/serialize.hpp"

namespace har {

namespace {

// Rows of an orthonormal matrix drawn from a rotation-invariant
// distribution (Gram-Schmidt on Gaussian rows).
std::vector<std::vector<double>> random_rotation(int dim, Rng& rng) {
  const std::size_t d = static_cast<std::size_t>(dim);
  std::vector<std::vector<double>> q;
  q.reserve(d);
  while (q.size() < d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += u[j] * v[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    q.push_back(std::move(v));
  }
  return q;
}

// k points in R^dim with pairwise distance `scale`, centered at the
// origin, then rotated. Needs k <= dim.
std::vector<std::vector<double>> simplex_centroids(int k, int dim,
                                                   double scale, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(k);
  const std::size_t d = static_cast<std::size_t>(dim);
  const double edge = scale / std::sqrt(2.0);
  std::vector<std::vector<double>> pts(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) pts[i][i] = edge;
  const double mean = edge / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) pts[i][j] -= mean;

  const auto q = random_rotation(dim, rng);
  std::vector<std::vector<double>> out(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += q[r][c] * pts[i][c];
      out[i][r] = acc;
    }
  return out;
}

double quantize(double v) {
  return static_cast<double>(static_cast<float>(v));
}

}  // namespace

Generated generate(const SynthSpec& spec) {
  if (spec.coarse_count < 1 || spec.fines_per_coarse < 1)
    throw SpecError("class counts must be positive");
  if (spec.dim < 1 || spec.per_class < 1)
    throw SpecError("dim and per-class sample count must be positive");
  if (!(spec.coarse_separation > spec.fine_separation) ||
      !(spec.fine_separation > 0.0))
    throw SpecError("separations must satisfy coarse > fine > 0");
  if (spec.noise_sigma < 0.0) throw SpecError("noise sigma must be >= 0");
  if (spec.coarse_count > spec.dim || spec.fines_per_coarse > spec.dim)
    throw SpecError("dim " + std::to_string(spec.dim) +
                    " cannot hold " + std::to_string(spec.coarse_count) +
                    "x" + std::to_string(spec.fines_per_coarse) +
                    " simplex centroids");

  std::vector<std::string> coarse_names;
  std::vector<std::string> fine_names;
  std::vector<int> fine_to_coarse;
  for (int z = 0; z < spec.coarse_count; ++z) {
    coarse_names.push_back("c" + std::to_string(z));
    for (int j = 0; j < spec.fines_per_coarse; ++j) {
      fine_names.push_back("c" + std::to_string(z) + "_f" +
                           std::to_string(j));
      fine_to_coarse.push_back(z);
    }
  }
  Hierarchy hierarchy(std::move(coarse_names), std::move(fine_names),
                      std::move(fine_to_coarse));

  Rng rng(spec.seed);
  const auto coarse_centroids =
      simplex_centroids(spec.coarse_count, spec.dim, spec.coarse_separation,
                        rng);

  const std::size_t d = static_cast<std::size_t>(spec.dim);
  std::vector<std::vector<double>> fine_centroids;
  for (int z = 0; z < spec.coarse_count; ++z) {
    const auto offsets = simplex_centroids(spec.fines_per_coarse, spec.dim,
                                           spec.fine_separation, rng);
    for (int j = 0; j < spec.fines_per_coarse; ++j) {
      std::vector<double> c(d);
      for (std::size_t r = 0; r < d; ++r)
        c[r] = 0.5 + coarse_centroids[static_cast<std::size_t>(z)][r] +
               offsets[static_cast<std::size_t>(j)][r];
      fine_centroids.push_back(std::move(c));
    }
  }

  const int fine_count = hierarchy.fine_count();
  const std::size_t n =
      static_cast<std::size_t>(fine_count) *
      static_cast<std::size_t>(spec.per_class);
  Tensor features({n, d});
  std::vector<int> labels(n);
  std::size_t row = 0;
  for (int y = 0; y < fine_count; ++y) {
    const auto& c = fine_centroids[static_cast<std::size_t>(y)];
    for (int s = 0; s < spec.per_class; ++s, ++row) {
      std::span<double> xi = features.row_span(row);
      for (std::size_t r = 0; r < d; ++r) {
        double v = c[r] + spec.noise_sigma * rng.normal();
        v = std::min(std::max(v, 0.0), 1.0);
        xi[r] = quantize(v);
      }
      labels[row] = y;
    }
  }

  Dataset ds;
  ds.features = std::move(features);
  ds.fine_labels = std::move(labels);
  ds.fine_count = fine_count;
  ds.hierarchy_hash = hierarchy.hash();
  return Generated{std::move(ds), std::move(hierarchy)};
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.features.rank() != 2)
    throw DimensionError("dataset features must be [n, d]");
  if (ds.features.rows() != ds.fine_labels.size())
    throw DimensionError("feature rows do not match label count");
  ByteWriter w;
  w.magic("HARDATA1");
  w.u64(ds.features.rows());
  w.u64(ds.features.cols());
  w.u32(static_cast<std::uint32_t>(ds.fine_count));
  w.u64(ds.hierarchy_hash);
  for (std::size_t i = 0; i < ds.features.size(); ++i)
    w.f32(static_cast<float>(ds.features[i]));
  for (int y : ds.fine_labels) {
    if (y < 0 || y >= ds.fine_count || y > 0xFFFF)
      throw DomainError("label " + std::to_string(y) +
                        " not storable under fine count " +
                        std::to_string(ds.fine_count));
    w.u16(static_cast<std::uint16_t>(y));
  }
  w.save(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("HARDATA1");
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  const std::uint32_t fine_count = r.u32();
  if (n == 0 || d == 0 || fine_count == 0)
    throw IntegrityError("corrupt data: empty dimensions in " + path.string());

  Dataset ds;
  ds.fine_count = static_cast<int>(fine_count);
  ds.hierarchy_hash = r.u64();
  ds.features = Tensor({static_cast<std::size_t>(n),
                        static_cast<std::size_t>(d)});
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    const double v = static_cast<double>(r.f32());
    if (!(v >= 0.0 && v <= 1.0))
      throw IntegrityError("corrupt data: feature outside [0,1] in " +
                           path.string());
    ds.features[i] = v;
  }
  ds.fine_labels.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < ds.fine_labels.size(); ++i) {
    const std::uint16_t y = r.u16();
    if (y >= fine_count)
      throw IntegrityError("corrupt data: label out of range in " +
                           path.string());
    ds.fine_labels[i] = static_cast<int>(y);
  }
  if (!r.done())
    throw IntegrityError("trailing bytes in dataset " + path.string());
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path,
                     const Hierarchy& expected) {
  Dataset ds = load_dataset(path);
  if (ds.hierarchy_hash != expected.hash())
    throw IntegrityError("dataset " + path.string() +
                         " is bound to a different hierarchy");
  if (ds.fine_count != expected.fine_count())
    throw IntegrityError("dataset fine count does not match hierarchy");
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
    throw SpecError("train fraction must lie strictly between 0 and 1");

  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(ds.fine_count));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int y = ds.fine_labels[i];
    if (y < 0 || y >= ds.fine_count)
      throw DomainError("label " + std::to_string(y) + " outside dataset's " +
                        std::to_string(ds.fine_count) + " classes");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }

  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t y = 0; y < by_class.size(); ++y) {
    auto& members = by_class[y];
    if (members.size() < 2)
      throw DomainError("fine class " + std::to_string(y) +
                        " has fewer than 2 samples; cannot split");
    rng.shuffle(members);
    const std::size_t want = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(members.size())));
    const std::size_t take =
        std::min(std::max<std::size_t>(want, 1), members.size() - 1);
    train_idx.insert(train_idx.end(), members.begin(),
                     members.begin() + static_cast<std::ptrdiff_t>(take));
    test_idx.insert(test_idx.end(),
                    members.begin() + static_cast<std::ptrdiff_t>(take),
                    members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto take_rows = [&ds](const std::vector<std::size_t>& idx) {
    Dataset out;
    out.fine_count = ds.fine_count;
    out.hierarchy_hash = ds.hierarchy_hash;
    out.features = Tensor({idx.size(), ds.dim()});
    out.fine_labels.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::span<const double> src = ds.features.row_span(idx[r]);
      std::span<double> dst = out.features.row_span(r);
      std::copy(src.begin(), src.end(), dst.begin());
      out.fine_labels[r] = ds.fine_labels[idx[r]];
    }
    return out;
  };
  return {take_rows(train_idx), take_rows(test_idx)};
}

}  // namespace har
