#include "rulesim/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rulesim/errors.hpp"

namespace rulesim {

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::procrustes: return "procrustes";
    case Measure::cka: return "cka";
    case Measure::cca: return "cca";
  }
  return "unknown";
}

std::string_view to_string(Convention c) { return c == Convention::distance ? "distance" : "similarity"; }

Matrix center_columns(const Matrix& h) {
  if (h.rows() == 0) return h;
  return h.rowwise() - h.colwise().mean();
}

ResponseMatrix center_columns(const ResponseMatrix& h) {
  ResponseMatrix out = h;
  out.data = center_columns(h.data);
  return out;
}

std::pair<Matrix, Matrix> pad_to_common_dim(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("row counts differ: " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
  }
  const Eigen::Index width = std::max(a.cols(), b.cols());
  Matrix pa = Matrix::Zero(a.rows(), width);
  Matrix pb = Matrix::Zero(b.rows(), width);
  pa.leftCols(a.cols()) = a;
  pb.leftCols(b.cols()) = b;
  return {std::move(pa), std::move(pb)};
}

namespace {

void require_rows(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("row counts differ: " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
  }
  if (a.rows() == 0) throw ShapeError("empty response matrix");
}

}  // namespace

double procrustes_distance(const Matrix& a, const Matrix& b) {
  require_rows(a, b);
  auto [pa, pb] = pad_to_common_dim(center_columns(a), center_columns(b));
  const double na = pa.norm();
  const double nb = pb.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateInputError("Procrustes distance of a zero-variance operand");
  if (pa / na == pb / nb) return 0.0;
  // Chord form 2·asin(||Â - B̂Q||/2) of the same angle; it keeps full
  // precision near zero where arccos of a cosine close to 1 does not.
  const Matrix ua = pa / na, ub = pb / nb;
  Eigen::BDCSVD<Matrix> svd(ub.transpose() * ua, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double cosine = std::clamp(svd.singularValues().sum(), -1.0, 1.0);
  if (cosine < 0.5) return std::acos(cosine);
  const Matrix q = svd.matrixU() * svd.matrixV().transpose();
  const double chord = (ua - ub * q).norm();
  return 2.0 * std::asin(std::clamp(chord / 2.0, 0.0, 1.0));
}

double cka_score(const Matrix& a, const Matrix& b) {
  require_rows(a, b);
  const Matrix ca = center_columns(a);
  const Matrix cb = center_columns(b);
  const double saa = (ca.transpose() * ca).norm();
  const double sbb = (cb.transpose() * cb).norm();
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateInputError("CKA of a zero-variance operand");
  const double sab = (cb.transpose() * ca).squaredNorm();
  return std::clamp(sab / (saa * sbb), 0.0, 1.0);
}

namespace {

// Leading principal directions of the centered operand as an orthonormal
// row-space basis (rows × r).
Matrix principal_basis(const Matrix& centered, int r_cap) {
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  const double tol = std::max<double>(centered.rows(), centered.cols()) * 1e-12 * (s.size() ? s(0) : 0.0);
  int numerical = 0;
  while (numerical < s.size() && s(numerical) > tol) ++numerical;
  const int r = std::min(r_cap, numerical);
  if (r < 1) throw DegenerateInputError("CCA operand has numerical rank 0");
  return svd.matrixU().leftCols(r);
}

}  // namespace

double cca_score(const Matrix& a, const Matrix& b, int rank) {
  require_rows(a, b);
  if (rank < 1) throw ConfigError("CCA rank must be at least 1");
  const int row_cap = static_cast<int>(a.rows() / 5);
  if (row_cap < 1) throw DegenerateInputError("CCA needs at least 5 rows");
  const int cap_a = std::min({rank, row_cap, static_cast<int>(a.cols())});
  const int cap_b = std::min({rank, row_cap, static_cast<int>(b.cols())});
  const Matrix ua = principal_basis(center_columns(a), cap_a);
  const Matrix ub = principal_basis(center_columns(b), cap_b);
  const Vector rho = Eigen::BDCSVD<Matrix>(ua.transpose() * ub).singularValues();
  const Eigen::Index k = std::min(ua.cols(), ub.cols());
  return std::clamp(rho.head(k).mean(), 0.0, 1.0);
}

double procrustes_distance(const ResponseMatrix& a, const ResponseMatrix& b) {
  return procrustes_distance(a.data, b.data);
}

double cka_score(const ResponseMatrix& a, const ResponseMatrix& b) { return cka_score(a.data, b.data); }

double cca_score(const ResponseMatrix& a, const ResponseMatrix& b, int rank) { return cca_score(a.data, b.data, rank); }

std::vector<SimilarityScore> similarity_scores(const ResponseMatrix& a, const ResponseMatrix& b, int cca_rank) {
  const int width = std::max(a.n_units(), b.n_units());
  std::vector<SimilarityScore> out;
  out.push_back({Measure::procrustes, procrustes_distance(a, b), Convention::distance, true, width, std::nullopt});
  const double cka = cka_score(a, b);
  out.push_back({Measure::cka, cka, Convention::similarity, true, 0, std::nullopt});
  out.push_back({Measure::cka, 1.0 - cka, Convention::distance, true, 0, std::nullopt});
  const double cca = cca_score(a, b, cca_rank);
  out.push_back({Measure::cca, cca, Convention::similarity, true, 0, std::nullopt});
  out.push_back({Measure::cca, 1.0 - cca, Convention::distance, true, 0, std::nullopt});
  return out;
}

namespace {

ResponseMatrix select_columns(const ResponseMatrix& h, const std::vector<int>& columns, std::size_t begin,
                              std::size_t count) {
  ResponseMatrix out;
  out.n_conditions = h.n_conditions;
  out.n_steps = h.n_steps;
  out.source = h.source;
  out.data.resize(h.data.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const int c = columns[begin + k];
    out.data.col(static_cast<Eigen::Index>(k)) = h.data.col(c);
    if (!h.unit_labels.empty()) out.unit_labels.push_back(h.unit_labels[static_cast<std::size_t>(c)]);
  }
  return out;
}

}  // namespace

ResponseMatrix subsample_units(const ResponseMatrix& h, int n, Seed seed) {
  if (n < 1 || n > h.n_units()) {
    throw ShapeError("cannot subsample " + std::to_string(n) + " of " + std::to_string(h.n_units()) + " units");
  }
  Rng rng(seed);
  const std::vector<int> picked = sample_without_replacement(h.n_units(), n, rng);
  return select_columns(h, picked, 0, static_cast<std::size_t>(n));
}

NoiseFloor noise_floor(const ResponseMatrix& reference, const ResponseMatrix& model, int n_sample, int n_repeats,
                       Seed seed) {
  if (n_sample < 1 || n_repeats < 1) throw ConfigError("noise floor needs n_sample >= 1 and n_repeats >= 1");
  if (reference.n_units() < 2 * n_sample) {
    throw ShapeError("reference has " + std::to_string(reference.n_units()) + " units, needs at least 2·n_sample = " +
                     std::to_string(2 * n_sample));
  }
  if (model.n_units() < n_sample) {
    throw ShapeError("model has " + std::to_string(model.n_units()) + " units, needs at least n_sample = " +
                     std::to_string(n_sample));
  }
  if (reference.data.rows() != model.data.rows()) throw ShapeError("reference and model row counts differ");

  const bool same_population = model.data.cols() == reference.data.cols() && model.data == reference.data;
  NoiseFloor out;
  out.data_data.reserve(static_cast<std::size_t>(n_repeats));
  out.model_data.reserve(static_cast<std::size_t>(n_repeats));
  const auto n = static_cast<std::size_t>(n_sample);
  for (int r = 0; r < n_repeats; ++r) {
    Rng ref_rng(derive_seed(seed, "noise-floor-reference", static_cast<std::uint64_t>(r)));
    Rng model_rng(derive_seed(seed, "noise-floor-model", static_cast<std::uint64_t>(r)));
    const std::vector<int> ref_cols = sample_without_replacement(reference.n_units(), 2 * n_sample, ref_rng);
    const ResponseMatrix group1 = select_columns(reference, ref_cols, 0, n);
    const ResponseMatrix group2 = select_columns(reference, ref_cols, n, n);
    std::vector<int> model_cols;
    if (same_population) {
      // Units of group 1 are never drawn again, so d1 and d2 share one law.
      std::vector<int> rest;
      std::vector<bool> taken(static_cast<std::size_t>(reference.n_units()), false);
      for (std::size_t k = 0; k < n; ++k) taken[static_cast<std::size_t>(ref_cols[k])] = true;
      for (int c = 0; c < reference.n_units(); ++c)
        if (!taken[static_cast<std::size_t>(c)]) rest.push_back(c);
      for (int k : sample_without_replacement(static_cast<int>(rest.size()), n_sample, model_rng))
        model_cols.push_back(rest[static_cast<std::size_t>(k)]);
    } else {
      model_cols = sample_without_replacement(model.n_units(), n_sample, model_rng);
    }
    const ResponseMatrix units = select_columns(model, model_cols, 0, n);
    out.data_data.push_back(procrustes_distance(group2, group1));
    out.model_data.push_back(procrustes_distance(units, group1));
  }
  return out;
}

ResponseMatrix surrogate_population(int n_conditions, int n_steps, int n_units, int latent_dim, Seed seed) {
  if (n_conditions < 1 || n_steps < 1 || n_units < 1 || latent_dim < 1) {
    throw ConfigError("surrogate population dimensions must be positive");
  }
  Rng rng(derive_seed(seed, "surrogate"));
  Matrix latent(static_cast<Eigen::Index>(n_conditions) * n_steps, latent_dim);
  for (int k = 0; k < latent_dim; ++k) {
    const double freq = rng.uniform(0.5, 2.5);
    for (int c = 0; c < n_conditions; ++c) {
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = rng.uniform(0.5, 1.5);
      for (int t = 0; t < n_steps; ++t) {
        const double x = static_cast<double>(t) / n_steps;
        latent(static_cast<Eigen::Index>(c) * n_steps + t, k) = amp * std::sin(2.0 * std::numbers::pi * freq * x + phase);
      }
    }
  }
  Matrix mixing(latent_dim, n_units);
  for (Eigen::Index j = 0; j < mixing.cols(); ++j)
    for (Eigen::Index i = 0; i < mixing.rows(); ++i) mixing(i, j) = rng.normal() / std::sqrt(latent_dim);
  Vector offset(n_units);
  for (Eigen::Index j = 0; j < offset.size(); ++j) offset(j) = rng.uniform(-0.5, 0.5);
  Matrix data = latent * mixing;
  data.rowwise() += offset.transpose();
  data = data.array().tanh().max(0.0).matrix();
  return make_response(std::move(data), n_conditions, n_steps, "surrogate");
}

ResponseMatrix noisy_trial(const ResponseMatrix& templ, double noise_std, Rng& rng) {
  ResponseMatrix out = templ;
  for (Eigen::Index j = 0; j < out.data.cols(); ++j)
    for (Eigen::Index i = 0; i < out.data.rows(); ++i) out.data(i, j) += noise_std * rng.normal();
  return out;
}

}  // namespace rulesim
