#pragma once

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "rulesim/random.hpp"
#include "rulesim/response_matrix.hpp"
#include "rulesim/types.hpp"

namespace rulesim {

enum class Measure { procrustes, cka, cca };
enum class Convention { distance, similarity };

std::string_view to_string(Measure m);
std::string_view to_string(Convention c);

struct SimilarityScore {
  Measure measure = Measure::procrustes;
  double value = 0.0;
  Convention convention = Convention::distance;
  bool centered = true;
  int padded_to = 0;
  std::optional<Seed> subsample_seed;
};

Matrix center_columns(const Matrix& h);
ResponseMatrix center_columns(const ResponseMatrix& h);

/// Zero-pads the narrower operand on the right. Throws ShapeError on a
/// row-count mismatch.
std::pair<Matrix, Matrix> pad_to_common_dim(const Matrix& a, const Matrix& b);

/// Angular Procrustes distance in [0, pi/2]:
///   theta = arccos(||B̃ᵀA||_* / (||A||_F ||B̃||_F))
/// after centering and zero-padding both operands. The nuclear norm is the
/// optimum over the full orthogonal group. Throws DegenerateInputError when
/// either centered operand is zero.
double procrustes_distance(const Matrix& a, const Matrix& b);

/// Linear CKA on column-centered inputs; widths may differ.
double cka_score(const Matrix& a, const Matrix& b);

/// Mean canonical correlation. Each operand is centered and projected onto
/// its leading r principal directions, r = min(rank, rows/5, cols, numerical
/// rank); the correlations are the singular values of U_aᵀU_b.
double cca_score(const Matrix& a, const Matrix& b, int rank = 20);

double procrustes_distance(const ResponseMatrix& a, const ResponseMatrix& b);
double cka_score(const ResponseMatrix& a, const ResponseMatrix& b);
double cca_score(const ResponseMatrix& a, const ResponseMatrix& b, int rank = 20);

/// Procrustes distance, then CKA and CCA each as similarity and as 1 - similarity.
std::vector<SimilarityScore> similarity_scores(const ResponseMatrix& a, const ResponseMatrix& b, int cca_rank = 20);

/// Uniform column subsample without replacement; throws ShapeError when n
/// exceeds the unit count.
ResponseMatrix subsample_units(const ResponseMatrix& h, int n, Seed seed);

struct NoiseFloor {
  std::vector<double> data_data;   // d1: reference group vs disjoint reference group
  std::vector<double> model_data;  // d2: model sample vs the same first reference group
};

NoiseFloor noise_floor(const ResponseMatrix& reference, const ResponseMatrix& model, int n_sample, int n_repeats,
                       Seed seed);

/// Structured stand-in population: smooth condition-dependent latent
/// trajectories (latent_dim sinusoid mixtures) mapped to n_units through a
/// random mixing matrix and a rectifying nonlinearity.
ResponseMatrix surrogate_population(int n_conditions, int n_steps, int n_units, int latent_dim, Seed seed);

/// One noisy single-trial copy per condition: template + N(0, noise_std²).
ResponseMatrix noisy_trial(const ResponseMatrix& templ, double noise_std, Rng& rng);

}  // namespace rulesim
