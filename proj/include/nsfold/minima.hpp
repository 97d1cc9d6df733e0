#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nsfold/error.hpp"
#include "nsfold/rng.hpp"
#include "nsfold/tensor.hpp"

namespace nsfold {

// Stationarity conditions of the one-convolution toy network written as
// homogeneous linear systems. Every feature map is a single scalar I^l and the
// dense layer has weights W^l_c from map l to class c (10 classes, class 1 is
// the label). Columns are ordered
//     I^1 .. I^t, W^1_1 .. W^t_1, W^1_2 .. W^t_2, ..., W^1_10 .. W^t_10
// so there are 11t unknowns. The shared scalar bias drops out of every row.

/// One of the four stationarity row families.
enum class RowOrigin {
  MapZero,            // I^l = 0
  Balance,            // (1/10 - 1) W^l_1 + 1/10 sum_{c>1} W^l_c = 0
  SuperposedZero,     // sum_r beta_r I^{l + r s} = 0
  SuperposedBalance,  // sum_r of the balance row over positions l + r s
};

std::string to_string(RowOrigin origin);

/// A stationarity row could not be satisfied or contained as required.
class ComparisonError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kToyClasses = 10;
inline constexpr double kPivotTolerance = 1e-9;

struct LinearSystem {
  Tensor matrix;  // rows x 11t
  std::vector<std::string> variables;
  std::vector<RowOrigin> origins;

  [[nodiscard]] std::size_t rows() const { return matrix.empty() ? 0 : matrix.dim(0); }
  [[nodiscard]] std::size_t cols() const { return variables.size(); }
};

/// Column of W^l_c with 0-based map l and 0-based class c.
std::size_t weight_column(std::size_t t, std::size_t l, std::size_t c);

/// 2t rows: I^l = 0 and the balance row for every map.
LinearSystem build_baseline_system(std::size_t t);

/// 2t/N rows: the beta-weighted map sum and the summed balance row for every
/// position l of a block. With `weighted_balance` the balance rows are scaled
/// by beta_r as well (diagnostic variant; the default is the plain sum).
LinearSystem build_ns_system(std::size_t t, std::size_t folds, std::span<const double> beta,
                             bool weighted_balance = false);

struct RankNullity {
  std::size_t rank = 0;
  std::size_t nullity = 0;
};

/// Row reduction with partial pivoting. A pivot counts when its magnitude
/// after elimination exceeds kPivotTolerance times that row's largest
/// magnitude before elimination.
RankNullity rank_nullity(const Tensor& matrix);
RankNullity rank_nullity(const LinearSystem& system);

/// cols x nullity matrix whose columns span the null space (one per free
/// column of the reduced echelon form). A full-rank matrix gets a single
/// zero column.
Tensor null_space_basis(const Tensor& matrix);

/// Largest relative least-squares residual of the rows of `rows` against the
/// row space of `basis`: max_i |r_i - P r_i| / max(|r_i|, 1e-300).
double row_space_residual(const Tensor& basis, const Tensor& rows);

/// max over vectors v (columns of `vectors`, each scaled to unit max-norm)
/// of |A v|_inf.
double max_image(const Tensor& a, const Tensor& vectors);

enum class StationaryKind { Baseline, Ns };

/// Builds a point satisfying the chosen system (a random null-space sample),
/// evaluates the toy network's softmax cross-entropy with label class 1 and
/// shared bias `bias`, and returns it. Throws ComparisonError when the point
/// misses its own system by more than 1e-9.
double loss_at_stationary_point(std::size_t t, std::size_t folds, std::span<const double> beta,
                                StationaryKind kind, double bias, Rng& rng);

struct MinimaComparison {
  std::size_t t = 0;
  std::size_t folds = 0;
  std::vector<double> beta;
  std::size_t rank_b = 0;
  std::size_t rank_bprime = 0;
  std::size_t nullity_b = 0;
  std::size_t nullity_bprime = 0;
  std::size_t gap = 0;            // nullity_bprime - nullity_b
  std::size_t expected_gap = 0;   // 2t (1 - 1/N)
  bool containment = false;
  double containment_residual = 0.0;  // rows of B' against row space of B
  double null_basis_residual = 0.0;   // |B' v| over the null basis of B
  double loss_baseline = 0.0;
  double loss_ns = 0.0;
  std::size_t rank_bprime_weighted = 0;  // beta-weighted balance rows
  /// Whether the inequality usually stated with this result, r(B) < r(B'), holds.
  /// It contradicts the conclusion (more solutions after folding), which
  /// requires r(B') < r(B).
  bool printed_rank_inequality_holds = false;
};

/// Builds both systems and checks the nullity gap, row-space containment,
/// the null basis of B against B', and the loss ln(10) at a sampled point of
/// each system. Needs N >= 2, N | t and nonzero beta (ConfigError otherwise);
/// a failing clause raises ComparisonError naming it.
MinimaComparison compare_minima_spaces(std::size_t t, std::size_t folds,
                                       std::span<const double> beta, std::uint64_t seed = 1,
                                       double bias = 0.0);

std::string format_comparison(const MinimaComparison& c);
/// Keys: rank_b, rank_bprime, nullity_b, nullity_bprime, gap, containment,
/// loss_baseline, loss_ns (plus diagnostics).
std::string comparison_json(const MinimaComparison& c);

}  // namespace nsfold
