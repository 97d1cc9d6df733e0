#include "nsfold/minima.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "nsfold/loss.hpp"

namespace nsfold {

std::string to_string(RowOrigin origin) {
  switch (origin) {
    case RowOrigin::MapZero: return "map-zero";
    case RowOrigin::Balance: return "balance";
    case RowOrigin::SuperposedZero: return "superposed-zero";
    case RowOrigin::SuperposedBalance: return "superposed-balance";
  }
  return "?";
}

std::size_t weight_column(std::size_t t, std::size_t l, std::size_t c) { return t + c * t + l; }

namespace {

std::vector<std::string> variable_names(std::size_t t) {
  std::vector<std::string> names;
  names.reserve(11 * t);
  for (std::size_t l = 1; l <= t; ++l) names.push_back("I^" + std::to_string(l));
  for (std::size_t c = 1; c <= kToyClasses; ++c)
    for (std::size_t l = 1; l <= t; ++l)
      names.push_back("W^" + std::to_string(l) + "_" + std::to_string(c));
  return names;
}

// Adds scale * (balance row of map l) into `row`.
void add_balance(double* row, std::size_t t, std::size_t l, double scale) {
  const double tenth = 1.0 / static_cast<double>(kToyClasses);
  row[weight_column(t, l, 0)] += scale * (tenth - 1.0);
  for (std::size_t c = 1; c < kToyClasses; ++c) row[weight_column(t, l, c)] += scale * tenth;
}

struct Reduced {
  Tensor matrix;                    // reduced row echelon form
  std::vector<std::size_t> pivots;  // pivot column of row i
};

Reduced reduce(const Tensor& input) {
  if (input.rank() != 2) throw DimensionError("row reduction expects a matrix, got " + shape_string(input.shape()));
  if (!all_finite(input)) throw NumericError("row reduction: non-finite entry");
  Tensor a = input;
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> scale(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) scale[r] = std::max(scale[r], std::fabs(a.at(r, c)));

  std::vector<std::size_t> pivots;
  std::size_t next = 0;
  for (std::size_t col = 0; col < cols && next < rows; ++col) {
    std::size_t best = rows;
    double best_abs = 0.0;
    for (std::size_t r = next; r < rows; ++r) {
      const double v = std::fabs(a.at(r, col));
      if (v > kPivotTolerance * scale[r] && v > best_abs) {
        best = r;
        best_abs = v;
      }
    }
    if (best == rows) continue;
    if (best != next) {
      for (std::size_t c = 0; c < cols; ++c) std::swap(a.at(best, c), a.at(next, c));
      std::swap(scale[best], scale[next]);
    }
    const double p = a.at(next, col);
    for (std::size_t c = col; c < cols; ++c) a.at(next, c) /= p;
    a.at(next, col) = 1.0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == next) continue;
      const double f = a.at(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < cols; ++c) a.at(r, c) -= f * a.at(next, c);
      a.at(r, col) = 0.0;
    }
    pivots.push_back(col);
    ++next;
  }
  return {std::move(a), std::move(pivots)};
}

double norm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

void require_folds(std::size_t t, std::size_t folds, std::span<const double> beta) {
  if (t < 1) throw ConfigError("minima: t must be at least 1");
  if (folds == 0 || t % folds != 0) {
    throw ConfigError("minima: N = " + std::to_string(folds) + " does not divide t = " +
                      std::to_string(t));
  }
  if (beta.size() != folds) {
    throw ConfigError("minima: " + std::to_string(beta.size()) + " beta values for N = " +
                      std::to_string(folds));
  }
  for (double b : beta)
    if (!std::isfinite(b)) throw ConfigError("minima: beta must be finite");
}

}  // namespace

LinearSystem build_baseline_system(std::size_t t) {
  if (t < 1) throw ConfigError("minima: t must be at least 1");
  const std::size_t cols = 11 * t;
  LinearSystem sys;
  sys.variables = variable_names(t);
  sys.matrix = Tensor({2 * t, cols});
  for (std::size_t l = 0; l < t; ++l) {
    sys.matrix.at(l, l) = 1.0;
    sys.origins.push_back(RowOrigin::MapZero);
  }
  for (std::size_t l = 0; l < t; ++l) {
    add_balance(sys.matrix.data() + (t + l) * cols, t, l, 1.0);
    sys.origins.push_back(RowOrigin::Balance);
  }
  return sys;
}

LinearSystem build_ns_system(std::size_t t, std::size_t folds, std::span<const double> beta,
                             bool weighted_balance) {
  require_folds(t, folds, beta);
  const std::size_t s = t / folds, cols = 11 * t;
  LinearSystem sys;
  sys.variables = variable_names(t);
  sys.matrix = Tensor({2 * s, cols});
  for (std::size_t l = 0; l < s; ++l) {
    for (std::size_t r = 0; r < folds; ++r) sys.matrix.at(l, l + r * s) = beta[r];
    sys.origins.push_back(RowOrigin::SuperposedZero);
  }
  for (std::size_t l = 0; l < s; ++l) {
    for (std::size_t r = 0; r < folds; ++r)
      add_balance(sys.matrix.data() + (s + l) * cols, t, l + r * s,
                  weighted_balance ? beta[r] : 1.0);
    sys.origins.push_back(RowOrigin::SuperposedBalance);
  }
  return sys;
}

RankNullity rank_nullity(const Tensor& matrix) {
  const Reduced r = reduce(matrix);
  return {r.pivots.size(), matrix.dim(1) - r.pivots.size()};
}

RankNullity rank_nullity(const LinearSystem& system) { return rank_nullity(system.matrix); }

Tensor null_space_basis(const Tensor& matrix) {
  const Reduced red = reduce(matrix);
  const std::size_t cols = matrix.dim(1);
  std::vector<bool> is_pivot(cols, false);
  for (std::size_t p : red.pivots) is_pivot[p] = true;
  const std::size_t nullity = cols - red.pivots.size();
  Tensor basis({cols, std::max<std::size_t>(nullity, 1)});
  if (nullity == 0) return basis;
  std::size_t k = 0;
  for (std::size_t f = 0; f < cols; ++f) {
    if (is_pivot[f]) continue;
    basis.at(f, k) = 1.0;
    for (std::size_t i = 0; i < red.pivots.size(); ++i) basis.at(red.pivots[i], k) = -red.matrix.at(i, f);
    ++k;
  }
  return basis;
}

double row_space_residual(const Tensor& basis, const Tensor& rows) {
  if (basis.dim(1) != rows.dim(1)) {
    throw DimensionError("row_space_residual: " + shape_string(basis.shape()) + " vs " +
                         shape_string(rows.shape()));
  }
  const std::size_t cols = basis.dim(1);
  // orthonormal rows by modified Gram-Schmidt, twice for stability
  std::vector<std::vector<double>> q;
  for (std::size_t i = 0; i < basis.dim(0); ++i) {
    std::vector<double> v(basis.data() + i * cols, basis.data() + (i + 1) * cols);
    const double original = norm(v.data(), cols);
    if (original == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& u : q) {
        double d = 0.0;
        for (std::size_t c = 0; c < cols; ++c) d += u[c] * v[c];
        for (std::size_t c = 0; c < cols; ++c) v[c] -= d * u[c];
      }
    }
    const double n = norm(v.data(), cols);
    if (n <= kPivotTolerance * original) continue;  // dependent row
    for (double& x : v) x /= n;
    q.push_back(std::move(v));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    std::vector<double> v(rows.data() + i * cols, rows.data() + (i + 1) * cols);
    const double original = norm(v.data(), cols);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& u : q) {
        double d = 0.0;
        for (std::size_t c = 0; c < cols; ++c) d += u[c] * v[c];
        for (std::size_t c = 0; c < cols; ++c) v[c] -= d * u[c];
      }
    }
    worst = std::max(worst, norm(v.data(), cols) / std::max(original, 1e-300));
  }
  return worst;
}

double max_image(const Tensor& a, const Tensor& vectors) {
  if (a.dim(1) != vectors.dim(0)) {
    throw DimensionError("max_image: " + shape_string(a.shape()) + " vs " +
                         shape_string(vectors.shape()));
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < vectors.dim(1); ++k) {
    double vmax = 0.0;
    for (std::size_t c = 0; c < vectors.dim(0); ++c) vmax = std::max(vmax, std::fabs(vectors.at(c, k)));
    if (vmax == 0.0) continue;
    for (std::size_t r = 0; r < a.dim(0); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < a.dim(1); ++c) s += a.at(r, c) * vectors.at(c, k) / vmax;
      worst = std::max(worst, std::fabs(s));
    }
  }
  return worst;
}

double loss_at_stationary_point(std::size_t t, std::size_t folds, std::span<const double> beta,
                                StationaryKind kind, double bias, Rng& rng) {
  require_folds(t, folds, beta);
  const LinearSystem sys =
      kind == StationaryKind::Baseline ? build_baseline_system(t) : build_ns_system(t, folds, beta);
  const RankNullity rn = rank_nullity(sys);
  const std::size_t cols = sys.cols();
  std::vector<double> v(cols, 0.0);
  if (rn.nullity > 0) {
    const Tensor basis = null_space_basis(sys.matrix);
    for (std::size_t k = 0; k < rn.nullity; ++k) {
      const double g = rng.normal();
      for (std::size_t c = 0; c < cols; ++c) v[c] += g * basis.at(c, k);
    }
  }
  const Tensor point({cols, 1}, v);
  const double residual = max_image(sys.matrix, point) *
                          std::max(1.0, max_abs(point));  // undo the unit scaling
  if (residual > 1e-9) {
    throw ComparisonError("stationary point misses its own system by " + std::to_string(residual));
  }

  // toy forward: dense input C, logits y_c = b + sum_j C^j W^j_c
  std::vector<double> fc(t);
  if (kind == StationaryKind::Baseline) {
    for (std::size_t l = 0; l < t; ++l) fc[l] = v[l];
  } else {
    const std::size_t s = t / folds;
    for (std::size_t l = 0; l < s; ++l) {
      double m = 0.0;
      for (std::size_t r = 0; r < folds; ++r) m += beta[r] * v[l + r * s];
      for (std::size_t k = 0; k < folds; ++k) fc[l + k * s] = m;
    }
  }
  Tensor logits({1, kToyClasses}, bias);
  for (std::size_t c = 0; c < kToyClasses; ++c)
    for (std::size_t j = 0; j < t; ++j) logits[c] += fc[j] * v[weight_column(t, j, c)];
  return cross_entropy(softmax(logits), 0);
}

MinimaComparison compare_minima_spaces(std::size_t t, std::size_t folds,
                                       std::span<const double> beta, std::uint64_t seed,
                                       double bias) {
  require_folds(t, folds, beta);
  if (folds < 2) throw ConfigError("minima: the comparison needs N >= 2");
  for (double b : beta)
    if (b == 0.0) throw ConfigError("minima: the comparison needs nonzero beta");

  MinimaComparison c;
  c.t = t;
  c.folds = folds;
  c.beta.assign(beta.begin(), beta.end());
  const LinearSystem b = build_baseline_system(t);
  const LinearSystem bp = build_ns_system(t, folds, beta);
  const RankNullity rb = rank_nullity(b), rbp = rank_nullity(bp);
  c.rank_b = rb.rank;
  c.rank_bprime = rbp.rank;
  c.nullity_b = rb.nullity;
  c.nullity_bprime = rbp.nullity;
  c.expected_gap = 2 * t - 2 * t / folds;
  c.rank_bprime_weighted = rank_nullity(build_ns_system(t, folds, beta, true)).rank;
  c.printed_rank_inequality_holds = c.rank_b < c.rank_bprime;

  if (c.nullity_bprime <= c.nullity_b) {
    throw ComparisonError("enlargement: nullity(B') = " + std::to_string(c.nullity_bprime) +
                          " is not above nullity(B) = " + std::to_string(c.nullity_b));
  }
  c.gap = c.nullity_bprime - c.nullity_b;
  if (c.gap != c.expected_gap) {
    throw ComparisonError("gap: nullity difference " + std::to_string(c.gap) + ", expected " +
                          std::to_string(c.expected_gap));
  }
  c.containment_residual = row_space_residual(b.matrix, bp.matrix);
  c.null_basis_residual = max_image(bp.matrix, null_space_basis(b.matrix));
  c.containment = c.containment_residual < 1e-9 && c.null_basis_residual < 1e-9;
  if (!c.containment) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "containment: row residual %.3e, null-basis residual %.3e",
                  c.containment_residual, c.null_basis_residual);
    throw ComparisonError(buf);
  }
  Rng rng(seed);
  c.loss_baseline = loss_at_stationary_point(t, folds, beta, StationaryKind::Baseline, bias, rng);
  c.loss_ns = loss_at_stationary_point(t, folds, beta, StationaryKind::Ns, bias, rng);
  const double ln10 = std::log(10.0);
  if (std::fabs(c.loss_baseline - ln10) > 1e-12 || std::fabs(c.loss_ns - ln10) > 1e-12) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "loss: baseline %.15f, superposed %.15f, expected ln(10)",
                  c.loss_baseline, c.loss_ns);
    throw ComparisonError(buf);
  }
  return c;
}

std::string format_comparison(const MinimaComparison& c) {
  std::ostringstream out;
  char line[200];
  std::string beta;
  for (std::size_t i = 0; i < c.beta.size(); ++i) {
    std::snprintf(line, sizeof line, "%s%g", i ? "," : "", c.beta[i]);
    beta += line;
  }
  auto row = [&](const char* key, const std::string& value) {
    std::snprintf(line, sizeof line, "%-26s %s\n", key, value.c_str());
    out << line;
  };
  row("t", std::to_string(c.t));
  row("N", std::to_string(c.folds));
  row("beta", beta);
  row("rank(B)", std::to_string(c.rank_b));
  row("rank(B')", std::to_string(c.rank_bprime));
  row("nullity(B)", std::to_string(c.nullity_b));
  row("nullity(B')", std::to_string(c.nullity_bprime));
  row("nullity gap", std::to_string(c.gap) + " (expected " + std::to_string(c.expected_gap) + ")");
  std::snprintf(line, sizeof line, "%s (row residual %.2e, null-basis residual %.2e)",
                c.containment ? "true" : "false", c.containment_residual, c.null_basis_residual);
  row("containment", line);
  std::snprintf(line, sizeof line, "%.15f", c.loss_baseline);
  row("loss at baseline point", line);
  std::snprintf(line, sizeof line, "%.15f", c.loss_ns);
  row("loss at folded point", line);
  std::snprintf(line, sizeof line, "%.15f", std::log(10.0));
  row("ln(10)", line);
  row("rank(B') beta-weighted", std::to_string(c.rank_bprime_weighted));
  row("printed r(B) < r(B')", c.printed_rank_inequality_holds
                                   ? "holds"
                                   : "does not hold; r(B') < r(B) is what more solutions requires");
  return out.str();
}

std::string comparison_json(const MinimaComparison& c) {
  nlohmann::json j;
  j["t"] = c.t;
  j["n"] = c.folds;
  j["beta"] = c.beta;
  j["rank_b"] = c.rank_b;
  j["rank_bprime"] = c.rank_bprime;
  j["nullity_b"] = c.nullity_b;
  j["nullity_bprime"] = c.nullity_bprime;
  j["gap"] = c.gap;
  j["containment"] = c.containment;
  j["containment_residual"] = c.containment_residual;
  j["null_basis_residual"] = c.null_basis_residual;
  j["loss_baseline"] = c.loss_baseline;
  j["loss_ns"] = c.loss_ns;
  j["rank_bprime_weighted"] = c.rank_bprime_weighted;
  j["printed_rank_inequality_holds"] = c.printed_rank_inequality_holds;
  return j.dump(2);
}

}  // namespace nsfold
