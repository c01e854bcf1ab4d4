#include "rcs/transforms.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

namespace rcs {

namespace detail {

// FFTW plans are created once per shape under a global lock and shared.
// Execution through fftw_execute_r2r on caller-owned arrays is thread-safe.
struct FftPlan {
  fftw_plan plan = nullptr;
  ~FftPlan() {
    if (plan != nullptr) fftw_destroy_plan(plan);
  }
};

namespace {

enum class PlanShape { dht1, redft10, redft01, dht2 };

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::shared_ptr<const FftPlan> get_plan(PlanShape shape, Index n0, Index n1 = 0) {
  using Key = std::tuple<int, Index, Index>;
  static std::map<Key, std::shared_ptr<const FftPlan>> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  const Key key{static_cast<int>(shape), n0, n1};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const Index len = shape == PlanShape::dht2 ? n0 * n1 : n0;
  std::vector<double> in(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  auto p = std::make_shared<FftPlan>();
  const int n = static_cast<int>(n0);
  switch (shape) {
    case PlanShape::dht1:
      p->plan = fftw_plan_r2r_1d(n, in.data(), out.data(), FFTW_DHT, flags);
      break;
    case PlanShape::redft10:
      p->plan = fftw_plan_r2r_1d(n, in.data(), out.data(), FFTW_REDFT10, flags);
      break;
    case PlanShape::redft01:
      p->plan = fftw_plan_r2r_1d(n, in.data(), out.data(), FFTW_REDFT01, flags);
      break;
    case PlanShape::dht2:
      p->plan = fftw_plan_r2r_2d(n, static_cast<int>(n1), in.data(), out.data(), FFTW_DHT,
                                 FFTW_DHT, flags);
      break;
  }
  if (p->plan == nullptr) throw Error("FFTW planner failed");
  cache.emplace(key, p);
  return p;
}

void execute(const FftPlan& plan, const Vec& in, Vec& out) {
  // fftw_execute_r2r requires distinct, non-const buffers.
  Vec tmp = in;
  out.resize(in.size());
  fftw_execute_r2r(plan.plan, tmp.data(), out.data());
}

bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

void fwht_inplace(Vec& v) {
  const Index n = v.size();
  for (Index len = 1; len < n; len <<= 1) {
    for (Index i = 0; i < n; i += len << 1) {
      for (Index j = i; j < i + len; ++j) {
        const double a = v[j];
        const double b = v[j + len];
        v[j] = a + b;
        v[j + len] = a - b;
      }
    }
  }
  v *= 1.0 / std::sqrt(static_cast<double>(n));
}

}  // namespace
}  // namespace detail

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::hadamard: return "hadamard";
    case TransformKind::dct2: return "dct2";
    case TransformKind::hartley: return "hartley";
    case TransformKind::dense: return "dense";
  }
  return "unknown";
}

TransformKind parse_transform_kind(const std::string& name) {
  if (name == "hadamard") return TransformKind::hadamard;
  if (name == "dct2") return TransformKind::dct2;
  if (name == "hartley") return TransformKind::hartley;
  if (name == "dense") return TransformKind::dense;
  throw Error("unknown transform kind '" + name + "'");
}

OrthoTransform OrthoTransform::hadamard(Index n) {
  if (!detail::is_power_of_two(n)) throw DimensionError("hadamard: n must be a power of two");
  return OrthoTransform(TransformKind::hadamard, n);
}

OrthoTransform OrthoTransform::dct2(Index n) {
  if (n < 2) throw DimensionError("dct2: n must be at least 2");
  OrthoTransform t(TransformKind::dct2, n);
  t.plan_fwd_ = detail::get_plan(detail::PlanShape::redft10, n);
  t.plan_adj_ = detail::get_plan(detail::PlanShape::redft01, n);
  return t;
}

OrthoTransform OrthoTransform::hartley(Index n) {
  if (!detail::is_power_of_two(n)) throw DimensionError("hartley: n must be a power of two");
  OrthoTransform t(TransformKind::hartley, n);
  t.plan_fwd_ = detail::get_plan(detail::PlanShape::dht1, n);
  return t;
}

OrthoTransform OrthoTransform::dense(Mat m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DimensionError("dense: matrix must be square");
  const Index n = m.rows();
  if ((m.transpose() * m - Mat::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-8) {
    throw Error("dense: matrix is not orthonormal");
  }
  OrthoTransform t(TransformKind::dense, n);
  t.dense_ = std::make_shared<const Mat>(std::move(m));
  return t;
}

OrthoTransform OrthoTransform::identity(Index n) { return dense(Mat::Identity(n, n)); }

OrthoTransform OrthoTransform::make(TransformKind kind, Index n) {
  switch (kind) {
    case TransformKind::hadamard: return hadamard(n);
    case TransformKind::dct2: return dct2(n);
    case TransformKind::hartley: return hartley(n);
    case TransformKind::dense: return identity(n);
  }
  throw Error("unknown transform kind");
}

void OrthoTransform::forward(const Vec& x, Vec& out) const {
  require_size(x, n_, "OrthoTransform::forward");
  const double n = static_cast<double>(n_);
  switch (kind_) {
    case TransformKind::hadamard:
      out = x;
      detail::fwht_inplace(out);
      return;
    case TransformKind::hartley:
      detail::execute(*plan_fwd_, x, out);
      out *= 1.0 / std::sqrt(n);
      return;
    case TransformKind::dct2:
      // REDFT10 gives 2 sum_j x_j cos(pi (j + 1/2) k / n).
      detail::execute(*plan_fwd_, x, out);
      out[0] *= 0.5 * std::sqrt(1.0 / n);
      out.tail(n_ - 1) *= 0.5 * std::sqrt(2.0 / n);
      return;
    case TransformKind::dense:
      out.noalias() = (*dense_) * x;
      return;
  }
}

void OrthoTransform::adjoint(const Vec& y, Vec& out) const {
  require_size(y, n_, "OrthoTransform::adjoint");
  const double n = static_cast<double>(n_);
  switch (kind_) {
    case TransformKind::hadamard:
    case TransformKind::hartley:
      forward(y, out);
      return;
    case TransformKind::dct2: {
      // REDFT01 gives c_0 + 2 sum_{k>=1} c_k cos(pi (j + 1/2) k / n).
      Vec scaled = y;
      scaled[0] *= std::sqrt(1.0 / n);
      scaled.tail(n_ - 1) *= 0.5 * std::sqrt(2.0 / n);
      detail::execute(*plan_adj_, scaled, out);
      return;
    }
    case TransformKind::dense:
      out.noalias() = dense_->transpose() * y;
      return;
  }
}

Mat OrthoTransform::materialize() const {
  if (kind_ == TransformKind::dense) return *dense_;
  Mat m(n_, n_);
  Vec e = Vec::Zero(n_);
  Vec col;
  for (Index j = 0; j < n_; ++j) {
    e[j] = 1.0;
    forward(e, col);
    m.col(j) = col;
    e[j] = 0.0;
  }
  return m;
}

std::vector<Index> sample_subset(const std::vector<Index>& from, Index k, std::mt19937_64& rng) {
  const Index n = static_cast<Index>(from.size());
  if (k < 0 || k > n) throw Error("sample_subset: k out of range");
  std::vector<Index> pool = from;
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

RowSubset subsample_rows(Index n, const SamplingSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RowSubset out;
  out.mode = spec.mode;
  if (spec.mode == SamplingMode::uniform) {
    if (spec.m <= 0 || spec.m > n) throw Error("subsample_rows: need 0 < m <= n");
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    out.indices = sample_subset(all, spec.m, rng);
    return out;
  }
  if (!(spec.eta > 0.0 && spec.eta <= 1.0)) throw Error("subsample_rows: need eta in (0, 1]");
  std::bernoulli_distribution coin(spec.eta);
  for (Index i = 0; i < n; ++i) {
    if (coin(rng)) out.indices.push_back(i);
  }
  return out;
}

double coherence(const OrthoTransform& a) {
  const Index n = a.size();
  const double nd = static_cast<double>(n);
  switch (a.kind()) {
    case TransformKind::hadamard:
      return 1.0;
    case TransformKind::hartley: {
      // Entries are cas(2 pi r / n) / sqrt(n) and every residue r occurs.
      double best = 0.0;
      for (Index r = 0; r < n; ++r) {
        const double t = 2.0 * M_PI * static_cast<double>(r) / nd;
        best = std::max(best, std::pow(std::cos(t) + std::sin(t), 2));
      }
      return best;
    }
    case TransformKind::dct2: {
      // Rows k >= 1 carry sqrt(2/n) cos(pi (2j+1) k / (2n)). (2j+1) k can hit
      // a multiple of 2n exactly unless n is a power of two, in which case
      // the closest approach is one step of pi / (2n).
      if (!detail::is_power_of_two(n)) return 2.0;
      return std::max(1.0, 2.0 * std::pow(std::cos(M_PI / (2.0 * nd)), 2));
    }
    case TransformKind::dense:
      return nd * a.materialize().cwiseAbs2().maxCoeff();
  }
  return 0.0;
}

SubsampledOperator::SubsampledOperator(OrthoTransform a, RowSubset rows)
    : a_(std::move(a)), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.indices.size(); ++i) {
    const Index r = rows_.indices[i];
    if (r < 0 || r >= a_.size() || (i > 0 && r <= rows_.indices[i - 1])) {
      throw Error("SubsampledOperator: row indices must be strictly increasing and < n");
    }
  }
}

void SubsampledOperator::apply(const Vec& x, Vec& out) const {
  require_size(x, a_.size(), "SubsampledOperator::apply");
  Vec full;
  a_.forward(x, full);
  out.resize(rows_.size());
  for (Index i = 0; i < rows_.size(); ++i) out[i] = full[rows_.indices[static_cast<std::size_t>(i)]];
}

void SubsampledOperator::apply_adjoint(const Vec& y, Vec& out) const {
  require_size(y, rows_.size(), "SubsampledOperator::apply_adjoint");
  Vec full = Vec::Zero(a_.size());
  for (Index i = 0; i < rows_.size(); ++i) full[rows_.indices[static_cast<std::size_t>(i)]] = y[i];
  a_.adjoint(full, out);
}

RestrictedOperator::RestrictedOperator(OrthoTransform a, std::vector<Index> row_set,
                                       std::vector<Index> col_set)
    : a_(std::move(a)), rows_(std::move(row_set)), cols_(std::move(col_set)) {
  for (Index r : rows_) {
    if (r < 0 || r >= a_.size()) throw DimensionError("RestrictedOperator: row out of range");
  }
  for (Index c : cols_) {
    if (c < 0 || c >= a_.size()) throw DimensionError("RestrictedOperator: column out of range");
  }
}

void RestrictedOperator::apply(const Vec& x, Vec& out) const {
  require_size(x, cols(), "RestrictedOperator::apply");
  Vec full = Vec::Zero(a_.size());
  for (std::size_t j = 0; j < cols_.size(); ++j) full[cols_[j]] = x[static_cast<Index>(j)];
  Vec t;
  a_.forward(full, t);
  out.resize(rows());
  for (std::size_t i = 0; i < rows_.size(); ++i) out[static_cast<Index>(i)] = t[rows_[i]];
}

void RestrictedOperator::apply_adjoint(const Vec& y, Vec& out) const {
  require_size(y, rows(), "RestrictedOperator::apply_adjoint");
  Vec full = Vec::Zero(a_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) full[rows_[i]] = y[static_cast<Index>(i)];
  Vec t;
  a_.adjoint(full, t);
  out.resize(cols());
  for (std::size_t j = 0; j < cols_.size(); ++j) out[static_cast<Index>(j)] = t[cols_[j]];
}

AugmentedOperator::AugmentedOperator(OperatorPtr base, double lambda)
    : base_(std::move(base)), lambda_(lambda) {
  if (!(lambda_ > 0.0)) throw Error("AugmentedOperator: lambda must be positive");
}

void AugmentedOperator::apply(const Vec& z, Vec& out) const {
  require_size(z, cols(), "AugmentedOperator::apply");
  const Index n = base_->cols();
  base_->apply(z.head(n), out);
  out += z.tail(base_->rows()) / lambda_;
}

void AugmentedOperator::apply_adjoint(const Vec& y, Vec& out) const {
  require_size(y, rows(), "AugmentedOperator::apply_adjoint");
  Vec top;
  base_->apply_adjoint(y, top);
  out.resize(cols());
  out.head(base_->cols()) = top;
  out.tail(base_->rows()) = y / lambda_;
}

std::optional<double> AugmentedOperator::row_gram_scale() const {
  const auto c = base_->row_gram_scale();
  if (!c) return std::nullopt;
  return *c + 1.0 / (lambda_ * lambda_);
}

double mutual_coherence(const SubsampledOperator& a, const OrthoTransform& d) {
  const Index m = a.rows();
  if (d.size() != m) {
    throw DimensionError("mutual_coherence: D must be |Omega| x |Omega|");
  }
  double best = 0.0;
  Vec e = Vec::Zero(m);
  Vec dj, inner;
  for (Index j = 0; j < m; ++j) {
    e[j] = 1.0;
    d.forward(e, dj);
    e[j] = 0.0;
    // <a_i, d_j> for every column i of A_{Omega .} at once.
    a.apply_adjoint(dj, inner);
    best = std::max(best, inner.cwiseAbs().maxCoeff());
  }
  return static_cast<double>(a.cols()) * best;
}

Presparsified presparsify_error(const Vec& y, OperatorPtr sampled, const OrthoTransform& d) {
  if (!sampled) throw Error("presparsify_error: null operator");
  require_size(y, sampled->rows(), "presparsify_error");
  if (d.size() != sampled->rows()) throw DimensionError("presparsify_error: D must match |Omega|");
  Presparsified out;
  out.y = d.adjoint(y);
  const Index rows = sampled->rows();
  const Index cols = sampled->cols();
  auto fwd = [sampled, d](const Vec& x, Vec& o) {
    Vec t;
    sampled->apply(x, t);
    d.adjoint(t, o);
  };
  auto adj = [sampled, d](const Vec& w, Vec& o) {
    Vec t;
    d.forward(w, t);
    sampled->apply_adjoint(t, o);
  };
  out.op = std::make_shared<FunctionOperator>(rows, cols, fwd, adj, sampled->row_gram_scale());
  return out;
}

Transform2D::Transform2D(Index height, Index width) : h_(height), w_(width) {
  if (h_ < 1 || w_ < 1) throw DimensionError("Transform2D: empty shape");
  plan_ = detail::get_plan(detail::PlanShape::dht2, h_, w_);
}

void Transform2D::forward(const Vec& x, Vec& out) const {
  require_size(x, size(), "Transform2D::forward");
  detail::execute(*plan_, x, out);
  out *= 1.0 / std::sqrt(static_cast<double>(size()));
}

Vec Transform2D::periodic_laplacian_symbol() const {
  Vec sym(size());
  for (Index r = 0; r < h_; ++r) {
    const double lr = 2.0 - 2.0 * std::cos(2.0 * M_PI * static_cast<double>(r) / static_cast<double>(h_));
    for (Index c = 0; c < w_; ++c) {
      const double lc =
          2.0 - 2.0 * std::cos(2.0 * M_PI * static_cast<double>(c) / static_cast<double>(w_));
      sym[r * w_ + c] = lr + lc;
    }
  }
  return sym;
}

}  // namespace rcs
