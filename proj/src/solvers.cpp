#include "metapop/solvers.hpp"

#include <cmath>

#include "metapop/check.hpp"

namespace metapop {

namespace {

constexpr int kConvChannels = 8;
constexpr int kConvKernel = 3;
constexpr double kLeakySlope = 0.01;

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp();
  return e / e.sum();
}

Vector relu(const Vector& z) { return z.cwiseMax(0.0); }

Matrix leaky_relu(const Matrix& z) {
  return z.cwiseMax(0.0) + kLeakySlope * z.cwiseMin(0.0);
}

// Reads consecutive segments out of the flat parameter vector. Matrices are
// stored row-major in layout order; this is the canonical checkpoint order.
class ParamReader {
 public:
  explicit ParamReader(const Vector& flat) : flat_(flat) {}

  Vector vec(int n) {
    Vector v = flat_.segment(pos_, n);
    pos_ += n;
    return v;
  }

  Matrix mat(int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) m.row(i) = flat_.segment(pos_ + i * cols, cols).transpose();
    pos_ += rows * cols;
    return m;
  }

  void done() const {
    require(pos_ == flat_.size(), "solver params: flat length mismatch");
  }

 private:
  const Vector& flat_;
  Eigen::Index pos_ = 0;
};

// Mlp layout: w1(h), b1(h), w2(h x h), b2(h), w3(2h x 2h), b3(2h),
//             w4(2h), b4(1)
int mlp_count(int h) { return 5 * h * h + 7 * h + 1; }

// Conv1d layout, per block: conv(in -> 8, k=3) then conv(8 -> out, k=3),
// weights ordered [out_channel][in_channel][tap], then biases per layer.
int conv1d_count() {
  const int c = kConvChannels, k = kConvKernel;
  const int block1 = (c * 1 * k + c) + (1 * c * k + 1);
  const int block2 = (c * 2 * k + c) + (1 * c * k + 1);
  return block1 + block2;
}

// Gru layout: we(h), be(h), column GRU [W_ih(3h x h), b_ih(3h), W_hh(3h x h),
// b_hh(3h)], row GRU likewise, wf(2h), bf(1). Gate order is [r, z, n].
int gru_count(int h) { return 12 * h * h + 16 * h + 1; }

struct GruCell {
  Matrix w_ih, w_hh;
  Vector b_ih, b_hh;

  static GruCell read(ParamReader& r, int h) {
    GruCell c;
    c.w_ih = r.mat(3 * h, h);
    c.b_ih = r.vec(3 * h);
    c.w_hh = r.mat(3 * h, h);
    c.b_hh = r.vec(3 * h);
    return c;
  }

  Vector step(const Vector& x, const Vector& h_prev) const {
    const int h = static_cast<int>(h_prev.size());
    const Vector gi = w_ih * x + b_ih;
    const Vector gh = w_hh * h_prev + b_hh;
    const Vector r =
        (1.0 + (-(gi.segment(0, h) + gh.segment(0, h))).array().exp())
            .inverse()
            .matrix();
    const Vector z =
        (1.0 + (-(gi.segment(h, h) + gh.segment(h, h))).array().exp())
            .inverse()
            .matrix();
    const Vector n =
        (gi.segment(2 * h, h) + r.cwiseProduct(gh.segment(2 * h, h)))
            .array()
            .tanh()
            .matrix();
    return (Vector::Ones(h) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
  }
};

// Same-length 1D convolution with zero padding, kernel 3.
Matrix conv1d(const Matrix& input, const Matrix& w, const Vector& b,
              int out_channels) {
  const int in_channels = static_cast<int>(input.rows());
  const int t = static_cast<int>(input.cols());
  Matrix out(out_channels, t);
  for (int o = 0; o < out_channels; ++o) {
    for (int p = 0; p < t; ++p) {
      double acc = b(o);
      for (int c = 0; c < in_channels; ++c) {
        for (int d = -1; d <= 1; ++d) {
          const int pp = p + d;
          if (pp < 0 || pp >= t) continue;
          acc += w(o, c * kConvKernel + d + 1) * input(c, pp);
        }
      }
      out(o, p) = acc;
    }
  }
  return out;
}

MetaDistribution mlp_forward(const MetaSolverParams& params,
                             const PayoffMatrix& m) {
  const int h = params.hidden;
  const int t = static_cast<int>(m.rows());
  ParamReader r(params.flat);
  const Vector w1 = r.vec(h);
  const Vector b1 = r.vec(h);
  const Matrix w2 = r.mat(h, h);
  const Vector b2 = r.vec(h);
  const Matrix w3 = r.mat(2 * h, 2 * h);
  const Vector b3 = r.vec(2 * h);
  const Vector w4 = r.vec(2 * h);
  const double b4 = r.vec(1)(0);
  r.done();

  // Per-entry MLP, then column mean-pool into row features.
  Matrix rows(h, t);
  for (int i = 0; i < t; ++i) {
    Vector acc = Vector::Zero(h);
    for (int j = 0; j < t; ++j) acc += relu(m(i, j) * w1 + b1);
    rows.col(i) = acc / t;
  }
  // Row-wise MLP, then row mean-pool into the global feature.
  Vector global = Vector::Zero(h);
  for (int i = 0; i < t; ++i) global += relu(w2 * rows.col(i) + b2);
  global /= t;

  Vector logits(t);
  for (int i = 0; i < t; ++i) {
    Vector u(2 * h);
    u << rows.col(i), global;
    logits(i) = w4.dot(relu(w3 * u + b3)) + b4;
  }
  return softmax(logits);
}

MetaDistribution conv1d_forward(const MetaSolverParams& params,
                                const PayoffMatrix& m) {
  const int t = static_cast<int>(m.rows());
  const int c = kConvChannels;
  ParamReader r(params.flat);
  const Matrix w1a = r.mat(c, 1 * kConvKernel);
  const Vector b1a = r.vec(c);
  const Matrix w1b = r.mat(1, c * kConvKernel);
  const Vector b1b = r.vec(1);
  const Matrix w2a = r.mat(c, 2 * kConvKernel);
  const Vector b2a = r.vec(c);
  const Matrix w2b = r.mat(1, c * kConvKernel);
  const Vector b2b = r.vec(1);
  r.done();

  Matrix features(t, t);
  for (int i = 0; i < t; ++i) {
    const Matrix x = m.row(i);
    const Matrix h1 = leaky_relu(conv1d(x, w1a, b1a, c));
    features.row(i) = leaky_relu(conv1d(h1, w1b, b1b, 1));
  }
  const Matrix global = features.colwise().mean();

  Vector logits(t);
  for (int i = 0; i < t; ++i) {
    Matrix x(2, t);
    x.row(0) = features.row(i);
    x.row(1) = global;
    const Matrix h1 = leaky_relu(conv1d(x, w2a, b2a, c));
    const Matrix h2 = conv1d(h1, w2b, b2b, 1);
    logits(i) = h2.mean();
  }
  return softmax(logits);
}

MetaDistribution gru_forward(const MetaSolverParams& params,
                             const PayoffMatrix& m) {
  const int h = params.hidden;
  const int t = static_cast<int>(m.rows());
  ParamReader r(params.flat);
  const Vector we = r.vec(h);
  const Vector be = r.vec(h);
  const GruCell col_gru = GruCell::read(r, h);
  const GruCell row_gru = GruCell::read(r, h);
  const Vector wf = r.vec(2 * h);
  const double bf = r.vec(1)(0);
  r.done();

  Matrix rows(h, t);
  for (int i = 0; i < t; ++i) {
    Vector state = Vector::Zero(h);
    for (int j = 0; j < t; ++j) state = col_gru.step(relu(m(i, j) * we + be), state);
    rows.col(i) = state;
  }
  Vector global = Vector::Zero(h);
  for (int i = 0; i < t; ++i) global = row_gru.step(rows.col(i), global);

  Vector logits(t);
  for (int i = 0; i < t; ++i) {
    Vector u(2 * h);
    u << rows.col(i), global;
    logits(i) = wf.dot(u) + bf;
  }
  return softmax(logits);
}

}  // namespace

std::string arch_name(SolverArch arch) {
  switch (arch) {
    case SolverArch::kMlp: return "mlp";
    case SolverArch::kConv1d: return "conv1d";
    case SolverArch::kGru: return "gru";
  }
  throw std::invalid_argument("unknown solver arch");
}

SolverArch arch_from_name(const std::string& name) {
  if (name == "mlp") return SolverArch::kMlp;
  if (name == "conv1d") return SolverArch::kConv1d;
  if (name == "gru") return SolverArch::kGru;
  throw std::invalid_argument("unknown solver arch: " + name);
}

int solver_param_count(SolverArch arch, int hidden) {
  require(hidden >= 1, "solver_param_count: hidden size must be positive");
  switch (arch) {
    case SolverArch::kMlp: return mlp_count(hidden);
    case SolverArch::kConv1d: return conv1d_count();
    case SolverArch::kGru: return gru_count(hidden);
  }
  throw std::invalid_argument("unknown solver arch");
}

MetaSolverParams init_params(SolverArch arch, int hidden, uint64_t seed) {
  require(hidden >= 1, "init_params: hidden size must be positive");
  MetaSolverParams params;
  params.arch = arch;
  params.hidden = hidden;
  params.flat = Vector::Zero(solver_param_count(arch, hidden));
  Rng rng(derive_seed(seed, 0x501e));

  Eigen::Index pos = 0;
  auto weights = [&](int rows, int fan_in, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < rows * cols; ++i)
      params.flat(pos++) = rng.uniform(-bound, bound);
  };
  auto biases = [&](int n) { pos += n; };  // already zero

  const int h = hidden;
  const int c = kConvChannels;
  const int k = kConvKernel;
  switch (arch) {
    case SolverArch::kMlp:
      weights(h, 1, 1);
      biases(h);
      weights(h, h, h);
      biases(h);
      weights(2 * h, 2 * h, 2 * h);
      biases(2 * h);
      weights(1, 2 * h, 2 * h);
      biases(1);
      break;
    case SolverArch::kConv1d:
      weights(c, 1 * k, 1 * k);
      biases(c);
      weights(1, c * k, c * k);
      biases(1);
      weights(c, 2 * k, 2 * k);
      biases(c);
      weights(1, c * k, c * k);
      biases(1);
      break;
    case SolverArch::kGru:
      weights(h, 1, 1);
      biases(h);
      for (int cell = 0; cell < 2; ++cell) {
        weights(3 * h, h, h);
        biases(3 * h);
        weights(3 * h, h, h);
        biases(3 * h);
      }
      weights(1, 2 * h, 2 * h);
      biases(1);
      break;
  }
  require(pos == params.flat.size(), "init_params: layout mismatch");
  return params;
}

MetaDistribution solver_forward(const MetaSolverParams& params,
                                const PayoffMatrix& m) {
  require(m.rows() == m.cols() && m.rows() >= 1,
          "solver_forward: meta-game must be square and nonempty");
  require(m.allFinite(), "solver_forward: meta-game has non-finite entries");
  require(params.flat.size() == solver_param_count(params.arch, params.hidden),
          "solver_forward: parameter size mismatch");
  switch (params.arch) {
    case SolverArch::kMlp: return mlp_forward(params, m);
    case SolverArch::kConv1d: return conv1d_forward(params, m);
    case SolverArch::kGru: return gru_forward(params, m);
  }
  throw std::invalid_argument("unknown solver arch");
}

// --- baselines ---------------------------------------------------------------

std::string solver_variant_name(SolverVariant variant) {
  switch (variant) {
    case SolverVariant::kLearned: return "learned";
    case SolverVariant::kUniform: return "uniform";
    case SolverVariant::kNash: return "nash";
    case SolverVariant::kLastAgent: return "last_agent";
  }
  throw std::invalid_argument("unknown solver variant");
}

SolverVariant solver_variant_from_name(const std::string& name) {
  if (name == "learned") return SolverVariant::kLearned;
  if (name == "uniform") return SolverVariant::kUniform;
  if (name == "nash") return SolverVariant::kNash;
  if (name == "last_agent") return SolverVariant::kLastAgent;
  throw std::invalid_argument("unknown solver variant: " + name);
}

MetaDistribution baseline_distribution(const SolverSpec& spec,
                                       const PayoffMatrix& m) {
  require(m.rows() == m.cols() && m.rows() >= 1,
          "baseline_distribution: meta-game must be square and nonempty");
  require(m.allFinite(),
          "baseline_distribution: meta-game has non-finite entries");
  const int t = static_cast<int>(m.rows());
  switch (spec.variant) {
    case SolverVariant::kUniform:
      return Vector::Constant(t, 1.0 / t);
    case SolverVariant::kLastAgent: {
      Vector v = Vector::Zero(t);
      v(t - 1) = 1.0;
      return v;
    }
    case SolverVariant::kNash:
      return nash_fictitious_play(m, spec.fp_iters);
    case SolverVariant::kLearned:
      throw std::invalid_argument(
          "baseline_distribution: learned solver needs parameters");
  }
  throw std::invalid_argument("unknown solver variant");
}

MetaDistribution nash_fictitious_play(const PayoffMatrix& m, int rounds) {
  require(rounds >= 1, "nash_fictitious_play: rounds must be >= 1");
  const int n = static_cast<int>(m.rows());
  if (n == 1) return Vector::Ones(1);
  // Empirical mixtures start from one virtual uniform round.
  Vector row_counts = Vector::Constant(n, 1.0 / n);
  Vector col_counts = Vector::Constant(n, 1.0 / n);
  for (int r = 0; r < rounds; ++r) {
    Eigen::Index br_row, br_col;
    (m * (col_counts / col_counts.sum())).maxCoeff(&br_row);
    ((row_counts / row_counts.sum()).transpose() * m).minCoeff(&br_col);
    row_counts(br_row) += 1.0;
    col_counts(br_col) += 1.0;
  }
  return row_counts / row_counts.sum();
}

double matrix_exploitability(const PayoffMatrix& m,
                             const MetaDistribution& weights) {
  require(m.cols() == weights.size(),
          "matrix_exploitability: size mismatch");
  return (m * weights).maxCoeff();
}

// --- exact Nash via LP --------------------------------------------------------

namespace {

// Primal simplex for max c^T w s.t. A w <= b, w >= 0 with b > 0, using
// Bland's rule. Returns the optimal w and the dual values on the slacks.
struct SimplexResult {
  Vector w;
  Vector duals;
};

SimplexResult simplex_max(const Matrix& a, const Vector& b, const Vector& c) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  constexpr double kEps = 1e-11;

  Matrix tab(m + 1, n + m + 1);
  tab.setZero();
  tab.block(0, 0, m, n) = a;
  tab.block(0, n, m, m) = Matrix::Identity(m, m);
  tab.col(n + m).head(m) = b;
  tab.row(m).head(n) = -c.transpose();

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  for (int iter = 0; iter < 10000; ++iter) {
    int e = -1;
    for (int j = 0; j < n + m; ++j) {
      if (tab(m, j) < -kEps) {
        e = j;
        break;
      }
    }
    if (e < 0) break;
    int leave = -1;
    double best = 0.0;
    for (int i = 0; i < m; ++i) {
      if (tab(i, e) > kEps) {
        const double ratio = tab(i, n + m) / tab(i, e);
        if (leave < 0 || ratio < best - kEps ||
            (ratio < best + kEps && basis[i] < basis[leave])) {
          leave = i;
          best = ratio;
        }
      }
    }
    require_numeric(leave >= 0, "simplex: unbounded program");
    tab.row(leave) /= tab(leave, e);
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double f = tab(i, e);
      if (f != 0.0) tab.row(i) -= f * tab.row(leave);
    }
    basis[leave] = e;
  }

  SimplexResult out;
  out.w = Vector::Zero(n);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) out.w(basis[i]) = tab(i, n + m);
  out.duals = tab.row(m).segment(n, m);
  return out;
}

}  // namespace

MatrixNash nash_lp(const PayoffMatrix& m) {
  require(m.allFinite(), "nash_lp: non-finite matrix");
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  require(rows >= 1 && cols >= 1, "nash_lp: empty matrix");

  // Shift positive; the column player's LP has a feasible slack basis.
  const double shift = m.cwiseAbs().maxCoeff() + 1.0;
  const Matrix b = m.array() + shift;

  const SimplexResult res =
      simplex_max(b, Vector::Ones(rows), Vector::Ones(cols));
  const double total = res.w.sum();
  require_numeric(total > 0.0, "nash_lp: degenerate solution");

  MatrixNash out;
  out.col = res.w / total;
  const double dual_total = res.duals.sum();
  require_numeric(dual_total > 0.0, "nash_lp: degenerate duals");
  out.row = res.duals / dual_total;
  out.value = 1.0 / total - shift;
  return out;
}

}  // namespace metapop
