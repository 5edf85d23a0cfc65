#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metapop/solvers.hpp"

using namespace metapop;

namespace {

Matrix random_matrix(int n, Rng& rng) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal();
  return m;
}

Matrix rps_matrix() {
  Matrix m(3, 3);
  m << 0, -1, 1, 1, 0, -1, -1, 1, 0;
  return m;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(p[i], p[rng.uniform_index(i + 1)]);
  return p;
}

Matrix permute_rows(const Matrix& m, const std::vector<int>& p) {
  Matrix out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) out.row(p[i]) = m.row(i);
  return out;
}

Matrix permute_cols(const Matrix& m, const std::vector<int>& p) {
  Matrix out(m.rows(), m.cols());
  for (int j = 0; j < m.cols(); ++j) out.col(p[j]) = m.col(j);
  return out;
}

}  // namespace

TEST_CASE("init_params is deterministic with zero biases") {
  for (SolverArch arch :
       {SolverArch::kMlp, SolverArch::kConv1d, SolverArch::kGru}) {
    const MetaSolverParams a = init_params(arch, 16, 5);
    const MetaSolverParams b = init_params(arch, 16, 5);
    const MetaSolverParams c = init_params(arch, 16, 6);
    CHECK(a.flat == b.flat);
    CHECK(a.flat != c.flat);
    CHECK(a.flat.size() == solver_param_count(arch, 16));
  }
  // Mlp bias blocks sit after each weight block in the canonical layout.
  const int h = 8;
  const MetaSolverParams p = init_params(SolverArch::kMlp, h, 1);
  CHECK(p.flat.segment(h, h).cwiseAbs().maxCoeff() == 0.0);            // b1
  CHECK(p.flat.segment(2 * h + h * h, h).cwiseAbs().maxCoeff() == 0.0);  // b2
}

TEST_CASE("parameter counts follow the documented layer-shape arithmetic") {
  for (int h : {8, 16, 64}) {
    // w1(h) + b1(h) + w2(h^2) + b2(h) + w3(4h^2) + b3(2h) + w4(2h) + b4(1)
    CHECK(solver_param_count(SolverArch::kMlp, h) == 5 * h * h + 7 * h + 1);
    // entry(2h) + two GRU cells (6h^2 + 6h each) + head(2h + 1)
    CHECK(solver_param_count(SolverArch::kGru, h) == 12 * h * h + 16 * h + 1);
  }
  // Two conv blocks with 8 channels and kernel 3: (24+8+24+1) + (48+8+24+1).
  CHECK(solver_param_count(SolverArch::kConv1d, 64) == 138);
}

TEST_CASE("solver outputs live on the simplex for all sizes") {
  Rng rng(19);
  for (SolverArch arch :
       {SolverArch::kMlp, SolverArch::kConv1d, SolverArch::kGru}) {
    const MetaSolverParams params = init_params(arch, 8, 21);
    for (int rep = 0; rep < 340; ++rep) {
      const int n = 1 + static_cast<int>(rng.uniform_index(12));
      const Matrix m = random_matrix(n, rng);
      const MetaDistribution pi = solver_forward(params, m);
      CHECK(pi.size() == n);
      CHECK(pi.minCoeff() >= 0.0);
      CHECK(std::abs(pi.sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("size-one meta-games map to the trivial distribution") {
  for (SolverArch arch :
       {SolverArch::kMlp, SolverArch::kConv1d, SolverArch::kGru}) {
    const MetaSolverParams params = init_params(arch, 8, 33);
    const Matrix m = Matrix::Zero(1, 1);
    const MetaDistribution pi = solver_forward(params, m);
    CHECK(pi.size() == 1);
    CHECK(pi(0) == 1.0);
  }
}

TEST_CASE("mlp solver: column-permutation invariance, row equivariance") {
  Rng rng(23);
  const MetaSolverParams params = init_params(SolverArch::kMlp, 8, 24);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_index(7));
    const Matrix m = random_matrix(n, rng);
    const MetaDistribution pi = solver_forward(params, m);
    const auto perm = random_permutation(n, rng);

    const MetaDistribution pi_cols =
        solver_forward(params, permute_cols(m, perm));
    CHECK((pi_cols - pi).cwiseAbs().maxCoeff() < 1e-9);

    const MetaDistribution pi_both =
        solver_forward(params, permute_cols(permute_rows(m, perm), perm));
    Vector expected(n);
    for (int i = 0; i < n; ++i) expected(perm[i]) = pi(i);
    CHECK((pi_both - expected).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("conv1d solver: row equivariance holds, column invariance fails") {
  Rng rng(29);
  const MetaSolverParams params = init_params(SolverArch::kConv1d, 8, 30);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_index(7));
    const Matrix m = random_matrix(n, rng);
    const MetaDistribution pi = solver_forward(params, m);
    const auto perm = random_permutation(n, rng);
    const MetaDistribution pi_rows =
        solver_forward(params, permute_rows(m, perm));
    Vector expected(n);
    for (int i = 0; i < n; ++i) expected(perm[i]) = pi(i);
    CHECK((pi_rows - expected).cwiseAbs().maxCoeff() < 1e-9);
  }

  // Committed counterexample: convolving along the columns makes the output
  // depend on their order.
  Rng fixed(31);
  const Matrix m = random_matrix(5, fixed);
  std::vector<int> swap01 = {1, 0, 2, 3, 4};
  const MetaDistribution base = solver_forward(params, m);
  const MetaDistribution permuted =
      solver_forward(params, permute_cols(m, swap01));
  CHECK((base - permuted).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("forward passes are pure") {
  Rng rng(37);
  const Matrix m = random_matrix(6, rng);
  for (SolverArch arch :
       {SolverArch::kMlp, SolverArch::kConv1d, SolverArch::kGru}) {
    const MetaSolverParams params = init_params(arch, 8, 38);
    CHECK(solver_forward(params, m) == solver_forward(params, m));
  }
}

TEST_CASE("baseline distributions") {
  Rng rng(41);
  const Matrix m = random_matrix(4, rng);
  SolverSpec uniform{SolverVariant::kUniform};
  CHECK(baseline_distribution(uniform, m) == Vector::Constant(4, 0.25));

  SolverSpec last{SolverVariant::kLastAgent};
  Vector expected = Vector::Zero(4);
  expected(3) = 1.0;
  CHECK(baseline_distribution(last, m) == expected);

  SolverSpec nash{SolverVariant::kNash};
  nash.fp_iters = 10000;
  const MetaDistribution pi = baseline_distribution(nash, rps_matrix());
  for (int i = 0; i < 3; ++i) CHECK(std::abs(pi(i) - 1.0 / 3.0) < 0.02);
  CHECK(matrix_exploitability(rps_matrix(), pi) < 0.02);
}

TEST_CASE("fictitious play exploitability shrinks on average with rounds") {
  Rng rng(43);
  double avg100 = 0.0, avg1k = 0.0, avg10k = 0.0;
  const int instances = 20;
  for (int i = 0; i < instances; ++i) {
    Matrix a = random_matrix(5, rng);
    a = (a - a.transpose().eval()) / 2.0;  // zero-sum symmetric meta-game
    avg100 += matrix_exploitability(a, nash_fictitious_play(a, 100));
    avg1k += matrix_exploitability(a, nash_fictitious_play(a, 1000));
    avg10k += matrix_exploitability(a, nash_fictitious_play(a, 10000));
  }
  CHECK(avg100 / instances >= avg1k / instances);
  CHECK(avg1k / instances >= avg10k / instances);
}

TEST_CASE("lp nash is exact on random games") {
  Rng rng(47);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_index(5));
    const Matrix m = random_matrix(n, rng);
    const MatrixNash ne = nash_lp(m);
    CHECK(std::abs(ne.row.sum() - 1.0) < 1e-9);
    CHECK(std::abs(ne.col.sum() - 1.0) < 1e-9);
    CHECK(ne.row.minCoeff() > -1e-12);
    CHECK(ne.col.minCoeff() > -1e-12);
    // Deviation gains at the optimum vanish to solver precision.
    const double row_gain = (m * ne.col).maxCoeff() - ne.value;
    const double col_gain = ne.value - (m.transpose() * ne.row).minCoeff();
    CHECK(std::abs(row_gain) < 1e-8);
    CHECK(std::abs(col_gain) < 1e-8);
  }
  const MatrixNash rps = nash_lp(rps_matrix());
  CHECK(std::abs(rps.value) < 1e-12);
  for (int i = 0; i < 3; ++i) CHECK(rps.row(i) == doctest::Approx(1.0 / 3.0));
}
