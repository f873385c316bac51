#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "skoffar/sketch.hpp"

using namespace skoffar;

TEST_CASE("sampling is seeded and correctly scaled") {
  SECTION("dimension checks") {
    auto rng = make_rng(1);
    REQUIRE_THROWS_AS(sample_sketch(0, 5, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(sample_sketch(6, 5, rng), std::invalid_argument);
  }

  SECTION("identical seeds give bit-identical matrices") {
    auto r1 = make_rng(42);
    auto r2 = make_rng(42);
    const SketchOperator a = sample_sketch(7, 40, r1);
    const SketchOperator b = sample_sketch(7, 40, r2);
    REQUIRE(a.S == b.S);
    auto r3 = make_rng(43);
    CHECK(sample_sketch(7, 40, r3).S != a.S);
  }

  SECTION("E ||S x||^2 = ||x||^2 (Monte-Carlo over 1e4 samples)") {
    const Index l = 10, n = 50;
    Vector x(n);
    auto rng = make_rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < n; ++i) x[i] = normal(rng);
    const double xsq = x.squaredNorm();
    double acc = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
      const SketchOperator op = sample_sketch(l, n, rng);
      acc += op.apply(x).squaredNorm() / xsq;
    }
    CHECK(acc / trials == Catch::Approx(1.0).margin(0.05));
  }
}

TEST_CASE("kappa_bound formula") {
  CHECK(kappa_bound(10, 10) == Catch::Approx(2.5));
  CHECK(kappa_bound(1, 100) == Catch::Approx(11.5));
  CHECK(kappa_bound(100, 10000) == Catch::Approx(11.5));
  REQUIRE_THROWS_AS(kappa_bound(0, 10), std::invalid_argument);
}

TEST_CASE("operator norm via power iteration") {
  SECTION("identity hook") {
    CHECK(operator_norm(identity_sketch(6)) == 1.0);
  }

  SECTION("explicit blocks") {
    SketchOperator op;
    op.rows = 2;
    op.cols = 3;
    op.S = Matrix::Zero(2, 3);
    op.S(0, 0) = 1.0;
    op.S(1, 1) = 1.0;
    CHECK(operator_norm(op) == Catch::Approx(1.0).epsilon(1e-10));
    op.S(0, 0) = 2.0;
    op.S(1, 1) = 2.0;
    CHECK(operator_norm(op) == Catch::Approx(2.0).epsilon(1e-10));
  }

  SECTION("agrees with a dense SVD oracle") {
    auto rng = make_rng(123);
    for (int t = 0; t < 5; ++t) {
      const SketchOperator op = sample_sketch(8, 60, rng);
      Eigen::BDCSVD<Matrix> svd(op.S);
      CHECK(operator_norm(op) ==
            Catch::Approx(svd.singularValues()[0]).epsilon(1e-6));
    }
  }
}

TEST_CASE("embedding margin") {
  SECTION("square orthogonal sketch preserves every norm") {
    SketchOperator op;
    op.rows = 3;
    op.cols = 3;
    const double c = std::cos(0.7), s = std::sin(0.7);
    op.S = Matrix::Identity(3, 3);
    op.S(0, 0) = c;
    op.S(0, 1) = -s;
    op.S(1, 0) = s;
    op.S(1, 1) = c;
    Matrix M(3, 2);
    M << 1, 0, 0, 2, 0.5, -1;
    const EmbeddingReport rep = embedding_margin(op, M, 0.9);
    CHECK(rep.margin == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(rep.passed);
  }

  SECTION("coordinate projection keeps e1") {
    SketchOperator op;
    op.rows = 2;
    op.cols = 3;
    op.S = Matrix::Zero(2, 3);
    op.S(0, 0) = 1.0;
    op.S(1, 1) = 1.0;
    Matrix M = Matrix::Zero(3, 1);
    M(0, 0) = 1.0;  // rank-1, range = span(e1)
    const EmbeddingReport rep = embedding_margin(op, M, 1.0);
    CHECK(rep.rank == 1);
    CHECK(rep.margin == Catch::Approx(1.0).epsilon(1e-12));
  }

  SECTION("rank-1 Gaussian margins concentrate near 1") {
    auto rng = make_rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix M(200, 1);
    for (Index i = 0; i < 200; ++i) M(i, 0) = normal(rng);
    std::vector<double> margins;
    for (int t = 0; t < 200; ++t) {
      const SketchOperator op = sample_sketch(20, 200, rng);
      margins.push_back(embedding_margin(op, M).margin);
    }
    std::sort(margins.begin(), margins.end());
    CHECK(margins[margins.size() / 2] >= 0.5);  // median
  }

  SECTION("margin is a lower bound of sampled ratios; exact for rank 1") {
    auto rng = make_rng(31);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index n = 40;
    for (Index rank : {Index(1), Index(3)}) {
      Matrix M(n, rank);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < rank; ++j) M(i, j) = normal(rng);
      const SketchOperator op = sample_sketch(10, n, rng);
      const double margin = embedding_margin(op, M).margin;
      double min_ratio = std::numeric_limits<double>::infinity();
      for (int t = 0; t < 10000; ++t) {
        Vector z(rank);
        for (Index j = 0; j < rank; ++j) z[j] = normal(rng);
        const Vector mz = M * z;
        min_ratio = std::min(min_ratio, op.apply(mz).norm() / mz.norm());
      }
      CHECK(margin <= min_ratio + 1e-6);
      if (rank == 1) CHECK(margin == Catch::Approx(min_ratio).margin(1e-6));
    }
  }

  SECTION("operator norm dominates any restricted margin") {
    auto rng = make_rng(77);
    std::normal_distribution<double> normal(0.0, 1.0);
    const SketchOperator op = sample_sketch(6, 30, rng);
    Matrix M(30, 4);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 4; ++j) M(i, j) = normal(rng);
    CHECK(operator_norm(op) >= embedding_margin(op, M).margin);
  }

  SECTION("zero M rejected") {
    const SketchOperator op = identity_sketch(3);
    REQUIRE_THROWS_AS(embedding_margin(op, Matrix::Zero(3, 2)),
                      std::invalid_argument);
  }
}

TEST_CASE("true-probability estimator") {
  auto rng = make_rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);

  SECTION("alpha = 0 always succeeds") {
    Matrix M(30, 1);
    for (Index i = 0; i < 30; ++i) M(i, 0) = normal(rng);
    const auto est = estimate_true_probability(5, 30, M, 0.0, 100, 9);
    CHECK(est.estimate == 1.0);
  }

  SECTION("square Gaussian with tiny alpha succeeds almost always") {
    Matrix M(12, 1);
    for (Index i = 0; i < 12; ++i) M(i, 0) = normal(rng);
    const auto est = estimate_true_probability(12, 12, M, 0.01, 200, 9);
    CHECK(est.estimate >= 0.95);
  }

  SECTION("rank(M) = l with demanding alpha fails almost always") {
    const Index l = 8, n = 60;
    Matrix M(n, l);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < l; ++j) M(i, j) = normal(rng);
    const auto est = estimate_true_probability(l, n, M, 0.9, 200, 9);
    CHECK(est.estimate <= 0.05);
    CHECK_FALSE(est.rank_precondition);  // rank = l >= l (1 - 0.9)
  }

  SECTION("wilson interval brackets the estimate") {
    Matrix M(20, 2);
    for (Index i = 0; i < 20; ++i)
      for (Index j = 0; j < 2; ++j) M(i, j) = normal(rng);
    const auto est = estimate_true_probability(6, 20, M, 0.3, 150, 4);
    CHECK(est.wilson_low <= est.estimate);
    CHECK(est.estimate <= est.wilson_high);
    CHECK(est.wilson_low >= 0.0);
    CHECK(est.wilson_high <= 1.0);
  }

  SECTION("sharding cannot change the outcome: per-trial seeds") {
    Matrix M(20, 1);
    for (Index i = 0; i < 20; ++i) M(i, 0) = normal(rng);
    const auto a = estimate_true_probability(4, 20, M, 0.5, 120, 99);
    const auto b = estimate_true_probability(4, 20, M, 0.5, 120, 99);
    CHECK(a.successes == b.successes);
  }

  SECTION("too few trials rejected") {
    Matrix M = Matrix::Ones(10, 1);
    REQUIRE_THROWS_AS(estimate_true_probability(2, 10, M, 0.5, 10, 1),
                      std::invalid_argument);
  }
}

TEST_CASE("gamma-embedding checker reports both parts") {
  auto rng = make_rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = 25;
  Vector g(n);
  for (Index i = 0; i < n; ++i) g[i] = normal(rng);
  const Matrix H = Matrix::Zero(n, n);  // sparse-Hessian extreme: H = 0
  const SketchOperator op = sample_sketch(10, n, rng);
  const auto rep = check_gamma_embedding(op, g, H, 0.1, 0.5, 1.0);
  CHECK(rep.sh_norm == 0.0);
  CHECK(rep.hessian_part);
  CHECK(rep.sg_norm == Catch::Approx(op.apply(g).norm()));
}

TEST_CASE("margin vanishes when the range outruns the sketch rows") {
  // rank(M) > l: the restricted map has a kernel, so no positive alpha works
  SketchOperator op;
  op.rows = 2;
  op.cols = 4;
  auto rng = make_rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  op.S = Matrix(2, 4);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 4; ++j) op.S(i, j) = normal(rng);
  Matrix M = Matrix::Identity(4, 3);  // rank 3 > 2
  const EmbeddingReport rep = embedding_margin(op, M, 0.1);
  CHECK(rep.rank == 3);
  CHECK(rep.margin == 0.0);
  CHECK_FALSE(rep.passed);

  const auto est = estimate_true_probability(2, 4, M, 0.1, 100, 5);
  CHECK(est.estimate == 0.0);
  // with alpha = 0 the zero margin still qualifies
  const auto est0 = estimate_true_probability(2, 4, M, 0.0, 100, 5);
  CHECK(est0.estimate == 1.0);
}
