#include <doctest.h>

#include <cmath>
#include <random>

#include "forgebench/error.hpp"
#include "forgebench/svm.hpp"
#include "forgebench/util.hpp"
#include "oracles.hpp"

using namespace forgebench;

namespace {

struct Toy {
  std::vector<FeatureRow> x;
  std::vector<int> y;
};

// Two Gaussian blobs in `dim` dimensions, centers +-shift on the first axis.
Toy blobs(std::size_t positives, std::size_t negatives, double shift, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Toy t;
  for (std::size_t i = 0; i < positives + negatives; ++i) {
    const int label = i < positives ? 1 : -1;
    FeatureRow row(dim);
    for (auto& v : row) v = static_cast<float>(standard_normal(rng));
    row[0] += static_cast<float>(label * shift);
    t.x.push_back(std::move(row));
    t.y.push_back(label);
  }
  return t;
}

double dual_residual(const SvmModel& m) {
  double sum = 0;
  for (const auto& sv : m.support) sum += sv.alpha * sv.y;
  return std::abs(sum);
}

bool box_feasible(const SvmModel& m, double tol) {
  for (const auto& sv : m.support) {
    if (sv.alpha < -tol || sv.alpha > m.box(sv.y) + tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("bilinear resize matches an independent sampler") {
  const auto image = oracle::textured_image(37, 23, 5);
  for (auto [ow, oh] : {std::pair{250, 250}, {10, 7}, {37, 23}, {80, 11}}) {
    const auto out = bilinear_resize(image, ow, oh);
    REQUIRE(out.size() == static_cast<std::size_t>(ow) * oh * 3);
    for (int y = 0; y < oh; y += 3) {
      for (int x = 0; x < ow; x += 5) {
        for (int c = 0; c < 3; ++c) {
          CHECK(out[(static_cast<std::size_t>(y) * ow + x) * 3 + c] ==
                doctest::Approx(oracle::bilinear_at(image, ow, oh, x, y, c)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("preprocess produces normalized 250x250x3 rows") {
  Image flat(60, 40, 3);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 60; ++x) {
      flat.at(x, y, 0) = 255;
      flat.at(x, y, 1) = 0;
      flat.at(x, y, 2) = 128;
    }
  }
  const auto row = preprocess_pixels(flat);
  REQUIRE(row.size() == kSvmFeatureLength);
  CHECK(row[0] == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-5));
  CHECK(row[1] == doctest::Approx((0.0 - 0.456) / 0.224).epsilon(1e-5));
  CHECK(row[2] == doctest::Approx((128.0 / 255.0 - 0.406) / 0.225).epsilon(1e-5));

  Image gray(30, 30, 1);
  std::fill(gray.pixels.begin(), gray.pixels.end(), 51);
  const auto g = preprocess_pixels(gray);
  CHECK(g[0] == doctest::Approx((0.2 - 0.485) / 0.229).epsilon(1e-5));
  CHECK(g[2] == doctest::Approx((0.2 - 0.406) / 0.225).epsilon(1e-5));
  CHECK_THROWS_AS(preprocess_pixels(Bytes{1, 2, 3}), Error);
}

TEST_CASE("standardizer uses train statistics with a floor") {
  const std::vector<FeatureRow> train{{1, 5}, {3, 5}};
  const auto st = standardize_fit(train);
  CHECK(st.mean[0] == 2.0);
  CHECK(st.std[0] == 1.0);
  CHECK(st.std[1] == kStdFloor);
  const auto z = standardize_apply(st, {4, 5});
  CHECK(z[0] == 2.0f);
  CHECK(z[1] == 0.0f);
  CHECK_THROWS_AS(standardize_apply(st, {1}), Error);
  CHECK_THROWS_AS(standardize_fit({{1}}), Error);
}

TEST_CASE("kernels") {
  const FeatureRow a{1, 2}, b{3, -1};
  CHECK(Kernel{KernelKind::Linear}(a, b) == doctest::Approx(1.0));
  CHECK(Kernel{KernelKind::Rbf, 0.5}(a, b) == doctest::Approx(std::exp(-0.5 * 13.0)));
  CHECK(logistic(0) == 0.5);
  CHECK(logistic(-800) >= 0.0);
  CHECK(logistic(800) == 1.0);
}

TEST_CASE("separable data is fit exactly with a feasible dual") {
  const auto t = blobs(20, 20, 6.0, 3, 1);
  for (auto kernel : {Kernel{KernelKind::Linear}, Kernel{KernelKind::Rbf, 0.3}}) {
    SvmTrainOptions o;
    o.kernel = kernel;
    o.c = 10.0;
    const auto m = svm_train(t.x, t.y, o);
    CHECK(dual_residual(m) < 1e-6);
    CHECK(box_feasible(m, 1e-6));
    for (std::size_t i = 0; i < t.x.size(); ++i) CHECK((svm_predict(m, t.x[i]).decision >= 0) == (t.y[i] > 0));
  }
}

TEST_CASE("minority recall grows with its class weight") {
  const auto t = blobs(8, 40, 0.8, 2, 3);
  double previous = -1;
  for (double w : {1.0, 5.0, 10.0}) {
    SvmTrainOptions o;
    o.c = 1.0;
    o.weight_positive = w;
    const auto m = svm_train(t.x, t.y, o);
    CHECK(box_feasible(m, 1e-6));
    int hit = 0;
    for (std::size_t i = 0; i < 8; ++i) hit += svm_predict(m, t.x[i]).decision >= 0;
    const double recall = hit / 8.0;
    CHECK(recall >= previous);
    previous = recall;
  }
}

TEST_CASE("training input errors") {
  const auto t = blobs(3, 3, 2.0, 2, 4);
  SvmTrainOptions o;
  o.c = 0;
  CHECK_THROWS_AS(svm_train(t.x, t.y, o), Error);
  o.c = 1;
  CHECK_THROWS_AS(svm_train(t.x, std::vector<int>(6, 1), o), Error);
  CHECK_THROWS_AS(svm_train(t.x, {1, -1}, o), Error);
  auto ragged = t.x;
  ragged[1].push_back(0);
  CHECK_THROWS_AS(svm_train(ragged, t.y, o), Error);
  const auto m = svm_train(t.x, t.y, o);
  CHECK_THROWS_AS(svm_predict(m, FeatureRow{1, 2, 3}), Error);
}

TEST_CASE("stratified folds balance classes") {
  std::vector<int> labels(23, -1);
  for (int i = 0; i < 7; ++i) labels[static_cast<std::size_t>(i * 3)] = 1;
  const auto folds = stratified_folds(labels, 3, 9);
  REQUIRE(folds.size() == labels.size());
  for (int f = 0; f < 3; ++f) {
    int pos = 0, neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (folds[i] != f) continue;
      (labels[i] > 0 ? pos : neg)++;
    }
    CHECK(pos >= 2);
    CHECK(pos <= 3);
    CHECK(neg >= 5);
    CHECK(neg <= 6);
  }
  CHECK(stratified_folds(labels, 3, 9) == folds);
  CHECK_THROWS_AS(stratified_folds(labels, 8, 0), Error);
  CHECK_THROWS_AS(stratified_folds(labels, 1, 0), Error);
}

TEST_CASE("grid tie-breaking and cell options") {
  std::vector<GridCellResult> cells{
      {{KernelKind::Rbf, 0.01, 1.0, 1.0}, {}, 0.8},
      {{KernelKind::Linear, 0.0, 10.0, 1.0}, {}, 0.8},
      {{KernelKind::Linear, 0.0, 1.0, 5.0}, {}, 0.8},
      {{KernelKind::Linear, 0.0, 1.0, 1.0}, {}, 0.7},
  };
  const auto best = select_best(cells);
  CHECK(best.c == 1.0);
  CHECK(best.kernel == KernelKind::Linear);
  CHECK(best.minority_weight == 5.0);

  CHECK(default_grid().size() == 27);
  const auto opts = options_for_cell({KernelKind::Rbf, 0.0, 2.0, 5.0}, {1, -1, -1}, 100);
  CHECK(opts.kernel.gamma == doctest::Approx(0.01));
  CHECK(opts.weight_positive == 5.0);
  CHECK(opts.weight_negative == 1.0);
  CHECK(opts.c == 2.0);
}

TEST_CASE("grid search runs every cell") {
  const auto t = blobs(10, 10, 3.0, 2, 7);
  const std::vector<GridCell> grid{{KernelKind::Linear, 0, 0.1, 1}, {KernelKind::Linear, 0, 1, 1},
                                   {KernelKind::Rbf, 0, 1, 1}};
  const auto result = grid_search(t.x, t.y, grid, 3, 1);
  REQUIRE(result.cells.size() == 3);
  for (const auto& c : result.cells) {
    CHECK(c.fold_f1.size() == 3);
    CHECK(c.mean_f1 >= 0.0);
    CHECK(c.mean_f1 <= 1.0);
  }
  CHECK(result.best.c == select_best(result.cells).c);
}
