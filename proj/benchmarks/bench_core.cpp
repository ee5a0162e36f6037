#include <benchmark/benchmark.h>

#include <sstream>

#include "equisel/conformal.hpp"
#include "equisel/laplace.hpp"
#include "equisel/rng.hpp"
#include "equisel/tensor_io.hpp"

namespace {

using namespace equisel;

Matrix random_f64(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = rng.next_gaussian();
  return Matrix::from_f64(rows, cols, std::move(data));
}

void BM_MatrixRoundTrip(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix m = random_f64(n, n, 1);
  for (auto _ : state) {
    std::ostringstream out(std::ios::binary);
    write_matrix(m, out);
    std::istringstream in(out.str(), std::ios::binary);
    benchmark::DoNotOptimize(read_matrix(in));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n * n * 8));
}
BENCHMARK(BM_MatrixRoundTrip)->Arg(32)->Arg(128)->Arg(512);

void BM_ClassificationGgn(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(2);
  Eigen::MatrixXd design(n, 17), logits(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < design.cols(); ++j)
      design(i, j) = rng.next_gaussian();
    for (Eigen::Index k = 0; k < logits.cols(); ++k)
      logits(i, k) = rng.next_gaussian();
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(dense_ggn_classification(design, logits));
}
BENCHMARK(BM_ClassificationGgn)->Arg(256)->Arg(1024);

void BM_ConformalResampling(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  ModelDump dump;
  dump.model_name = "bench";
  dump.constraint_tag = ConstraintTag::Plain;
  dump.task = TaskSpec::regression(1.0);
  dump.last_layer.weights = Matrix::from_f64(1, 1, {1.0});
  dump.last_layer.bias = Matrix::from_f64(1, 1, {0.0});
  auto split = [&](std::size_t count) {
    SplitData s;
    std::vector<double> f(count), y(count);
    for (std::size_t i = 0; i < count; ++i) {
      f[i] = rng.next_gaussian();
      y[i] = f[i] + rng.next_gaussian();
    }
    s.features = Matrix::from_f64(count, 1, std::move(f));
    s.targets = Matrix::from_f64(count, 1, std::move(y));
    return s;
  };
  dump.train = split(8);
  dump.calibration = split(n);
  dump.test = split(n);
  ConformalConfig config;
  config.resamples = 50;
  config.seed = 4;
  for (auto _ : state) benchmark::DoNotOptimize(run_split_cp(dump, config));
}
BENCHMARK(BM_ConformalResampling)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
