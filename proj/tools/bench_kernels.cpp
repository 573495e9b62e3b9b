// Benchmarks the OpenMP-parallel kernels against their serial reference
// implementations and reports timings plus the largest result difference.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bsn/batch_eval.hpp"
#include "bsn/laplace.hpp"
#include "bsn/quad_baselines.hpp"
#include "bsn/rng.hpp"
#include "bsn/stein.hpp"
#include "bsn/targets.hpp"

namespace {

using bsn::numkit::Matrix;
using bsn::numkit::Vector;

double time_best_ms(int reps, const std::function<void()>& body) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    body();
    const std::chrono::duration<double, std::milli> elapsed =
        std::chrono::steady_clock::now() - start;
    best = std::min(best, elapsed.count());
  }
  return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
    }
  }
  return worst;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

void report(const std::string& kernel, const std::string& size, double serial_ms,
            double parallel_ms, double diff) {
  std::printf("%-18s %-16s %10.2f %12.2f %9.2fx %12.3g\n", kernel.c_str(), size.c_str(),
              serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  const int dim = 2;
  const auto target = bsn::targets::TargetDistribution::isotropic_gaussian(dim, 0.0, 1.0);
  auto gen = bsn::rng::substream(7, 0);
  const bsn::net::MlpConfig arch{dim, 32, 2, bsn::net::Activation::Celu};
  bsn::stein::SteinModel model{bsn::net::MlpNetwork::random_init(arch, gen),
                               bsn::stein::DiffusionChoice::identity(), target, 0.2,
                               std::nullopt};
  const Vector params = model.pack();

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("%-18s %-16s %10s %12s %9s %12s\n", "kernel", "size", "serial_ms", "parallel_ms",
              "speedup", "max_diff");

  {  // Training loss gradient over the full batch.
    const int n = 4096;
    const Matrix x = target.sample_iid(n, gen);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(x(i, 0)) + 0.3 * x(i, 1);
    const auto prepared = bsn::net::prepare_dataset(model, {x, y});
    Vector grad_parallel(params.size()), grad_serial(params.size());
    const double parallel_ms = time_best_ms(5, [&] {
      bsn::net::batch_loss_gradient(arch, params, prepared, 1e-6, grad_parallel);
    });
    const double serial_ms = time_best_ms(5, [&] {
      bsn::net::loss_gradient_reference(arch, params, prepared, 1e-6, grad_serial);
    });
    report("loss_gradient", "n=4096 p=1219", serial_ms, parallel_ms,
           max_abs_diff(grad_parallel, grad_serial));
  }

  {  // Generalized Gauss-Newton matrix accumulation.
    const int n = 512;
    const Matrix x = target.sample_iid(n, gen);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = std::cos(x(i, 0) * x(i, 1));
    const auto prepared = bsn::net::prepare_dataset(model, {x, y});
    Matrix h_parallel, h_serial;
    const double parallel_ms = time_best_ms(3, [&] {
      h_parallel = bsn::laplace::build_ggn(arch, params, prepared, 0.5);
    });
    const double serial_ms = time_best_ms(3, [&] {
      h_serial = bsn::laplace::build_ggn_reference(arch, params, prepared, 0.5);
    });
    report("build_ggn", "n=512 p=1219", serial_ms, parallel_ms, max_abs_diff(h_parallel, h_serial));
  }

  {  // Squared-exponential Gram matrix.
    const int n = 2048;
    const Matrix x = target.sample_iid(n, gen);
    const bsn::quad::RbfKernel kernel{1.3, 0.9};
    Matrix g_parallel, g_serial;
    const double parallel_ms =
        time_best_ms(5, [&] { g_parallel = bsn::quad::gram_rbf(x, kernel); });
    const double serial_ms =
        time_best_ms(5, [&] { g_serial = bsn::quad::gram_rbf_reference(x, kernel); });
    report("gram_rbf", "n=2048 d=2", serial_ms, parallel_ms, max_abs_diff(g_parallel, g_serial));
  }

  {  // Stein-kernel Gram matrix (needs scores).
    const int n = 1536;
    const Matrix x = target.sample_iid(n, gen);
    Matrix scores(n, dim);
    Vector s(dim);
    for (int i = 0; i < n; ++i) {
      target.score(x.row_span(i), s);
      for (int j = 0; j < dim; ++j) scores(i, j) = s[j];
    }
    const bsn::quad::RbfKernel kernel{1.0, 1.2};
    Matrix g_parallel, g_serial;
    const double parallel_ms =
        time_best_ms(5, [&] { g_parallel = bsn::quad::gram_stein(x, scores, kernel); });
    const double serial_ms =
        time_best_ms(5, [&] { g_serial = bsn::quad::gram_stein_reference(x, scores, kernel); });
    report("gram_stein", "n=1536 d=2", serial_ms, parallel_ms, max_abs_diff(g_parallel, g_serial));
  }

  return 0;
}
