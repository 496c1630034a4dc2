#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace equidyn {

using Cx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Default tolerance for deciding that two projective points coincide
// (chordal distance).
inline constexpr double kPointEqualityTol = 1e-9;

// Library error with a stable machine-readable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, const std::string& code, const std::string& message) {
  if (!cond) fail(code, message);
}

// ---------------------------------------------------------------------------
// Random streams.
//
// All stochastic operations take an explicit 64-bit seed. Substreams are
// derived with splitmix64 so that parallel work can split seeds
// deterministically regardless of thread count.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double gaussian(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Cx gaussian_cx(Rng& rng) {
  double re = gaussian(rng);
  double im = gaussian(rng);
  return Cx(re, im);
}

inline Cx unit_phase(Rng& rng) {
  double t = 2.0 * kPi * uniform01(rng);
  return Cx(std::cos(t), std::sin(t));
}

// ---------------------------------------------------------------------------
// Deterministic parallelism.
//
// parallel_for runs fn(i) for i in [0, n) on up to thread_count() workers.
// Each index owns its output slot, so results are identical for any worker
// count; reductions happen afterwards in index order.
// ---------------------------------------------------------------------------

inline int& thread_count_ref() {
  static int count = 1;
  return count;
}

inline void set_thread_count(int n) {
  thread_count_ref() = n < 1 ? 1 : n;
}

inline int thread_count() { return thread_count_ref(); }

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  int workers = thread_count();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<std::size_t>(workers) > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<std::size_t> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Compensated accumulation for long reductions.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

inline double sum_in_order(const std::vector<double>& xs) {
  KahanSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

struct MeanStdErr {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

inline MeanStdErr mean_std_error(const std::vector<double>& xs) {
  MeanStdErr r;
  r.count = xs.size();
  if (xs.empty()) return r;
  r.mean = sum_in_order(xs) / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  KahanSum ss;
  for (double x : xs) ss.add((x - r.mean) * (x - r.mean));
  double var = ss.value() / static_cast<double>(xs.size() - 1);
  r.std_error = std::sqrt(var / static_cast<double>(xs.size()));
  return r;
}

// Least-squares slope of y against x, with standard error of the slope.
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_std_error = 0.0;
};

inline SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  SlopeFit fit;
  std::size_t n = x.size();
  if (n < 2 || y.size() != n) return fit;
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
  }
  fit.slope = sxy / sxx;
  fit.intercept = ym - fit.slope * xm;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.slope_std_error = std::sqrt(rss / (static_cast<double>(n - 2) * sxx));
  }
  return fit;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  std::size_t m = xs.size() / 2;
  if (xs.size() % 2 == 1) return xs[m];
  return 0.5 * (xs[m - 1] + xs[m]);
}

}  // namespace equidyn
