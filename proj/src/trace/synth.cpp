#include "mass/trace/synth.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace mass {

namespace {

struct Latent {
  std::size_t users;
  std::size_t steps;
  std::vector<double> a;  // drives download
  std::vector<double> c;  // independent companion for upload
};

Latent draw_latent(std::uint64_t seed, std::size_t users, std::size_t steps,
                   double phi) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Latent l{users, steps, std::vector<double>(users * steps),
           std::vector<double>(users * steps)};
  const double innov = std::sqrt(1.0 - phi * phi);
  for (auto* series : {&l.a, &l.c}) {
    for (std::size_t u = 0; u < users; ++u) {
      double prev = normal(rng);
      (*series)[u * steps] = prev;
      for (std::size_t k = 1; k < steps; ++k) {
        prev = phi * prev + innov * normal(rng);
        (*series)[u * steps + k] = prev;
      }
    }
  }
  return l;
}

std::vector<double> mix(const Latent& l, double rho) {
  std::vector<double> b(l.a.size());
  const double rest = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = rho * l.a[i] + rest * l.c[i];
  return b;
}

std::vector<double> skewed(const std::vector<double>& z, double s) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::exp(s * z[i]);
  return out;
}

double mean_pearson(const std::vector<double>& x, const std::vector<double>& y,
                    std::size_t users, std::size_t steps) {
  double sum = 0.0;
  for (std::size_t u = 0; u < users; ++u) {
    std::span<const double> xs(x.data() + u * steps, steps);
    std::span<const double> ys(y.data() + u * steps, steps);
    sum += metrics::pearson(xs, ys);
  }
  return sum / static_cast<double>(users);
}

// Root of an increasing function on [lo, hi] by bisection.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double target, const char* what) {
  double flo = f(lo) - target;
  double fhi = f(hi) - target;
  if (flo > 0.0 || fhi < 0.0)
    throw Error(std::string("synth_dataset: target ") + what + " is out of reach");
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) - target < 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double calibrate_skew(const std::vector<double>& z, double target) {
  auto skew_of = [&](double s) { return metrics::moments(skewed(z, s)).skew; };
  return bisect(skew_of, 1e-6, 6.0, target, "skew");
}

void standardize(std::vector<double>& v, const metrics::MomentTriple& target) {
  const auto m = metrics::moments(v);
  for (double& x : v) x = target.mu + target.sigma * (x - m.mu) / m.sigma;
}

}  // namespace

TraceTensor synth_dataset(std::uint64_t seed, std::size_t users, std::size_t steps,
                          double target_corr,
                          const metrics::MomentTriple& target_moments,
                          const SynthOptions& options) {
  if (users < 2 || steps < 2) throw Error("synth_dataset: need U >= 2 and K >= 2");
  if (!(std::abs(target_corr) <= 1.0)) throw Error("synth_dataset: |corr| must be <= 1");
  if (target_moments.sigma < 0.0) throw Error("synth_dataset: sigma must be >= 0");
  if (std::abs(options.temporal_corr) >= 1.0)
    throw Error("synth_dataset: temporal correlation must be in (-1, 1)");

  TraceTensor trace(users, steps);
  if (target_moments.sigma == 0.0) {
    if (target_moments.skew != 0.0)
      throw Error("synth_dataset: nonzero skew is infeasible with sigma = 0");
    if (target_corr != 0.0)
      throw Error("synth_dataset: constant traces have zero correlation");
    if (target_moments.mu < 0.0) throw Error("synth_dataset: mean must be >= 0");
    for (double& v : trace.values()) v = target_moments.mu;
    return trace;
  }
  if (target_moments.skew <= 0.0)
    throw Error("synth_dataset: skew must be positive for nonnegative traffic");

  const Latent latent = draw_latent(seed, users, steps, options.temporal_corr);
  const double s_dl = calibrate_skew(latent.a, target_moments.skew);
  std::vector<double> dl = skewed(latent.a, s_dl);
  std::vector<double> ul;

  if (target_corr == 1.0) {
    ul = dl;
  } else {
    // Upload skew depends on the mixing weight and vice versa; alternate
    // until both settle.
    double rho = target_corr;
    double s_ul = s_dl;
    for (int round = 0; round < 20; ++round) {
      s_ul = calibrate_skew(mix(latent, rho), target_moments.skew);
      auto corr_of = [&](double r) {
        return mean_pearson(dl, skewed(mix(latent, r), s_ul), users, steps);
      };
      const double next = bisect(corr_of, -1.0, 1.0, target_corr, "correlation");
      const bool settled = std::abs(next - rho) < 1e-10;
      rho = next;
      if (settled) break;
    }
    ul = skewed(mix(latent, rho), s_ul);
  }

  standardize(dl, target_moments);
  standardize(ul, target_moments);
  for (std::size_t i = 0; i < dl.size(); ++i) {
    if (dl[i] < 0.0 || ul[i] < 0.0)
      throw Error("synth_dataset: mean too small for the requested sigma and skew "
                  "(values would go negative)");
    const std::size_t u = i / steps, k = i % steps;
    trace.at(u, k, Feature::download) = dl[i];
    trace.at(u, k, Feature::upload) = ul[i];
  }
  return trace;
}

}  // namespace mass
