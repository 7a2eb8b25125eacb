#include "recon/oracle.hpp"

#include <cmath>

namespace recon {

void GaussianBelief::validate() const {
  spec.validate();
  require(mean.size() == spec.cells() && var.size() == spec.cells(),
          ErrorKind::ShapeError, "belief arrays must match spec");
  for (double v : var) {
    require(v > 0.0 && std::isfinite(v), ErrorKind::InvalidArgument,
            "belief variance must be positive and finite");
  }
}

GaussianBelief exact_gaussian_posterior(const GaussianBelief& prior,
                                        const OperatorKind& kind, const Field& y,
                                        double sigma_y) {
  prior.validate();
  require(sigma_y > 0.0, ErrorKind::InvalidArgument, "sigma_y must be > 0");
  const GridSpec out_spec = operator_output_spec(kind, prior.spec);
  require(y.spec == out_spec, ErrorKind::ShapeError,
          "observation shape does not match operator output");

  GaussianBelief post = prior;
  const double obs_prec = 1.0 / (sigma_y * sigma_y);

  if (std::holds_alternative<IdentityOp>(kind) || std::holds_alternative<MaskingOp>(kind)) {
    const auto* m = std::get_if<MaskingOp>(&kind);
    for (std::size_t i = 0; i < prior.mean.size(); ++i) {
      if (m != nullptr && m->mask.flags[i] == 0) continue;
      const double prior_prec = 1.0 / prior.var[i];
      const double prec = prior_prec + obs_prec;
      post.mean[i] = (prior_prec * prior.mean[i] + obs_prec * y.values[i]) / prec;
      post.var[i] = 1.0 / prec;
    }
    return post;
  }

  // Downsample: each retained block observes its mean, a = (1/s^2) * ones.
  // Sherman-Morrison on the diagonal prior V:
  //   mean += V a (y_b - a' mu) / (sigma_y^2 + a' V a)
  //   var_i -= (V_i a_i)^2 / (sigma_y^2 + a' V a)
  const auto& ds = std::get<DownsampleOp>(kind);
  const double a = 1.0 / (static_cast<double>(ds.s_step) * ds.s_step);
  for (int ot = 0; ot < out_spec.n_time; ++ot) {
    const int t = ot * ds.t_step;
    for (int oi = 0; oi < out_spec.height; ++oi) {
      for (int oj = 0; oj < out_spec.width; ++oj) {
        double a_mu = 0.0;
        double a_v_a = 0.0;
        for (int di = 0; di < ds.s_step; ++di) {
          for (int dj = 0; dj < ds.s_step; ++dj) {
            const std::size_t idx =
                (static_cast<std::size_t>(t) * prior.spec.height + oi * ds.s_step + di) *
                    prior.spec.width +
                oj * ds.s_step + dj;
            a_mu += a * prior.mean[idx];
            a_v_a += a * a * prior.var[idx];
          }
        }
        const double denom = sigma_y * sigma_y + a_v_a;
        const double innov = y.at(ot, oi, oj) - a_mu;
        for (int di = 0; di < ds.s_step; ++di) {
          for (int dj = 0; dj < ds.s_step; ++dj) {
            const std::size_t idx =
                (static_cast<std::size_t>(t) * prior.spec.height + oi * ds.s_step + di) *
                    prior.spec.width +
                oj * ds.s_step + dj;
            const double va = prior.var[idx] * a;
            post.mean[idx] = prior.mean[idx] + va * innov / denom;
            post.var[idx] = prior.var[idx] - va * va / denom;
          }
        }
      }
    }
  }
  return post;
}

std::pair<Field, Field> posterior_sample_stats(const std::vector<Field>& samples) {
  require(samples.size() >= 2, ErrorKind::InvalidArgument,
          "posterior_sample_stats needs at least 2 samples");
  const GridSpec& spec = samples.front().spec;
  for (const Field& s : samples) {
    require(s.spec == spec, ErrorKind::ShapeError, "sample shapes differ");
  }
  const double n = static_cast<double>(samples.size());
  std::vector<double> mean(spec.cells(), 0.0), var(spec.cells(), 0.0);
  for (const Field& s : samples) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.values[i];
  }
  for (double& m : mean) m /= n;
  for (const Field& s : samples) {
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double d = s.values[i] - mean[i];
      var[i] += d * d;
    }
  }
  for (double& v : var) v /= (n - 1.0);
  return {Field(spec, std::move(mean)), Field(spec, std::move(var))};
}

}  // namespace recon
