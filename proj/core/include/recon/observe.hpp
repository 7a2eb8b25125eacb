#pragma once

#include <string>
#include <variant>
#include <vector>

#include "recon/grid.hpp"

namespace recon {

struct IdentityOp {};

struct MaskingOp {
  MaskField mask;  // full target-grid mask, 1 = observed
};

struct DownsampleOp {
  int s_step = 2;  // spatial block size; must divide height and width
  int t_step = 1;  // keep frames 0, t_step, 2*t_step, ...
};

using OperatorKind = std::variant<IdentityOp, MaskingOp, DownsampleOp>;

// Output grid of the operator applied to a field with spec `in`.
GridSpec operator_output_spec(const OperatorKind& kind, const GridSpec& in);
void validate_operator(const OperatorKind& kind, const GridSpec& in);

// One observation source: y = A(x) + sigma_m * noise, with guidance weight
// lambda_m for the posterior objective.
struct Observation {
  OperatorKind kind;
  Field y;
  double sigma_m = 0.0;
  double lambda_m = 1.0;

  void validate(const GridSpec& target) const;
};

// Cloud-threshold missingness: flag 0 where tcc > gamma, 1 otherwise.
MaskField mask_from_cloud(const Field& tcc, double gamma);

// Masking -> M .* x (missing cells zeroed); Downsample -> per-frame
// s x s block means, then temporal subsampling; Identity -> x.
Field apply_operator(const OperatorKind& kind, const Field& x);

// y = A(x) + sigma_m * xi, deterministic per seed. For Masking, noise is
// added only where the mask is 1 so missing cells stay exactly 0.
Observation observe_noisy(const OperatorKind& kind, const Field& x, double sigma_m,
                          double lambda_m, uint64_t seed);

// Gradient of ||A(x) - y||^2 with respect to x, i.e. 2 A^T (A(x) - y).
Field fidelity_grad(const Observation& obs, const Field& x);

// Adjoint applied to an arbitrary residual of the operator's output shape;
// fidelity_grad is 2 * apply_adjoint(kind, A(x) - y).
Field apply_adjoint(const OperatorKind& kind, const Field& residual, const GridSpec& target);

// Serialized form: UTF-8 "key = value" descriptor naming the y (and mask)
// AODF files next to it. Returns/accepts the descriptor path.
void write_observation(const Observation& obs, const std::string& descriptor_path);
Observation read_observation(const std::string& descriptor_path);

}  // namespace recon
