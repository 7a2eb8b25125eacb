#include "recon/observe.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "recon/field_io.hpp"
#include "recon/rng.hpp"

namespace recon {

namespace {

int retained_frames(int n_time, int t_step) {
  return (n_time - 1) / t_step + 1;
}

}  // namespace

GridSpec operator_output_spec(const OperatorKind& kind, const GridSpec& in) {
  validate_operator(kind, in);
  if (const auto* ds = std::get_if<DownsampleOp>(&kind)) {
    GridSpec out = in;
    out.n_time = retained_frames(in.n_time, ds->t_step);
    out.height = in.height / ds->s_step;
    out.width = in.width / ds->s_step;
    return out;
  }
  return in;
}

void validate_operator(const OperatorKind& kind, const GridSpec& in) {
  if (const auto* m = std::get_if<MaskingOp>(&kind)) {
    require(m->mask.spec == in, ErrorKind::ShapeError,
            "masking operator mask shape does not match target grid");
  } else if (const auto* ds = std::get_if<DownsampleOp>(&kind)) {
    require(ds->s_step >= 1 && ds->t_step >= 1, ErrorKind::InvalidArgument,
            "downsample steps must be >= 1");
    require(in.height % ds->s_step == 0 && in.width % ds->s_step == 0,
            ErrorKind::ShapeError, "s_step must divide height and width");
    require(ds->t_step <= in.n_time, ErrorKind::ShapeError,
            "t_step must not exceed n_time");
  }
}

void Observation::validate(const GridSpec& target) const {
  require(sigma_m >= 0.0, ErrorKind::InvalidArgument, "sigma_m must be >= 0");
  require(lambda_m > 0.0, ErrorKind::InvalidArgument, "lambda_m must be > 0");
  const GridSpec out = operator_output_spec(kind, target);
  require(y.spec == out, ErrorKind::ShapeError,
          "observation y shape does not match operator output");
}

MaskField mask_from_cloud(const Field& tcc, double gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::RangeError,
          "cloud threshold gamma must be in [0, 1]");
  std::vector<uint8_t> flags(tcc.values.size());
  for (std::size_t i = 0; i < flags.size(); ++i) {
    flags[i] = tcc.values[i] > gamma ? 0 : 1;
  }
  return MaskField(tcc.spec, std::move(flags));
}

Field apply_operator(const OperatorKind& kind, const Field& x) {
  validate_operator(kind, x.spec);
  if (std::holds_alternative<IdentityOp>(kind)) return x;

  if (const auto* m = std::get_if<MaskingOp>(&kind)) {
    std::vector<double> out(x.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = m->mask.flags[i] ? x.values[i] : 0.0;
    }
    return Field(x.spec, std::move(out));
  }

  const auto& ds = std::get<DownsampleOp>(kind);
  const GridSpec out_spec = operator_output_spec(kind, x.spec);
  Field out = Field::zeros(out_spec);
  const double inv_block = 1.0 / (static_cast<double>(ds.s_step) * ds.s_step);
  for (int ot = 0; ot < out_spec.n_time; ++ot) {
    const int t = ot * ds.t_step;
    for (int oi = 0; oi < out_spec.height; ++oi) {
      for (int oj = 0; oj < out_spec.width; ++oj) {
        double acc = 0.0;
        for (int di = 0; di < ds.s_step; ++di) {
          for (int dj = 0; dj < ds.s_step; ++dj) {
            acc += x.at(t, oi * ds.s_step + di, oj * ds.s_step + dj);
          }
        }
        out.at(ot, oi, oj) = acc * inv_block;
      }
    }
  }
  return out;
}

Observation observe_noisy(const OperatorKind& kind, const Field& x, double sigma_m,
                          double lambda_m, uint64_t seed) {
  require(sigma_m >= 0.0, ErrorKind::InvalidArgument, "sigma_m must be >= 0");
  Field y = apply_operator(kind, x);
  if (sigma_m > 0.0) {
    Rng rng(seed);
    const auto* m = std::get_if<MaskingOp>(&kind);
    for (std::size_t i = 0; i < y.values.size(); ++i) {
      const double xi = rng.normal();  // one draw per cell, masked or not
      if (m != nullptr && m->mask.flags[i] == 0) continue;
      y.values[i] += sigma_m * xi;
    }
  }
  Observation obs{kind, std::move(y), sigma_m, lambda_m};
  obs.validate(x.spec);
  return obs;
}

Field apply_adjoint(const OperatorKind& kind, const Field& residual, const GridSpec& target) {
  validate_operator(kind, target);
  const GridSpec out_spec = operator_output_spec(kind, target);
  require(residual.spec == out_spec, ErrorKind::ShapeError,
          "adjoint input shape does not match operator output");

  if (std::holds_alternative<IdentityOp>(kind)) return residual;

  if (const auto* m = std::get_if<MaskingOp>(&kind)) {
    std::vector<double> out(residual.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = m->mask.flags[i] ? residual.values[i] : 0.0;
    }
    return Field(target, std::move(out));
  }

  const auto& ds = std::get<DownsampleOp>(kind);
  Field out = Field::zeros(target);
  const double inv_block = 1.0 / (static_cast<double>(ds.s_step) * ds.s_step);
  for (int ot = 0; ot < out_spec.n_time; ++ot) {
    const int t = ot * ds.t_step;
    for (int oi = 0; oi < out_spec.height; ++oi) {
      for (int oj = 0; oj < out_spec.width; ++oj) {
        const double r = residual.at(ot, oi, oj) * inv_block;
        for (int di = 0; di < ds.s_step; ++di) {
          for (int dj = 0; dj < ds.s_step; ++dj) {
            out.at(t, oi * ds.s_step + di, oj * ds.s_step + dj) = r;
          }
        }
      }
    }
  }
  return out;
}

Field fidelity_grad(const Observation& obs, const Field& x) {
  obs.validate(x.spec);
  Field ax = apply_operator(obs.kind, x);
  std::vector<double> res(ax.values.size());
  for (std::size_t i = 0; i < res.size(); ++i) res[i] = ax.values[i] - obs.y.values[i];
  Field grad = apply_adjoint(obs.kind, Field(ax.spec, std::move(res)), x.spec);
  for (double& v : grad.values) v *= 2.0;
  return grad;
}

void write_observation(const Observation& obs, const std::string& descriptor_path) {
  const std::filesystem::path desc(descriptor_path);
  const std::string stem = (desc.parent_path() / desc.stem()).string();
  const std::string y_path = stem + "_y.aodf";

  std::ostringstream text;
  if (std::holds_alternative<IdentityOp>(obs.kind)) {
    text << "kind = identity\n";
  } else if (const auto* m = std::get_if<MaskingOp>(&obs.kind)) {
    const std::string mask_path = stem + "_mask.aodf";
    write_mask(m->mask, mask_path);
    text << "kind = masking\n";
    text << "mask = " << std::filesystem::path(mask_path).filename().string() << "\n";
  } else {
    const auto& ds = std::get<DownsampleOp>(obs.kind);
    text << "kind = downsample\n";
    text << "s_step = " << ds.s_step << "\n";
    text << "t_step = " << ds.t_step << "\n";
  }
  text << "sigma_m = " << obs.sigma_m << "\n";
  text << "lambda_m = " << obs.lambda_m << "\n";
  text << "y = " << std::filesystem::path(y_path).filename().string() << "\n";
  write_field(obs.y, y_path);

  std::ofstream out(descriptor_path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write descriptor: " + descriptor_path);
  out << text.str();
  require(out.good(), ErrorKind::IoError, "short descriptor write");
}

Observation read_observation(const std::string& descriptor_path) {
  std::ifstream in(descriptor_path);
  require(in.good(), ErrorKind::IoError, "cannot open descriptor: " + descriptor_path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::FormatError,
            "descriptor line missing '=': " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  const auto dir = std::filesystem::path(descriptor_path).parent_path();
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorKind::FormatError, "descriptor missing key: " + key);
    return it->second;
  };

  Observation obs;
  obs.y = read_field((dir / need("y")).string());
  obs.sigma_m = std::stod(need("sigma_m"));
  obs.lambda_m = std::stod(need("lambda_m"));
  const std::string kind = need("kind");
  if (kind == "identity") {
    obs.kind = IdentityOp{};
  } else if (kind == "masking") {
    obs.kind = MaskingOp{read_mask((dir / need("mask")).string())};
  } else if (kind == "downsample") {
    obs.kind = DownsampleOp{std::stoi(need("s_step")), std::stoi(need("t_step"))};
  } else {
    raise(ErrorKind::FormatError, "unknown operator kind: " + kind);
  }
  return obs;
}

}  // namespace recon
