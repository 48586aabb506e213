#include "scanmerge/registration.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "scanmerge/errors.h"

namespace scanmerge {

std::string_view ChannelName(Channel c) {
  return c == Channel::kGround ? "ground" : "aerial";
}

Channel ParseChannel(std::string_view name) {
  if (name == "ground") return Channel::kGround;
  if (name == "aerial") return Channel::kAerial;
  throw InvalidArgument("unknown channel '" + std::string(name) + "'");
}

Sim3Transform UmeyamaSim3(std::span<const Correspondence3D> pairs,
                          bool estimate_scale) {
  if (pairs.size() < 3) throw InvalidArgument("need at least three pairs");
  double wsum = 0.0;
  Vector3 mu_src = Vector3::Zero(), mu_dst = Vector3::Zero();
  for (const auto& p : pairs) {
    if (!(p.weight > 0.0)) throw InvalidArgument("pair weight must be positive");
    wsum += p.weight;
    mu_src += p.weight * p.source;
    mu_dst += p.weight * p.target;
  }
  mu_src /= wsum;
  mu_dst /= wsum;

  Matrix3 cov = Matrix3::Zero();
  Matrix3 scatter = Matrix3::Zero();
  double var_src = 0.0;
  for (const auto& p : pairs) {
    const Vector3 s = p.source - mu_src;
    const Vector3 d = p.target - mu_dst;
    cov += p.weight * d * s.transpose();
    scatter += p.weight * s * s.transpose();
    var_src += p.weight * s.squaredNorm();
  }
  cov /= wsum;
  scatter /= wsum;
  var_src /= wsum;

  const Eigen::SelfAdjointEigenSolver<Matrix3> eig(scatter);
  const Vector3 ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw RankDeficient("source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3 sign = Vector3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign(2) = -1.0;
  const Matrix3 r = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  const double scale =
      estimate_scale ? svd.singularValues().dot(sign) / var_src : 1.0;
  const Rotation3 rot = Rotation3::Orthonormalized(r);
  return Sim3Transform(scale, rot, mu_dst - scale * (rot * mu_src));
}

double TransferError(const Sim3Transform& t, const Correspondence3D& c) {
  return (t.Apply(c.source) - c.target).norm();
}

namespace {

struct Consensus {
  std::vector<int> inliers;
  double rms = 0.0;
};

Consensus Score(const Sim3Transform& t, std::span<const Correspondence3D> pairs,
                double threshold) {
  Consensus c;
  double sq = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const double e = TransferError(t, pairs[i]);
    if (e < threshold) {
      c.inliers.push_back(static_cast<int>(i));
      sq += e * e;
    }
  }
  if (!c.inliers.empty()) c.rms = std::sqrt(sq / c.inliers.size());
  return c;
}

bool Better(const Consensus& a, const Consensus& b) {
  if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
  return a.rms < b.rms;
}

std::vector<std::array<int, 3>> DrawSamples(size_t n, const RansacOptions& options,
                                            std::mt19937_64& rng) {
  std::vector<std::array<int, 3>> samples;
  const double triples = static_cast<double>(n) * (n - 1) * (n - 2) / 6.0;
  if (triples <= options.num_samples) {
    for (size_t a = 0; a < n; ++a) {
      for (size_t b = a + 1; b < n; ++b) {
        for (size_t c = b + 1; c < n; ++c) {
          samples.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
        }
      }
    }
    return samples;
  }
  std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
  // Candidate stream; degenerate triples are replaced by later draws.
  const size_t budget = static_cast<size_t>(options.num_samples) * 20;
  samples.reserve(budget);
  while (samples.size() < budget) {
    const int a = pick(rng);
    int b = pick(rng);
    while (b == a) b = pick(rng);
    int c = pick(rng);
    while (c == a || c == b) c = pick(rng);
    samples.push_back({a, b, c});
  }
  return samples;
}

}  // namespace

RansacReport RansacSim3(std::span<const Correspondence3D> pairs,
                        const RansacOptions& options) {
  if (pairs.size() < 3) throw InvalidArgument("need at least three pairs");
  if (!(options.threshold > 0.0)) throw InvalidArgument("threshold must be positive");
  if (options.num_samples < 1) throw InvalidArgument("need at least one sample");

  std::mt19937_64 rng(options.seed);
  const auto samples = DrawSamples(pairs.size(), options, rng);

  RansacReport report;
  Consensus best;
  bool have_model = false;
  for (const auto& idx : samples) {
    if (report.iterations >= options.num_samples) break;
    const std::array<Correspondence3D, 3> minimal = {pairs[idx[0]], pairs[idx[1]],
                                                     pairs[idx[2]]};
    Sim3Transform model;
    try {
      model = UmeyamaSim3(minimal, options.estimate_scale);
    } catch (const RankDeficient&) {
      ++report.degenerate_skipped;
      continue;
    }
    ++report.iterations;
    Consensus c = Score(model, pairs, options.threshold);
    if (!have_model || Better(c, best)) {
      best = std::move(c);
      report.sample_transform = model;
      have_model = true;
    }
  }
  if (!have_model || best.inliers.size() < 3) {
    throw RegistrationFailed("no sample reached three inliers");
  }

  report.transform = report.sample_transform;
  report.inliers = best.inliers;
  report.inlier_rms = best.rms;
  std::vector<Correspondence3D> inlier_pairs;
  inlier_pairs.reserve(best.inliers.size());
  for (int i : best.inliers) inlier_pairs.push_back(pairs[i]);
  try {
    const Sim3Transform refit = UmeyamaSim3(inlier_pairs, options.estimate_scale);
    Consensus c = Score(refit, pairs, options.threshold);
    if (c.inliers.size() >= best.inliers.size() && c.inliers.size() >= 3) {
      report.transform = refit;
      report.inliers = std::move(c.inliers);
      report.inlier_rms = c.rms;
      report.refit_used = true;
    }
  } catch (const RankDeficient&) {
    // Inliers lie on a line; keep the minimal-sample model.
  }
  return report;
}

}  // namespace scanmerge
