#include <cmath>
#include <limits>

#include "asterenv/envelope.hpp"
#include "asterenv/error.hpp"
#include "asterenv/rng.hpp"

namespace asterenv {

namespace {

constexpr int kRandomStarts = 10;
constexpr int kMaxGradientSteps = 2000;
constexpr int kMaxNewtonSteps = 30;

// f(w) = log(w'Aw) + log(w'Bw) - 2 log(w'w), B = (M + U)^{-1}. Degree-zero
// homogeneous, so its gradient at unit w is already tangent to the sphere.
struct Objective {
  const Eigen::MatrixXd& A;
  const Eigen::MatrixXd& B;

  double value(const Eigen::VectorXd& w) const {
    return std::log(w.dot(A * w)) + std::log(w.dot(B * w)) - 2.0 * std::log(w.squaredNorm());
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd Aw = A * w;
    const Eigen::VectorXd Bw = B * w;
    return 2.0 * Aw / w.dot(Aw) + 2.0 * Bw / w.dot(Bw) - 4.0 * w / w.squaredNorm();
  }

  // Euclidean Hessian at unit w.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd Aw = A * w;
    const Eigen::VectorXd Bw = B * w;
    const double a = w.dot(Aw);
    const double b = w.dot(Bw);
    const auto d = w.size();
    return 2.0 * A / a - 4.0 * Aw * Aw.transpose() / (a * a) + 2.0 * B / b - 4.0 * Bw * Bw.transpose() / (b * b) -
           4.0 * Eigen::MatrixXd::Identity(d, d) + 8.0 * w * w.transpose();
  }
};

Eigen::VectorXd minimize_from(const Objective& f, Eigen::VectorXd w) {
  w.normalize();
  double fw = f.value(w);
  double step = 1.0;
  for (int it = 0; it < kMaxGradientSteps; ++it) {
    const Eigen::VectorXd g = f.gradient(w);
    const double g2 = g.squaredNorm();
    if (g2 < 1e-20) break;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd trial = (w - step * g).normalized();
      const double ft = f.value(trial);
      if (ft <= fw - 1e-4 * step * g2) {
        w = std::move(trial);
        fw = ft;
        moved = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }

  // Newton polish in the tangent space of the sphere.
  for (int it = 0; it < kMaxNewtonSteps; ++it) {
    const Eigen::VectorXd g = f.gradient(w);
    if (g.norm() < 1e-15) break;
    const Eigen::MatrixXd T = orthogonal_complement(w);
    const Eigen::MatrixXd H = T.transpose() * f.hessian(w) * T;
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (H + H.transpose()));
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd xi = llt.solve(-(T.transpose() * g));
    Eigen::VectorXd trial = (w + T * xi).normalized();
    if (f.gradient(trial).norm() >= g.norm() && f.value(trial) > fw) break;
    w = std::move(trial);
    fw = f.value(w);
  }
  return w;
}

}  // namespace

double onedim_objective(const Eigen::MatrixXd& M, const Eigen::MatrixXd& U, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd B = (M + U).inverse();
  return Objective{M, B}.value(w);
}

Eigen::MatrixXd onedim_algorithm(const Eigen::MatrixXd& M, const Eigen::MatrixXd& U, int u, std::uint64_t seed) {
  const auto k = M.rows();
  if (M.cols() != k || U.rows() != k || U.cols() != k) throw ValidationError("1D algorithm inputs must be k x k");
  if (u < 1 || u > k) {
    throw ValidationError("envelope dimension u = " + std::to_string(u) + " outside 1.." + std::to_string(k));
  }
  Eigen::MatrixXd basis(k, 0);
  for (int j = 0; j < u; ++j) {
    const Eigen::MatrixXd G0 = orthogonal_complement(basis);
    const auto d = G0.cols();
    Eigen::VectorXd best;
    if (d == 1) {
      best = Eigen::VectorXd::Ones(1);
    } else {
      const Eigen::MatrixXd Mj = G0.transpose() * M * G0;
      const Eigen::MatrixXd Uj = G0.transpose() * U * G0;
      const Eigen::MatrixXd Bj = (Mj + Uj).inverse();
      const Objective f{Mj, Bj};

      std::vector<Eigen::VectorXd> starts;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Mj + Mj.transpose()));
      for (Eigen::Index c = d - 1; c >= 0; --c) starts.push_back(es.eigenvectors().col(c));
      Rng rng = stream(seed, {static_cast<std::uint64_t>(j)});
      for (int r = 0; r < kRandomStarts; ++r) {
        Eigen::VectorXd w(d);
        for (Eigen::Index i = 0; i < d; ++i) w[i] = standard_normal(rng);
        starts.push_back(w);
      }
      double best_value = std::numeric_limits<double>::infinity();
      for (const auto& s : starts) {
        Eigen::VectorXd w = minimize_from(f, s);
        const double v = f.value(w);
        if (v < best_value) {
          best_value = v;
          best = std::move(w);
        }
      }
    }
    Eigen::VectorXd g = G0 * best;
    g.normalize();
    basis.conservativeResize(k, j + 1);
    basis.col(j) = g;
  }
  return basis;
}

}  // namespace asterenv
