#include "advnet/gamelab.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "advnet/errors.hpp"
#include "advnet/minimax.hpp"

namespace advnet {

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void QuadraticGame::validate() const {
  if (P.rows() != P.cols() || Q.rows() != Q.cols()) {
    throw DimensionError("quadratic game: P and Q must be square");
  }
  if (P.rows() != A.rows() || Q.rows() != A.cols()) {
    throw DimensionError("quadratic game: A is " + std::to_string(A.rows()) + "x" +
                         std::to_string(A.cols()) + " but P is " +
                         std::to_string(P.rows()) + " and Q is " +
                         std::to_string(Q.rows()));
  }
  const double tol = 1e-9;
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > tol ||
      (Q - Q.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw ConfigError("quadratic game: P and Q must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(P), eq(Q);
  if (ep.eigenvalues().minCoeff() < -tol || eq.eigenvalues().minCoeff() < -tol) {
    throw ConfigError("quadratic game: P and Q must be positive semidefinite");
  }
}

QuadraticGame QuadraticGame::bilinear(const Eigen::MatrixXd& a) {
  QuadraticGame g;
  g.A = a;
  g.P = Eigen::MatrixXd::Zero(a.rows(), a.rows());
  g.Q = Eigen::MatrixXd::Zero(a.cols(), a.cols());
  return g;
}

QuadraticGame QuadraticGame::scalar(double a) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = a;
  return bilinear(m);
}

double QuadraticGame::value(const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& phi) const {
  return 0.5 * theta.dot(P * theta) + theta.dot(A * phi) - 0.5 * phi.dot(Q * phi);
}

Eigen::VectorXd QuadraticGame::grad_theta(const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& phi) const {
  return P * theta + A * phi;
}

Eigen::VectorXd QuadraticGame::grad_phi(const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& phi) const {
  return A.transpose() * theta - Q * phi;
}

GameState bilinear_game_step(const QuadraticGame& game, const GameState& s,
                             double eta_d, double eta_g, double gamma, HvpMode mode) {
  const Eigen::VectorXd gt = game.grad_theta(s.theta, s.phi);
  const Eigen::VectorXd gp = game.grad_phi(s.theta, s.phi);

  Eigen::VectorXd hvp;
  if (gamma == 0.0) {
    hvp = Eigen::VectorXd::Zero(game.n_theta());
  } else if (mode == HvpMode::Exact) {
    hvp = game.A * gp;  // mixed second derivative of F is exactly A
  } else {
    std::vector<double> theta = to_std(s.theta);
    std::vector<double> phi = to_std(s.phi);
    auto grad = [&](const std::vector<double>& th, const std::vector<double>& ph) {
      return to_std(game.grad_theta(to_eigen(th), to_eigen(ph)));
    };
    hvp = to_eigen(hvp_finite_difference(grad, theta, phi, to_std(gp), eta_g / 10.0));
  }

  GameState next;
  next.theta = s.theta - eta_d * (gt + gamma * hvp);
  next.phi = s.phi + eta_g * gp;
  return next;
}

double spectral_radius_oracle(const QuadraticGame& game, double eta_d,
                              double eta_g, double gamma) {
  const int nt = game.n_theta(), np = game.n_phi();
  Eigen::MatrixXd m(nt + np, nt + np);
  m.topLeftCorner(nt, nt) =
      Eigen::MatrixXd::Identity(nt, nt) -
      eta_d * (game.P + gamma * game.A * game.A.transpose());
  m.topRightCorner(nt, np) = -eta_d * (game.A - gamma * game.A * game.Q);
  m.bottomLeftCorner(np, nt) = eta_g * game.A.transpose();
  m.bottomRightCorner(np, np) =
      Eigen::MatrixXd::Identity(np, np) - eta_g * game.Q;

  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

std::string DynamicsTrace::to_csv() const {
  std::ostringstream os;
  os << "step,theta,phi,F,grad_norm\n";
  char buf[160];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TraceRow& r = rows[i];
    const double th = r.theta.size() == 1 ? r.theta(0) : r.theta.norm();
    const double ph = r.phi.size() == 1 ? r.phi(0) : r.phi.norm();
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g\n", i, th, ph, r.f,
                  r.grad_phi_norm);
    os << buf;
  }
  return os.str();
}

double DynamicsTrace::growth_rate() const {
  if (rows.size() < 2) throw ConfigError("growth rate needs at least two trace rows");
  auto joint = [](const TraceRow& r) {
    return std::sqrt(r.theta.squaredNorm() + r.phi.squaredNorm());
  };
  const double n0 = joint(rows.front());
  const double nT = joint(rows.back());
  if (n0 == 0.0) throw NumericError("growth rate undefined from a zero start");
  const double t = static_cast<double>(rows.size() - 1);
  return std::pow(nT / n0, 1.0 / t);
}

DynamicsTrace simulate(const QuadraticGame& game, const GameState& start, int steps,
                       double eta_d, double eta_g, double gamma, HvpMode mode) {
  game.validate();
  if (steps < 0) throw ConfigError("simulate: steps must be >= 0");
  DynamicsTrace trace;
  trace.rows.reserve(static_cast<std::size_t>(steps) + 1);
  GameState s = start;
  for (int i = 0; i <= steps; ++i) {
    TraceRow row;
    row.theta = s.theta;
    row.phi = s.phi;
    row.f = game.value(s.theta, s.phi);
    row.grad_phi_norm = game.grad_phi(s.theta, s.phi).norm();
    trace.rows.push_back(std::move(row));
    if (i < steps) s = bilinear_game_step(game, s, eta_d, eta_g, gamma, mode);
  }
  return trace;
}

}  // namespace advnet
