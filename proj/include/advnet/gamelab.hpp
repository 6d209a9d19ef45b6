#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace advnet {

/// Two-player quadratic saddle objective
///   F(theta, phi) = 1/2 theta'P theta + theta'A phi - 1/2 phi'Q phi
/// with P, Q symmetric positive semidefinite. The closed-form dynamics of the
/// regularized simultaneous updates validate the trainer's update algebra.
struct QuadraticGame {
  Eigen::MatrixXd P, A, Q;

  int n_theta() const { return static_cast<int>(A.rows()); }
  int n_phi() const { return static_cast<int>(A.cols()); }
  void validate() const;

  static QuadraticGame bilinear(const Eigen::MatrixXd& a);
  static QuadraticGame scalar(double a);  // F = a * theta * phi

  double value(const Eigen::VectorXd& theta, const Eigen::VectorXd& phi) const;
  Eigen::VectorXd grad_theta(const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& phi) const;
  Eigen::VectorXd grad_phi(const Eigen::VectorXd& theta,
                           const Eigen::VectorXd& phi) const;
};

struct GameState {
  Eigen::VectorXd theta, phi;
};

enum class HvpMode { Exact, FiniteDifference };

/// One simultaneous update of both players:
///   theta' = theta - eta_d [grad_theta F + gamma * HVP(grad_phi F)]
///   phi'   = phi + eta_g grad_phi F
/// In FiniteDifference mode the HVP term goes through the same forward
/// finite-difference routine the neural trainer uses, with h = eta_g / 10.
GameState bilinear_game_step(const QuadraticGame& game, const GameState& s,
                             double eta_d, double eta_g, double gamma,
                             HvpMode mode = HvpMode::Exact);

/// Spectral radius of the exact linear iteration matrix
///   [[I - eta_d (P + gamma A A'), -eta_d (A - gamma A Q)],
///    [eta_g A',                    I - eta_g Q          ]].
/// Radius < 1 iff the simultaneous dynamics converge.
double spectral_radius_oracle(const QuadraticGame& game, double eta_d,
                              double eta_g, double gamma);

struct TraceRow {
  Eigen::VectorXd theta, phi;
  double f = 0.0;
  double grad_phi_norm = 0.0;
};

struct DynamicsTrace {
  std::vector<TraceRow> rows;  // steps + 1 entries, initial state first

  /// step,theta,phi,F,grad_norm; vector players report their norms.
  std::string to_csv() const;
  /// Geometric per-step growth of the joint iterate norm over the run.
  double growth_rate() const;
};

DynamicsTrace simulate(const QuadraticGame& game, const GameState& start,
                       int steps, double eta_d, double eta_g, double gamma,
                       HvpMode mode = HvpMode::Exact);

}  // namespace advnet
