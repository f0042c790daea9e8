#pragma once

#include <Eigen/Dense>
#include <complex>

namespace qwell {

enum class SignalKind { PiecewiseConstant, PiecewiseLinear };

// Real control on a uniform partition of [0,T]: one value per interval
// (piecewise-constant) or one per node (piecewise-linear). All L2 norms and
// trigonometric moments of these signals are computed exactly per interval.
class ControlSignal {
 public:
  ControlSignal() = default;
  static ControlSignal piecewise_constant(double T, Eigen::VectorXd values);
  static ControlSignal piecewise_linear(double T, Eigen::VectorXd node_values);
  static ControlSignal zero(double T, int intervals);

  SignalKind kind() const { return kind_; }
  double duration() const { return T_; }
  int intervals() const;
  double dt() const { return T_ / intervals(); }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  // Line coefficients on interval i: s(t0 + i dt + sigma) = alpha + beta sigma.
  void line_on(int i, double& alpha, double& beta) const;
  double value_at(double t) const;

  double l2_norm_sq() const;  // exact
  double l2_norm() const;
  double integral() const;  // int_0^T v dt, exact

  // Primitive s(t) = int_0^t v, piecewise-linear with s(0) = 0.
  ControlSignal primitive() const;

  ControlSignal& operator+=(const ControlSignal& other);  // same grid and kind
  ControlSignal& operator*=(double a);
  ControlSignal scaled(double a) const;

 private:
  double T_ = 0.0;
  SignalKind kind_ = SignalKind::PiecewiseConstant;
  Eigen::VectorXd values_;
};

using cd = std::complex<double>;

// m_p(omega, delta) = int_0^delta sigma^p e^{i omega sigma} d sigma.
cd power_exp_moment(int p, double omega, double delta);

// int_a^b e^{i omega t} dt.
cd exp_integral(double omega, double a, double b);

// int_0^delta e^{i w1 tau} int_0^tau e^{i w2 sigma} d sigma d tau.
cd double_exp_integral(double w1, double w2, double delta);

// int_{t0}^{t0+T} v(t) e^{i omega t} dt, exact for pwc/pwl signals. The
// signal's own clock starts at 0; t0 shifts the phase reference.
cd signal_moment(const ControlSignal& v, double omega, double t0 = 0.0);

// int_0^T s(t) e^{i omega t} ( int_0^t s(tau) e^{-i omega tau} d tau ) dt,
// exact for pwc/pwl s. Im(.) is the sin((t - tau)) double integral.
cd double_conv_moment(const ControlSignal& s, double omega);

}  // namespace qwell
