#include "qwell/signal.hpp"

#include <array>
#include <cmath>

#include "qwell/errors.hpp"

namespace qwell {

ControlSignal ControlSignal::piecewise_constant(double T, Eigen::VectorXd values) {
  if (T <= 0.0) throw InputError("signal: duration must be positive");
  if (values.size() < 1) throw InputError("signal: need at least one interval");
  if (!values.allFinite()) throw InputError("signal: non-finite value");
  ControlSignal v;
  v.T_ = T;
  v.kind_ = SignalKind::PiecewiseConstant;
  v.values_ = std::move(values);
  return v;
}

ControlSignal ControlSignal::piecewise_linear(double T, Eigen::VectorXd nodes) {
  if (T <= 0.0) throw InputError("signal: duration must be positive");
  if (nodes.size() < 2) throw InputError("signal: need at least two nodes");
  if (!nodes.allFinite()) throw InputError("signal: non-finite value");
  ControlSignal v;
  v.T_ = T;
  v.kind_ = SignalKind::PiecewiseLinear;
  v.values_ = std::move(nodes);
  return v;
}

ControlSignal ControlSignal::zero(double T, int intervals) {
  return piecewise_constant(T, Eigen::VectorXd::Zero(intervals));
}

int ControlSignal::intervals() const {
  return kind_ == SignalKind::PiecewiseConstant
             ? static_cast<int>(values_.size())
             : static_cast<int>(values_.size()) - 1;
}

void ControlSignal::line_on(int i, double& alpha, double& beta) const {
  if (kind_ == SignalKind::PiecewiseConstant) {
    alpha = values_(i);
    beta = 0.0;
  } else {
    alpha = values_(i);
    beta = (values_(i + 1) - values_(i)) / dt();
  }
}

double ControlSignal::value_at(double t) const {
  int i = std::min(std::max(0, static_cast<int>(t / dt())), intervals() - 1);
  double alpha, beta;
  line_on(i, alpha, beta);
  return alpha + beta * (t - i * dt());
}

double ControlSignal::l2_norm_sq() const {
  const double d = dt();
  double acc = 0.0;
  for (int i = 0; i < intervals(); ++i) {
    double a, b;
    line_on(i, a, b);
    acc += a * a * d + a * b * d * d + b * b * d * d * d / 3.0;
  }
  return acc;
}

double ControlSignal::l2_norm() const { return std::sqrt(l2_norm_sq()); }

double ControlSignal::integral() const {
  const double d = dt();
  double acc = 0.0;
  for (int i = 0; i < intervals(); ++i) {
    double a, b;
    line_on(i, a, b);
    acc += a * d + 0.5 * b * d * d;
  }
  return acc;
}

ControlSignal ControlSignal::primitive() const {
  const double d = dt();
  Eigen::VectorXd s(intervals() + 1);
  s(0) = 0.0;
  for (int i = 0; i < intervals(); ++i) {
    double a, b;
    line_on(i, a, b);
    s(i + 1) = s(i) + a * d + 0.5 * b * d * d;
  }
  return piecewise_linear(T_, std::move(s));
}

ControlSignal& ControlSignal::operator+=(const ControlSignal& other) {
  if (kind_ != other.kind_ || values_.size() != other.values_.size() ||
      std::abs(T_ - other.T_) > 1e-12 * std::max(1.0, T_))
    throw InputError("signal: grid mismatch in +=");
  values_ += other.values_;
  return *this;
}

ControlSignal& ControlSignal::operator*=(double a) {
  values_ *= a;
  return *this;
}

ControlSignal ControlSignal::scaled(double a) const {
  ControlSignal v = *this;
  v *= a;
  return v;
}

namespace {
constexpr cd kI{0.0, 1.0};
}

cd power_exp_moment(int p, double omega, double delta) {
  const double wd = omega * delta;
  // series: delta^{p+1} sum_q (i w d)^q / (q! (p+q+1)); used whenever the
  // closed forms would cancel or the upward recurrence would amplify
  if (p > 2 || std::abs(wd) < 0.5) {
    cd term{1.0, 0.0};
    cd acc = term / static_cast<double>(p + 1);
    const cd iwd = kI * wd;
    for (int q = 1; q < 200; ++q) {
      term *= iwd / static_cast<double>(q);
      cd add = term / static_cast<double>(p + q + 1);
      acc += add;
      if (std::abs(add) < 1e-18 * (1.0 + std::abs(acc)) && q > 4) break;
    }
    return std::pow(delta, p + 1) * acc;
  }
  const cd eiwd = std::exp(kI * wd);
  const cd iw = kI * omega;
  if (p == 0) return (eiwd - 1.0) / iw;
  if (p == 1) return delta * eiwd / iw - (eiwd - 1.0) / (iw * iw);
  // p == 2
  cd m1 = delta * eiwd / iw - (eiwd - 1.0) / (iw * iw);
  return delta * delta * eiwd / iw - 2.0 / iw * m1;
}

cd exp_integral(double omega, double a, double b) {
  return std::exp(kI * omega * a) * power_exp_moment(0, omega, b - a);
}

cd double_exp_integral(double w1, double w2, double delta) {
  if (std::abs(w2 * delta) >= 0.5) {
    return (power_exp_moment(0, w1 + w2, delta) - power_exp_moment(0, w1, delta)) /
           (kI * w2);
  }
  // inner integral expanded: sum_q (i w2)^q/(q+1)! * m_{q+1}(w1)
  cd acc{0.0, 0.0};
  cd coef{1.0, 0.0};
  for (int q = 0; q < 60; ++q) {
    if (q > 0) coef *= kI * w2 / static_cast<double>(q + 1);
    // coef = (i w2)^q / (q+1)!
    cd add = coef * power_exp_moment(q + 1, w1, delta);
    acc += add;
    if (std::abs(add) < 1e-18 * (1.0 + std::abs(acc)) && q > 4) break;
  }
  return acc;
}

cd signal_moment(const ControlSignal& v, double omega, double t0) {
  const double d = v.dt();
  cd acc{0.0, 0.0};
  const cd step_phase = std::exp(kI * omega * d);
  cd phase = std::exp(kI * omega * t0);
  const cd m0 = power_exp_moment(0, omega, d);
  const cd m1 = power_exp_moment(1, omega, d);
  for (int i = 0; i < v.intervals(); ++i) {
    double a, b;
    v.line_on(i, a, b);
    acc += phase * (a * m0 + b * m1);
    phase *= step_phase;
  }
  return acc;
}

namespace {

// T integrals over one interval of length d (signal s = alpha + beta sigma):
//   T00 = int e^{iws} g0,  T10 = int s e^{iws} g0,
//   T01 = int e^{iws} g1,  T11 = int s e^{iws} g1,
// with g0(s) = int_0^s e^{-iwt} dt, g1(s) = int_0^s t e^{-iwt} dt.
struct ConvBlocks {
  cd t00, t10, t01, t11;
};

double factorial(int n) {
  static const auto table = [] {
    std::array<double, 64> f{};
    f[0] = 1.0;
    for (size_t i = 1; i < f.size(); ++i) f[i] = f[i - 1] * static_cast<double>(i);
    return f;
  }();
  return table[static_cast<size_t>(n)];
}

ConvBlocks conv_blocks(double omega, double d) {
  ConvBlocks b;
  const double wd = omega * d;
  if (std::abs(wd) < 0.5) {
    auto series = [&](auto coef_fn, double scale) {
      cd acc = coef_fn(0);
      const cd iwd = kI * wd;
      cd pw{1.0, 0.0};
      for (int q = 1; q < 60; ++q) {
        pw *= iwd;
        cd add = pw * coef_fn(q);
        acc += add;
        if (std::abs(add) < 1e-18 * (1.0 + std::abs(acc)) && q > 4) break;
      }
      return scale * acc;
    };
    b.t00 = series([](int p) { return cd(1.0, 0.0) / factorial(p + 2); }, d * d);
    b.t01 = series([](int p) { return cd(1.0, 0.0) / factorial(p + 3); },
                   d * d * d);
    b.t10 = series(
        [](int p) { return cd(1.0, 0.0) / (factorial(p + 1) * (p + 3)); },
        d * d * d);
    b.t11 = series(
        [](int p) { return cd(1.0, 0.0) / (factorial(p + 2) * (p + 4)); },
        d * d * d * d);
    return b;
  }
  const cd iw = kI * omega;
  const cd m0 = power_exp_moment(0, omega, d);
  const cd m1 = power_exp_moment(1, omega, d);
  b.t00 = (m0 - d) / iw;
  b.t10 = (m1 - 0.5 * d * d) / iw;
  b.t01 = kI * d * d / (2.0 * omega) - (m0 - d) / (omega * omega);
  b.t11 = kI * d * d * d / (3.0 * omega) - (m1 - 0.5 * d * d) / (omega * omega);
  return b;
}

}  // namespace

cd double_conv_moment(const ControlSignal& s, double omega) {
  const double d = s.dt();
  const ConvBlocks bl = conv_blocks(omega, d);
  const cd m0 = power_exp_moment(0, omega, d);
  const cd m1 = power_exp_moment(1, omega, d);
  const cd step_phase = std::exp(kI * omega * d);

  cd acc{0.0, 0.0};
  cd phase{1.0, 0.0};  // e^{i w t_i}
  cd running{0.0, 0.0};  // int_0^{t_i} s e^{-i w tau} d tau = conj(A-sum)
  for (int i = 0; i < s.intervals(); ++i) {
    double a, b;
    s.line_on(i, a, b);
    const cd Ai = phase * (a * m0 + b * m1);
    const cd Bi = a * a * bl.t00 + a * b * (bl.t01 + bl.t10) + b * b * bl.t11;
    acc += Ai * running + Bi;
    running += std::conj(Ai);
    phase *= step_phase;
  }
  return acc;
}

}  // namespace qwell
