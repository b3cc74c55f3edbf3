#include "harmon/solver.hpp"

#include <algorithm>
#include <cmath>

namespace harmon {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Integral of the scaled-linear beta profile over [0, t], with the per-step
// beta range of the 1000-step convention stretched onto unit time.
double cumulative_beta(const NoiseSchedule& s, double t) {
    const double n = 1000.0;
    const double p = std::sqrt(n * s.beta_start);
    const double q = std::sqrt(n * s.beta_end) - p;
    const double u = p + q * t;
    return (u * u * u - p * p * p) / (3.0 * q);
}

// log_snr is strictly decreasing in t; invert by bisection.
double time_at_log_snr(const NoiseSchedule& s, double target) {
    double lo = s.t_min, hi = s.t_max;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (s.log_snr(mid) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

Tensor integrate(Tensor x, const std::vector<double>& nodes, const ScoreModel& model,
                 const NoiseSchedule& sched) {
    const int n_steps = static_cast<int>(nodes.size()) - 1;
    Tensor prev_d;
    double prev_lambda = 0.0;
    bool have_prev = false;

    for (int i = 0; i < n_steps; ++i) {
        const double t_s = nodes[i], t_t = nodes[i + 1];
        const double a_s = sched.signal(t_s), s_s = sched.noise(t_s);
        const double a_t = sched.signal(t_t), s_t = sched.noise(t_t);

        const Tensor eps = model.predict(x, Timestep{t_s, n_steps - 1 - i});
        require(eps.same_shape(x), "score model output shape mismatch");

        if (s_s == 0.0) {
            // Singular start node (inversion from the data end): the
            // data-prediction update degenerates; use its exact limit.
            for (std::size_t j = 0; j < x.size(); ++j) {
                x.data[j] = (a_t / a_s) * x.data[j] + s_t * eps.data[j];
            }
            have_prev = false;
        } else {
            Tensor d(x.shape);
            for (std::size_t j = 0; j < x.size(); ++j) {
                d.data[j] = (x.data[j] - s_s * eps.data[j]) / a_s;
            }
            const double lam_s = sched.log_snr(t_s);
            Tensor dp = d;
            if (have_prev && s_t > 0.0) {
                const double h = sched.log_snr(t_t) - lam_s;
                const double r = (lam_s - prev_lambda) / h;
                const double c = 1.0 / (2.0 * r);
                for (std::size_t j = 0; j < dp.size(); ++j) {
                    dp.data[j] = (1.0 + c) * d.data[j] - c * prev_d.data[j];
                }
            }
            if (s_t == 0.0) {
                // exp(-h) -> 0 at the data end; the step denoises fully.
                for (std::size_t j = 0; j < x.size(); ++j) x.data[j] = a_t * dp.data[j];
            } else {
                const double h = sched.log_snr(t_t) - lam_s;
                const double ratio = s_t / s_s;
                const double em = std::expm1(-h);
                for (std::size_t j = 0; j < x.size(); ++j) {
                    x.data[j] = ratio * x.data[j] - a_t * em * dp.data[j];
                }
            }
            prev_d = std::move(d);
            prev_lambda = lam_s;
            have_prev = true;
        }
        if (!x.all_finite()) throw SolverDivergence("solver divergence");
    }
    return x;
}

}  // namespace

double NoiseSchedule::signal(double t) const {
    return std::exp(-0.5 * cumulative_beta(*this, t));
}

double NoiseSchedule::noise(double t) const {
    return std::sqrt(-std::expm1(-cumulative_beta(*this, t)));
}

double NoiseSchedule::log_snr(double t) const {
    return std::log(signal(t)) - std::log(noise(t));
}

void NoiseSchedule::validate() const {
    require(steps >= 0, "steps must be nonnegative");
    require(times.size() == static_cast<std::size_t>(steps) + 1, "discretization size mismatch");
    require(t_min > 0.0 && t_min < t_max, "invalid time range");
    require(beta_start > 0.0 && beta_end > beta_start, "invalid beta range");
    for (std::size_t i = 1; i < times.size(); ++i) {
        require(times[i] < times[i - 1], "discretization must be strictly decreasing");
        require(signal(times[i]) > signal(times[i - 1]), "signal must decrease with t");
        require(noise(times[i]) < noise(times[i - 1]), "noise must increase with t");
    }
}

NoiseSchedule NoiseSchedule::scaled_linear(int steps, double t_min, double t_max) {
    require(steps >= 0, "steps must be nonnegative");
    require(t_min > 0.0 && t_min < t_max && t_max <= 1.0, "invalid time range");
    NoiseSchedule s;
    s.steps = steps;
    s.t_min = t_min;
    s.t_max = t_max;
    s.times.resize(static_cast<std::size_t>(steps) + 1);
    s.times.front() = t_max;
    if (steps == 0) return s;
    const double lam_hi = s.log_snr(t_min);
    const double lam_lo = s.log_snr(t_max);
    for (int i = 1; i < steps; ++i) {
        const double lam = lam_lo + (lam_hi - lam_lo) * static_cast<double>(i) /
                                        static_cast<double>(steps);
        s.times[static_cast<std::size_t>(i)] = time_at_log_snr(s, lam);
    }
    s.times.back() = t_min;
    s.validate();
    return s;
}

Tensor dpm_sample(const Tensor& z_noisy, const ScoreModel& model, const NoiseSchedule& schedule) {
    schedule.validate();
    if (schedule.steps == 0) return z_noisy;
    return integrate(z_noisy, schedule.times, model, schedule);
}

Tensor dpm_invert(const Tensor& z_data, const ScoreModel& model, const NoiseSchedule& schedule) {
    schedule.validate();
    if (schedule.steps == 0) return z_data;
    std::vector<double> nodes(schedule.times.rbegin(), schedule.times.rend());
    return integrate(z_data, nodes, model, schedule);
}

}  // namespace harmon
