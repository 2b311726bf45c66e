#include "varctrl/control_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "varctrl/errors.hpp"
#include "varctrl/generator.hpp"

namespace varctrl {

double hamiltonian(const ControlProblem& problem, const HamiltonianSample& s, double c) {
    const double a = problem.diffusion(s.t, s.y, c);
    return problem.running_reward(s.t, s.y, c) + problem.drift(s.t, s.y, c) * s.dlam +
           0.5 * a * a * s.d2lam;
}

HamiltonianSample sample_at(const SpaceTimeGrid& grid, double t, std::span<const double> lambda,
                            std::size_t i) {
    const std::size_t n = grid.n_x();
    const double h = grid.spacing();
    double d1 = 0.0;
    double d2 = 0.0;
    if (i == 0) {
        d1 = (lambda[1] - lambda[0]) / h;
        d2 = (lambda[0] - 2.0 * lambda[1] + lambda[2]) / (h * h);
    } else if (i + 1 == n) {
        d1 = (lambda[n - 1] - lambda[n - 2]) / h;
        d2 = (lambda[n - 1] - 2.0 * lambda[n - 2] + lambda[n - 3]) / (h * h);
    } else {
        d1 = (lambda[i + 1] - lambda[i - 1]) / (2.0 * h);
        d2 = (lambda[i + 1] - 2.0 * lambda[i] + lambda[i - 1]) / (h * h);
    }
    const double y = grid.node(i);
    if (grid.log_space()) {
        // u_x = u_xi / x,  u_xx = (u_xixi - u_xi) / x^2
        return {t, y, d1 / y, (d2 - d1) / (y * y)};
    }
    return {t, y, d1, d2};
}

double node_hamiltonian(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                        std::size_t i, std::span<const double> lambda, double c) {
    const GeneratorRow row = generator_row(problem, grid, t, i, c);
    return problem.running_reward(t, grid.node(i), c) + apply_row(row, lambda, i);
}

double hamiltonian_scale(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                         std::size_t i, std::span<const double> lambda, double c) {
    const std::size_t n = grid.n_x();
    const GeneratorRow row = generator_row(problem, grid, t, i, c);
    const double li = lambda[i];
    double s = std::abs(problem.running_reward(t, grid.node(i), c));
    double row_sum = row.diag;
    if (i > 0) {
        s += std::abs(row.lower * (lambda[i - 1] - li));
        row_sum += row.lower;
    }
    if (i + 1 < n) {
        s += std::abs(row.upper * (lambda[i + 1] - li));
        row_sum += row.upper;
    }
    if (row.extra != 0.0) {
        s += std::abs(row.extra * ((i == 0 ? lambda[2] : lambda[n - 3]) - li));
        row_sum += row.extra;
    }
    return s + std::abs(row_sum * li);
}

namespace {

constexpr std::size_t kScanIntervals = 32;

// Magnitude of the terms that cancel in f + (A lambda)_i. Rounding in lambda
// itself enters H at eps times this size, even when the differences vanish.
double cancellation_scale(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                          std::size_t i, std::span<const double> lambda, double c) {
    const std::size_t n = grid.n_x();
    const GeneratorRow row = generator_row(problem, grid, t, i, c);
    double s = std::abs(problem.running_reward(t, grid.node(i), c)) +
               std::abs(row.diag * lambda[i]);
    if (i > 0) s += std::abs(row.lower * lambda[i - 1]);
    if (i + 1 < n) s += std::abs(row.upper * lambda[i + 1]);
    if (row.extra != 0.0) s += std::abs(row.extra * (i == 0 ? lambda[2] : lambda[n - 3]));
    return s;
}
constexpr std::size_t kMaxBrackets = 3;
constexpr int kSwitchBisections = 60;
constexpr double kKinkProbe = 1e-7;
constexpr double kGolden = 0.6180339887498949;

class NodeObjective {
public:
    NodeObjective(const ControlProblem& problem, const SpaceTimeGrid& grid, std::size_t k,
                  std::size_t i, std::span<const double> lambda)
        : problem_(problem), grid_(grid), k_(k), i_(i), t_(grid.time(k)), lambda_(lambda) {}

    double operator()(double c) const {
        const double v = node_hamiltonian(problem_, grid_, t_, i_, lambda_, c);
        if (!std::isfinite(v)) {
            std::ostringstream msg;
            msg << "non-finite Hamiltonian at node " << i_ << " (x = " << grid_.node(i_)
                << ", c = " << c << ")";
            throw SolverError(msg.str(), k_);
        }
        return v;
    }

    [[nodiscard]] double scale(double c) const {
        return hamiltonian_scale(problem_, grid_, t_, i_, lambda_, c);
    }

    [[nodiscard]] int branch(double c) const {
        return stencil_branch(problem_, grid_, t_, i_, c);
    }

    [[nodiscard]] double cancellation(double c) const {
        return cancellation_scale(problem_, grid_, t_, i_, lambda_, c);
    }

private:
    const ControlProblem& problem_;
    const SpaceTimeGrid& grid_;
    std::size_t k_;
    std::size_t i_;
    double t_;
    std::span<const double> lambda_;
};

struct Refined {
    double control;
    double value;
};

/// Golden-section search on [lo, hi] followed by a Newton polish on dH/dc.
/// Newton steps are accepted while H does not drop by more than its
/// round-off level, so the result settles on the root of the derivative
/// rather than on golden-section noise.
Refined refine_bracket(const NodeObjective& H, double lo, double hi, const ControlBounds& b,
                       double noise) {
    const double width = b.width();
    const double lo_br = lo;
    const double hi_br = hi;
    double x1 = hi - kGolden * (hi - lo);
    double x2 = lo + kGolden * (hi - lo);
    double f1 = H(x1);
    double f2 = H(x2);
    const double tol = 1e-7 * std::max(width, 1.0);
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kGolden * (hi - lo);
            f2 = H(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kGolden * (hi - lo);
            f1 = H(x1);
        }
    }
    double c_g = f1 >= f2 ? x1 : x2;
    double h_g = std::max(f1, f2);

    const double s = 1e-4 * width;
    for (int it = 0; it < 8; ++it) {
        if (c_g - s < b.lo || c_g + s > b.hi) break;
        const double hp = H(c_g + s);
        const double hm = H(c_g - s);
        const double d1 = (hp - hm) / (2.0 * s);
        const double d2 = (hp - 2.0 * h_g + hm) / (s * s);
        if (!(d2 < 0.0)) break;
        const double c_n = std::clamp(c_g - d1 / d2, lo_br, hi_br);
        const double h_n = H(c_n);
        if (!(h_n >= h_g - noise)) break;
        const double moved = std::abs(c_n - c_g);
        c_g = c_n;
        h_g = h_n;
        if (moved <= 1e-14 * std::max(width, 1.0)) break;
    }
    return {c_g, h_g};
}

}  // namespace

NodeMaximum maximize_node(const ControlProblem& problem, const SpaceTimeGrid& grid,
                          std::size_t k, std::size_t i, std::span<const double> lambda) {
    const NodeObjective H(problem, grid, k, i, lambda);
    const ControlBounds& b = problem.bounds();
    const double width = b.width();

    // Uniform scan, plus every stencil switch between scan points located by
    // bisection. H is smooth between switches, so each smooth piece that
    // holds a local maximum gets its own bracket.
    std::vector<double> cs;
    std::vector<double> hs;
    cs.reserve(2 * kScanIntervals);
    hs.reserve(2 * kScanIntervals);
    // A convex kink can hide a maximum of the piece next to it: the piece
    // rises towards the kink from the far end yet already falls into it.
    // Record which side of each switch descends into it.
    struct Hidden {
        std::size_t index;
        bool left;
        bool right;
    };
    std::vector<Hidden> hidden;
    const double probe = kKinkProbe * width;
    double c_prev = b.lo;
    int r_prev = H.branch(b.lo);
    for (std::size_t j = 0; j <= kScanIntervals; ++j) {
        const double c = j == kScanIntervals ? b.hi : b.lo + width * static_cast<double>(j) / kScanIntervals;
        const int r = H.branch(c);
        if (j > 0 && r != r_prev) {
            double lo = c_prev;
            double hi = c;
            for (int it = 0; it < kSwitchBisections && hi - lo > 1e-9 * width; ++it) {
                const double mid = 0.5 * (lo + hi);
                (H.branch(mid) == r_prev ? lo : hi) = mid;
            }
            const double h_lo = H(lo);
            const double h_hi = H(hi);
            const bool left = lo - probe > c_prev && H(lo - probe) > h_lo;
            const bool right = hi + probe < c && H(hi + probe) > h_hi;
            if (left || right) hidden.push_back({cs.size(), left, right});
            cs.push_back(hi);
            hs.push_back(h_hi);
        }
        cs.push_back(c);
        hs.push_back(H(c));
        c_prev = c;
        r_prev = r;
    }
    const std::size_t last = cs.size() - 1;

    // Local maxima of the candidates, best first.
    std::vector<std::size_t> peaks;
    for (std::size_t j = 0; j <= last; ++j) {
        const bool left = j == 0 || hs[j] >= hs[j - 1];
        const bool right = j == last || hs[j] >= hs[j + 1];
        if (left && right) peaks.push_back(j);
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [&](std::size_t a, std::size_t c) { return hs[a] > hs[c]; });
    if (peaks.size() > kMaxBrackets) peaks.resize(kMaxBrackets);

    // H flat over the whole range up to rounding in lambda: smallest control.
    const auto [h_min, h_max] = std::minmax_element(hs.begin(), hs.end());
    const double flat = 64.0 * std::numeric_limits<double>::epsilon() *
                        std::max(H.cancellation(cs[0]), H.cancellation(cs[last]));
    if (*h_max - *h_min <= flat) return {b.lo, hs[0], false};

    double scale = std::max(H.scale(cs[0]), H.scale(cs[last]));
    for (std::size_t j : peaks) scale = std::max(scale, H.scale(cs[j]));
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;

    struct Bracket {
        double lo;
        double hi;
    };
    std::vector<Bracket> brackets;
    for (std::size_t j : peaks) brackets.push_back({cs[j == 0 ? 0 : j - 1], cs[j == last ? last : j + 1]});
    const auto is_peak = [&](std::size_t j) {
        return std::find(peaks.begin(), peaks.end(), j) != peaks.end();
    };
    for (const Hidden& kink : hidden) {
        const std::size_t j = kink.index;
        // Only a piece whose far end lies below the kink can hide a maximum
        // the scan misses; otherwise H falls across three candidates.
        if (kink.left && hs[j - 1] < hs[j] && !is_peak(j)) brackets.push_back({cs[j - 1], cs[j]});
        if (kink.right && hs[j + 1] < hs[j] && !is_peak(j)) brackets.push_back({cs[j], cs[j + 1]});
    }

    // The best bracket may replace its scan point within round-off (polish);
    // the others must beat the incumbent by more than that.
    double c_best = cs[peaks.front()];
    double h_best = hs[peaks.front()];
    for (std::size_t n = 0; n < brackets.size(); ++n) {
        const auto [c_r, h_r] = refine_bracket(H, brackets[n].lo, brackets[n].hi, b, noise);
        if (h_r > h_best + (n == 0 ? -noise : noise)) {
            c_best = c_r;
            h_best = h_r;
        }
    }

    // Flat to round-off: prefer the smallest admissible control.
    for (std::size_t j = 0; j <= last && cs[j] < c_best; ++j) {
        if (hs[j] >= h_best - noise) {
            c_best = cs[j];
            h_best = hs[j];
            break;
        }
    }

    const double edge = 1e-12 * width;
    return {c_best, h_best, c_best > b.lo + edge && c_best < b.hi - edge};
}

double node_stationarity(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                         std::size_t i, std::span<const double> lambda, double c) {
    const ControlBounds& b = problem.bounds();
    const double width = b.width();
    const double s = 1e-5 * width;
    if (c - s <= b.lo || c + s >= b.hi) return 0.0;
    const double hp = node_hamiltonian(problem, grid, t, i, lambda, c + s);
    const double h0 = node_hamiltonian(problem, grid, t, i, lambda, c);
    const double hm = node_hamiltonian(problem, grid, t, i, lambda, c - s);
    if (!(hp - 2.0 * h0 + hm < 0.0)) return 0.0;
    const double scale = hamiltonian_scale(problem, grid, t, i, lambda, c);
    if (!(scale > 0.0)) return 0.0;
    // One-sided slopes: an ascent direction on either side is a violation.
    // At a kink of the stencil (upwind switch) both may be nonzero yet c is
    // still a maximizer.
    const double ascent = std::max({0.0, (hp - h0) / s, (hm - h0) / s});
    return ascent * width / scale;
}

SliceUpdate update_control_slice(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                 std::size_t k, std::span<const double> lambda) {
    if (lambda.size() != grid.n_x()) throw ConfigError("lambda slice length does not match grid");
    SliceUpdate out{std::vector<double>(grid.n_x()), 0.0};
    const double t = grid.time(k);
    for (std::size_t i = 0; i < grid.n_x(); ++i) {
        const NodeMaximum m = maximize_node(problem, grid, k, i, lambda);
        out.control[i] = m.control;
        if (m.interior) {
            out.stationarity_residual = std::max(
                out.stationarity_residual, node_stationarity(problem, grid, t, i, lambda, m.control));
        }
    }
    return out;
}

}  // namespace varctrl
