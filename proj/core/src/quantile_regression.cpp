#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "cfdist/error.hpp"
#include "cfdist/estimators.hpp"

namespace cfdist {

namespace {

double rho(double residual, double u) { return residual * (u - (residual < 0.0 ? 1.0 : 0.0)); }

// Largest step in [0, 1] keeping v + step * dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double step = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) {
            step = std::min(step, -v[i] / dv[i]);
        }
    }
    return step;
}

// Tries to replace an interior-point solution by the basic solution through
// the p observations with the smallest residuals. Returns false when those
// rows do not span the design.
bool basic_solution(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                    Eigen::VectorXd& out) {
    const Eigen::Index n = z.rows();
    const Eigen::Index p = z.cols();
    Eigen::VectorXd resid = y - z * beta;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::vector<double> scaled(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = z.row(i).norm();
        scaled[static_cast<std::size_t>(i)] = norm > 0.0 ? std::abs(resid[i]) / norm : std::numeric_limits<double>::infinity();
    }
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return scaled[static_cast<std::size_t>(a)] < scaled[static_cast<std::size_t>(b)];
    });

    // Greedy selection of linearly independent rows by Gram-Schmidt.
    Eigen::MatrixXd basis(p, p);
    Eigen::MatrixXd rows(p, p);
    Eigen::VectorXd rhs(p);
    Eigen::Index chosen = 0;
    for (Eigen::Index k = 0; k < n && chosen < p; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(k)];
        Eigen::VectorXd v = z.row(i).transpose();
        const double original = v.norm();
        if (original == 0.0) {
            continue;
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index j = 0; j < chosen; ++j) {
                v -= basis.col(j).dot(v) * basis.col(j);
            }
        }
        const double remaining = v.norm();
        if (remaining <= 1e-9 * original) {
            continue;
        }
        basis.col(chosen) = v / remaining;
        rows.row(chosen) = z.row(i);
        rhs[chosen] = y[i];
        ++chosen;
    }
    if (chosen < p) {
        return false;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(rows);
    if (!lu.isInvertible()) {
        return false;
    }
    out = lu.solve(rhs);
    return out.allFinite();
}

} // namespace

double check_loss(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome, const Eigen::VectorXd& weights,
                  const Eigen::VectorXd& beta, double u) {
    const Eigen::VectorXd resid = outcome - design * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) {
        total += weights[i] * rho(resid[i], u);
    }
    return total;
}

// Primal-dual path following with Mehrotra's predictor-corrector on the dual
// of the check-loss problem:
//   min c'a  s.t.  A a = b,  0 <= a <= 1,
// with A = Z', c = -y, b = (1 - u) Z'1 on weight-scaled rows. The multiplier of
// the equality constraint is -beta.
QuantileRegressionFit solve_quantile_regression(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome,
                                                const Eigen::VectorXd& weights, double u, int max_iterations,
                                                double tolerance) {
    if (!(u > 0.0 && u < 1.0)) {
        throw DomainError("quantile index must lie in (0,1)");
    }
    // Zero-weight observations do not enter the objective.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < outcome.size(); ++i) {
        if (weights[i] > 0.0) {
            keep.push_back(i);
        }
    }
    const auto n = static_cast<Eigen::Index>(keep.size());
    const Eigen::Index p = design.cols();
    if (n < p) {
        throw SolverError("fewer positively weighted observations than parameters", u);
    }
    Eigen::MatrixXd z(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index i = keep[static_cast<std::size_t>(k)];
        z.row(k) = weights[i] * design.row(i);
        y[k] = weights[i] * outcome[i];
    }

    const Eigen::VectorXd c = -y;
    const Eigen::VectorXd b = (1.0 - u) * z.colwise().sum().transpose();

    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 - u);
    Eigen::VectorXd s = Eigen::VectorXd::Constant(n, u);
    Eigen::LDLT<Eigen::MatrixXd> gram(z.transpose() * z);
    Eigen::VectorXd dual = gram.solve(z.transpose() * c);
    Eigen::VectorXd r = c - z * dual;
    const double shift = std::max(r.cwiseAbs().mean(), 1e-8 * (1.0 + c.cwiseAbs().maxCoeff()));
    Eigen::VectorXd zv = r.cwiseMax(0.0).array() + shift;
    Eigen::VectorXd wv = (-r).cwiseMax(0.0).array() + shift;

    const double scale = 1.0 + y.cwiseAbs().sum();
    Eigen::VectorXd dx(n), ds(n), dz(n), dw(n), dy(p), d(n), q(n), rxz(n), rsw(n);
    int iteration = 0;
    bool converged = false;
    double gap = x.dot(zv) + s.dot(wv);
    for (; iteration < max_iterations; ++iteration) {
        const Eigen::VectorXd rp = b - z.transpose() * x;
        const Eigen::VectorXd rd = c - z * dual - zv + wv;
        gap = x.dot(zv) + s.dot(wv);
        if (gap <= tolerance * scale && rp.norm() <= 1e-9 * scale && rd.norm() <= 1e-9 * scale) {
            converged = true;
            break;
        }
        const double mu = gap / (2.0 * static_cast<double>(n));

        d = (zv.cwiseQuotient(x) + wv.cwiseQuotient(s)).cwiseInverse();
        Eigen::MatrixXd normal = z.transpose() * d.asDiagonal() * z;
        Eigen::LLT<Eigen::MatrixXd> chol(normal);
        if (chol.info() != Eigen::Success) {
            break;
        }

        auto direction = [&](const Eigen::VectorXd& r_xz, const Eigen::VectorXd& r_sw) {
            q = r_xz.cwiseQuotient(x) - r_sw.cwiseQuotient(s) - rd;
            dy = chol.solve(rp - z.transpose() * d.cwiseProduct(q));
            dx = d.cwiseProduct(z * dy + q);
            ds = -dx;
            dz = (r_xz - zv.cwiseProduct(dx)).cwiseQuotient(x);
            dw = (r_sw - wv.cwiseProduct(ds)).cwiseQuotient(s);
        };

        // Predictor.
        rxz = -x.cwiseProduct(zv);
        rsw = -s.cwiseProduct(wv);
        direction(rxz, rsw);
        double step_p = std::min(max_step(x, dx), max_step(s, ds));
        double step_d = std::min(max_step(zv, dz), max_step(wv, dw));
        const double mu_aff = ((x + step_p * dx).dot(zv + step_d * dz) + (s + step_p * ds).dot(wv + step_d * dw)) /
                              (2.0 * static_cast<double>(n));
        const double sigma = std::pow(mu_aff / mu, 3.0);

        // Corrector.
        rxz = Eigen::VectorXd::Constant(n, sigma * mu) - x.cwiseProduct(zv) - dx.cwiseProduct(dz);
        rsw = Eigen::VectorXd::Constant(n, sigma * mu) - s.cwiseProduct(wv) - ds.cwiseProduct(dw);
        direction(rxz, rsw);
        step_p = std::min(1.0, 0.99995 * std::min(max_step(x, dx), max_step(s, ds)));
        step_d = std::min(1.0, 0.99995 * std::min(max_step(zv, dz), max_step(wv, dw)));

        x += step_p * dx;
        s += step_p * ds;
        dual += step_d * dy;
        zv += step_d * dz;
        wv += step_d * dw;
    }

    QuantileRegressionFit fit;
    fit.iterations = iteration;
    fit.duality_gap = gap;
    // A numerically singular normal matrix near the optimum still leaves a usable point.
    if (!converged && gap <= 1e-7 * scale) {
        converged = true;
    }
    if (!converged || !dual.allFinite()) {
        throw SolverError("quantile regression did not converge within " + std::to_string(max_iterations) +
                              " iterations",
                          u);
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    fit.beta = -dual;
    fit.objective = check_loss(z, y, ones, fit.beta, u);

    Eigen::VectorXd vertex;
    if (basic_solution(z, y, fit.beta, vertex)) {
        const double vertex_objective = check_loss(z, y, ones, vertex, u);
        if (vertex_objective <= fit.objective + 1e-13 * scale) {
            fit.beta = vertex;
            fit.objective = vertex_objective;
        }
    }
    return fit;
}

} // namespace cfdist
