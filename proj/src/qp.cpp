#include "srlmpc/qp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace srlmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

double objective_value(const QpProblem& p, const Eigen::VectorXd& z) {
    return 0.5 * z.dot(p.H * z) + p.g.dot(z);
}

/// Inequality rows of the problem stacked into a single C z <= d system:
/// general rows first, then finite upper bounds, then finite lower bounds.
struct StackedInequalities {
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
    std::vector<int> upper_idx;
    std::vector<int> lower_idx;
    int general_rows = 0;

    static StackedInequalities build(const QpProblem& p) {
        StackedInequalities s;
        const int n = p.num_vars();
        s.general_rows = static_cast<int>(p.A_in.rows());
        for (int i = 0; i < n; ++i) {
            if (p.ub[i] < kInf) s.upper_idx.push_back(i);
        }
        for (int i = 0; i < n; ++i) {
            if (p.lb[i] > -kInf) s.lower_idx.push_back(i);
        }
        const int m = s.general_rows + static_cast<int>(s.upper_idx.size() + s.lower_idx.size());
        s.C.setZero(m, n);
        s.d.setZero(m);
        if (s.general_rows > 0) {
            s.C.topRows(s.general_rows) = p.A_in;
            s.d.head(s.general_rows) = p.b_in;
        }
        int r = s.general_rows;
        for (int i : s.upper_idx) {
            s.C(r, i) = 1.0;
            s.d(r) = p.ub[i];
            ++r;
        }
        for (int i : s.lower_idx) {
            s.C(r, i) = -1.0;
            s.d(r) = -p.lb[i];
            ++r;
        }
        return s;
    }

    QpMultipliers unstack(const QpProblem& p, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& lambda) const {
        QpMultipliers m;
        m.eq = y;
        m.in = lambda.head(general_rows);
        m.lower.setZero(p.num_vars());
        m.upper.setZero(p.num_vars());
        int r = general_rows;
        for (int i : upper_idx) m.upper[i] = lambda[r++];
        for (int i : lower_idx) m.lower[i] = lambda[r++];
        return m;
    }
};

void check_dimensions(const QpProblem& p) {
    const int n = p.num_vars();
    if (p.H.rows() != n || p.H.cols() != n) throw ValidationError("qp: H dimension mismatch");
    if (p.A_eq.rows() != p.b_eq.size() || (p.A_eq.rows() > 0 && p.A_eq.cols() != n))
        throw ValidationError("qp: equality block dimension mismatch");
    if (p.A_in.rows() != p.b_in.size() || (p.A_in.rows() > 0 && p.A_in.cols() != n))
        throw ValidationError("qp: inequality block dimension mismatch");
    if (p.lb.size() != n || p.ub.size() != n)
        throw ValidationError("qp: bound vector dimension mismatch");
    for (int i = 0; i < n; ++i) {
        if (p.lb[i] > p.ub[i]) throw ValidationError("qp: lb exceeds ub");
    }
}

}  // namespace

void QpProblem::validate() const {
    check_dimensions(*this);
    const int n = num_vars();
    const double h_scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * h_scale) {
        throw ValidationError("qp: H is not symmetric");
    }
    if (n > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-8) {
            throw ValidationError("qp: H has a negative eigenvalue below -1e-8");
        }
    }
}

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z,
                           const QpMultipliers& mult) {
    if (z.size() != p.num_vars()) throw ValidationError("qp: candidate dimension mismatch");
    const int n = p.num_vars();
    KktResiduals res;

    // Stationarity: Hz + g + A_eq'y + A_in'lambda + mu_up - mu_lo.
    Eigen::VectorXd hz = p.H * z;
    Eigen::VectorXd stat = hz + p.g;
    double scale_d = std::max(1.0, std::max(inf_norm(hz), inf_norm(p.g)));
    if (p.A_eq.rows() > 0 && mult.eq.size() == p.A_eq.rows()) {
        Eigen::VectorXd t = p.A_eq.transpose() * mult.eq;
        stat += t;
        scale_d = std::max(scale_d, inf_norm(t));
    }
    if (p.A_in.rows() > 0 && mult.in.size() == p.A_in.rows()) {
        Eigen::VectorXd t = p.A_in.transpose() * mult.in;
        stat += t;
        scale_d = std::max(scale_d, inf_norm(t));
    }
    if (mult.upper.size() == n) {
        stat += mult.upper;
        scale_d = std::max(scale_d, inf_norm(mult.upper));
    }
    if (mult.lower.size() == n) {
        stat -= mult.lower;
        scale_d = std::max(scale_d, inf_norm(mult.lower));
    }
    res.stationarity = inf_norm(stat) / scale_d;

    // Primal feasibility.
    double viol = 0.0;
    double scale_p = 1.0;
    if (p.A_eq.rows() > 0) {
        Eigen::VectorXd az = p.A_eq * z;
        viol = std::max(viol, inf_norm(az - p.b_eq));
        scale_p = std::max(scale_p, std::max(inf_norm(az), inf_norm(p.b_eq)));
    }
    if (p.A_in.rows() > 0) {
        Eigen::VectorXd az = p.A_in * z;
        viol = std::max(viol, (az - p.b_in).cwiseMax(0.0).maxCoeff());
        scale_p = std::max(scale_p, std::max(inf_norm(az), inf_norm(p.b_in)));
    }
    for (int i = 0; i < n; ++i) {
        if (p.ub[i] < kInf) {
            viol = std::max(viol, z[i] - p.ub[i]);
            scale_p = std::max(scale_p, std::abs(p.ub[i]));
        }
        if (p.lb[i] > -kInf) {
            viol = std::max(viol, p.lb[i] - z[i]);
            scale_p = std::max(scale_p, std::abs(p.lb[i]));
        }
    }
    scale_p = std::max(scale_p, inf_norm(z));
    res.primal = std::max(0.0, viol) / scale_p;

    // Complementarity plus dual-sign violations.
    double comp = 0.0;
    double scale_c = 1.0;
    auto account = [&](double lambda, double slack) {
        comp = std::max(comp, std::abs(lambda * slack));
        comp = std::max(comp, std::max(0.0, -lambda));
        scale_c = std::max(scale_c, std::max(std::abs(lambda), std::abs(slack)));
    };
    if (p.A_in.rows() > 0 && mult.in.size() == p.A_in.rows()) {
        Eigen::VectorXd slack = p.b_in - p.A_in * z;
        for (int i = 0; i < slack.size(); ++i) account(mult.in[i], slack[i]);
    }
    if (mult.upper.size() == n) {
        for (int i = 0; i < n; ++i) {
            if (p.ub[i] < kInf) account(mult.upper[i], p.ub[i] - z[i]);
        }
    }
    if (mult.lower.size() == n) {
        for (int i = 0; i < n; ++i) {
            if (p.lb[i] > -kInf) account(mult.lower[i], z[i] - p.lb[i]);
        }
    }
    res.complementarity = comp / scale_c;
    return res;
}

namespace {

QpSolution finish(const QpProblem& p, QpStatus status, const Eigen::VectorXd& z,
                  const QpMultipliers& mult, int iterations) {
    QpSolution sol;
    sol.status = status;
    sol.z = z;
    sol.objective = objective_value(p, z);
    sol.multipliers = mult;
    sol.residuals = kkt_residuals(p, z, mult);
    sol.iterations = iterations;
    return sol;
}

/// Equality-constrained or unconstrained solve via the direct KKT system.
QpSolution solve_equality_only(const QpProblem& p, const QpSettings& settings,
                               const Eigen::VectorXd& z_init) {
    const int n = p.num_vars();
    const int peq = static_cast<int>(p.A_eq.rows());
    QpMultipliers mult;
    mult.lower.setZero(n);
    mult.upper.setZero(n);
    mult.in.setZero(0);
    if (peq == 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(p.H);
        Eigen::VectorXd z = ldlt.solve(-p.g);
        if (!z.allFinite()) z = z_init;
        mult.eq.setZero(0);
        QpSolution sol = finish(p, QpStatus::optimal, z, mult, 1);
        if (sol.residuals.max() > settings.tol) sol.status = QpStatus::iteration_limit;
        return sol;
    }
    Eigen::MatrixXd K(n + peq, n + peq);
    K.setZero();
    K.topLeftCorner(n, n) = p.H;
    K.topRightCorner(n, peq) = p.A_eq.transpose();
    K.bottomLeftCorner(peq, n) = p.A_eq;
    K.diagonal().head(n).array() += 1e-12;
    K.diagonal().tail(peq).array() -= 1e-12;
    Eigen::VectorXd rhs(n + peq);
    rhs.head(n) = -p.g;
    rhs.tail(peq) = p.b_eq;
    Eigen::VectorXd sol_vec = K.partialPivLu().solve(rhs);
    Eigen::VectorXd z = sol_vec.allFinite() ? sol_vec.head(n).eval() : z_init;
    mult.eq = sol_vec.allFinite() ? sol_vec.tail(peq).eval() : Eigen::VectorXd::Zero(peq).eval();
    QpSolution sol = finish(p, QpStatus::optimal, z, mult, 1);
    if (sol.residuals.max() > settings.tol) sol.status = QpStatus::iteration_limit;
    return sol;
}

}  // namespace

QpSolution solve(const QpProblem& p, const QpSettings& settings,
                 const std::optional<Eigen::VectorXd>& z0) {
    check_dimensions(p);
    if (!(settings.tol > 0.0)) throw ValidationError("qp: tol must be positive");
    if (!settings.skip_convexity_check) {
        p.validate();
    }

    const int n = p.num_vars();
    const int peq = static_cast<int>(p.A_eq.rows());

    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    if (z0) {
        if (z0->size() != n) throw ValidationError("qp: initial point dimension mismatch");
        z = *z0;
    }
    for (int i = 0; i < n; ++i) {
        z[i] = std::min(std::max(z[i], p.lb[i]), p.ub[i]);
    }

    // Inconsistent equalities are infeasible regardless of the rest.
    if (peq > 0) {
        Eigen::VectorXd ls = p.A_eq.colPivHouseholderQr().solve(p.b_eq);
        const double resid = inf_norm(p.A_eq * ls - p.b_eq);
        if (resid > 1e-8 * std::max(1.0, inf_norm(p.b_eq))) {
            QpMultipliers mult;
            mult.eq.setZero(peq);
            mult.in.setZero(p.A_in.rows());
            mult.lower.setZero(n);
            mult.upper.setZero(n);
            return finish(p, QpStatus::infeasible, z, mult, 0);
        }
    }

    const StackedInequalities ineq = StackedInequalities::build(p);
    const int m = static_cast<int>(ineq.C.rows());
    if (m == 0) {
        return solve_equality_only(p, settings, z);
    }

    Eigen::VectorXd y = Eigen::VectorXd::Zero(peq);
    Eigen::VectorXd s = (ineq.d - ineq.C * z).cwiseMax(1.0);
    Eigen::VectorXd lambda = Eigen::VectorXd::Ones(m);
    const double mu0 = s.dot(lambda) / m;

    const int kkt_dim = n + peq;
    Eigen::MatrixXd K(kkt_dim, kkt_dim);
    Eigen::VectorXd rhs(kkt_dim);

    auto fraction_to_boundary = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
        double alpha = 1.0;
        for (int i = 0; i < v.size(); ++i) {
            if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
        }
        return alpha;
    };

    int iter = 0;
    for (; iter < settings.max_iter; ++iter) {
        const QpMultipliers mult = ineq.unstack(p, y, lambda);
        const KktResiduals res = kkt_residuals(p, z, mult);
        const double mu = s.dot(lambda) / m;

        if (res.max() <= settings.tol) {
            return finish(p, QpStatus::optimal, z, mult, iter);
        }
        // Infeasibility: complementarity has converged but the primal
        // residual stays bounded away from zero, or the dual diverges.
        const bool primal_stuck = res.primal > std::sqrt(settings.tol);
        if ((mu <= settings.tol * mu0 && primal_stuck) ||
            (std::max(inf_norm(lambda), inf_norm(y)) >
                 1e10 * std::max(1.0, inf_norm(p.g)) &&
             res.primal > settings.tol)) {
            return finish(p, QpStatus::infeasible, z, mult, iter);
        }

        const Eigen::VectorXd r_d = p.H * z + p.g +
                                    (peq > 0 ? (p.A_eq.transpose() * y).eval()
                                             : Eigen::VectorXd::Zero(n).eval()) +
                                    ineq.C.transpose() * lambda;
        const Eigen::VectorXd r_e =
            peq > 0 ? (p.A_eq * z - p.b_eq).eval() : Eigen::VectorXd::Zero(0).eval();
        const Eigen::VectorXd r_c = ineq.C * z + s - ineq.d;

        Eigen::VectorXd dvec(m);
        for (int i = 0; i < m; ++i) {
            dvec[i] = std::min(std::max(lambda[i] / s[i], 1e-14), 1e14);
        }

        K.setZero();
        K.topLeftCorner(n, n) = p.H + ineq.C.transpose() * dvec.asDiagonal() * ineq.C;
        K.diagonal().head(n).array() += 1e-11;
        if (peq > 0) {
            K.topRightCorner(n, peq) = p.A_eq.transpose();
            K.bottomLeftCorner(peq, n) = p.A_eq;
            K.diagonal().tail(peq).array() -= 1e-11;
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

        auto newton_step = [&](const Eigen::VectorXd& r_sl, Eigen::VectorXd& dz,
                               Eigen::VectorXd& dy, Eigen::VectorXd& dl, Eigen::VectorXd& ds) {
            const Eigen::VectorXd w = dvec.cwiseProduct(r_c) - r_sl.cwiseQuotient(s);
            rhs.head(n) = -r_d - ineq.C.transpose() * w;
            if (peq > 0) rhs.tail(peq) = -r_e;
            const Eigen::VectorXd sol_vec = lu.solve(rhs);
            dz = sol_vec.head(n);
            dy = peq > 0 ? sol_vec.tail(peq).eval() : Eigen::VectorXd::Zero(0).eval();
            dl = dvec.cwiseProduct(ineq.C * dz + r_c) - r_sl.cwiseQuotient(s);
            ds = -(r_sl + s.cwiseProduct(dl)).cwiseQuotient(lambda);
        };

        // Predictor.
        Eigen::VectorXd dz_aff, dy_aff, dl_aff, ds_aff;
        newton_step(s.cwiseProduct(lambda), dz_aff, dy_aff, dl_aff, ds_aff);
        if (!dz_aff.allFinite() || !dl_aff.allFinite() || !ds_aff.allFinite()) break;

        const double ap_aff = fraction_to_boundary(s, ds_aff);
        const double ad_aff = fraction_to_boundary(lambda, dl_aff);
        const double mu_aff =
            (s + ap_aff * ds_aff).dot(lambda + ad_aff * dl_aff) / m;
        double sigma = std::pow(mu_aff / mu, 3.0);
        sigma = std::min(std::max(sigma, 0.0), 1.0);

        // Corrector.
        Eigen::VectorXd r_sl = s.cwiseProduct(lambda) + ds_aff.cwiseProduct(dl_aff) -
                               Eigen::VectorXd::Constant(m, sigma * mu);
        Eigen::VectorXd dz, dy, dl, ds;
        newton_step(r_sl, dz, dy, dl, ds);
        if (!dz.allFinite() || !dl.allFinite() || !ds.allFinite()) break;

        const double tau = 0.995;
        const double ap = std::min(1.0, tau * fraction_to_boundary(s, ds));
        const double ad = std::min(1.0, tau * fraction_to_boundary(lambda, dl));

        z += ap * dz;
        s += ap * ds;
        if (peq > 0) y += ad * dy;
        lambda += ad * dl;
    }

    const QpMultipliers mult = ineq.unstack(p, y, lambda);
    QpSolution sol = finish(p, QpStatus::iteration_limit, z, mult, iter);
    // An exhausted iteration budget with a large primal residual is the
    // stalled-infeasible signature as well.
    if (sol.residuals.primal > std::sqrt(settings.tol) &&
        sol.residuals.complementarity <= std::sqrt(settings.tol)) {
        sol.status = QpStatus::infeasible;
    }
    return sol;
}

}  // namespace srlmpc
