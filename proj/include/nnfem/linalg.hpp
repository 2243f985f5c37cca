#pragma once

// Krylov and multigrid building blocks: restarted right-preconditioned GMRES,
// Jacobi preconditioning and a geometric V-cycle with Galerkin coarse operators.

#include "nnfem/types.hpp"

#include <Eigen/LU>

#include <functional>

namespace nnfem {

using LinearOp = std::function<Vec(const Vec&)>;

struct GmresOptions {
    double rtol = 1e-4;
    double atol = 0.0;
    int restart = 50;
    int max_iters = 500;
};

struct GmresResult {
    int iterations = 0;
    double residual = 0.0;
    double rel_residual = 0.0;
    bool converged = false;
};

/// Solves A x = b with right preconditioning; x holds the initial guess on entry.
inline GmresResult gmres(const LinearOp& A, const Vec& b, Vec& x, const LinearOp& M, const GmresOptions& opt)
{
    require_size(x.size(), b.size(), "gmres initial guess");
    GmresResult res;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero();
        res.converged = true;
        return res;
    }
    const double target = std::max(opt.rtol * bnorm, opt.atol);
    const int m = std::max(1, opt.restart);
    const Index n = b.size();

    Vec r = b - A(x);
    double beta = r.norm();
    while (true) {
        res.residual = beta;
        res.rel_residual = beta / bnorm;
        if (beta <= target) {
            res.converged = true;
            return res;
        }
        if (res.iterations >= opt.max_iters) return res;

        Mat V(n, m + 1);
        Mat H = Mat::Zero(m + 1, m);
        Vec cs = Vec::Zero(m), sn = Vec::Zero(m), g = Vec::Zero(m + 1);
        V.col(0) = r / beta;
        g[0] = beta;
        int j = 0;
        for (; j < m && res.iterations < opt.max_iters; ++j) {
            ++res.iterations;
            Vec w = A(M(V.col(j)));
            for (int i = 0; i <= j; ++i) {
                H(i, j) = V.col(i).dot(w);
                w -= H(i, j) * V.col(i);
            }
            // One reorthogonalization pass keeps the basis clean for tight tolerances.
            for (int i = 0; i <= j; ++i) {
                const double c = V.col(i).dot(w);
                H(i, j) += c;
                w -= c * V.col(i);
            }
            H(j + 1, j) = w.norm();
            const bool breakdown = H(j + 1, j) <= 1e-300;
            if (!breakdown) V.col(j + 1) = w / H(j + 1, j);
            for (int i = 0; i < j; ++i) {
                const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
                H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
                H(i, j) = t;
            }
            const double denom = std::hypot(H(j, j), H(j + 1, j));
            cs[j] = denom == 0.0 ? 1.0 : H(j, j) / denom;
            sn[j] = denom == 0.0 ? 0.0 : H(j + 1, j) / denom;
            H(j, j) = denom;
            H(j + 1, j) = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            if (std::abs(g[j + 1]) <= target || breakdown) {
                ++j;
                break;
            }
        }
        Vec y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
        x += M(V.leftCols(j) * y);
        r = b - A(x);
        const double new_beta = r.norm();
        if (!(new_beta < beta) && std::abs(g[j]) >= beta) {
            // Stagnation: no progress within a whole cycle.
            res.residual = new_beta;
            res.rel_residual = new_beta / bnorm;
            res.converged = new_beta <= target;
            return res;
        }
        beta = new_beta;
    }
}

inline LinearOp as_op(const SpMat& A)
{
    return [&A](const Vec& x) { return Vec(A * x); };
}

inline LinearOp identity_op()
{
    return [](const Vec& x) { return x; };
}

inline LinearOp jacobi_op(const SpMat& A)
{
    Vec inv = A.diagonal();
    for (Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] != 0.0 ? 1.0 / inv[i] : 1.0;
    return [inv](const Vec& x) { return Vec(inv.cwiseProduct(x)); };
}

enum class Smoother { jacobi, gauss_seidel };

struct MultigridOptions {
    int pre_smooth = 2;
    int post_smooth = 2;
    /// Damping of the Jacobi smoother.
    double omega = 0.6;
    /// Gauss-Seidel sweeps forward before and backward after the coarse correction.
    Smoother smoother = Smoother::gauss_seidel;
};

/// Grid transfer for one level pair with Dirichlet masking already applied.
struct MgTransfer {
    SpMat P;  // coarse -> fine
    SpMat R;  // P^T
};

/// Masks a one-level prolongation so it never writes fine boundary DoFs and never
/// reads coarse boundary DoFs.
inline MgTransfer masked_transfer(const SpMat& P, const std::vector<std::uint8_t>& fine_boundary,
                                  const std::vector<std::uint8_t>& coarse_boundary)
{
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(P.nonZeros()));
    for (Index r = 0; r < P.outerSize(); ++r) {
        if (fine_boundary[static_cast<std::size_t>(r)]) continue;
        for (SpMat::InnerIterator it(P, r); it; ++it)
            if (!coarse_boundary[static_cast<std::size_t>(it.col())])
                trip.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
    }
    MgTransfer t;
    t.P.resize(P.rows(), P.cols());
    t.P.setFromTriplets(trip.begin(), trip.end());
    t.R = SpMat(t.P.transpose());
    return t;
}

/// V-cycle preconditioner. Levels are ordered coarsest first; transfers[l] maps level l to l+1.
/// Boundary DoFs have identity rows and are assigned directly, never smoothed.
class Multigrid {
public:
    Multigrid() = default;

    Multigrid(const SpMat& A_fine, const std::vector<MgTransfer>* transfers,
              const std::vector<std::vector<std::uint8_t>>* boundary, MultigridOptions opt = {})
        : transfers_(transfers), boundary_(boundary), opt_(opt)
    {
        const std::size_t nl = transfers->size() + 1;
        if (boundary->size() != nl) throw SizeMismatch("Multigrid: boundary masks do not match level count");
        A_.resize(nl);
        A_[nl - 1] = A_fine;
        for (std::size_t l = nl - 1; l > 0; --l) {
            const auto& t = (*transfers)[l - 1];
            SpMat AP = A_[l] * t.P;
            SpMat Ac = t.R * AP;
            const auto& cb = (*boundary)[l - 1];
            std::vector<Eigen::Triplet<double>> id;
            for (std::size_t i = 0; i < cb.size(); ++i)
                if (cb[i]) id.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
            SpMat I(Ac.rows(), Ac.cols());
            I.setFromTriplets(id.begin(), id.end());
            A_[l - 1] = Ac + I;
        }
        inv_diag_.resize(nl);
        for (std::size_t l = 0; l < nl; ++l) {
            Vec d = A_[l].diagonal();
            for (Index i = 0; i < d.size(); ++i) d[i] = d[i] != 0.0 ? 1.0 / d[i] : 1.0;
            inv_diag_[l] = d;
        }
        coarse_lu_.compute(Mat(A_[0]));
    }

    Vec apply(const Vec& b) const { return vcycle(A_.size() - 1, b); }

    LinearOp as_op() const
    {
        return [this](const Vec& b) { return apply(b); };
    }

    std::size_t levels() const { return A_.size(); }
    const SpMat& level_matrix(std::size_t l) const { return A_[l]; }

private:
    Vec vcycle(std::size_t l, const Vec& b) const
    {
        if (l == 0) return coarse_lu_.solve(b);
        const SpMat& A = A_[l];
        const auto& bnd = (*boundary_)[l];
        Vec x = Vec::Zero(b.size());
        for (std::size_t i = 0; i < bnd.size(); ++i)
            if (bnd[i]) x[static_cast<Index>(i)] = b[static_cast<Index>(i)];
        smooth(l, b, x, opt_.pre_smooth, true);
        Vec r = b - A * x;
        const auto& t = (*transfers_)[l - 1];
        Vec ec = vcycle(l - 1, t.R * r);
        x += t.P * ec;
        smooth(l, b, x, opt_.post_smooth, false);
        return x;
    }

    void smooth(std::size_t l, const Vec& b, Vec& x, int sweeps, bool forward) const
    {
        const auto& bnd = (*boundary_)[l];
        if (opt_.smoother == Smoother::gauss_seidel) {
            const SpMat& A = A_[l];
            const Index n = x.size();
            for (int s = 0; s < sweeps; ++s)
                for (Index k = 0; k < n; ++k) {
                    const Index i = forward ? k : n - 1 - k;
                    if (bnd[static_cast<std::size_t>(i)]) continue;
                    double ri = b[i];
                    for (SpMat::InnerIterator it(A, i); it; ++it) ri -= it.value() * x[it.col()];
                    x[i] += inv_diag_[l][i] * ri;
                }
            return;
        }
        for (int s = 0; s < sweeps; ++s) {
            Vec r = b - A_[l] * x;
            for (Index i = 0; i < x.size(); ++i)
                if (!bnd[static_cast<std::size_t>(i)]) x[i] += opt_.omega * inv_diag_[l][i] * r[i];
        }
    }

    const std::vector<MgTransfer>* transfers_ = nullptr;
    const std::vector<std::vector<std::uint8_t>>* boundary_ = nullptr;
    MultigridOptions opt_;
    std::vector<SpMat> A_;
    std::vector<Vec> inv_diag_;
    Eigen::PartialPivLU<Mat> coarse_lu_;
};

}  // namespace nnfem
