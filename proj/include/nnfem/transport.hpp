#pragma once

// Implicit-Euler step for concentration and thickness with streamline diffusion.

#include "nnfem/linalg.hpp"
#include "nnfem/space.hpp"

namespace nnfem {

struct TransportParams {
    double delta0 = 0.5;
    double rtol = 1e-13;
    int max_iters = 400;
};

struct TransportSystem {
    SpMat matrix;
    Vec rhs;
    std::vector<double> tau;
    std::vector<int> inflow_nodes;
};

/// Boundary nodes where the velocity points into the domain (v.n < 0).
inline std::vector<int> inflow_nodes(const UniformQuadMesh& mesh, const Vec& velocity)
{
    std::vector<int> out;
    const int n = mesh.nodes_per_axis();
    for (int node = 0; node < mesh.node_count(); ++node) {
        const int i = node % n;
        const int j = node / n;
        const double u = velocity[2 * node], v = velocity[2 * node + 1];
        const bool in = (i == 0 && u > 0.0) || (i == n - 1 && u < 0.0) || (j == 0 && v > 0.0) ||
                        (j == n - 1 && v < 0.0);
        if (in) out.push_back(node);
    }
    return out;
}

inline TransportSystem assemble_transport(const LevelSpace& sp, const Vec& field, const Vec& velocity, double k,
                                          double inflow_value, const TransportParams& prm = {})
{
    const auto& mesh = sp.mesh;
    const auto& ref = q2::reference();
    const double h = sp.h();
    const double h2 = h * h;
    TransportSystem sys;
    sys.matrix = sp.scalar_pattern.zeros();
    sys.tau.assign(static_cast<std::size_t>(mesh.cell_count()), 0.0);
    double* val = sys.matrix.valuePtr();
    Vec mu = Vec::Zero(field.size());
    for (int c = 0; c < mesh.cell_count(); ++c) {
        const auto nodes = mesh.cell_nodes(c);
        double vmax = 0.0;
        for (int a = 0; a < 9; ++a) {
            const int nd = nodes[static_cast<std::size_t>(a)];
            vmax = std::max(vmax, std::hypot(velocity[2 * nd], velocity[2 * nd + 1]));
        }
        const double tau = prm.delta0 * h / (vmax + h / k);
        sys.tau[static_cast<std::size_t>(c)] = tau;
        for (int q = 0; q < q2::kQuadPoints; ++q) {
            double v0 = 0.0, v1 = 0.0, div = 0.0, uq = 0.0;
            for (int a = 0; a < 9; ++a) {
                const int nd = nodes[static_cast<std::size_t>(a)];
                const double phi = ref.phi[q][a];
                v0 += velocity[2 * nd] * phi;
                v1 += velocity[2 * nd + 1] * phi;
                div += (velocity[2 * nd] * ref.dphi_ds[q][a] + velocity[2 * nd + 1] * ref.dphi_dt[q][a]) / h;
                uq += field[nd] * phi;
            }
            const double w = ref.weight[q] * h2;
            double adv[9];
            for (int a = 0; a < 9; ++a) adv[a] = (v0 * ref.dphi_ds[q][a] + v1 * ref.dphi_dt[q][a]) / h;
            for (int a = 0; a < 9; ++a) {
                const double pa = ref.phi[q][a];
                mu[nodes[static_cast<std::size_t>(a)]] += w * uq * pa / k;
                for (int b = 0; b < 9; ++b) {
                    const double pb = ref.phi[q][b];
                    val[sp.scalar_pattern.slot(c, a, b)] +=
                        w * (pa * pb / k + adv[b] * pa + div * pb * pa + tau * adv[b] * adv[a]);
                }
            }
        }
    }
    sys.rhs = mu;
    sys.inflow_nodes = inflow_nodes(mesh, velocity);
    for (int nd : sys.inflow_nodes) {
        for (SpMat::InnerIterator it(sys.matrix, nd); it; ++it) it.valueRef() = it.col() == nd ? 1.0 : 0.0;
        sys.rhs[nd] = inflow_value;
    }
    return sys;
}

/// One transport step of a scalar field at frozen velocity.
inline Vec advance_scalar(const LevelSpace& sp, const Vec& field, const Vec& velocity, double k, double inflow_value,
                          const TransportParams& prm = {})
{
    require_size(field.size(), sp.mesh.node_count(), "advance_scalar field");
    require_size(velocity.size(), 2 * sp.mesh.node_count(), "advance_scalar velocity");
    if (!field.allFinite()) throw SolverError("advance_scalar: non-finite field");
    if (velocity.isZero(0.0)) return field;
    const TransportSystem sys = assemble_transport(sp, field, velocity, k, inflow_value, prm);
    Vec x = field;
    for (int nd : sys.inflow_nodes) x[nd] = inflow_value;
    GmresOptions opt;
    opt.rtol = prm.rtol;
    opt.max_iters = prm.max_iters;
    const auto res = gmres(as_op(sys.matrix), sys.rhs, x, jacobi_op(sys.matrix), opt);
    if (!res.converged && res.rel_residual > 1e-8)
        throw SolverError("advance_scalar: linear solve did not converge (rel. residual " +
                          std::to_string(res.rel_residual) + ")");
    return x;
}

struct ClampReport {
    int A_clipped = 0;
    int H_clipped = 0;
    int total() const { return A_clipped + H_clipped; }
};

inline ClampReport clamp_state(Vec& A, Vec& H)
{
    ClampReport rep;
    for (Index i = 0; i < A.size(); ++i) {
        const double c = std::clamp(A[i], 0.0, 1.0);
        if (c != A[i]) ++rep.A_clipped;
        A[i] = c;
    }
    for (Index i = 0; i < H.size(); ++i) {
        if (H[i] < 0.0) {
            H[i] = 0.0;
            ++rep.H_clipped;
        }
    }
    return rep;
}

}  // namespace nnfem
