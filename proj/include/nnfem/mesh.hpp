#pragma once

// Uniform Cartesian quadrilateral meshes, Q2 node numbering and the
// interpolation/restriction operators between nested levels.

#include "nnfem/types.hpp"

#include <array>
#include <vector>

namespace nnfem {

namespace q2 {

/// 1D quadratic Lagrange basis on [0,1] with nodes 0, 1/2, 1.
inline std::array<double, 3> basis_1d(double s)
{
    return {2.0 * (s - 0.5) * (s - 1.0), -4.0 * s * (s - 1.0), 2.0 * s * (s - 0.5)};
}

inline std::array<double, 3> basis_1d_deriv(double s)
{
    return {4.0 * s - 3.0, -8.0 * s + 4.0, 4.0 * s - 1.0};
}

constexpr int kLocalNodes = 9;
constexpr int kQuadPoints = 9;

/// Reference-cell tables for the 3x3 Gauss rule on [0,1]^2. Local node a = ax + 3*ay.
struct Reference {
    std::array<double, kQuadPoints> weight{};
    std::array<Point, kQuadPoints> point{};
    std::array<std::array<double, kLocalNodes>, kQuadPoints> phi{};
    std::array<std::array<double, kLocalNodes>, kQuadPoints> dphi_ds{};
    std::array<std::array<double, kLocalNodes>, kQuadPoints> dphi_dt{};

    Reference()
    {
        const double g = std::sqrt(0.6) / 2.0;
        const std::array<double, 3> gp{0.5 - g, 0.5, 0.5 + g};
        const std::array<double, 3> gw{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
        for (int qy = 0; qy < 3; ++qy) {
            for (int qx = 0; qx < 3; ++qx) {
                const int q = qx + 3 * qy;
                weight[q] = gw[qx] * gw[qy];
                point[q] = {gp[qx], gp[qy]};
                const auto bx = basis_1d(gp[qx]);
                const auto by = basis_1d(gp[qy]);
                const auto dx = basis_1d_deriv(gp[qx]);
                const auto dy = basis_1d_deriv(gp[qy]);
                for (int ay = 0; ay < 3; ++ay) {
                    for (int ax = 0; ax < 3; ++ax) {
                        const int a = ax + 3 * ay;
                        phi[q][a] = bx[ax] * by[ay];
                        dphi_ds[q][a] = dx[ax] * by[ay];
                        dphi_dt[q][a] = bx[ax] * dy[ay];
                    }
                }
            }
        }
    }
};

inline const Reference& reference()
{
    static const Reference ref;
    return ref;
}

}  // namespace q2

/// One level of the hierarchy: `cells` x `cells` squares of side h on (0, side)^2.
struct UniformQuadMesh {
    int level = 0;
    int cells = 0;
    double side = 0.0;

    double h() const { return side / cells; }
    int nodes_per_axis() const { return 2 * cells + 1; }
    int node_count() const { return nodes_per_axis() * nodes_per_axis(); }
    int cell_count() const { return cells * cells; }

    int node_id(int i, int j) const { return i + j * nodes_per_axis(); }

    Point node_coord(int node) const
    {
        const int n = nodes_per_axis();
        const double dh = 0.5 * h();
        return {(node % n) * dh, (node / n) * dh};
    }

    bool node_on_boundary(int node) const
    {
        const int n = nodes_per_axis();
        const int i = node % n;
        const int j = node / n;
        return i == 0 || j == 0 || i == n - 1 || j == n - 1;
    }

    std::array<int, q2::kLocalNodes> cell_nodes(int cell) const
    {
        const int cx = cell % cells;
        const int cy = cell / cells;
        std::array<int, q2::kLocalNodes> out{};
        for (int ay = 0; ay < 3; ++ay)
            for (int ax = 0; ax < 3; ++ax) out[ax + 3 * ay] = node_id(2 * cx + ax, 2 * cy + ay);
        return out;
    }

    Point cell_origin(int cell) const { return {(cell % cells) * h(), (cell / cells) * h()}; }

    /// Parent cell on the next coarser level.
    int parent_cell(int cell) const
    {
        const int cx = cell % cells;
        const int cy = cell / cells;
        return cx / 2 + (cy / 2) * (cells / 2);
    }

    /// The four children on the next finer level.
    std::array<int, 4> child_cells(int cell) const
    {
        const int cx = cell % cells;
        const int cy = cell / cells;
        const int fine = 2 * cells;
        return {2 * cx + 2 * cy * fine, 2 * cx + 1 + 2 * cy * fine, 2 * cx + (2 * cy + 1) * fine,
                2 * cx + 1 + (2 * cy + 1) * fine};
    }
};

/// Q2 degrees of freedom on one level. Vector fields interleave components per node.
struct DofMap {
    int level = 0;
    int nodes_per_axis = 0;
    int component_count = 1;
    std::vector<int> boundary_dofs;
    std::vector<int> interior_dofs;
    std::vector<std::uint8_t> is_boundary;

    int size() const { return static_cast<int>(is_boundary.size()); }
};

inline DofMap build_q2_dofmap(const UniformQuadMesh& mesh, int component_count = 1)
{
    if (component_count != 1 && component_count != 2)
        throw ConfigError("build_q2_dofmap: component_count must be 1 or 2");
    DofMap map;
    map.level = mesh.level;
    map.nodes_per_axis = mesh.nodes_per_axis();
    map.component_count = component_count;
    map.is_boundary.assign(static_cast<std::size_t>(mesh.node_count() * component_count), 0);
    for (int node = 0; node < mesh.node_count(); ++node) {
        const bool b = mesh.node_on_boundary(node);
        for (int c = 0; c < component_count; ++c) {
            const int dof = component_count * node + c;
            map.is_boundary[static_cast<std::size_t>(dof)] = b ? 1 : 0;
            (b ? map.boundary_dofs : map.interior_dofs).push_back(dof);
        }
    }
    return map;
}

/// Nodal interpolation of a scalar Q2 field from `coarse` to the next finer level.
inline SpMat q2_prolongation_scalar(const UniformQuadMesh& coarse)
{
    const int nc = coarse.nodes_per_axis();
    const int nf = 2 * coarse.cells * 2 + 1;

    // 1D weights: fine node I sits at coarse-node coordinate I/2.
    std::vector<std::vector<std::pair<int, double>>> w1d(static_cast<std::size_t>(nf));
    for (int I = 0; I < nf; ++I) {
        if (I % 2 == 0) {
            w1d[static_cast<std::size_t>(I)].push_back({I / 2, 1.0});
            continue;
        }
        const double p = 0.5 * I;
        const int cell = std::min(static_cast<int>(p / 2.0), coarse.cells - 1);
        const double s = (p - 2.0 * cell) / 2.0;
        const auto b = q2::basis_1d(s);
        for (int a = 0; a < 3; ++a)
            if (b[static_cast<std::size_t>(a)] != 0.0)
                w1d[static_cast<std::size_t>(I)].push_back({2 * cell + a, b[static_cast<std::size_t>(a)]});
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nf) * nf * 4);
    for (int J = 0; J < nf; ++J)
        for (int I = 0; I < nf; ++I)
            for (const auto& [cj, wy] : w1d[static_cast<std::size_t>(J)])
                for (const auto& [ci, wx] : w1d[static_cast<std::size_t>(I)])
                    trip.emplace_back(I + J * nf, ci + cj * nc, wx * wy);
    SpMat P(nf * nf, nc * nc);
    P.setFromTriplets(trip.begin(), trip.end());
    return P;
}

/// Expands a scalar operator to interleaved 2-component vectors (P ⊗ I2).
inline SpMat expand_to_vector(const SpMat& scalar)
{
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(scalar.nonZeros()) * 2);
    for (Index r = 0; r < scalar.outerSize(); ++r)
        for (SpMat::InnerIterator it(scalar, r); it; ++it)
            for (int c = 0; c < 2; ++c) trip.emplace_back(2 * it.row() + c, 2 * it.col() + c, it.value());
    SpMat out(2 * scalar.rows(), 2 * scalar.cols());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

/// Prolongation P (coarse -> fine) and restriction R = P^T.
struct TransferOps {
    int from_level = 0;
    int to_level = 0;
    int components = 1;
    SpMat P;
    SpMat R;
};

struct MeshHierarchy {
    double domain_side = 0.0;
    std::vector<UniformQuadMesh> levels;
    int coarse_level_index = 0;
    int jump = 1;

    const UniformQuadMesh& coarse() const { return levels[static_cast<std::size_t>(coarse_level_index)]; }
    const UniformQuadMesh& fine() const { return levels.back(); }
    int fine_level_index() const { return coarse_level_index + jump; }
    const UniformQuadMesh& level(int l) const { return levels.at(static_cast<std::size_t>(l)); }
};

/// `coarse_cells` is the cell count per axis on the working level L; level 0 has
/// coarse_cells / 2^L cells per axis and the auxiliary level L+S is S refinements above L.
inline MeshHierarchy build_hierarchy(double domain_side, int coarse_cells, int L, int S)
{
    if (!(domain_side > 0.0)) throw ConfigError("build_hierarchy: domain side must be positive");
    if (coarse_cells < 2) throw ConfigError("build_hierarchy: need at least 2 working-level cells per axis");
    if (L < 0) throw ConfigError("build_hierarchy: L must be non-negative");
    if (S < 1) throw ConfigError("build_hierarchy: jump S must be >= 1");
    if (coarse_cells % (1 << L) != 0)
        throw ConfigError("build_hierarchy: working-level cells not divisible by 2^L");
    const int base = coarse_cells >> L;

    MeshHierarchy h;
    h.domain_side = domain_side;
    h.coarse_level_index = L;
    h.jump = S;
    for (int l = 0; l <= L + S; ++l) h.levels.push_back({l, base << l, domain_side});
    return h;
}

/// Interpolation from level `from` to level `to` (to > from) as a product of one-level steps.
inline TransferOps make_transfer(const MeshHierarchy& hier, int from, int to, int components)
{
    if (to <= from) throw ConfigError("make_transfer: target level must be finer");
    SpMat P = q2_prolongation_scalar(hier.level(from));
    for (int l = from + 1; l < to; ++l) {
        SpMat step = q2_prolongation_scalar(hier.level(l));
        P = SpMat(step * P);
    }
    P.prune(0.0);
    TransferOps ops;
    ops.from_level = from;
    ops.to_level = to;
    ops.components = components;
    ops.P = components == 2 ? expand_to_vector(P) : P;
    ops.R = SpMat(ops.P.transpose());
    return ops;
}

inline Vec prolongate(const Vec& v_coarse, const TransferOps& ops)
{
    require_size(v_coarse.size(), ops.P.cols(), "prolongate");
    return ops.P * v_coarse;
}

inline Vec restrict_rhs(const Vec& f_fine, const TransferOps& ops)
{
    require_size(f_fine.size(), ops.R.cols(), "restrict_rhs");
    return ops.R * f_fine;
}

/// Nodal interpolation of a scalar function onto a level.
template <class F>
Vec interpolate_scalar(const UniformQuadMesh& mesh, F&& f)
{
    Vec out(mesh.node_count());
    for (int n = 0; n < mesh.node_count(); ++n) out[n] = f(mesh.node_coord(n));
    return out;
}

/// Nodal interpolation of a vector function (returning Velocity) onto a level.
template <class F>
Vec interpolate_vector(const UniformQuadMesh& mesh, F&& f)
{
    Vec out(2 * mesh.node_count());
    for (int n = 0; n < mesh.node_count(); ++n) {
        const Velocity w = f(mesh.node_coord(n));
        out[2 * n] = w.u;
        out[2 * n + 1] = w.v;
    }
    return out;
}

}  // namespace nnfem
