#pragma once

// Precomputed Q2 assembly data for one mesh level: sparsity patterns and
// cell-to-value index tables so element contributions scatter without searches.

#include "nnfem/mesh.hpp"

#include <algorithm>
#include <memory>

namespace nnfem {

/// Compressed pattern plus, per cell, the value index of each (local row, local col) pair.
struct AssemblyPattern {
    SpMat pattern;
    int local_size = 0;
    std::vector<int> cell_slots;

    int slot(int cell, int i, int j) const
    {
        return cell_slots[static_cast<std::size_t>((cell * local_size + i) * local_size + j)];
    }

    SpMat zeros() const
    {
        SpMat m = pattern;
        std::fill(m.valuePtr(), m.valuePtr() + m.nonZeros(), 0.0);
        return m;
    }
};

inline AssemblyPattern build_pattern(const UniformQuadMesh& mesh, int components)
{
    const int ln = q2::kLocalNodes * components;
    const int n = mesh.node_count() * components;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.cell_count()) * ln * ln);
    auto global = [&](const std::array<int, q2::kLocalNodes>& nodes, int i) {
        return components * nodes[static_cast<std::size_t>(i / components)] + i % components;
    };
    for (int c = 0; c < mesh.cell_count(); ++c) {
        const auto nodes = mesh.cell_nodes(c);
        for (int i = 0; i < ln; ++i)
            for (int j = 0; j < ln; ++j) trip.emplace_back(global(nodes, i), global(nodes, j), 1.0);
    }
    AssemblyPattern ap;
    ap.local_size = ln;
    ap.pattern.resize(n, n);
    ap.pattern.setFromTriplets(trip.begin(), trip.end());
    ap.pattern.makeCompressed();

    ap.cell_slots.resize(static_cast<std::size_t>(mesh.cell_count()) * ln * ln);
    const auto* outer = ap.pattern.outerIndexPtr();
    const auto* inner = ap.pattern.innerIndexPtr();
    for (int c = 0; c < mesh.cell_count(); ++c) {
        const auto nodes = mesh.cell_nodes(c);
        for (int i = 0; i < ln; ++i) {
            const int r = global(nodes, i);
            for (int j = 0; j < ln; ++j) {
                const int col = global(nodes, j);
                const auto* pos = std::lower_bound(inner + outer[r], inner + outer[r + 1], col);
                ap.cell_slots[static_cast<std::size_t>((c * ln + i) * ln + j)] = static_cast<int>(pos - inner);
            }
        }
    }
    return ap;
}

/// Everything needed to assemble on one level.
struct LevelSpace {
    UniformQuadMesh mesh;
    DofMap scalar_dofs;
    DofMap vector_dofs;
    AssemblyPattern scalar_pattern;
    AssemblyPattern vector_pattern;

    double h() const { return mesh.h(); }
};

inline std::shared_ptr<const LevelSpace> make_level_space(const UniformQuadMesh& mesh)
{
    auto s = std::make_shared<LevelSpace>();
    s->mesh = mesh;
    s->scalar_dofs = build_q2_dofmap(mesh, 1);
    s->vector_dofs = build_q2_dofmap(mesh, 2);
    s->scalar_pattern = build_pattern(mesh, 1);
    s->vector_pattern = build_pattern(mesh, 2);
    return s;
}

/// Gathers the 9 nodal values of a scalar field on a cell.
inline std::array<double, q2::kLocalNodes> gather_scalar(const Vec& f, const std::array<int, q2::kLocalNodes>& nodes)
{
    std::array<double, q2::kLocalNodes> out{};
    for (int a = 0; a < q2::kLocalNodes; ++a) out[static_cast<std::size_t>(a)] = f[nodes[static_cast<std::size_t>(a)]];
    return out;
}

/// Consistent scalar mass matrix.
inline SpMat assemble_mass_scalar(const LevelSpace& space)
{
    const auto& ref = q2::reference();
    const double h2 = space.h() * space.h();
    SpMat M = space.scalar_pattern.zeros();
    double* val = M.valuePtr();
    for (int c = 0; c < space.mesh.cell_count(); ++c)
        for (int q = 0; q < q2::kQuadPoints; ++q) {
            const double w = ref.weight[q] * h2;
            for (int a = 0; a < 9; ++a)
                for (int b = 0; b < 9; ++b)
                    val[space.scalar_pattern.slot(c, a, b)] += w * ref.phi[q][a] * ref.phi[q][b];
        }
    return M;
}

}  // namespace nnfem
