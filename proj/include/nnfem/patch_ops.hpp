#pragma once

// Patch decomposition of the fine space: gather into batched rows, network input
// assembly and partition-of-unity scatter with Dirichlet masking.

#include "nnfem/mesh.hpp"

#include <numbers>

namespace nnfem {

constexpr int kGeometryFeatures = 8;
/// Identifier of the row layout [v (2 n_M) | r (2 n_M) | geometry (8)], interleaved components.
constexpr int kFeatureLayoutId = 1;

struct PatchSizes {
    int n_M = 0;
    int N_in = 0;
    int N_out = 0;
};

/// Per-patch sizes for patch size N_M and jump S: a patch spans 2^(N_M+S) fine cells per axis.
inline PatchSizes patch_sizes(int N_M, int S)
{
    if (N_M < 0 || S < 1) throw ConfigError("patch_sizes: need N_M >= 0 and S >= 1");
    const int m = 1 << (N_M + S);
    PatchSizes p;
    p.n_M = (2 * m + 1) * (2 * m + 1);
    p.N_in = 4 * p.n_M + kGeometryFeatures;
    p.N_out = 2 * p.n_M;
    return p;
}

struct PatchPlan {
    int N_M = 0;
    int S = 1;
    int n_M = 0;
    int N_in = 0;
    int N_out = 0;
    int patches_per_axis = 0;
    int fine_cells_per_patch_axis = 0;
    int fine_dofs = 0;
    /// Row K lists the 2 n_M global fine velocity DoFs of patch K.
    std::vector<std::vector<int>> dofs;
    /// Inverse multiplicity per fine DoF (0 for DoFs outside every patch).
    Vec W;
    /// 1 on interior DoFs, 0 on Dirichlet DoFs.
    Vec B;
    std::vector<std::array<double, kGeometryFeatures>> geometry;

    int patch_count() const { return static_cast<int>(dofs.size()); }
};

/// Patches tile the working mesh in blocks of 2^N_M x 2^N_M cells.
inline PatchPlan build_patch_plan(const MeshHierarchy& hier, int N_M, int S, bool allow_large_patches = false)
{
    if (N_M < 0 || N_M > 3) throw ConfigError("build_patch_plan: N_M must be in {0,1,2}");
    if (N_M == 3 && !allow_large_patches)
        throw ConfigError("build_patch_plan: N_M=3 is disabled (pass the override to enable)");
    if (S != hier.jump) throw ConfigError("build_patch_plan: S does not match the hierarchy jump");
    const UniformQuadMesh& coarse = hier.coarse();
    const UniformQuadMesh& fine = hier.fine();
    const int block = 1 << N_M;
    if (coarse.cells % block != 0)
        throw ConfigError("build_patch_plan: working mesh (" + std::to_string(coarse.cells) +
                          " cells/axis) not divisible by patch block " + std::to_string(block));

    const PatchSizes sz = patch_sizes(N_M, S);
    PatchPlan plan;
    plan.N_M = N_M;
    plan.S = S;
    plan.n_M = sz.n_M;
    plan.N_in = sz.N_in;
    plan.N_out = sz.N_out;
    plan.patches_per_axis = coarse.cells / block;
    plan.fine_cells_per_patch_axis = block << S;
    plan.fine_dofs = 2 * fine.node_count();

    const int m = plan.fine_cells_per_patch_axis;
    const int local_axis = 2 * m + 1;
    Vec mult = Vec::Zero(plan.fine_dofs);
    const double side = hier.domain_side;
    const double edge = m * fine.h() / side;
    for (int py = 0; py < plan.patches_per_axis; ++py) {
        for (int px = 0; px < plan.patches_per_axis; ++px) {
            std::vector<int> d;
            d.reserve(static_cast<std::size_t>(2 * sz.n_M));
            for (int lj = 0; lj < local_axis; ++lj)
                for (int li = 0; li < local_axis; ++li) {
                    const int node = fine.node_id(2 * m * px + li, 2 * m * py + lj);
                    d.push_back(2 * node);
                    d.push_back(2 * node + 1);
                }
            for (int g : d) mult[g] += 1.0;
            plan.dofs.push_back(std::move(d));
            const double a = std::numbers::pi / 2;
            plan.geometry.push_back({edge, edge, edge, edge, a, a, a, a});
        }
    }
    plan.W = Vec::Zero(plan.fine_dofs);
    plan.B = Vec::Ones(plan.fine_dofs);
    for (int i = 0; i < plan.fine_dofs; ++i) {
        if (mult[i] > 0.0) plan.W[i] = 1.0 / mult[i];
        if (fine.node_on_boundary(i / 2)) plan.B[i] = 0.0;
    }
    return plan;
}

/// Row K = G_K x (pure index selection).
inline RowMat gather(const PatchPlan& plan, const Vec& x_fine)
{
    require_size(x_fine.size(), plan.fine_dofs, "gather");
    RowMat out(plan.patch_count(), plan.N_out);
    for (int K = 0; K < plan.patch_count(); ++K) {
        const auto& d = plan.dofs[static_cast<std::size_t>(K)];
        for (int j = 0; j < plan.N_out; ++j) out(K, j) = x_fine[d[static_cast<std::size_t>(j)]];
    }
    return out;
}

/// Batched network input [G_K v | G_K r | geometry_K] per patch.
inline RowMat build_input(const PatchPlan& plan, const Vec& v_fine, const Vec& r_fine)
{
    require_size(v_fine.size(), plan.fine_dofs, "build_input velocity");
    require_size(r_fine.size(), plan.fine_dofs, "build_input residual");
    const int half = plan.N_out;
    RowMat X(plan.patch_count(), plan.N_in);
    for (int K = 0; K < plan.patch_count(); ++K) {
        const auto& d = plan.dofs[static_cast<std::size_t>(K)];
        for (int j = 0; j < half; ++j) {
            X(K, j) = v_fine[d[static_cast<std::size_t>(j)]];
            X(K, half + j) = r_fine[d[static_cast<std::size_t>(j)]];
        }
        const auto& g = plan.geometry[static_cast<std::size_t>(K)];
        for (int j = 0; j < kGeometryFeatures; ++j) X(K, 2 * half + j) = g[static_cast<std::size_t>(j)];
    }
    return X;
}

/// delta = B W sum_K S_K D_K. Contributions are accumulated in patch order.
inline Vec scatter(const PatchPlan& plan, const RowMat& D)
{
    if (D.rows() != plan.patch_count() || D.cols() != plan.N_out)
        throw SizeMismatch("scatter: expected " + std::to_string(plan.patch_count()) + "x" +
                           std::to_string(plan.N_out) + " corrections, got " + std::to_string(D.rows()) + "x" +
                           std::to_string(D.cols()));
    Vec out = Vec::Zero(plan.fine_dofs);
    for (int K = 0; K < plan.patch_count(); ++K) {
        const auto& d = plan.dofs[static_cast<std::size_t>(K)];
        for (int j = 0; j < plan.N_out; ++j) out[d[static_cast<std::size_t>(j)]] += D(K, j);
    }
    return out.cwiseProduct(plan.W).cwiseProduct(plan.B);
}

enum class InputMask { none, mask_state, mask_residual };

inline InputMask parse_input_mask(const std::string& s)
{
    if (s == "none") return InputMask::none;
    if (s == "mask_state") return InputMask::mask_state;
    if (s == "mask_residual") return InputMask::mask_residual;
    throw ConfigError("unknown input mask '" + s + "' (expected none, mask_state or mask_residual)");
}

inline const char* to_string(InputMask m)
{
    switch (m) {
    case InputMask::none: return "none";
    case InputMask::mask_state: return "mask_state";
    case InputMask::mask_residual: return "mask_residual";
    }
    return "?";
}

/// Zeroes the velocity or residual block of a batched input; geometry is never touched.
inline RowMat ablate_inputs(RowMat X, InputMask mode)
{
    if (mode == InputMask::none) return X;
    const Index half = (X.cols() - kGeometryFeatures) / 2;
    if (X.cols() < kGeometryFeatures || 2 * half + kGeometryFeatures != X.cols())
        throw SizeMismatch("ablate_inputs: row width does not match the feature layout");
    X.middleCols(mode == InputMask::mask_state ? 0 : half, half).setZero();
    return X;
}

}  // namespace nnfem
