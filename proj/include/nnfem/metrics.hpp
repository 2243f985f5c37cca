#pragma once

// Run metrics: discrete l2 error, cell-centred shear deformation, a fixed LKF
// detector, Newton totals and wall-time decomposition.

#include "nnfem/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nnfem {

/// Euclidean norm of the coefficient difference.
inline double l2_error(const Vec& v, const Vec& v_ref)
{
    require_size(v.size(), v_ref.size(), "l2_error");
    return (v - v_ref).norm();
}

/// sqrt((e11 - e22)^2 + 4 e12^2) from the Q2 gradient at each cell centre (row-major over cells).
inline Vec shear_deformation(const UniformQuadMesh& mesh, const Vec& v)
{
    require_size(v.size(), 2 * mesh.node_count(), "shear_deformation");
    const auto b = q2::basis_1d(0.5);
    const auto db = q2::basis_1d_deriv(0.5);
    const double inv_h = 1.0 / mesh.h();
    Vec out(mesh.cell_count());
    for (int c = 0; c < mesh.cell_count(); ++c) {
        const auto nodes = mesh.cell_nodes(c);
        double g[2][2] = {};
        for (int ay = 0; ay < 3; ++ay)
            for (int ax = 0; ax < 3; ++ax) {
                const int n = nodes[static_cast<std::size_t>(ax + 3 * ay)];
                const double gx = db[ax] * b[ay] * inv_h, gy = b[ax] * db[ay] * inv_h;
                for (int cc = 0; cc < 2; ++cc) {
                    g[cc][0] += v[2 * n + cc] * gx;
                    g[cc][1] += v[2 * n + cc] * gy;
                }
            }
        const double e11 = g[0][0], e22 = g[1][1], e12 = 0.5 * (g[0][1] + g[1][0]);
        out[c] = std::sqrt((e11 - e22) * (e11 - e22) + 4.0 * e12 * e12);
    }
    return out;
}

struct LkfParams {
    double log_eps = 1e-12;
    double percentile = 0.9;
    int min_length = 3;
};

struct LkfResult {
    int count = 0;
    /// Per-cell segment label (0 = background, 1..count = kept segments).
    std::vector<int> labels;
};

namespace detail {

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> x, double p)
{
    std::sort(x.begin(), x.end());
    const double pos = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Zhang-Suen thinning of a binary n x n image (row-major, 1 = foreground).
inline void thin(std::vector<std::uint8_t>& img, int n)
{
    auto at = [&](int i, int j) -> int {
        if (i < 0 || j < 0 || i >= n || j >= n) return 0;
        return img[static_cast<std::size_t>(i + j * n)];
    };
    bool changed = true;
    std::vector<std::size_t> del;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            del.clear();
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    if (!at(i, j)) continue;
                    // Neighbours P2..P9 clockwise from north (j - 1 is north).
                    const int p[8] = {at(i, j - 1), at(i + 1, j - 1), at(i + 1, j), at(i + 1, j + 1),
                                      at(i, j + 1), at(i - 1, j + 1), at(i - 1, j), at(i - 1, j - 1)};
                    int B = 0, A = 0;
                    for (int k = 0; k < 8; ++k) {
                        B += p[k];
                        if (!p[k] && p[(k + 1) % 8]) ++A;
                    }
                    if (B < 2 || B > 6 || A != 1) continue;
                    const bool c1 = pass == 0 ? !(p[0] && p[2] && p[4]) : !(p[0] && p[2] && p[6]);
                    const bool c2 = pass == 0 ? !(p[2] && p[4] && p[6]) : !(p[0] && p[4] && p[6]);
                    if (c1 && c2) del.push_back(static_cast<std::size_t>(i + j * n));
                }
            for (auto d : del) img[d] = 0;
            if (!del.empty()) changed = true;
        }
    }
}

}  // namespace detail

/// Log transform, percentile binarization, thinning, junction removal and 8-connected
/// segment counting. Parameters stay fixed across all runs.
inline LkfResult detect_lkfs(const Vec& shear, int n, const LkfParams& prm = {})
{
    require_size(shear.size(), static_cast<Index>(n) * n, "detect_lkfs");
    for (Index i = 0; i < shear.size(); ++i)
        if (!(shear[i] >= 0.0)) throw ConfigError("detect_lkfs: shear field must be non-negative");
    LkfResult res;
    res.labels.assign(static_cast<std::size_t>(n * n), 0);
    if (n == 0) return res;
    std::vector<double> lg(static_cast<std::size_t>(n * n));
    for (std::size_t i = 0; i < lg.size(); ++i) lg[i] = std::log(shear[static_cast<Index>(i)] + prm.log_eps);
    const double thr = detail::percentile(lg, prm.percentile);
    std::vector<std::uint8_t> img(lg.size());
    for (std::size_t i = 0; i < lg.size(); ++i) img[i] = lg[i] > thr ? 1 : 0;
    detail::thin(img, n);

    auto fg = [&](int i, int j) {
        return i >= 0 && j >= 0 && i < n && j < n && img[static_cast<std::size_t>(i + j * n)];
    };
    std::vector<std::uint8_t> seg = img;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (!fg(i, j)) continue;
            int nb = 0;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di)
                    if ((di || dj) && fg(i + di, j + dj)) ++nb;
            if (nb > 2) seg[static_cast<std::size_t>(i + j * n)] = 0;
        }

    std::vector<int> comp(seg.size(), 0);
    int next = 0;
    for (std::size_t s = 0; s < seg.size(); ++s) {
        if (!seg[s] || comp[s]) continue;
        ++next;
        std::vector<std::size_t> members{s};
        comp[s] = next;
        for (std::size_t q = 0; q < members.size(); ++q) {
            const int i = static_cast<int>(members[q]) % n, j = static_cast<int>(members[q]) / n;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    const int a = i + di, b = j + dj;
                    if (a < 0 || b < 0 || a >= n || b >= n) continue;
                    const auto t = static_cast<std::size_t>(a + b * n);
                    if (seg[t] && !comp[t]) {
                        comp[t] = next;
                        members.push_back(t);
                    }
                }
        }
        if (static_cast<int>(members.size()) >= prm.min_length) {
            ++res.count;
            for (auto m : members) res.labels[m] = res.count;
        }
    }
    return res;
}

inline LkfResult detect_lkfs(const UniformQuadMesh& mesh, const Vec& v, const LkfParams& prm = {})
{
    return detect_lkfs(shear_deformation(mesh, v), mesh.cells, prm);
}

struct RunMetrics {
    std::string run_id;
    std::string scenario;
    int N_M = -1;
    int S = -1;
    int layers = 0;
    int width = 0;
    double E_l2 = 0.0;
    int N_LKF = 0;
    int N_Newton = 0;
    double T_mom = 0.0;
    double T_NK = 0.0;
    double T_cpy = 0.0;
    double T_nn = 0.0;
    double k = 0.0;
    double eps_nl = 0.0;
};

inline const char* metrics_csv_header()
{
    return "run_id,N_M,S,l,w,scenario,E_l2,N_LKF,N_Newton,T_mom,T_NK,T_cpy,T_nn,k,eps_nl";
}

inline std::string metrics_csv_row(const RunMetrics& m)
{
    std::ostringstream os;
    os << std::setprecision(17) << m.run_id << ',' << m.N_M << ',' << m.S << ',' << m.layers << ',' << m.width << ','
       << m.scenario << ',' << m.E_l2 << ',' << m.N_LKF << ',' << m.N_Newton << ',' << m.T_mom << ',' << m.T_NK << ','
       << m.T_cpy << ',' << m.T_nn << ',' << m.k << ',' << m.eps_nl;
    return os.str();
}

inline void write_metrics_csv(const std::string& path, const std::vector<RunMetrics>& rows)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << metrics_csv_header() << '\n';
    for (const auto& r : rows) out << metrics_csv_row(r) << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace nnfem
