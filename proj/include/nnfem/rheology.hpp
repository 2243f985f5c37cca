#pragma once

// Viscous-plastic constitutive law: strain rates, regularized Delta, viscosities,
// ice strength, stress and its linearization.

#include "nnfem/types.hpp"

namespace nnfem {

struct RheologyParams {
    double e = 2.0;
    double P_star = 27500.0;
    double C = 20.0;
    double delta_min = 2e-9;

    void validate() const
    {
        if (!(e > 0.0) || !(P_star > 0.0) || !(C > 0.0) || !(delta_min > 0.0))
            throw ConfigError("rheology parameters e, P_star, C and delta_min must be positive");
    }
};

/// Symmetric 2x2 tensor stored as (xx, yy, xy).
struct Sym2 {
    double xx = 0.0;
    double yy = 0.0;
    double xy = 0.0;

    double trace() const { return xx + yy; }
    Sym2 deviator() const
    {
        const double m = 0.5 * trace();
        return {xx - m, yy - m, xy};
    }
    Eigen::Matrix2d matrix() const
    {
        Eigen::Matrix2d m;
        m << xx, xy, xy, yy;
        return m;
    }
};

inline double ddot(const Sym2& a, const Sym2& b) { return a.xx * b.xx + a.yy * b.yy + 2.0 * a.xy * b.xy; }

inline Sym2 operator*(double s, const Sym2& a) { return {s * a.xx, s * a.yy, s * a.xy}; }
inline Sym2 operator+(const Sym2& a, const Sym2& b) { return {a.xx + b.xx, a.yy + b.yy, a.xy + b.xy}; }
inline Sym2 operator-(const Sym2& a, const Sym2& b) { return {a.xx - b.xx, a.yy - b.yy, a.xy - b.xy}; }

struct StrainRate {
    Sym2 eps;
    Sym2 eps_dev;
};

/// grad(i, j) = d v_i / d x_j.
inline StrainRate strain_rate(const Eigen::Matrix2d& grad)
{
    StrainRate s;
    s.eps = {grad(0, 0), grad(1, 1), 0.5 * (grad(0, 1) + grad(1, 0))};
    s.eps_dev = s.eps.deviator();
    return s;
}

/// The metric M(eps) = (2/e^2) eps' + tr(eps) I, so that Delta_P^2 = M(eps):eps and
/// 2 eta eps' + zeta tr(eps) I = zeta M(eps).
inline Sym2 yield_metric(const Sym2& eps, double e)
{
    const Sym2 dev = eps.deviator();
    const double tr = eps.trace();
    const double c = 2.0 / (e * e);
    return {c * dev.xx + tr, c * dev.yy + tr, c * dev.xy};
}

inline double delta_p(const StrainRate& s, const RheologyParams& p)
{
    const double tr = s.eps.trace();
    return std::sqrt(2.0 / (p.e * p.e) * ddot(s.eps_dev, s.eps_dev) + tr * tr);
}

inline double delta(const StrainRate& s, const RheologyParams& p)
{
    const double dp = delta_p(s, p);
    return std::sqrt(dp * dp + p.delta_min * p.delta_min);
}

inline double ice_strength(double H, double A, const RheologyParams& p)
{
    return p.P_star * H * std::exp(-p.C * (1.0 - A));
}

struct Viscosities {
    double eta = 0.0;
    double zeta = 0.0;
    double P = 0.0;
};

inline Viscosities viscosities_and_strength(const StrainRate& s, double H, double A, const RheologyParams& p)
{
    Viscosities v;
    v.P = ice_strength(H, A, p);
    v.zeta = v.P / (2.0 * delta(s, p));
    v.eta = v.zeta / (p.e * p.e);
    return v;
}

inline Sym2 stress(const StrainRate& s, double eta, double zeta, double P)
{
    const double tr = s.eps.trace();
    return {2.0 * eta * s.eps_dev.xx + zeta * tr - 0.5 * P, 2.0 * eta * s.eps_dev.yy + zeta * tr - 0.5 * P,
            2.0 * eta * s.eps_dev.xy};
}

/// Derivative of sigma(grad v) at a fixed state. The action splits into a symmetric
/// positive part zeta M(d) and a rank-one negative semidefinite remainder.
struct StressLinearization {
    double e = 2.0;
    double zeta = 0.0;
    double delta_sq = 1.0;
    Sym2 m_eps;

    Sym2 spd_part(const Sym2& d) const { return zeta * yield_metric(d, e); }
    Sym2 remainder_part(const Sym2& d) const { return (-zeta * ddot(m_eps, d) / delta_sq) * m_eps; }
    Sym2 apply(const Sym2& d) const { return spd_part(d) + remainder_part(d); }

    Sym2 apply_grad(const Eigen::Matrix2d& dgrad) const { return apply(strain_rate(dgrad).eps); }
};

inline StressLinearization stress_linearization(const StrainRate& s, const RheologyParams& p, double H, double A)
{
    StressLinearization lin;
    lin.e = p.e;
    const double d = delta(s, p);
    lin.delta_sq = d * d;
    lin.zeta = ice_strength(H, A, p) / (2.0 * d);
    lin.m_eps = yield_metric(s.eps, p.e);
    return lin;
}

}  // namespace nnfem
