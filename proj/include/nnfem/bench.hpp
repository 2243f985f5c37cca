#pragma once

// Moving-cyclone benchmark: initial state, ocean circulation and wind forcing,
// direction/rotation variants and linearly scaled desk-size versions.

#include "nnfem/momentum.hpp"

#include <numbers>

namespace nnfem {

enum class Direction { NE, NW, SW, SE };
enum class Rotation { cyclone, anticyclone };

inline const char* to_string(Direction d)
{
    switch (d) {
    case Direction::NE: return "NE";
    case Direction::NW: return "NW";
    case Direction::SW: return "SW";
    case Direction::SE: return "SE";
    }
    return "?";
}

inline const char* to_string(Rotation r) { return r == Rotation::cyclone ? "cyclone" : "anticyclone"; }

inline Direction parse_direction(const std::string& s)
{
    if (s == "NE") return Direction::NE;
    if (s == "NW") return Direction::NW;
    if (s == "SW") return Direction::SW;
    if (s == "SE") return Direction::SE;
    throw ConfigError("unknown direction '" + s + "' (expected NE, NW, SW or SE)");
}

inline Rotation parse_rotation(const std::string& s)
{
    if (s == "cyclone") return Rotation::cyclone;
    if (s == "anticyclone") return Rotation::anticyclone;
    throw ConfigError("unknown rotation '" + s + "' (expected cyclone or anticyclone)");
}

constexpr double kDay = 86400.0;
constexpr double kKm = 1000.0;
constexpr double kFullDomain = 512.0 * kKm;

struct Scenario {
    /// Linear scale factor relative to the 512 km setup.
    double scale = 1.0;
    double A0 = 1.0;
    double H0 = 0.3;
    Direction direction = Direction::NE;
    Rotation rotation = Rotation::cyclone;
    double duration = 8.0 * kDay;
    double k = 120.0;

    double domain_side() const { return kFullDomain * scale; }
};

/// Wind envelope speed (m/s) at time t (s).
inline double wind_envelope(double t)
{
    const double d = t / kDay;
    if (d <= 4.0) return -15.0 * std::tanh((4.0 - d) * (4.0 + d) / 2.0);
    return 15.0 * std::tanh((12.0 - d) * (-4.0 + d) / 2.0);
}

/// Cyclone center coordinate (m) on the full-size domain; m_x = m_y.
inline double cyclone_center(double t)
{
    const double d = t / kDay;
    return (d <= 4.0 ? 256.0 + 51.2 * d : 665.6 - 51.2 * d) * kKm;
}

inline double wind_angle(double t) { return (t / kDay <= 4.0 ? 72.0 : 81.0) * std::numbers::pi / 180.0; }

namespace detail {

/// Symmetry of the square mapping the NE track onto the requested direction (involution).
inline Point reflect(Point p, Direction d, double L)
{
    if (d == Direction::NW || d == Direction::SW) p.x = L - p.x;
    if (d == Direction::SE || d == Direction::SW) p.y = L - p.y;
    return p;
}

inline Velocity reflect(Velocity v, Direction d)
{
    if (d == Direction::NW || d == Direction::SW) v.u = -v.u;
    if (d == Direction::SE || d == Direction::SW) v.v = -v.v;
    return v;
}

inline Velocity ocean_ne(Point p, double L) { return {0.01 * (-1.0 + 2.0 * p.y / L), 0.01 * (1.0 - 2.0 * p.x / L)}; }

/// Full-size NE wind at a full-size position (m).
inline Velocity wind_ne(Point p, double t, Rotation rot)
{
    const double m = cyclone_center(t);
    const double dx = (p.x - m) / kKm, dy = (p.y - m) / kKm;
    const double omega = std::exp(-std::hypot(dx, dy) / 100.0) / 50.0;
    const double a = wind_angle(t);
    const double c = std::cos(a), s = std::sin(a);
    const double off = rot == Rotation::cyclone ? 1.0 : -1.0;
    const double amp = omega * wind_envelope(t);
    return {amp * (c * dx + off * s * dy), amp * (-off * s * dx + c * dy)};
}

}  // namespace detail

/// Ocean current (m/s) at position p (m) of the scenario's domain.
inline Velocity ocean_velocity(Point p, double /*t*/, const Scenario& sc)
{
    const double L = sc.domain_side();
    return detail::reflect(detail::ocean_ne(detail::reflect(p, sc.direction, L), L), sc.direction);
}

/// Wind (m/s). Scaled domains evaluate the full-size field at p / scale, so the wind
/// magnitude is preserved while the track speed and envelope width shrink with the domain.
inline Velocity wind_velocity(Point p, double t, const Scenario& sc)
{
    const double L = sc.domain_side();
    const Point q = detail::reflect(p, sc.direction, L);
    const Point full{q.x / sc.scale, q.y / sc.scale};
    return detail::reflect(detail::wind_ne(full, t, sc.rotation), sc.direction);
}

inline ForcingFields scenario_forcing(const Scenario& sc)
{
    ForcingFields f;
    f.ocean = [sc](Point p, double t) { return ocean_velocity(p, t, sc); };
    f.wind = [sc](Point p, double t) { return wind_velocity(p, t, sc); };
    return f;
}

/// Cyclone track speed (m/s) and envelope width (m) of a scenario.
inline double track_speed(const Scenario& sc) { return 51.2 * kKm * sc.scale / kDay; }
inline double envelope_width(const Scenario& sc) { return 100.0 * kKm * sc.scale; }

/// Scaled copy of `base`; the duration scales with the domain.
inline Scenario make_scaled_scenario(double scale, const Scenario& base, int coarse_cells = 8)
{
    if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("scale factor must lie in (0, 1]");
    if (coarse_cells < 8) throw ConfigError("scaled scenarios need at least 8 coarse cells per axis");
    Scenario s = base;
    s.scale = base.scale * scale;
    s.duration = base.duration * scale;
    return s;
}

/// Initial concentration and thickness on a level.
inline std::pair<Vec, Vec> initial_fields(const UniformQuadMesh& mesh, const Scenario& sc)
{
    return {Vec::Constant(mesh.node_count(), sc.A0), Vec::Constant(mesh.node_count(), sc.H0)};
}

}  // namespace nnfem
