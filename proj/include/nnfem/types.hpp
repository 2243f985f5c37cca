#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnfem {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Velocity {
    double u = 0.0;
    double v = 0.0;

    double norm() const { return std::hypot(u, v); }
};

inline constexpr const char* kVersion = "1.0.0";

/// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class SizeMismatch : public Error {
public:
    using Error::Error;
};

class AssemblyFault : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

inline void require_size(Index got, Index expected, const char* what)
{
    if (got != expected)
        throw SizeMismatch(std::string(what) + ": expected length " + std::to_string(expected) +
                           ", got " + std::to_string(got));
}

/// Euclidean norm over the entries flagged as interior (mask == 0).
inline double masked_norm(const Vec& x, const std::vector<std::uint8_t>& boundary)
{
    double s = 0.0;
    for (Index i = 0; i < x.size(); ++i)
        if (!boundary[static_cast<std::size_t>(i)]) s += x[i] * x[i];
    return std::sqrt(s);
}

}  // namespace nnfem
