#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Sparse>

#include "json.hpp"

namespace rwre {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class SolverMethod { Auto, Direct, Iterative };

struct SolverOptions {
    double tol = 1e-10;  // relative residual
    int max_iterations = 20000;
    SolverMethod method = SolverMethod::Auto;
    /// Largest system handed to the direct solver under Auto; 0 picks a
    /// default from the lattice dimension (fill-in grows much faster in 3D).
    std::size_t direct_limit = 0;
    int lattice_dim = 2;

    static SolverOptions from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SolveDiagnostics {
    std::string method;
    std::size_t unknowns = 0;
    int iterations = 0;
    double residual = 0.0;

    nlohmann::json to_json() const;
};

class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

std::size_t default_direct_limit(int lattice_dim);

/// Factorization of one matrix, reusable for several right-hand sides.
class SparseSolver {
public:
    SparseSolver(const SpMat& A, const SolverOptions& opts);
    ~SparseSolver();
    SparseSolver(const SparseSolver&) = delete;
    SparseSolver& operator=(const SparseSolver&) = delete;

    /// Solves A x = b; throws SolveError when the relative residual stays
    /// above the tolerance.
    Vec solve(const Vec& b, SolveDiagnostics* diag = nullptr) const;
    bool direct() const { return direct_; }

private:
    struct Impl;
    const SpMat& A_;
    SolverOptions opts_;
    bool direct_ = true;
    std::unique_ptr<Impl> impl_;
};

Vec solve_sparse(const SpMat& A, const Vec& b, const SolverOptions& opts, SolveDiagnostics* diag = nullptr);

}  // namespace rwre
