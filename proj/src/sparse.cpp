#include "rwre/sparse.hpp"

#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/UmfPackSupport>

namespace rwre {

namespace {

const char* method_name(SolverMethod m) {
    switch (m) {
        case SolverMethod::Auto: return "auto";
        case SolverMethod::Direct: return "direct";
        case SolverMethod::Iterative: return "iterative";
    }
    return "auto";
}

// Past this size the incomplete factorization costs more than it saves.
constexpr std::size_t kIlutLimit = 600000;

}  // namespace

SolverOptions SolverOptions::from_json(const nlohmann::json& j) {
    SolverOptions o;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k == "tol") {
            o.tol = it->get<double>();
        } else if (k == "max_iterations") {
            o.max_iterations = it->get<int>();
        } else if (k == "direct_limit") {
            o.direct_limit = it->get<std::size_t>();
        } else if (k == "method") {
            const auto s = it->get<std::string>();
            if (s == "auto") o.method = SolverMethod::Auto;
            else if (s == "direct") o.method = SolverMethod::Direct;
            else if (s == "iterative") o.method = SolverMethod::Iterative;
            else throw std::invalid_argument("unknown solver method '" + s + "'");
        } else {
            throw std::invalid_argument("unknown solver option '" + k + "'");
        }
    }
    if (!(o.tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
    return o;
}

nlohmann::json SolverOptions::to_json() const {
    return {{"tol", tol}, {"max_iterations", max_iterations}, {"direct_limit", direct_limit}, {"method", method_name(method)}};
}

nlohmann::json SolveDiagnostics::to_json() const {
    return {{"method", method}, {"unknowns", unknowns}, {"iterations", iterations}, {"residual", residual}};
}

std::size_t default_direct_limit(int lattice_dim) { return lattice_dim <= 2 ? 2000000 : 30000; }

struct SparseSolver::Impl {
    using ColMat = Eigen::SparseMatrix<double>;
    std::unique_ptr<Eigen::UmfPackLU<ColMat>> lu;
    ColMat colmajor;
    std::unique_ptr<Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>>> ilut;
    // built on first use when ILUT is skipped or breaks down
    mutable std::unique_ptr<Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>>> jacobi;
};

SparseSolver::SparseSolver(const SpMat& A, const SolverOptions& opts) : A_(A), opts_(opts), impl_(std::make_unique<Impl>()) {
    const std::size_t n = static_cast<std::size_t>(A.rows());
    const std::size_t limit = opts.direct_limit ? opts.direct_limit : default_direct_limit(opts.lattice_dim);
    direct_ = opts.method == SolverMethod::Direct || (opts.method == SolverMethod::Auto && n <= limit);
    if (direct_) {
        impl_->colmajor = A;
        impl_->lu = std::make_unique<Eigen::UmfPackLU<Impl::ColMat>>();
        impl_->lu->compute(impl_->colmajor);
        if (impl_->lu->info() != Eigen::Success) throw SolveError("sparse LU factorization failed", -1.0);
    } else if (n <= kIlutLimit) {
        impl_->ilut = std::make_unique<Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>>>();
        impl_->ilut->preconditioner().setFillfactor(1);
        impl_->ilut->preconditioner().setDroptol(1e-4);
        impl_->ilut->setTolerance(opts.tol * 0.5);
        impl_->ilut->setMaxIterations(opts.max_iterations);
        impl_->ilut->compute(A);
    }
}

SparseSolver::~SparseSolver() = default;

Vec SparseSolver::solve(const Vec& b, SolveDiagnostics* diag) const {
    Vec x;
    int iterations = 0;
    std::string method;
    const double bn = b.norm();
    auto relres = [&](const Vec& v) { return bn > 0.0 ? (A_ * v - b).norm() / bn : (A_ * v).norm(); };
    double res = 0.0;
    if (direct_) {
        x = impl_->lu->solve(b);
        method = "umfpack-lu";
        res = relres(x);
        // one step of iterative refinement rescues the occasional LU that
        // lands just above tolerance
        if (res > opts_.tol) {
            const Vec r = b - A_ * x;
            x += impl_->lu->solve(r);
            res = relres(x);
        }
    } else {
        if (impl_->ilut) {
            x = impl_->ilut->solve(b);
            iterations = static_cast<int>(impl_->ilut->iterations());
            method = "bicgstab-ilut";
            res = relres(x);
        }
        // BiCGSTAB can break down (rho = 0) on point sources; restart with
        // the Jacobi preconditioner, which follows a different Krylov path
        if (!impl_->ilut || !(res <= opts_.tol) || !x.allFinite()) {
            if (!impl_->jacobi) {
                impl_->jacobi = std::make_unique<Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>>>();
                impl_->jacobi->setTolerance(opts_.tol * 0.5);
                impl_->jacobi->setMaxIterations(opts_.max_iterations);
                impl_->jacobi->compute(A_);
            }
            x = impl_->jacobi->solve(b);
            iterations += static_cast<int>(impl_->jacobi->iterations());
            method = method.empty() ? "bicgstab-jacobi" : method + "+bicgstab-jacobi";
            res = relres(x);
        }
    }
    if (diag) {
        diag->method = method;
        diag->unknowns = static_cast<std::size_t>(A_.rows());
        diag->iterations = iterations;
        diag->residual = res;
    }
    if (!(res <= opts_.tol) || !x.allFinite()) {
        std::ostringstream os;
        os << method << " did not reach relative residual " << opts_.tol << " (achieved " << res << " after "
           << iterations << " iterations, " << A_.rows() << " unknowns)";
        throw SolveError(os.str(), res);
    }
    return x;
}

Vec solve_sparse(const SpMat& A, const Vec& b, const SolverOptions& opts, SolveDiagnostics* diag) {
    SparseSolver s(A, opts);
    return s.solve(b, diag);
}

}  // namespace rwre
