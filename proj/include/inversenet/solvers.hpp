#ifndef INVERSENET_SOLVERS_HPP
#define INVERSENET_SOLVERS_HPP

#include <functional>

#include "inversenet/operators.hpp"

// Non-learned baselines: Wiener deconvolution for periodic blur and the ADMM
// splitting solver with variable z (data term), x (prior term) and scaled
// dual u. Update order is z (using the current x), then x (using the new z),
// then u.

namespace inversenet {

struct WienerConfig {
    double k_reg = 0.0;  // noise-to-signal regularizer added to |H|^2
};

// X = IFFT( conj(L) .* FFT(y) / (|L|^2 + k_reg) ) per channel.
inline Tensor wiener_deconvolve(const Tensor& y, const Kernel2D& k, const WienerConfig& cfg) {
    if (cfg.k_reg < 0.0) throw Error("wiener_deconvolve: k_reg must be nonnegative");
    const Shape s = y.shape();
    const auto lambda = bccb_transfer_function(k, s.h, s.w);
    if (k.channels != 1 && k.channels != s.c)
        throw Error("wiener_deconvolve: kernel channels mismatch image channels");

    if (cfg.k_reg == 0.0) {
        for (const auto& lam : lambda)
            for (const auto& v : lam)
                if (std::norm(v) <= 1e-20)
                    throw Error("wiener_deconvolve: singular transfer function with k_reg = 0");
    }

    Tensor x(s);
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(s.h * s.w));
    double max_imag = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const auto& lam = lambda[static_cast<std::size_t>(k.channel_index(c))];
            for (std::int64_t p = 0; p < s.h * s.w; ++p)
                buf[static_cast<std::size_t>(p)] = y[(n * s.h * s.w + p) * s.c + c];
            fft2(s.h, s.w, buf, false);
            for (std::int64_t p = 0; p < s.h * s.w; ++p) {
                const std::complex<double> L = lam[static_cast<std::size_t>(p)];
                buf[static_cast<std::size_t>(p)] =
                    std::conj(L) * buf[static_cast<std::size_t>(p)] /
                    (std::norm(L) + cfg.k_reg);
            }
            fft2(s.h, s.w, buf, true);
            for (std::int64_t p = 0; p < s.h * s.w; ++p) {
                const auto v = buf[static_cast<std::size_t>(p)];
                max_imag = std::max(max_imag, std::abs(v.imag()));
                x[(n * s.h * s.w + p) * s.c + c] = v.real();
            }
        }
    }
    if (max_imag > 1e-9)
        throw Error("wiener_deconvolve: imaginary residue " + std::to_string(max_imag));
    return x;
}

// Elementwise sign(v) * max(|v| - tau, 0).
inline Tensor soft_threshold(const Tensor& v, double tau) {
    if (tau < 0.0) throw Error("soft_threshold: tau must be nonnegative");
    Tensor out(v.shape());
    for (std::int64_t i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]) - tau;
        out[i] = a > 0.0 ? (v[i] > 0.0 ? a : -a) : 0.0;
    }
    return out;
}

enum class ProxKind { Identity, L1 };
enum class ZSolver { FourierClosedForm, ConjugateGradient };

struct ADMMConfig {
    double beta = 1.0;    // penalty, > 0
    double lambda = 0.0;  // regularization weight, >= 0
    ProxKind prox = ProxKind::Identity;
    ZSolver z_solver = ZSolver::FourierClosedForm;
    int cg_max_iter = 200;
    double cg_tol = 1e-10;
    int max_iter = 100;
    double tol_primal = 1e-8;  // on ||x - z||_2 / sqrt(n)

    void validate() const {
        if (!(beta > 0.0)) throw Error("ADMMConfig: beta must be > 0");
        if (lambda < 0.0) throw Error("ADMMConfig: lambda must be >= 0");
        if (!(tol_primal > 0.0) || !(cg_tol > 0.0))
            throw Error("ADMMConfig: tolerances must be > 0");
        if (max_iter < 1 || cg_max_iter < 1) throw Error("ADMMConfig: iteration budgets must be >= 1");
    }
};

struct ZUpdateInfo {
    int cg_iterations = 0;
    double cg_residual = 0.0;  // relative; 0 for the Fourier path
};

// Conjugate gradient on (A^T A + beta I) z = rhs with z0 = 0.
inline Tensor solve_normal_cg(const LinearOperator& A, const Tensor& rhs, double beta,
                              int max_iter, double tol, ZUpdateInfo* info) {
    const auto op = [&](const Tensor& v) {
        Tensor out = A.adjoint(A.forward(v));
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += beta * v[i];
        return out;
    };
    Tensor z(rhs.shape());
    Tensor r = rhs;
    Tensor p = r;
    const double rhs_norm = rhs.norm2();
    if (rhs_norm == 0.0) {
        if (info) *info = {0, 0.0};
        return z;
    }
    double rr = r.dot(r);
    int it = 0;
    for (; it < max_iter; ++it) {
        if (std::sqrt(rr) / rhs_norm <= tol) break;
        const Tensor Ap = op(p);
        const double alpha = rr / p.dot(Ap);
        for (std::int64_t i = 0; i < z.size(); ++i) z[i] += alpha * p[i];
        for (std::int64_t i = 0; i < r.size(); ++i) r[i] -= alpha * Ap[i];
        const double rr_new = r.dot(r);
        const double gamma = rr_new / rr;
        for (std::int64_t i = 0; i < p.size(); ++i) p[i] = r[i] + gamma * p[i];
        rr = rr_new;
    }
    if (info) *info = {it, std::sqrt(rr) / rhs_norm};
    return z;
}

// z = (A^T A + beta I)^{-1} (A^T y + beta (x + u / (2 beta))).
inline Tensor admm_z_update(const Tensor& y, const Tensor& x, const Tensor& u,
                            const LinearOperator& A, const ADMMConfig& cfg,
                            ZUpdateInfo* info = nullptr) {
    cfg.validate();
    y.ensure_shape(A.output_shape(), "admm_z_update: y");
    x.ensure_shape(A.input_shape(), "admm_z_update: x");
    u.ensure_shape(A.input_shape(), "admm_z_update: u");

    Tensor rhs = A.adjoint(y);
    for (std::int64_t i = 0; i < rhs.size(); ++i)
        rhs[i] += cfg.beta * (x[i] + u[i] / (2.0 * cfg.beta));

    if (cfg.z_solver == ZSolver::FourierClosedForm) {
        const auto* blur = dynamic_cast<const MotionBlurPeriodic*>(&A);
        if (!blur)
            throw Error("admm_z_update: fourier_closed_form requires a BCCB (periodic blur) operator");
        const Shape s = A.input_shape();
        const auto lambda = blur->transfer();
        Tensor z(s);
        std::vector<std::complex<double>> buf(static_cast<std::size_t>(s.h * s.w));
        for (std::int64_t n = 0; n < s.n; ++n) {
            for (std::int64_t c = 0; c < s.c; ++c) {
                const auto& lam =
                    lambda[static_cast<std::size_t>(blur->kernel().channel_index(c))];
                for (std::int64_t p = 0; p < s.h * s.w; ++p)
                    buf[static_cast<std::size_t>(p)] = rhs[(n * s.h * s.w + p) * s.c + c];
                fft2(s.h, s.w, buf, false);
                for (std::int64_t p = 0; p < s.h * s.w; ++p)
                    buf[static_cast<std::size_t>(p)] /=
                        (std::norm(lam[static_cast<std::size_t>(p)]) + cfg.beta);
                fft2(s.h, s.w, buf, true);
                for (std::int64_t p = 0; p < s.h * s.w; ++p)
                    z[(n * s.h * s.w + p) * s.c + c] = buf[static_cast<std::size_t>(p)].real();
            }
        }
        if (info) *info = {0, 0.0};
        return z;
    }
    return solve_normal_cg(A, rhs, cfg.beta, cfg.cg_max_iter, cfg.cg_tol, info);
}

// x = prox_{lambda R / (2 beta)}(z - u / (2 beta)).
inline Tensor admm_x_update(const Tensor& z, const Tensor& u, const ADMMConfig& cfg) {
    cfg.validate();
    z.ensure_shape(u.shape(), "admm_x_update");
    Tensor v(z.shape());
    for (std::int64_t i = 0; i < z.size(); ++i) v[i] = z[i] - u[i] / (2.0 * cfg.beta);
    if (cfg.prox == ProxKind::L1 && cfg.lambda > 0.0)
        return soft_threshold(v, cfg.lambda / (2.0 * cfg.beta));
    return v;
}

// u' = u + 2 beta (x - z).
inline Tensor admm_u_update(const Tensor& u, const Tensor& x, const Tensor& z, double beta) {
    x.ensure_shape(u.shape(), "admm_u_update: x");
    z.ensure_shape(u.shape(), "admm_u_update: z");
    Tensor out(u.shape());
    for (std::int64_t i = 0; i < u.size(); ++i) out[i] = u[i] + 2.0 * beta * (x[i] - z[i]);
    return out;
}

struct ADMMTraceRow {
    int iteration = 0;
    double primal_residual = 0.0;  // ||x - z||_2 / sqrt(n)
    double objective = 0.0;        // ||y - A z||^2 + lambda R(x)
};

struct ADMMResult {
    Tensor x;
    std::vector<ADMMTraceRow> trace;
    bool converged = false;
};

class ADMMDivergence : public Error {
public:
    ADMMDivergence(const std::string& what, std::vector<ADMMTraceRow> trace)
        : Error(what), trace(std::move(trace)) {}
    std::vector<ADMMTraceRow> trace;
};

// Initialization x0 = z0 = A^T y, u0 = 0; iterates z - x - u.
inline ADMMResult admm_solve(const Tensor& y, const LinearOperator& A, const ADMMConfig& cfg) {
    cfg.validate();
    y.ensure_shape(A.output_shape(), "admm_solve: y");

    Tensor x = A.adjoint(y);
    Tensor z = x;
    Tensor u(A.input_shape());
    const double sqrt_n = std::sqrt(static_cast<double>(x.size()));

    const auto gap = [&](const Tensor& a, const Tensor& b) {
        double s = 0.0;
        for (std::int64_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            s += d * d;
        }
        return std::sqrt(s) / sqrt_n;
    };

    ADMMResult result;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        z = admm_z_update(y, x, u, A, cfg);

        // ||x - z||/sqrt(n) against both the x the z-update consumed and the
        // freshly prox-ed x. Either gap alone degenerates to zero away from
        // the fixed point (the post-update gap is -u/(2 beta) for the
        // identity prox; the pre-update gap vanishes at the first iterate
        // when A = I because of the A^T y initialization).
        const double gap_pre = gap(x, z);
        x = admm_x_update(z, u, cfg);
        u = admm_u_update(u, x, z, cfg.beta);
        const double residual = std::max(gap_pre, gap(x, z));

        const Tensor az = A.forward(z);
        double objective = 0.0;
        for (std::int64_t i = 0; i < az.size(); ++i) {
            const double d = y[i] - az[i];
            objective += d * d;
        }
        if (cfg.prox == ProxKind::L1 && cfg.lambda > 0.0) {
            double l1 = 0.0;
            for (std::int64_t i = 0; i < x.size(); ++i) l1 += std::abs(x[i]);
            objective += cfg.lambda * l1;
        }
        result.trace.push_back({it, residual, objective});

        if (!std::isfinite(residual) || residual > 1e6)
            throw ADMMDivergence("admm_solve: diverged at iteration " + std::to_string(it) +
                                     " (primal residual " + std::to_string(residual) + ")",
                                 result.trace);
        if (residual <= cfg.tol_primal) {
            result.converged = true;
            break;
        }
    }
    result.x = std::move(x);
    return result;
}

}  // namespace inversenet

#endif  // INVERSENET_SOLVERS_HPP
