#include "klora/linalg.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include "klora/errors.hpp"

namespace klora {

namespace {

double sign_of(double a, double b) { return b >= 0.0 ? std::fabs(a) : -std::fabs(a); }

bool eig_less(const std::complex<double>& a, const std::complex<double>& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() < b.imag();
}

// Gram-Schmidt completion for left singular vectors paired with zero singular
// values: pick the unit basis vector with the largest residual against the
// columns already in u[0..filled).
void complete_orthonormal_column(Matrix& u, int target_col, int filled) {
    const int m = u.rows();
    std::vector<double> best;
    double best_norm = -1.0;
    for (int cand = 0; cand < m; ++cand) {
        std::vector<double> v(m, 0.0);
        v[cand] = 1.0;
        for (int c = 0; c < filled; ++c) {
            double proj = 0.0;
            for (int i = 0; i < m; ++i) proj += v[i] * u(i, c);
            for (int i = 0; i < m; ++i) v[i] -= proj * u(i, c);
        }
        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm > best_norm) {
            best_norm = nrm;
            best = std::move(v);
        }
        if (best_norm > 0.7) break; // good enough, no need to scan further
    }
    for (int i = 0; i < m; ++i) u(i, target_col) = best[i] / best_norm;
}

} // namespace

SvdFactors svd(const Matrix& a) {
    if (!a.all_finite()) throw invalid_input_error("svd: non-finite input");
    if (a.rows() == 0 || a.cols() == 0) throw invalid_input_error("svd: empty matrix");

    if (a.rows() < a.cols()) {
        SvdFactors t = svd(a.transposed());
        return SvdFactors{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }

    const int m = a.rows(), n = a.cols();
    Matrix w = a;
    Matrix v = Matrix::identity(n);

    // One-sided Jacobi: orthogonalize column pairs of w until the Gram matrix
    // is diagonal to working precision.
    const double tol = 1e-15;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if (app * aqq == 0.0) continue;
                if (std::fabs(apq) <= tol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = sign_of(1.0, tau) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += w(i, j) * w(i, j);
        sigma[j] = std::sqrt(s);
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return sigma[i] > sigma[j]; });

    Matrix u(m, n);
    Matrix vs(n, n);
    std::vector<double> ss(n);
    const double scale = *std::max_element(sigma.begin(), sigma.end());
    const double tiny = scale > 0.0 ? scale * 1e-300 : 0.0;
    int filled = 0;
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        ss[j] = sigma[src];
        for (int i = 0; i < n; ++i) vs(i, j) = v(i, src);
        if (sigma[src] > tiny && sigma[src] > 0.0) {
            for (int i = 0; i < m; ++i) u(i, j) = w(i, src) / sigma[src];
            ++filled;
        }
    }
    for (int j = filled; j < n; ++j) {
        ss[j] = 0.0;
        complete_orthonormal_column(u, j, j);
    }
    return SvdFactors{std::move(u), std::move(ss), std::move(vs)};
}

SymEig sym_eigh(const Matrix& s) {
    if (s.rows() != s.cols()) throw invalid_input_error("sym_eigh: matrix not square");
    if (!s.all_finite()) throw invalid_input_error("sym_eigh: non-finite input");
    const int n = s.rows();
    const double scale = std::max(1.0, s.max_abs());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (std::fabs(s(i, j) - s(j, i)) > 1e-10 * scale) {
                throw invalid_input_error("sym_eigh: input asymmetric beyond tolerance");
            }
        }
    }

    Matrix a = s;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double av = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = a(j, i) = av;
        }
    }
    Matrix v = Matrix::identity(n);

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (std::sqrt(off) <= 1e-15 * scale * n) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = sign_of(1.0, theta) / (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = c * t;
                for (int i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - sn * aiq;
                    a(i, q) = sn * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const double apj = a(p, j), aqj = a(q, j);
                    a(p, j) = c * apj - sn * aqj;
                    a(q, j) = sn * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - sn * viq;
                    v(i, q) = sn * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

    SymEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        out.eigenvalues[j] = a(order[j], order[j]);
        for (int i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
    }
    return out;
}

namespace {

// Householder reduction to upper Hessenberg form, accumulating the orthogonal
// transform so a = p * h * p^T.
void hessenberg(const Matrix& a, Matrix& h, Matrix& p) {
    const int n = a.rows();
    h = a;
    p = Matrix::identity(n);
    std::vector<double> u(n);
    for (int k = 0; k < n - 2; ++k) {
        double xnorm = 0.0;
        for (int i = k + 1; i < n; ++i) xnorm += h(i, k) * h(i, k);
        xnorm = std::sqrt(xnorm);
        if (xnorm == 0.0) continue;
        const double alpha = -sign_of(xnorm, h(k + 1, k));
        double vnorm2 = 0.0;
        for (int i = k + 1; i < n; ++i) {
            u[i] = h(i, k);
            if (i == k + 1) u[i] -= alpha;
            vnorm2 += u[i] * u[i];
        }
        if (vnorm2 == 0.0) continue;
        const double beta = 2.0 / vnorm2;
        // h <- (I - beta u u^T) h
        for (int j = k; j < n; ++j) {
            double dotv = 0.0;
            for (int i = k + 1; i < n; ++i) dotv += u[i] * h(i, j);
            dotv *= beta;
            for (int i = k + 1; i < n; ++i) h(i, j) -= dotv * u[i];
        }
        // h <- h (I - beta u u^T)
        for (int i = 0; i < n; ++i) {
            double dotv = 0.0;
            for (int j = k + 1; j < n; ++j) dotv += h(i, j) * u[j];
            dotv *= beta;
            for (int j = k + 1; j < n; ++j) h(i, j) -= dotv * u[j];
        }
        // p <- p (I - beta u u^T)
        for (int i = 0; i < n; ++i) {
            double dotv = 0.0;
            for (int j = k + 1; j < n; ++j) dotv += p(i, j) * u[j];
            dotv *= beta;
            for (int j = k + 1; j < n; ++j) p(i, j) -= dotv * u[j];
        }
        for (int i = k + 2; i < n; ++i) h(i, k) = 0.0;
    }
}

// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
// Classic hqr scheme with exceptional shifts every 10 stalled iterations.
std::vector<std::complex<double>> hqr_eigenvalues(Matrix h) {
    const int n = h.rows();
    std::vector<std::complex<double>> eig(n);
    const double eps = DBL_EPSILON;

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::fabs(h(i, j));
    if (anorm == 0.0) return eig; // zero matrix

    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l;
        do {
            for (l = nn; l >= 1; --l) {
                double s = std::fabs(h(l - 1, l - 1)) + std::fabs(h(l, l));
                if (s == 0.0) s = anorm;
                if (std::fabs(h(l, l - 1)) <= eps * s) {
                    h(l, l - 1) = 0.0;
                    break;
                }
            }
            if (l < 0) l = 0;
            double x = h(nn, nn);
            if (l == nn) {
                eig[nn--] = {x + t, 0.0};
            } else {
                double y = h(nn - 1, nn - 1);
                double w = h(nn, nn - 1) * h(nn - 1, nn);
                if (l == nn - 1) {
                    double p = 0.5 * (y - x);
                    double q = p * p + w;
                    double z = std::sqrt(std::fabs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_of(z, p);
                        eig[nn - 1] = eig[nn] = {x + z, 0.0};
                        if (z != 0.0) eig[nn] = {x - w / z, 0.0};
                    } else {
                        eig[nn - 1] = {x + p, -z};
                        eig[nn] = {x + p, z};
                    }
                    nn -= 2;
                } else {
                    if (its == 30) {
                        std::vector<double> partial;
                        for (int i = nn + 1; i < n; ++i) {
                            partial.push_back(eig[i].real());
                            partial.push_back(eig[i].imag());
                        }
                        throw numerical_error("eig_general: QR iteration did not converge", partial);
                    }
                    if (its == 10 || its == 20) {
                        t += x;
                        for (int i = 0; i <= nn; ++i) h(i, i) -= x;
                        double s = std::fabs(h(nn, nn - 1)) + std::fabs(h(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m;
                    double p = 0.0, q = 0.0, r = 0.0;
                    for (m = nn - 2; m >= l; --m) {
                        double z = h(m, m);
                        double rr = x - z;
                        double ss = y - z;
                        p = (rr * ss - w) / h(m + 1, m) + h(m, m + 1);
                        q = h(m + 1, m + 1) - z - rr - ss;
                        r = h(m + 2, m + 1);
                        double s = std::fabs(p) + std::fabs(q) + std::fabs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::fabs(h(m, m - 1)) * (std::fabs(q) + std::fabs(r));
                        const double v = std::fabs(p) * (std::fabs(h(m - 1, m - 1)) + std::fabs(z) +
                                                         std::fabs(h(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    if (m < l) m = l;
                    for (int i = m + 2; i <= nn; ++i) {
                        h(i, i - 2) = 0.0;
                        if (i != m + 2) h(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = h(k, k - 1);
                            q = h(k + 1, k - 1);
                            r = 0.0;
                            if (k != nn - 1) r = h(k + 2, k - 1);
                            x = std::fabs(p) + std::fabs(q) + std::fabs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
                        if (s == 0.0) continue;
                        if (k == m) {
                            if (l != m) h(k, k - 1) = -h(k, k - 1);
                        } else {
                            h(k, k - 1) = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        double z = r / s;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) {
                            double pp = h(k, j) + q * h(k + 1, j);
                            if (k != nn - 1) {
                                pp += r * h(k + 2, j);
                                h(k + 2, j) -= pp * z;
                            }
                            h(k + 1, j) -= pp * y;
                            h(k, j) -= pp * x;
                        }
                        const int mmin = nn < k + 3 ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) {
                            double pp = x * h(i, k) + y * h(i, k + 1);
                            if (k != nn - 1) {
                                pp += z * h(i, k + 2);
                                h(i, k + 2) -= pp * r;
                            }
                            h(i, k + 1) -= pp * q;
                            h(i, k) -= pp;
                        }
                    }
                }
            }
        } while (l < nn - 1 && nn >= 0);
    }
    return eig;
}

using cd = std::complex<double>;

// Two rounds of inverse iteration on the Hessenberg form with a slightly
// perturbed shift. Returns the (unnormalized) vector in Hessenberg
// coordinates.
std::vector<cd> inverse_iterate(const Matrix& h, cd shift, int variant) {
    const int n = h.rows();
    std::vector<std::vector<cd>> m(n, std::vector<cd>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m[i][j] = cd(h(i, j), 0.0) - (i == j ? shift : cd(0.0, 0.0));
    }
    std::vector<cd> b(n);
    for (int i = 0; i < n; ++i) {
        b[i] = cd(1.0 + 0.3 * std::sin(1.7 * (i + 1) * (variant + 1)), 0.0);
    }
    std::vector<cd> w = b;
    for (int pass = 0; pass < 2; ++pass) {
        w = complex_solve(m, w);
        double nrm = 0.0;
        for (const cd& x : w) nrm += std::norm(x);
        nrm = std::sqrt(nrm);
        if (nrm == 0.0 || !std::isfinite(nrm)) return b;
        for (cd& x : w) x /= nrm;
    }
    return w;
}

} // namespace

ComplexSpectrum eig_general(const Matrix& a) {
    if (a.rows() != a.cols()) throw invalid_input_error("eig_general: matrix not square");
    if (!a.all_finite()) throw invalid_input_error("eig_general: non-finite input");
    const int n = a.rows();
    ComplexSpectrum out;
    if (n == 0) return out;
    if (n == 1) {
        out.eigenvalues = {cd(a(0, 0), 0.0)};
        out.right_vectors = {{cd(1.0, 0.0)}};
        return out;
    }

    Matrix h, p;
    hessenberg(a, h, p);
    std::vector<cd> eig = hqr_eigenvalues(h);
    std::sort(eig.begin(), eig.end(), eig_less);

    const double scale = std::max(h.max_abs(), 1e-300);
    const double anorm = std::max(a.max_abs() * n, 1e-300);

    std::vector<std::vector<cd>> vecs(n);
    for (int j = 0; j < n; ++j) {
        // conjugate partner already computed: reuse it
        if (eig[j].imag() < 0.0 && j > 0 && eig[j - 1] == std::conj(eig[j]) && !vecs[j - 1].empty()) {
            vecs[j].resize(n);
            for (int i = 0; i < n; ++i) vecs[j][i] = std::conj(vecs[j - 1][i]);
            continue;
        }
        cd pert = eig[j].imag() == 0.0 ? cd(1e-12 * scale, 0.0) : cd(1e-12 * scale, 1e-12 * scale);
        std::vector<cd> best;
        double best_res = HUGE_VAL;
        for (int variant = 0; variant < 3; ++variant) {
            std::vector<cd> w = inverse_iterate(h, eig[j] + pert, variant);
            // map back to original coordinates
            std::vector<cd> v(n, cd(0.0, 0.0));
            for (int i = 0; i < n; ++i) {
                for (int kk = 0; kk < n; ++kk) v[i] += p(i, kk) * w[kk];
            }
            double nrm = 0.0;
            for (const cd& x : v) nrm += std::norm(x);
            nrm = std::sqrt(nrm);
            if (nrm == 0.0) continue;
            for (cd& x : v) x /= nrm;
            // residual ||A v - lambda v||
            double res = 0.0;
            for (int i = 0; i < n; ++i) {
                cd acc(0.0, 0.0);
                for (int kk = 0; kk < n; ++kk) acc += a(i, kk) * v[kk];
                acc -= eig[j] * v[i];
                res += std::norm(acc);
            }
            res = std::sqrt(res);
            if (res < best_res) {
                best_res = res;
                best = std::move(v);
            }
            if (best_res <= 1e-10 * anorm) break;
            pert *= 10.0; // singular system was too close; back off further
        }
        // phase convention: largest-magnitude component real and positive
        int imax = 0;
        double vmax = 0.0;
        for (int i = 0; i < n; ++i) {
            if (std::abs(best[i]) > vmax) {
                vmax = std::abs(best[i]);
                imax = i;
            }
        }
        if (vmax > 0.0) {
            const cd phase = std::conj(best[imax]) / vmax;
            for (cd& x : best) x *= phase;
        }
        vecs[j] = std::move(best);
    }

    out.eigenvalues = std::move(eig);
    out.right_vectors = std::move(vecs);
    return out;
}

Matrix inv_sqrt_psd(const Matrix& m, double eigen_floor) {
    SymEig e = sym_eigh(m);
    const int n = m.rows();
    double lmax = 0.0;
    for (double l : e.eigenvalues) lmax = std::max(lmax, std::fabs(l));
    for (double l : e.eigenvalues) {
        if (l < -1e-8 * std::max(lmax, 1e-300)) {
            throw invalid_input_error("inv_sqrt_psd: input has a significantly negative eigenvalue");
        }
    }
    Matrix r(n, n);
    for (int j = 0; j < n; ++j) {
        const double l = std::max(e.eigenvalues[j], eigen_floor);
        const double w = 1.0 / std::sqrt(l);
        for (int i = 0; i < n; ++i) {
            const double vij = e.eigenvectors(i, j) * w;
            for (int k = i; k < n; ++k) r(i, k) += vij * e.eigenvectors(k, j);
        }
    }
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < i; ++k) r(i, k) = r(k, i);
    return r;
}

double default_eigen_floor(const Matrix& m) {
    return 1e-10 * m.trace() / std::max(m.rows(), 1);
}

Matrix sqrt_psd(const Matrix& m) {
    SymEig e = sym_eigh(m);
    const int n = m.rows();
    Matrix r(n, n);
    for (int j = 0; j < n; ++j) {
        const double w = std::sqrt(std::max(e.eigenvalues[j], 0.0));
        if (w == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const double vij = e.eigenvectors(i, j) * w;
            for (int k = i; k < n; ++k) r(i, k) += vij * e.eigenvectors(k, j);
        }
    }
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < i; ++k) r(i, k) = r(k, i);
    return r;
}

Matrix pinv_psd(const Matrix& m, double rtol) {
    SymEig e = sym_eigh(m);
    const int n = m.rows();
    double lmax = 0.0;
    for (double l : e.eigenvalues) lmax = std::max(lmax, std::fabs(l));
    for (double l : e.eigenvalues) {
        if (l < -1e-8 * std::max(lmax, 1e-300)) {
            throw invalid_input_error("pinv_psd: input has a significantly negative eigenvalue");
        }
    }
    Matrix r(n, n);
    for (int j = 0; j < n; ++j) {
        const double l = e.eigenvalues[j];
        if (l < rtol * lmax || l <= 0.0) continue;
        const double w = 1.0 / l;
        for (int i = 0; i < n; ++i) {
            const double vij = e.eigenvectors(i, j) * w;
            for (int k = i; k < n; ++k) r(i, k) += vij * e.eigenvectors(k, j);
        }
    }
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < i; ++k) r(i, k) = r(k, i);
    return r;
}

TridiagEig tridiag_eigh(std::vector<double> d, std::vector<double> e, int n_vectors) {
    const int n = static_cast<int>(d.size());
    if (static_cast<int>(e.size()) != n - 1) {
        throw invalid_input_error("tridiag_eigh: off-diagonal length must be n-1");
    }
    const std::vector<double> d0 = d;
    const std::vector<double> e0 = e;

    // Implicit-shift QL (eigenvalues only).
    e.push_back(0.0);
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= DBL_EPSILON * dd) break;
            }
            if (m != l) {
                if (iter++ == 60) throw numerical_error("tridiag_eigh: QL iteration did not converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + sign_of(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }

    TridiagEig out;
    out.eigenvalues = d;
    std::sort(out.eigenvalues.begin(), out.eigenvalues.end());

    // Inverse iteration with a perturbed shift for the requested top
    // eigenvectors; re-orthogonalize within near-degenerate clusters.
    n_vectors = std::min(n_vectors, n);
    double scale = 0.0;
    for (double x : d0) scale = std::max(scale, std::fabs(x));
    for (double x : e0) scale = std::max(scale, std::fabs(x));
    scale = std::max(scale, 1e-300);

    for (int v = 0; v < n_vectors; ++v) {
        const double lambda = out.eigenvalues[n - 1 - v];
        const double shift = lambda + (1.0 + v % 3) * 1e-11 * scale;
        std::vector<double> x(n);
        for (int i = 0; i < n; ++i) x[i] = 1.0 + 0.3 * std::sin(0.61 * (i + 1) * (v + 1));
        for (int pass = 0; pass < 3; ++pass) {
            // tridiagonal solve (T - shift) y = x, partial pivoting between
            // adjacent rows
            std::vector<double> a(n), b(n), c(n, 0.0), cc(n, 0.0);
            for (int i = 0; i < n; ++i) a[i] = d0[i] - shift;
            std::vector<double> low(n, 0.0), up(n, 0.0);
            for (int i = 0; i + 1 < n; ++i) {
                low[i] = e0[i];
                up[i] = e0[i];
            }
            std::vector<double> diag = a, sup1 = up, sup2(n, 0.0), rhs = x;
            for (int i = 0; i + 1 < n; ++i) {
                if (std::fabs(low[i]) > std::fabs(diag[i])) {
                    std::swap(diag[i], low[i]);
                    const double t1 = sup1[i];
                    sup1[i] = diag[i + 1];
                    diag[i + 1] = t1;
                    sup2[i] = sup1[i + 1];
                    sup1[i + 1] = 0.0;
                    std::swap(rhs[i], rhs[i + 1]);
                }
                if (diag[i] == 0.0) diag[i] = 1e-30 * scale;
                const double f = low[i] / diag[i];
                diag[i + 1] -= f * sup1[i];
                sup1[i + 1] -= f * sup2[i];
                rhs[i + 1] -= f * rhs[i];
            }
            if (diag[n - 1] == 0.0) diag[n - 1] = 1e-30 * scale;
            std::vector<double> y(n);
            y[n - 1] = rhs[n - 1] / diag[n - 1];
            if (n >= 2) y[n - 2] = (rhs[n - 2] - sup1[n - 2] * y[n - 1]) / diag[n - 2];
            for (int i = n - 3; i >= 0; --i) {
                y[i] = (rhs[i] - sup1[i] * y[i + 1] - sup2[i] * y[i + 2]) / diag[i];
            }
            x = std::move(y);
            // orthogonalize against earlier vectors in the same cluster
            for (int u = 0; u < v; ++u) {
                if (std::fabs(out.eigenvalues[n - 1 - u] - lambda) < 1e-6 * scale) {
                    double proj = 0.0;
                    for (int i = 0; i < n; ++i) proj += x[i] * out.top_vectors[u][i];
                    for (int i = 0; i < n; ++i) x[i] -= proj * out.top_vectors[u][i];
                }
            }
            double nrm = 0.0;
            for (double xv : x) nrm += xv * xv;
            nrm = std::sqrt(nrm);
            if (nrm == 0.0 || !std::isfinite(nrm)) break;
            for (double& xv : x) xv /= nrm;
        }
        out.top_vectors.push_back(std::move(x));
    }
    return out;
}

std::vector<cd> complex_solve(std::vector<std::vector<cd>> a, std::vector<cd> b) {
    const int n = static_cast<int>(b.size());
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(a[k][k]);
        for (int i = k + 1; i < n; ++i) {
            if (std::abs(a[i][k]) > best) {
                best = std::abs(a[i][k]);
                piv = i;
            }
        }
        if (best == 0.0) {
            a[k][k] = cd(1e-300, 0.0);
        } else if (piv != k) {
            std::swap(a[piv], a[k]);
            std::swap(b[piv], b[k]);
        }
        for (int i = k + 1; i < n; ++i) {
            const cd f = a[i][k] / a[k][k];
            if (f == cd(0.0, 0.0)) continue;
            for (int j = k + 1; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<cd> x(n);
    for (int i = n - 1; i >= 0; --i) {
        cd s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    return x;
}

Matrix matrix_power(const Matrix& k, int t) {
    if (k.rows() != k.cols()) throw invalid_input_error("matrix_power: matrix not square");
    if (t < 0) throw invalid_input_error("matrix_power: negative power");
    const int n = k.rows();
    if (t == 0) return Matrix::identity(n);
    if (t == 1) return k;

    auto iterated = [&]() {
        Matrix r = k;
        for (int i = 1; i < t; ++i) r = matmul(r, k);
        return r;
    };

    ComplexSpectrum spec;
    try {
        spec = eig_general(k);
    } catch (const numerical_error&) {
        return iterated();
    }
    std::vector<std::vector<cd>> w(n, std::vector<cd>(n));
    double wnorm = 0.0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            w[i][j] = spec.right_vectors[j][i];
            wnorm += std::norm(w[i][j]);
        }
    }
    wnorm = std::sqrt(wnorm);
    // winv columns: solve W x = e_j
    std::vector<std::vector<cd>> winv(n, std::vector<cd>(n));
    double winvnorm = 0.0;
    for (int j = 0; j < n; ++j) {
        std::vector<cd> e(n, cd(0.0, 0.0));
        e[j] = cd(1.0, 0.0);
        std::vector<cd> x = complex_solve(w, e);
        for (int i = 0; i < n; ++i) {
            winv[i][j] = x[i];
            winvnorm += std::norm(x[i]);
        }
    }
    winvnorm = std::sqrt(winvnorm);
    if (!std::isfinite(winvnorm) || wnorm * winvnorm >= 1e8) return iterated();

    Matrix r(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cd acc(0.0, 0.0);
            for (int m = 0; m < n; ++m) {
                acc += w[i][m] * std::pow(spec.eigenvalues[m], t) * winv[m][j];
            }
            r(i, j) = acc.real();
        }
    }
    return r;
}

} // namespace klora
