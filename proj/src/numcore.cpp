#include "numcore.hpp"

#include <cmath>
#include <limits>

namespace dac {

namespace {

// Natural log built from frexp + atanh series. Pure arithmetic plus an
// exact sqrt keeps the Rng stream identical across libm implementations.
double portable_log(double x) {
    int e = 0;
    double m = std::frexp(x, &e);  // x = m * 2^e, m in [0.5, 1)
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    const double t = (m - 1.0) / (m + 1.0);
    const double t2 = t * t;
    // sum_{k>=0} t^(2k+1)/(2k+1), smallest terms first
    double p = t * t2;  // t^3 running power
    double series = 0.0;
    double terms[12];
    int n = 0;
    terms[n++] = t;
    for (int k = 1; k <= 11; ++k) {
        terms[n++] = p / static_cast<double>(2 * k + 1);
        p *= t2;
    }
    for (int i = n - 1; i >= 0; --i) series += terms[i];
    const double ln2 = 0.69314718055994530942;
    return 2.0 * series + static_cast<double>(e) * ln2;
}

}  // namespace

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    for (;;) {
        const double u = 2.0 * uniform() - 1.0;
        const double v = 2.0 * uniform() - 1.0;
        const double s = u * u + v * v;
        if (s >= 1.0 || s == 0.0) continue;
        const double f = std::sqrt(-2.0 * portable_log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    raise(ErrorKind::Config, "unknown activation '" + name + "'");
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows)
        raise(ErrorKind::Shape, "matmul: inner dimensions disagree (" +
                                    std::to_string(a.cols) + " vs " +
                                    std::to_string(b.rows) + ")");
    Mat out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k)
                acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Vec matvec(const Mat& m, const Vec& v) {
    if (m.cols != v.size())
        raise(ErrorKind::Shape, "matvec: matrix cols " + std::to_string(m.cols) +
                                    " vs vector dim " + std::to_string(v.size()));
    Vec out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        const double* r = m.row(i);
        for (std::size_t k = 0; k < m.cols; ++k) acc += r[k] * v[k];
        out[i] = acc;
    }
    return out;
}

Vec matvec_transposed(const Mat& m, const Vec& v) {
    if (m.rows != v.size())
        raise(ErrorKind::Shape, "matvec_transposed: matrix rows " +
                                    std::to_string(m.rows) + " vs vector dim " +
                                    std::to_string(v.size()));
    Vec out(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        const double vi = v[i];
        for (std::size_t k = 0; k < m.cols; ++k) out[k] += r[k] * vi;
    }
    return out;
}

void add_outer(Mat& m, const Vec& u, const Vec& v, double scale) {
    if (m.rows != u.size() || m.cols != v.size())
        raise(ErrorKind::Shape, "add_outer: shape mismatch");
    for (std::size_t i = 0; i < u.size(); ++i) {
        double* r = m.row(i);
        const double ui = scale * u[i];
        for (std::size_t j = 0; j < v.size(); ++j) r[j] += ui * v[j];
    }
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        raise(ErrorKind::Shape, "dot: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

Vec softmax(const Vec& v) {
    if (v.empty()) raise(ErrorKind::Shape, "softmax: empty input");
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Vec l2_normalize(const Vec& v) {
    if (v.empty()) raise(ErrorKind::Shape, "l2_normalize: empty input");
    const double n = norm2(v);
    if (n < 1e-12)
        raise(ErrorKind::Degenerate, "l2_normalize: vector norm below 1e-12");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double cosine(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        raise(ErrorKind::Shape, "cosine: dimension mismatch");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na < 1e-12 || nb < 1e-12)
        raise(ErrorKind::Degenerate, "cosine: zero-norm operand");
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

Vec apply_activation(const Vec& v, Activation kind) {
    Vec out(v.size());
    switch (kind) {
        case Activation::Identity:
            out = v;
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
            break;
    }
    return out;
}

Vec activation_grad(const Vec& pre, const Vec& post, Activation kind) {
    Vec g(pre.size(), 1.0);
    switch (kind) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < pre.size(); ++i) g[i] = pre[i] > 0.0 ? 1.0 : 0.0;
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < pre.size(); ++i) g[i] = 1.0 - post[i] * post[i];
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < pre.size(); ++i) g[i] = post[i] * (1.0 - post[i]);
            break;
    }
    return g;
}

Mat sample_normal(Rng& rng, std::size_t rows, std::size_t cols) {
    if (rows < 1 || cols < 1)
        raise(ErrorKind::Config, "sample_normal: rows and cols must be >= 1");
    Mat m(rows, cols);
    for (double& x : m.data) x = rng.normal();
    return m;
}

bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Mat& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace dac
