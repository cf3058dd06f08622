#ifndef DAC_NUMCORE_HPP
#define DAC_NUMCORE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace dac {

// All in-memory math is double precision; feature files hold f32 and are
// widened on load.
using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }

    Vec row_vec(std::size_t r) const {
        return Vec(row(r), row(r) + cols);
    }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

// Counter-style deterministic generator (splitmix64 stream). The normal
// sampler uses the Marsaglia polar transform on top of a software natural
// log, so the stream is bit-identical across platforms and libms. The
// stream is frozen by golden tests; changing it invalidates stored seeds.
struct Rng {
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal draw.
    double normal();

    // Derive an independent stream for a named sub-task.
    Rng fork(std::uint64_t salt) {
        Rng child(state_ ^ (0xA5A5A5A5DEADBEEFULL + salt * 0x9E3779B97F4A7C15ULL));
        child.next_u64();
        return child;
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

enum class Activation { Identity, Relu, Tanh, Sigmoid };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

// o = a * b, plain triple loop with fixed accumulation order.
Mat matmul(const Mat& a, const Mat& b);

// y = m * v.
Vec matvec(const Mat& m, const Vec& v);

// y = m^T * v.
Vec matvec_transposed(const Mat& m, const Vec& v);

// m += scale * u * v^T.
void add_outer(Mat& m, const Vec& u, const Vec& v, double scale);

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& v);

// Max-subtraction stabilized softmax; entries sum to 1.
Vec softmax(const Vec& v);

// v / ||v||; raises Degenerate below 1e-12 norm.
Vec l2_normalize(const Vec& v);

double cosine(const Vec& a, const Vec& b);

Vec apply_activation(const Vec& v, Activation kind);
// Derivative of the activation expressed through pre- and post-activation values.
Vec activation_grad(const Vec& pre, const Vec& post, Activation kind);

// rows x cols matrix of i.i.d. N(0,1) draws.
Mat sample_normal(Rng& rng, std::size_t rows, std::size_t cols);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace dac

#endif  // DAC_NUMCORE_HPP
