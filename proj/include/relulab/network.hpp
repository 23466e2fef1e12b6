#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace relulab {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Layer widths (l_0, ..., l_L). Flat parameter layout: for each layer k the
// l_k x l_{k-1} weight matrix row by row, then the l_k biases.
class Architecture {
public:
    Architecture() = default;
    explicit Architecture(std::vector<std::size_t> dims);

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t depth() const { return dims_.size() - 1; }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    std::size_t width(std::size_t k) const { return dims_.at(k); }
    std::size_t param_count() const { return offsets_.back(); }

    // 0-based start of layer k's block (k = 1..L); block_end(k) = block_begin(k+1).
    std::size_t block_begin(std::size_t k) const { return offsets_.at(k - 1); }
    std::size_t block_end(std::size_t k) const { return offsets_.at(k); }

    // 1-based flat indices, as written to disk.
    std::size_t weight_index(std::size_t k, std::size_t i, std::size_t j) const;
    std::size_t bias_index(std::size_t k, std::size_t i) const;

    // 0-based positions for internal use, unchecked.
    std::size_t wpos(std::size_t k, std::size_t i, std::size_t j) const {
        return offsets_[k - 1] + (i - 1) * dims_[k - 1] + (j - 1);
    }
    std::size_t bpos(std::size_t k, std::size_t i) const {
        return offsets_[k - 1] + dims_[k] * dims_[k - 1] + (i - 1);
    }

    bool operator==(const Architecture& o) const { return dims_ == o.dims_; }
    std::string to_string() const;

private:
    std::vector<std::size_t> dims_{1, 1};
    std::vector<std::size_t> offsets_{0, 2};
};

std::size_t param_count(const Architecture& arch);

enum class Bridge { cubic, quintic };

// The C^1 family A_r: 0 below A/r, identity above B/r, a polynomial bridge in
// between. r = inf is plain ReLU.
struct Activation {
    double script_a = 1.0;
    double script_b = 2.0;
    double r = kInf;
    Bridge bridge = Bridge::cubic;

    Activation() = default;
    Activation(double r_, Bridge b = Bridge::cubic, double a = 1.0, double bb = 2.0);

    bool is_relu() const { return r == kInf; }
    double lower() const { return script_a / r; }
    double upper() const { return script_b / r; }

    double operator()(double x) const { return eval(x); }
    template <class T>
    T eval(T x) const;
    // r = inf uses the indicator of (0, inf), so the derivative at 0 is 0.
    double deriv(double x) const;

    // Activation applied to the outputs of hidden layer v: A_{r^{1/v}}.
    Activation for_layer(std::size_t v) const;
};

template <class T>
T Activation::eval(T x) const {
    if (is_relu()) return x > T(0) ? x : T(0);
    const T lo = T(script_a) / T(r), hi = T(script_b) / T(r);
    if (x <= lo) return T(0);
    if (x >= hi) return x;
    const T h = hi - lo;
    const T s = (x - lo) / h;
    const T s2 = s * s, s3 = s2 * s;
    if (bridge == Bridge::cubic) return hi * (3 * s2 - 2 * s3) + h * (s3 - s2);
    const T s4 = s3 * s, s5 = s4 * s;
    return hi * (10 * s3 - 15 * s4 + 6 * s5) + h * (-4 * s3 + 7 * s4 - 3 * s5);
}

struct Dataset {
    std::vector<Vec> x;
    Vec y;
    double a = 0.0;
    double b = 1.0;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }
    bool distinct_inputs() const;
    bool inside_box() const;
    Dataset subset(std::span<const std::size_t> idx) const;
};

struct ForwardTrace {
    std::vector<Vec> pre;   // pre[k] = N^k for k = 1..L (pre[0] is the input)
    std::vector<Vec> post;  // post[k] = activated layer k (post[0] = input, post[L] = pre[L])
    const Vec& output() const { return pre.back(); }
};

ForwardTrace forward(const Architecture& arch, std::span<const double> theta,
                     const Activation& act, std::span<const double> x);

// Scalar output of a network with l_L = 1.
double realize(const Architecture& arch, std::span<const double> theta,
               const Activation& act, std::span<const double> x);

Vec outputs(const Architecture& arch, std::span<const double> theta,
            const Activation& act, const Dataset& data);

double empirical_risk(const Architecture& arch, std::span<const double> theta,
                      const Activation& act, const Dataset& data);

double mse(std::span<const double> out, std::span<const double> y);

}  // namespace relulab
