#include "relulab/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace relulab {

Architecture::Architecture(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2)
        throw std::invalid_argument("architecture needs at least an input and an output layer");
    for (std::size_t w : dims_)
        if (w == 0) throw std::invalid_argument("layer widths must be positive");
    offsets_.assign(1, 0);
    for (std::size_t k = 1; k < dims_.size(); ++k)
        offsets_.push_back(offsets_.back() + dims_[k] * (dims_[k - 1] + 1));
}

std::size_t Architecture::weight_index(std::size_t k, std::size_t i, std::size_t j) const {
    if (k < 1 || k > depth() || i < 1 || i > dims_[k] || j < 1 || j > dims_[k - 1])
        throw std::out_of_range("weight index out of range");
    return wpos(k, i, j) + 1;
}

std::size_t Architecture::bias_index(std::size_t k, std::size_t i) const {
    if (k < 1 || k > depth() || i < 1 || i > dims_[k])
        throw std::out_of_range("bias index out of range");
    return bpos(k, i) + 1;
}

std::string Architecture::to_string() const {
    std::string s = "(";
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (k) s += ",";
        s += std::to_string(dims_[k]);
    }
    return s + ")";
}

std::size_t param_count(const Architecture& arch) { return arch.param_count(); }

Activation::Activation(double r_, Bridge b, double a, double bb)
    : script_a(a), script_b(bb), r(r_), bridge(b) {
    if (!(r >= 1.0)) throw std::invalid_argument("r must lie in [1, inf]");
    if (!(script_a > 0.0) || !(script_b > script_a))
        throw std::invalid_argument("need 0 < script_a < script_b");
}

double Activation::deriv(double x) const {
    if (is_relu()) return x > 0.0 ? 1.0 : 0.0;
    const double lo = lower(), hi = upper();
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double h = hi - lo;
    const double s = (x - lo) / h;
    const double s2 = s * s, s3 = s2 * s;
    if (bridge == Bridge::cubic)
        return (hi * (6.0 * s - 6.0 * s2) + h * (3.0 * s2 - 2.0 * s)) / h;
    const double s4 = s3 * s;
    return (hi * (30.0 * s2 - 60.0 * s3 + 30.0 * s4) + h * (-12.0 * s2 + 28.0 * s3 - 15.0 * s4)) / h;
}

Activation Activation::for_layer(std::size_t v) const {
    Activation out = *this;
    if (!is_relu() && v > 1) out.r = std::pow(r, 1.0 / static_cast<double>(v));
    return out;
}

bool Dataset::distinct_inputs() const {
    std::set<Vec> seen(x.begin(), x.end());
    return seen.size() == x.size();
}

bool Dataset::inside_box() const {
    for (const auto& p : x)
        for (double v : p)
            if (!(v >= a && v <= b)) return false;
    return true;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.a = a;
    out.b = b;
    for (std::size_t m : idx) {
        out.x.push_back(x.at(m));
        out.y.push_back(y.at(m));
    }
    return out;
}

ForwardTrace forward(const Architecture& arch, std::span<const double> theta,
                     const Activation& act, std::span<const double> x) {
    if (x.size() != arch.input_dim()) throw std::invalid_argument("input has wrong dimension");
    if (theta.size() != arch.param_count()) throw std::invalid_argument("parameter vector has wrong length");
    const std::size_t L = arch.depth();
    ForwardTrace tr;
    tr.pre.resize(L + 1);
    tr.post.resize(L + 1);
    tr.pre[0].assign(x.begin(), x.end());
    tr.post[0] = tr.pre[0];
    for (std::size_t k = 1; k <= L; ++k) {
        const std::size_t rows = arch.width(k), cols = arch.width(k - 1);
        const Vec& in = tr.post[k - 1];
        Vec& z = tr.pre[k];
        z.resize(rows);
        for (std::size_t i = 1; i <= rows; ++i) {
            const double* w = theta.data() + arch.wpos(k, i, 1);
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += w[j] * in[j];
            z[i - 1] = theta[arch.bpos(k, i)] + s;
        }
        if (k < L) {
            const Activation a = act.for_layer(k);
            tr.post[k].resize(rows);
            for (std::size_t i = 0; i < rows; ++i) tr.post[k][i] = a(z[i]);
        } else {
            tr.post[k] = z;
        }
    }
    return tr;
}

double realize(const Architecture& arch, std::span<const double> theta,
               const Activation& act, std::span<const double> x) {
    if (arch.output_dim() != 1) throw std::invalid_argument("scalar realization needs l_L = 1");
    return forward(arch, theta, act, x).output()[0];
}

Vec outputs(const Architecture& arch, std::span<const double> theta,
            const Activation& act, const Dataset& data) {
    Vec out(data.size());
    for (std::size_t m = 0; m < data.size(); ++m) out[m] = realize(arch, theta, act, data.x[m]);
    return out;
}

double mse(std::span<const double> out, std::span<const double> y) {
    if (out.empty()) throw std::invalid_argument("empty batch");
    double s = 0.0;
    for (std::size_t m = 0; m < out.size(); ++m) {
        const double e = out[m] - y[m];
        s += e * e;
    }
    return s / static_cast<double>(out.size());
}

double empirical_risk(const Architecture& arch, std::span<const double> theta,
                      const Activation& act, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("empty batch");
    return mse(outputs(arch, theta, act, data), data.y);
}

}  // namespace relulab
