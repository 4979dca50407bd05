#include "meshderiv/nn.hpp"

#include <cmath>

#include "meshderiv/errors.hpp"

namespace meshderiv {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using Map = Eigen::Map<Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

}  // namespace

Mlp::Mlp(const std::vector<int>& widths, std::size_t offset) {
    if (widths.size() < 2) throw InvalidArgument("MLP needs at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (widths[l] <= 0 || widths[l + 1] <= 0) throw InvalidArgument("MLP widths must be positive");
        DenseLayer layer{widths[l], widths[l + 1], offset,
                         l + 2 == widths.size() ? Activation::Identity : Activation::Tanh};
        offset += layer.n_params();
        layers_.push_back(layer);
    }
}

std::size_t Mlp::n_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.n_params();
    return n;
}

Matrix Mlp::forward(std::span<const double> theta, const Matrix& x, MlpTape* tape, const std::string& name) const {
    if (x.cols() != in_width()) {
        throw InvalidArgument(name + ": input width " + std::to_string(x.cols()) + " != " +
                              std::to_string(in_width()));
    }
    const DenseLayer& L = layers_.front();
    ConstMap W(theta.data() + L.offset, L.out, L.in);
    ConstVecMap b(theta.data() + L.offset + static_cast<std::size_t>(L.in) * L.out, L.out);
    Matrix z = x * W.transpose();
    z.rowwise() += b;
    Matrix out = forward_from_preactivation(theta, std::move(z), tape, name);
    if (tape) tape->input = x;
    return out;
}

Matrix Mlp::forward_from_preactivation(std::span<const double> theta, Matrix z, MlpTape* tape,
                                       const std::string& name) const {
    if (z.cols() != layers_.front().out) throw InvalidArgument(name + ": pre-activation width mismatch");
    if (tape) {
        tape->input.resize(0, 0);
        tape->outputs.clear();
    }
    for (std::size_t l = 0;; ++l) {
        const DenseLayer& L = layers_[l];
        // Eigen's vectorized exp is several times faster than its scalar tanh
        // for doubles; exp overflow saturates correctly to +-1.
        if (L.act == Activation::Tanh) z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
        if (!z.allFinite()) throw NumericOverflowError(name, static_cast<int>(l));
        if (tape) tape->outputs.push_back(z);
        if (l + 1 == layers_.size()) return z;
        const DenseLayer& N = layers_[l + 1];
        ConstMap W(theta.data() + N.offset, N.out, N.in);
        ConstVecMap b(theta.data() + N.offset + static_cast<std::size_t>(N.in) * N.out, N.out);
        Matrix next = z * W.transpose();
        next.rowwise() += b;
        z = std::move(next);
    }
}

Matrix Mlp::backward_to_preactivation(std::span<const double> theta, const MlpTape& tape, const Matrix& d_out,
                                      std::span<double> grad) const {
    Matrix d = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const DenseLayer& L = layers_[l];
        const Matrix& y = tape.outputs[l];
        if (L.act == Activation::Tanh) d.array() *= (1.0 - y.array().square());
        if (l == 0) break;
        const Matrix& x = tape.outputs[l - 1];
        ConstMap W(theta.data() + L.offset, L.out, L.in);
        Map dW(grad.data() + L.offset, L.out, L.in);
        VecMap db(grad.data() + L.offset + static_cast<std::size_t>(L.in) * L.out, L.out);
        dW.noalias() += d.transpose() * x;
        db += d.colwise().sum();
        d = d * W;
    }
    return d;
}

Matrix Mlp::backward(std::span<const double> theta, const MlpTape& tape, const Matrix& d_out,
                     std::span<double> grad) const {
    const Matrix d = backward_to_preactivation(theta, tape, d_out, grad);
    const DenseLayer& L = layers_.front();
    ConstMap W(theta.data() + L.offset, L.out, L.in);
    Map dW(grad.data() + L.offset, L.out, L.in);
    VecMap db(grad.data() + L.offset + static_cast<std::size_t>(L.in) * L.out, L.out);
    dW.noalias() += d.transpose() * tape.input;
    db += d.colwise().sum();
    return d * W;
}

void Mlp::init(std::span<double> theta, std::mt19937_64& rng) const {
    for (const DenseLayer& L : layers_) {
        const double bound = std::sqrt(6.0 / (L.in + L.out));
        std::uniform_real_distribution<double> u(-bound, bound);
        const std::size_t nw = static_cast<std::size_t>(L.in) * L.out;
        for (std::size_t k = 0; k < nw; ++k) theta[L.offset + k] = u(rng);
        for (int k = 0; k < L.out; ++k) theta[L.offset + nw + k] = 0.0;
    }
}

}  // namespace meshderiv
