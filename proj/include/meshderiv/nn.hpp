/**
 * @file nn.hpp
 * @brief Dense layers over a flat parameter buffer, with reverse-mode backward.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meshderiv/mesh.hpp"

namespace meshderiv {

/// Batched activations: one row per sample.
using Matrix = Field;

enum class Activation : std::uint8_t { Tanh = 0, Identity = 1 };

/// Weight (out x in, row-major) at `offset`, followed by the bias (out).
struct DenseLayer {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;
    Activation act = Activation::Tanh;

    std::size_t n_params() const { return static_cast<std::size_t>(in) * out + out; }
};

struct MlpTape {
    Matrix input;
    std::vector<Matrix> outputs;  // post-activation output of each layer
};

/// A chain of dense layers, tanh on hidden layers and identity on the last.
class Mlp {
public:
    Mlp() = default;
    /// widths = {in, hidden..., out}; parameters start at `offset`.
    Mlp(const std::vector<int>& widths, std::size_t offset);

    int in_width() const { return layers_.front().in; }
    int out_width() const { return layers_.back().out; }
    std::size_t offset() const { return layers_.front().offset; }
    std::size_t n_params() const;
    const std::vector<DenseLayer>& layers() const { return layers_; }

    /// `name` labels overflow errors; `tape` may be null for inference.
    Matrix forward(std::span<const double> theta, const Matrix& x, MlpTape* tape, const std::string& name) const;

    /// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
    Matrix backward(std::span<const double> theta, const MlpTape& tape, const Matrix& d_out,
                    std::span<double> grad) const;

    /// Same as forward, but starting from the first layer's pre-activation
    /// x W0^T + b0 supplied by the caller; `tape->input` is left empty.
    Matrix forward_from_preactivation(std::span<const double> theta, Matrix z0, MlpTape* tape,
                                      const std::string& name) const;
    /// Backward pass that stops at the first layer's pre-activation: gradients
    /// of every layer except the first weight/bias accumulate into `grad`.
    Matrix backward_to_preactivation(std::span<const double> theta, const MlpTape& tape, const Matrix& d_out,
                                     std::span<double> grad) const;
    /// Glorot-uniform weights, zero biases.
    void init(std::span<double> theta, std::mt19937_64& rng) const;

private:
    std::vector<DenseLayer> layers_;
};

}  // namespace meshderiv
