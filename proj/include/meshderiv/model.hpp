/**
 * @file model.hpp
 * @brief The learned time-derivative operator.
 *
 * ds/dt = out_scale * Fusion([s, grad s, lap s] || Source(s, c))
 *
 * Source is a message-passing network over the mesh graph conditioned on the
 * broadcast global parameters c. grad/lap come from the least-squares stencils
 * and carry no parameters. With use_mls off the fusion input is [s] || Source.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meshderiv/dataset.hpp"
#include "meshderiv/integrator.hpp"
#include "meshderiv/mls.hpp"
#include "meshderiv/nn.hpp"

namespace meshderiv {

struct ModelConfig {
    int n_channels = 1;
    int n_globals = 0;
    bool use_mls = true;
    /// Feed dr_ij into the edge messages.
    bool edge_geometry = true;
    IntegratorKind integrator = IntegratorKind::Euler;
    int mp_rounds = 2;
    int mp_hidden = 64;
    int message_width = 32;
    int source_width = 16;
    int fusion_hidden = 64;
    int fusion_depth = 2;  // hidden layers

    int fusion_input_width() const { return n_channels * (1 + (use_mls ? 3 : 0)) + source_width; }
};

/// Affine input/output scalings fitted on the training split.
struct Normalization {
    std::vector<double> state_mean, state_std;    // per channel
    std::vector<double> global_mean, global_std;  // per global
    std::vector<double> grad_scale, lap_scale;    // per channel, applied to operators of normalized s
    std::vector<double> out_scale;                // per channel, multiplies the fusion output
    double length_scale = 1.0;                    // divides dr_ij in edge messages

    static Normalization identity(int n_channels, int n_globals);
};

struct MessagePassingParams {
    int rounds = 0;
    std::vector<Mlp> edge_mlps;
    std::vector<Mlp> node_mlps;
};

struct ModelParams {
    ModelConfig config;
    Normalization norm;
    MessagePassingParams source;
    Mlp fusion;
    std::vector<double> theta;

    std::size_t n_params() const { return theta.size(); }
};

/// Builds the layer layout and initializes weights from `seed`.
/// Throws ConfigError on inconsistent widths.
ModelParams make_model(const ModelConfig& cfg, std::uint64_t seed);

/// Rebuilds only the layer layout (theta zero-filled) for a config.
ModelParams layout_model(const ModelConfig& cfg);

/// Per-case geometry: neighborhood plus its cached stencils.
struct CaseGraph {
    Neighborhood neighborhood;
    MlsOperatorSet operators;

    static CaseGraph build(const MeshGraph& g, const MlsOptions& opt = {});
};

struct SourceTape {
    std::vector<Matrix> node_in;  // X_r per round
    Matrix edge_geo;              // m x 2 scaled displacements (zero when disabled)
    std::vector<MlpTape> edge;
    std::vector<MlpTape> node;
};

/// Message passing on normalized node inputs; returns n x source_width.
/// `node_inputs` is the normalized state; `globals` the normalized conditioning
/// vector, broadcast onto every node.
Matrix source_term_forward(const MessagePassingParams& p, std::span<const double> theta,
                           const Neighborhood& nbr, const Matrix& node_inputs, std::span<const double> globals,
                           double length_scale, bool edge_geometry, SourceTape* tape);

/// Returns d(loss)/d(node_inputs); parameter gradients accumulate into `grad`.
Matrix source_term_backward(const MessagePassingParams& p, std::span<const double> theta,
                            const Neighborhood& nbr, const SourceTape& tape, const Matrix& d_out,
                            int n_node_inputs, std::span<double> grad);

struct ModelTape {
    SourceTape source;
    MlpTape fusion;
};

/// Normalized conditioning vector for this model.
std::vector<double> normalized_globals(const ModelParams& m, const GlobalParams& c);

/// ds/dt at every node, n x n_channels, in physical units per second.
Field model_forward(const ModelParams& m, const CaseGraph& g, const Field& s, std::span<const double> globals_norm,
                    ModelTape* tape = nullptr);
Field model_forward(const ModelParams& m, const CaseGraph& g, const Field& s, const GlobalParams& c);

/// d(loss)/d(s) given d(loss)/d(ds/dt); parameter gradients accumulate into `grad`.
Field model_backward(const ModelParams& m, const CaseGraph& g, const ModelTape& tape, const Field& d_dsdt,
                     std::span<double> grad);

}  // namespace meshderiv
