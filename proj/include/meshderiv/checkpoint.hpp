/**
 * @file checkpoint.hpp
 * @brief Binary model checkpoints.
 *
 * Layout (little-endian): magic "MDCKPT\0\0", u32 version, config block,
 * normalization vectors (u64 length + f64 values each), f64 length_scale,
 * u64 n_params + f64 theta, u8 has_optimizer, then optionally the AdamW
 * hyperparameters, u64 step, and the first/second moment vectors.
 */
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "meshderiv/model.hpp"
#include "meshderiv/optim.hpp"

namespace meshderiv {

struct Checkpoint {
    ModelParams model;
    std::optional<OptimizerState> optimizer;
};

void write_checkpoint(std::ostream& os, const ModelParams& m, const OptimizerState* opt = nullptr);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& m, const OptimizerState* opt = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace meshderiv
