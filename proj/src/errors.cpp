#include "meshderiv/errors.hpp"

namespace meshderiv {

IsolatedNodeError::IsolatedNodeError(std::size_t node_)
    : Error("isolated node " + std::to_string(node_) + ": no neighbors"), node(node_) {}

UnderdeterminedError::UnderdeterminedError(const std::string& op, std::size_t node_, std::size_t have,
                                           std::size_t need)
    : Error("underdetermined " + op + " at node " + std::to_string(node_) + ": " + std::to_string(have) +
            " neighbors, need at least " + std::to_string(need)),
      node(node_) {}

NumericOverflowError::NumericOverflowError(const std::string& where, int layer_)
    : Error("non-finite activation in " + where + " at layer " + std::to_string(layer_)), layer(layer_) {}

DivergenceError::DivergenceError(std::size_t step_)
    : Error("non-finite state after step " + std::to_string(step_)), step(step_) {}

PositivityError::PositivityError(const std::string& what, std::size_t cell_)
    : Error("non-positive " + what + " at cell " + std::to_string(cell_)), cell(cell_) {}

}  // namespace meshderiv
