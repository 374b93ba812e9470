#pragma once

#include <string>
#include <vector>

#include "sepdgp/errors.hpp"

namespace sepdgp::arch {

/// Network shape grammar: comma-separated layer specs, hidden layers as
/// "DIM@M" and the final layer as "y@M". "y@50" is a single sparse GP,
/// "2@50,y@50" a one-hidden-layer network with 2-dimensional hidden
/// activations and 50 inducing points per layer.
struct HiddenSpec {
    int dim = 0;
    int n_inducing = 0;
};

struct Architecture {
    std::vector<HiddenSpec> hidden;
    int final_inducing = 0;

    int n_layers() const { return static_cast<int>(hidden.size()) + 1; }
};

Architecture parse(const std::string& text);
std::string to_string(const Architecture& a);

}  // namespace sepdgp::arch
