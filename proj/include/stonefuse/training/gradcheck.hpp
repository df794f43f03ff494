#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stonefuse/nn/layer.hpp"

namespace stonefuse::training {

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t samples_per_tensor = 6;  // entries checked per parameter tensor
    std::size_t input_samples = 6;       // entries of d loss / d input
    double floor = 1e-6;                 // relative errors use max(|a|, |n|, floor)
    std::uint64_t seed = 0;
    nn::Mode mode = nn::Mode::train;
};

struct GradCheckEntry {
    std::string name;  // parameter name, or "input"
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradientReport {
    double tolerance = 0.0;
    double max_rel_error = 0.0;
    GradCheckEntry worst;
    std::vector<GradCheckEntry> entries;
    bool passed = false;

    // One line: pass/fail, worst error and where it occurred.
    std::string summary() const;
};

// Central finite differences against backward() for the scalar loss
// sum(w * layer(input)), w a fixed seeded Gaussian. Buffers (running
// statistics) are restored afterwards. Report-only: never throws on failure.
GradientReport verify_gradients(nn::Layer<double>& layer, const Tensor<double>& input, double tolerance,
                                const GradCheckOptions& options = {});

}  // namespace stonefuse::training
