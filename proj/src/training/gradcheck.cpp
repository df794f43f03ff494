#include "stonefuse/training/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace stonefuse::training {

std::string GradientReport::summary() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: max relative error %.3e (tolerance %.1e) at %s[%zu], analytic %.6e, numeric %.6e",
                  passed ? "pass" : "FAIL", max_rel_error, tolerance, worst.name.c_str(), worst.index, worst.analytic,
                  worst.numeric);
    return buf;
}

GradientReport verify_gradients(nn::Layer<double>& layer, const Tensor<double>& input, double tolerance,
                                const GradCheckOptions& options) {
    auto buffers = nn::buffers_of<double>(layer);
    std::vector<Tensor<double>> saved;
    for (const auto& b : buffers) saved.push_back(*b.tensor);
    auto restore = [&] {
        for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].tensor = saved[i];
    };

    Tensor<double> x = input;
    Tensor<double> out = layer.forward(x, options.mode);
    Rng rng(mix_seed(options.seed, 0x9c));
    Tensor<double> w(out.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = standard_normal(rng);
    auto loss = [&]() {
        const Tensor<double> y = layer.forward(x, options.mode);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
        return s;
    };

    auto params = nn::parameters_of<double>(layer);
    for (auto& p : params) p.param->zero_grad();
    restore();
    layer.forward(x, options.mode);
    const Tensor<double> dx = layer.backward(w);

    GradientReport report;
    report.tolerance = tolerance;
    auto probe = [&](const std::string& name, Tensor<double>& target, std::size_t index, double analytic) {
        const double orig = target[index];
        target[index] = orig + options.step;
        const double up = loss();
        target[index] = orig - options.step;
        const double down = loss();
        target[index] = orig;
        const double numeric = (up - down) / (2.0 * options.step);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
        GradCheckEntry e{name, index, analytic, numeric, std::abs(analytic - numeric) / denom};
        if (report.entries.empty() || e.rel_error > report.max_rel_error) {
            report.max_rel_error = e.rel_error;
            report.worst = e;
        }
        report.entries.push_back(std::move(e));
    };
    auto sample = [&](std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx;
        if (n <= k) {
            for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (std::size_t i = 0; i < k; ++i) idx.push_back(uniform_index(rng, n));
        }
        return idx;
    };

    for (auto& p : params) {
        for (std::size_t i : sample(p.param->value.size(), options.samples_per_tensor)) {
            probe(p.name, p.param->value, i, p.param->grad[i]);
        }
    }
    for (std::size_t i : sample(x.size(), options.input_samples)) probe("input", x, i, dx[i]);
    restore();
    layer.clear_cache();
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace stonefuse::training
