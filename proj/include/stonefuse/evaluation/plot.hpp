#pragma once

#include <filesystem>
#include <string>

#include "stonefuse/evaluation/embedding.hpp"
#include "stonefuse/evaluation/metrics.hpp"

namespace stonefuse::evaluation {

// Fixed-view (azimuth 35°, elevation 25°) orthographic 3-D scatter of the
// projected coordinates, one colour per class, with a legend.
void write_scatter_png(const EmbeddingSet& e, const std::filesystem::path& path, const std::string& title);

// 6x6 heatmap shaded by row-normalised counts, with the raw count in each cell.
void write_confusion_png(const ConfusionMatrix& m, const std::filesystem::path& path, const std::string& title);

}  // namespace stonefuse::evaluation
