#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stonefuse/backbone/model.hpp"
#include "stonefuse/dataset/cache.hpp"
#include "stonefuse/fusion/fusion.hpp"

namespace stonefuse::evaluation {

struct EmbeddingSet {
    std::size_t dim = 0;
    std::vector<double> features;  // row-major N x dim
    std::vector<int> labels;
    std::vector<std::array<double, 3>> coords;  // empty until projected
    std::string source_model;

    std::size_t size() const { return labels.size(); }
    const double* row(std::size_t i) const { return features.data() + i * dim; }
};

// Pre-head extractor features, inference mode, one row per patch.
EmbeddingSet extract_embeddings(backbone::SingleViewModel<float>& model, const dataset::PatchSet& patches,
                                const std::string& tag);
// Post-fusion vectors, one row per pair. Throws DataError when a pair member
// has the wrong view.
EmbeddingSet extract_embeddings(fusion::MultiViewModel<float>& model, const dataset::PatchSet& patches,
                                const std::vector<fusion::ViewPair>& pairs, const std::string& tag);

struct UmapOptions {
    std::size_t n_neighbors = 15;
    std::size_t epochs = 200;
    std::size_t negative_samples = 5;
    // Curve 1 / (1 + a d^(2b)) fitted for min_dist 0.1, spread 1.
    double a = 1.5769;
    double b = 0.8951;
};

// UMAP to three dimensions: exact k-nearest-neighbour graph with smoothed
// memberships, fuzzy union, PCA initialisation scaled to [-10, 10], and the
// usual edge-sampled SGD with negative sampling. Sequential and seeded, so
// the result is a pure function of (features, seed, options). Throws
// DataError when N <= n_neighbors.
EmbeddingSet project_3d(EmbeddingSet embeddings, std::uint64_t seed, const UmapOptions& options = {});

struct ClusterStats {
    double mean_intra = 0.0;  // mean distance of points to their class centroid
    double mean_inter = 0.0;  // mean pairwise distance between class centroids
    double ratio = 0.0;       // mean_inter / mean_intra; +inf when mean_intra is 0
    double silhouette = 0.0;  // mean silhouette coefficient, Euclidean
};

// Over raw rows. Throws DataError with fewer than two classes or any class
// with fewer than two points.
ClusterStats cluster_stats(std::span<const double> rows, std::size_t dim, std::span<const int> labels);
ClusterStats cluster_stats(const EmbeddingSet& e);
// Over projected coordinates; rendering diagnostics only.
double projected_silhouette(const EmbeddingSet& e);

// ratio is written as the string "+inf" when unbounded.
nlohmann::json to_json(const ClusterStats& s);

// feature_0..feature_{d-1}, label, x, y, z (x, y, z empty when not projected).
std::string embeddings_csv(const EmbeddingSet& e);

}  // namespace stonefuse::evaluation
