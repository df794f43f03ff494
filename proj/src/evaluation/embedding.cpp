#include "stonefuse/evaluation/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/kernels/kernels.hpp"

namespace stonefuse::evaluation {

namespace {

constexpr std::size_t kBatch = 128;

void append_rows(EmbeddingSet& e, const Tensor<float>& f) {
    if (e.dim == 0) e.dim = f.dim(1);
    e.features.insert(e.features.end(), f.data(), f.data() + f.size());
}

double distance(const double* a, const double* b, std::size_t d) {
    return std::sqrt(kernels::squared_distance<double>(d, a, b));
}

// Exact k nearest neighbours (self excluded), ascending distance.
void knn(const EmbeddingSet& e, std::size_t k, std::vector<std::size_t>& idx, std::vector<double>& dist) {
    const std::size_t n = e.size();
    idx.assign(n * k, 0);
    dist.assign(n * k, 0.0);
    std::vector<std::pair<double, std::size_t>> row(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row[m++] = {distance(e.row(i), e.row(j), e.dim), j};
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
        for (std::size_t t = 0; t < k; ++t) {
            idx[i * k + t] = row[t].second;
            dist[i * k + t] = row[t].first;
        }
    }
}

// Per-point membership weights exp(-(d - rho) / sigma), sigma chosen by
// bisection so the weights sum to log2(k).
std::vector<double> memberships(const std::vector<double>& dist, std::size_t n, std::size_t k) {
    std::vector<double> w(n * k);
    const double target = std::log2(static_cast<double>(k));
    for (std::size_t i = 0; i < n; ++i) {
        const double* d = dist.data() + i * k;
        double rho = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            if (d[t] > 0.0) {
                rho = d[t];
                break;
            }
        }
        double lo = 0.0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
        for (int it = 0; it < 64; ++it) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += std::exp(-std::max(d[t] - rho, 0.0) / sigma);
            if (std::abs(s - target) < 1e-5) break;
            if (s > target) {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = std::isinf(hi) ? sigma * 2.0 : (lo + hi) / 2.0;
            }
        }
        sigma = std::max(sigma, 1e-3 * (std::accumulate(d, d + k, 0.0) / static_cast<double>(k)));
        for (std::size_t t = 0; t < k; ++t) w[i * k + t] = std::exp(-std::max(d[t] - rho, 0.0) / sigma);
    }
    return w;
}

std::vector<std::array<double, 3>> pca_init(const EmbeddingSet& e) {
    const std::size_t n = e.size(), d = e.dim;
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e.row(i)[j];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    std::vector<std::array<double, 3>> y(n, {0.0, 0.0, 0.0});
    const Eigen::Index dims = std::min<Eigen::Index>(3, static_cast<Eigen::Index>(d));
    for (Eigen::Index c = 0; c < dims; ++c) {
        Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;  // fixed sign convention
        const Eigen::VectorXd p = x * v;
        for (std::size_t i = 0; i < n; ++i) y[i][static_cast<std::size_t>(c)] = p(static_cast<Eigen::Index>(i));
    }
    double mx = 0.0;
    for (const auto& p : y) {
        for (double v : p) mx = std::max(mx, std::abs(v));
    }
    const double scale = mx > 0.0 ? 10.0 / mx : 1.0;
    for (auto& p : y) {
        for (double& v : p) v *= scale;
    }
    return y;
}

double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace

EmbeddingSet extract_embeddings(backbone::SingleViewModel<float>& model, const dataset::PatchSet& patches,
                                const std::string& tag) {
    EmbeddingSet e;
    e.source_model = tag;
    e.dim = model.backbone_spec().feature_dim();
    std::vector<std::size_t> idx(patches.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t s = 0; s < idx.size(); s += kBatch) {
        const std::span<const std::size_t> chunk(idx.data() + s, std::min(kBatch, idx.size() - s));
        append_rows(e, model.extractor().forward(patches.batch(chunk), nn::Mode::eval));
    }
    model.extractor().clear_cache();
    e.labels = patches.labels;
    return e;
}

EmbeddingSet extract_embeddings(fusion::MultiViewModel<float>& model, const dataset::PatchSet& patches,
                                const std::vector<fusion::ViewPair>& pairs, const std::string& tag) {
    EmbeddingSet e;
    e.source_model = tag;
    e.dim = model.fused_width();
    for (const auto& p : pairs) {
        if (p.surface >= patches.size() || p.section >= patches.size() ||
            patches.views[p.surface] != dataset::View::surface || patches.views[p.section] != dataset::View::section) {
            throw DataError("multi-view embedding needs (surface, section) pairs");
        }
    }
    for (std::size_t s = 0; s < pairs.size(); s += kBatch) {
        std::vector<std::size_t> si, ci;
        for (std::size_t b = s; b < std::min(pairs.size(), s + kBatch); ++b) {
            si.push_back(pairs[b].surface);
            ci.push_back(pairs[b].section);
            e.labels.push_back(pairs[b].label);
        }
        append_rows(e, model.features(patches.batch(si), patches.batch(ci)));
    }
    return e;
}

EmbeddingSet project_3d(EmbeddingSet e, std::uint64_t seed, const UmapOptions& opt) {
    const std::size_t n = e.size(), k = opt.n_neighbors;
    if (k < 2 || n <= k) {
        throw DataError("UMAP needs more than n_neighbors (" + std::to_string(k) + ") points, got " +
                        std::to_string(n));
    }
    std::vector<std::size_t> nbr;
    std::vector<double> dist;
    knn(e, k, nbr, dist);
    const std::vector<double> w = memberships(dist, n, k);

    // Fuzzy union: w_ij + w_ji - w_ij * w_ji over the symmetrised graph.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> sym;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t j = nbr[i * k + t];
            auto key = std::minmax(i, j);
            auto& entry = sym[{key.first, key.second}];
            (i < j ? entry.first : entry.second) = w[i * k + t];
        }
    }
    struct Edge {
        std::size_t i, j;
        double weight;
    };
    std::vector<Edge> edges;
    double wmax = 0.0;
    for (const auto& [key, ab] : sym) {
        const double v = ab.first + ab.second - ab.first * ab.second;
        edges.push_back({key.first, key.second, v});
        wmax = std::max(wmax, v);
    }
    const double epochs = static_cast<double>(opt.epochs);
    std::vector<double> per_sample, next_sample, per_negative, next_negative;
    std::vector<Edge> kept;
    for (const auto& ed : edges) {
        const double eps = wmax / ed.weight;
        if (eps > epochs) continue;  // too weak to be sampled even once
        kept.push_back(ed);
        per_sample.push_back(eps);
        next_sample.push_back(eps);
        per_negative.push_back(eps / static_cast<double>(opt.negative_samples));
        next_negative.push_back(eps / static_cast<double>(opt.negative_samples));
    }

    auto y = pca_init(e);
    Rng rng(mix_seed(seed, 0x0a));
    const double a = opt.a, b = opt.b;
    for (std::size_t ep = 0; ep < opt.epochs; ++ep) {
        const double alpha = 1.0 - static_cast<double>(ep) / epochs;
        const double now = static_cast<double>(ep);
        for (std::size_t q = 0; q < kept.size(); ++q) {
            if (next_sample[q] > now) continue;
            auto& yi = y[kept[q].i];
            auto& yj = y[kept[q].j];
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) d2 += (yi[c] - yj[c]) * (yi[c] - yj[c]);
            if (d2 > 0.0) {
                const double gc = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
                for (int c = 0; c < 3; ++c) {
                    const double g = clip4(gc * (yi[c] - yj[c])) * alpha;
                    yi[c] += g;
                    yj[c] -= g;
                }
            }
            next_sample[q] += per_sample[q];
            const auto negatives = static_cast<std::size_t>((now - next_negative[q]) / per_negative[q]);
            for (std::size_t s = 0; s < negatives; ++s) {
                const std::size_t m = uniform_index(rng, n);
                if (m == kept[q].i) continue;
                auto& ym = y[m];
                double dn = 0.0;
                for (int c = 0; c < 3; ++c) dn += (yi[c] - ym[c]) * (yi[c] - ym[c]);
                const double gc = dn > 0.0 ? 2.0 * b / ((0.001 + dn) * (a * std::pow(dn, b) + 1.0)) : 0.0;
                for (int c = 0; c < 3; ++c) yi[c] += (gc > 0.0 ? clip4(gc * (yi[c] - ym[c])) : 4.0) * alpha;
            }
            next_negative[q] += static_cast<double>(negatives) * per_negative[q];
        }
    }
    e.coords = std::move(y);
    return e;
}

ClusterStats cluster_stats(std::span<const double> rows, std::size_t dim, std::span<const int> labels) {
    const std::size_t n = labels.size();
    if (dim == 0 || rows.size() != n * dim) throw ShapeError("cluster_stats: feature rows do not match labels");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
    if (members.size() < 2) throw DataError("cluster_stats needs at least two classes");
    for (const auto& [label, idx] : members) {
        if (idx.size() < 2) {
            throw DataError("cluster_stats: class " + std::to_string(label) + " has fewer than two points");
        }
    }
    const double* x = rows.data();
    std::vector<std::vector<double>> centroid;
    ClusterStats s;
    for (const auto& [label, idx] : members) {
        std::vector<double> c(dim, 0.0);
        for (std::size_t i : idx) {
            for (std::size_t j = 0; j < dim; ++j) c[j] += x[i * dim + j];
        }
        for (double& v : c) v /= static_cast<double>(idx.size());
        for (std::size_t i : idx) s.mean_intra += distance(x + i * dim, c.data(), dim);
        centroid.push_back(std::move(c));
    }
    s.mean_intra /= static_cast<double>(n);
    std::size_t pairs = 0;
    for (std::size_t p = 0; p < centroid.size(); ++p) {
        for (std::size_t q = p + 1; q < centroid.size(); ++q, ++pairs) {
            s.mean_inter += distance(centroid[p].data(), centroid[q].data(), dim);
        }
    }
    s.mean_inter /= static_cast<double>(pairs);
    s.ratio = s.mean_intra > 0.0 ? s.mean_inter / s.mean_intra : std::numeric_limits<double>::infinity();

    // Silhouette: (b - a) / max(a, b) with a the mean distance to the point's
    // own class and b the smallest mean distance to another class.
    std::vector<int> group(n);
    std::vector<std::size_t> sizes;
    {
        int g = 0;
        for (const auto& [label, idx] : members) {
            for (std::size_t i : idx) group[i] = g;
            sizes.push_back(idx.size());
            ++g;
        }
    }
    std::vector<double> sums(members.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[static_cast<std::size_t>(group[j])] += distance(x + i * dim, x + j * dim, dim);
        }
        const auto own = static_cast<std::size_t>(group[i]);
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < sums.size(); ++g) {
            if (g != own) b = std::min(b, sums[g] / static_cast<double>(sizes[g]));
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    s.silhouette = total / static_cast<double>(n);
    return s;
}

ClusterStats cluster_stats(const EmbeddingSet& e) { return cluster_stats(e.features, e.dim, e.labels); }

double projected_silhouette(const EmbeddingSet& e) {
    if (e.coords.size() != e.size()) throw DataError("embedding set has not been projected");
    std::vector<double> rows;
    for (const auto& c : e.coords) rows.insert(rows.end(), c.begin(), c.end());
    return cluster_stats(rows, 3, e.labels).silhouette;
}

nlohmann::json to_json(const ClusterStats& s) {
    nlohmann::json j{{"mean_intra", s.mean_intra}, {"mean_inter", s.mean_inter}, {"silhouette", s.silhouette},
                     {"metric", "euclidean"}, {"space", "features"}};
    if (std::isinf(s.ratio)) j["ratio"] = "+inf";
    else j["ratio"] = s.ratio;
    return j;
}

std::string embeddings_csv(const EmbeddingSet& e) {
    std::string out;
    for (std::size_t j = 0; j < e.dim; ++j) out += "feature_" + std::to_string(j) + ",";
    out += "label,x,y,z\n";
    const bool projected = e.coords.size() == e.size();
    char buf[40];
    for (std::size_t i = 0; i < e.size(); ++i) {
        for (std::size_t j = 0; j < e.dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g,", e.row(i)[j]);
            out += buf;
        }
        out += std::to_string(e.labels[i]);
        for (int c = 0; c < 3; ++c) {
            out += ',';
            if (projected) {
                std::snprintf(buf, sizeof buf, "%.9g", e.coords[i][static_cast<std::size_t>(c)]);
                out += buf;
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace stonefuse::evaluation
