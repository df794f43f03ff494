#include <doctest.h>

#include <cmath>
#include <limits>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/evaluation/embedding.hpp"
#include "stonefuse/evaluation/metrics.hpp"
#include "support.hpp"

using namespace stonefuse;
using namespace stonefuse::evaluation;

TEST_SUITE("evaluation") {

TEST_CASE("compute_metrics input checks") {
    const std::vector<int> a{0, 1}, b{0};
    CHECK_THROWS_AS(compute_metrics(a, b), ShapeError);
    CHECK_THROWS_AS(compute_metrics(std::vector<int>{}, std::vector<int>{}), ShapeError);
    CHECK_THROWS_AS(compute_metrics(std::vector<int>{6}, std::vector<int>{0}), DataError);
    CHECK_THROWS_AS(compute_metrics(std::vector<int>{0}, std::vector<int>{-1}), DataError);
}

TEST_CASE("single-class confusion") {
    // Everything predicted as class 4.
    const std::vector<int> y{0, 1, 2, 3, 4, 5}, p(6, 4);
    const auto r = compute_metrics(p, y);
    CHECK(r.accuracy == doctest::Approx(1.0 / 6));
    CHECK(r.per_class[4].precision == doctest::Approx(1.0 / 6));
    CHECK(r.per_class[4].recall == 1.0);
    CHECK(r.per_class[4].predicted == 6);
    CHECK(r.per_class[0].precision == 0.0);
    CHECK(r.macro_recall == doctest::Approx(1.0 / 6));
    for (int c = 0; c < 6; ++c) CHECK(r.confusion[c][4] == 1);
    CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("mean ± std formatting and aggregation") {
    const std::vector<double> v{0.96, 0.97, 0.97, 0.96, 0.98};
    const auto s = summarize(v);
    CHECK(s.mean == doctest::Approx(0.968));
    // Squared deviations sum to 280e-6; population variance 56e-6.
    CHECK(s.std == doctest::Approx(std::sqrt(56e-6)));
    CHECK(format_mean_std(s) == "0.968 ± 0.007");
    CHECK(format_mean_std({0.5, 0.0}) == "0.500 ± 0.000");
    CHECK_THROWS_AS(aggregate_runs(std::vector<MetricsReport>{}), ConfigError);
}

TEST_CASE("render_table layout") {
    AggregateReport a;
    a.runs = 5;
    a.accuracy = {0.969, 0.004};
    a.precision = {0.970, 0.005};
    a.recall = {0.968, 0.003};
    a.f1 = {0.969, 0.004};
    const auto t = render_table({{"MV concatenation + attention", a}, {"Surface", a}});
    CHECK(t.rfind("| Model | Accuracy | Precision | Recall | F1-score |\n", 0) == 0);
    CHECK(t.find("| MV concatenation + attention | 0.969 ± 0.004 | 0.970 ± 0.005 | 0.968 ± 0.003 | 0.969 ± 0.004 |") !=
          std::string::npos);
    CHECK(t.find("| Surface |") > t.find("| MV concatenation"));
}

TEST_CASE("metrics JSON round trip") {
    const std::vector<int> y{0, 1, 2, 3, 4, 5, 5, 1}, p{0, 1, 2, 3, 5, 5, 5, 2};
    const auto r = compute_metrics(p, y);
    const auto back = metrics_from_json(to_json(r));
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.macro_f1 == r.macro_f1);
    CHECK(back.confusion == r.confusion);
    CHECK(back.total == r.total);
    CHECK(back.per_class[5].precision == r.per_class[5].precision);
}

TEST_CASE("cluster_stats on a worked example") {
    // 1-D points: class 0 at {0, 2}, class 1 at {10, 12}.
    const std::vector<double> rows{0, 2, 10, 12};
    const std::vector<int> labels{0, 0, 1, 1};
    const auto s = cluster_stats(rows, 1, labels);
    CHECK(s.mean_intra == doctest::Approx(1.0));
    CHECK(s.mean_inter == doctest::Approx(10.0));
    CHECK(s.ratio == doctest::Approx(10.0));
    // a = 2 everywhere; b = 11, 9, 9, 11.
    CHECK(s.silhouette == doctest::Approx((9.0 / 11 + 7.0 / 9) / 2));

    // Three classes in 2-D: centroids (0,0), (3,0), (0,4); pairwise 3, 4, 5.
    const std::vector<double> r2{-1, 0, 1, 0, 3, -1, 3, 1, 0, 3, 0, 5};
    const std::vector<int> l2{0, 0, 1, 1, 2, 2};
    const auto s2 = cluster_stats(r2, 2, l2);
    CHECK(s2.mean_intra == doctest::Approx(1.0));
    CHECK(s2.mean_inter == doctest::Approx(4.0));
}

TEST_CASE("cluster_stats edge cases") {
    const std::vector<double> rows{1, 1, 5, 5};
    const std::vector<int> labels{0, 0, 1, 1};
    const auto s = cluster_stats(rows, 1, labels);
    CHECK(s.mean_intra == 0.0);
    CHECK(std::isinf(s.ratio));
    CHECK(to_json(s)["ratio"] == "+inf");
    CHECK(to_json(cluster_stats(std::vector<double>{0, 2, 10, 12}, 1, labels))["ratio"].get<double>() ==
          doctest::Approx(10.0));
    CHECK_THROWS_AS(cluster_stats(rows, 1, std::vector<int>{0, 0, 0, 0}), DataError);
    CHECK_THROWS_AS(cluster_stats(std::vector<double>{0, 1, 2}, 1, std::vector<int>{0, 0, 1}), DataError);
}

namespace {

EmbeddingSet blobs(std::size_t per, double spread, std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingSet e;
    e.dim = 10;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < per; ++i) {
            for (std::size_t d = 0; d < e.dim; ++d) e.features.push_back((d == std::size_t(c) ? 8.0 : 0.0) + spread * standard_normal(rng));
            e.labels.push_back(c);
        }
    }
    return e;
}

}  // namespace

TEST_CASE("UMAP projection is seeded and keeps separated blobs apart") {
    const auto e = blobs(60, 0.5, 1);
    const auto a = project_3d(e, 3), b = project_3d(e, 3), c = project_3d(e, 4);
    REQUIRE(a.coords.size() == e.size());
    CHECK(a.coords == b.coords);
    CHECK(a.coords != c.coords);
    CHECK(projected_silhouette(a) > 0.5);
    for (const auto& p : a.coords) {
        for (double v : p) CHECK(std::isfinite(v));
    }
    UmapOptions big;
    big.n_neighbors = 500;
    CHECK_THROWS_AS(project_3d(e, 1, big), DataError);
}

TEST_CASE("embedding CSV") {
    EmbeddingSet e;
    e.dim = 2;
    e.features = {1, 2, 3, 4};
    e.labels = {0, 5};
    auto csv = embeddings_csv(e);
    CHECK(csv.rfind("feature_0,feature_1,label,x,y,z\n", 0) == 0);
    e.coords = {{0.5, 1, 2}, {3, 4, 5}};
    csv = embeddings_csv(e);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

}
