#include "stonefuse/evaluation/plot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>

#include "stonefuse/core/errors.hpp"
#include "stonefuse/dataset/image.hpp"

namespace stonefuse::evaluation {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

// Class colours (tab10 order).
constexpr std::array<Rgb, kClassCount> kPalette = {{{31, 119, 180},
                                                     {255, 127, 14},
                                                     {44, 160, 44},
                                                     {214, 39, 40},
                                                     {148, 103, 189},
                                                     {140, 86, 75}}};

// 5x7 glyphs, one byte per row, bit 4 = leftmost column.
const std::array<std::uint8_t, 7>* glyph(char ch) {
    struct Entry {
        char c;
        std::array<std::uint8_t, 7> rows;
    };
    static const Entry table[] = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    };
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (const auto& e : table) {
        if (e.c == up) return &e.rows;
    }
    return nullptr;
}

class Canvas {
public:
    Canvas(std::size_t w, std::size_t h) {
        img_.width = w;
        img_.height = h;
        img_.rgb.assign(w * h * 3, 255);
    }

    void pixel(long x, long y, Rgb c) {
        if (x < 0 || y < 0 || x >= static_cast<long>(img_.width) || y >= static_cast<long>(img_.height)) return;
        std::copy(c.begin(), c.end(), img_.rgb.begin() + (static_cast<std::size_t>(y) * img_.width + static_cast<std::size_t>(x)) * 3);
    }

    void rect(long x0, long y0, long x1, long y1, Rgb c) {
        for (long y = y0; y < y1; ++y) {
            for (long x = x0; x < x1; ++x) pixel(x, y, c);
        }
    }

    void disc(double cx, double cy, double r, Rgb c) {
        for (long y = static_cast<long>(cy - r); y <= static_cast<long>(cy + r) + 1; ++y) {
            for (long x = static_cast<long>(cx - r); x <= static_cast<long>(cx + r) + 1; ++x) {
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) pixel(x, y, c);
            }
        }
    }

    void line(double x0, double y0, double x1, double y1, Rgb c) {
        const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            pixel(std::lround(x0 + t * (x1 - x0)), std::lround(y0 + t * (y1 - y0)), c);
        }
    }

    // Text with its top-left corner at (x, y); `scale` pixels per font dot.
    void text(long x, long y, const std::string& s, Rgb c, int scale = 2) {
        for (char ch : s) {
            if (const auto* g = glyph(ch)) {
                for (int r = 0; r < 7; ++r) {
                    for (int col = 0; col < 5; ++col) {
                        if ((*g)[static_cast<std::size_t>(r)] & (0x10 >> col)) {
                            rect(x + col * scale, y + r * scale, x + (col + 1) * scale, y + (r + 1) * scale, c);
                        }
                    }
                }
            }
            x += 6 * scale;
        }
    }

    static long text_width(const std::string& s, int scale = 2) { return static_cast<long>(s.size()) * 6 * scale; }

    const dataset::Image& image() const { return img_; }

private:
    dataset::Image img_;
};

constexpr Rgb kBlack = {0, 0, 0};
constexpr Rgb kGrey = {150, 150, 150};

std::string class_name(std::size_t c) { return std::string(dataset::to_string(static_cast<dataset::StoneClass>(c))); }

}  // namespace

void write_scatter_png(const EmbeddingSet& e, const std::filesystem::path& path, const std::string& title) {
    if (e.coords.size() != e.size() || e.size() == 0) throw DataError("scatter plot needs projected embeddings");
    constexpr std::size_t kW = 800, kH = 700;
    Canvas cv(kW, kH);
    const double az = 35.0 * M_PI / 180.0, el = 25.0 * M_PI / 180.0;
    std::array<double, 3> lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& p : e.coords) {
        for (std::size_t c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], p[c]);
            hi[c] = std::max(hi[c], p[c]);
        }
    }
    // Unit cube coordinates in [-1, 1], then rotate and project.
    auto project = [&](std::array<double, 3> p, double& sx, double& sy, double& depth) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double span = hi[c] - lo[c];
            p[c] = span > 0.0 ? 2.0 * (p[c] - lo[c]) / span - 1.0 : 0.0;
        }
        const double x1 = p[0] * std::cos(az) - p[1] * std::sin(az);
        const double y1 = p[0] * std::sin(az) + p[1] * std::cos(az);
        const double z2 = p[2] * std::cos(el) - y1 * std::sin(el);
        depth = y1 * std::cos(el) + p[2] * std::sin(el);
        sx = 360.0 + 180.0 * x1;
        sy = 380.0 - 180.0 * z2;
    };
    for (int a = 0; a < 3; ++a) {  // cube edges parallel to axis a
        for (int m = 0; m < 4; ++m) {
            std::array<double, 3> p{}, q{};
            int bit = 0;
            for (int c = 0; c < 3; ++c) {
                if (c == a) {
                    p[static_cast<std::size_t>(c)] = lo[static_cast<std::size_t>(c)];
                    q[static_cast<std::size_t>(c)] = hi[static_cast<std::size_t>(c)];
                } else {
                    const double v = (m >> bit++) & 1 ? hi[static_cast<std::size_t>(c)] : lo[static_cast<std::size_t>(c)];
                    p[static_cast<std::size_t>(c)] = q[static_cast<std::size_t>(c)] = v;
                }
            }
            double x0, y0, x1, y1, d;
            project(p, x0, y0, d);
            project(q, x1, y1, d);
            cv.line(x0, y0, x1, y1, {210, 210, 210});
        }
    }
    std::vector<std::size_t> order(e.size());
    std::vector<std::array<double, 3>> screen(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) project(e.coords[i], screen[i][0], screen[i][1], screen[i][2]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return screen[a][2] > screen[b][2]; });
    for (std::size_t i : order) {
        const auto label = static_cast<std::size_t>(std::clamp(e.labels[i], 0, static_cast<int>(kClassCount) - 1));
        cv.disc(screen[i][0], screen[i][1], 2.5, kPalette[label]);
    }
    cv.text(20, 16, title, kBlack, 2);
    for (std::size_t c = 0; c < kClassCount; ++c) {
        const long y = 80 + static_cast<long>(c) * 28;
        cv.rect(680, y, 696, y + 16, kPalette[c]);
        cv.text(704, y + 1, class_name(c), kBlack, 2);
    }
    cv.text(20, static_cast<long>(kH) - 30, "UMAP 3D", kGrey, 2);
    dataset::write_png(path, cv.image());
}

void write_confusion_png(const ConfusionMatrix& m, const std::filesystem::path& path, const std::string& title) {
    constexpr long kCell = 80, kLeft = 110, kTop = 90;
    constexpr std::size_t kW = kLeft + kCell * kClassCount + 30, kH = kTop + kCell * kClassCount + 70;
    Canvas cv(kW, kH);
    cv.text(20, 16, title, kBlack, 2);
    for (std::size_t t = 0; t < kClassCount; ++t) {
        const std::size_t support = std::accumulate(m[t].begin(), m[t].end(), std::size_t{0});
        for (std::size_t p = 0; p < kClassCount; ++p) {
            const double f = support ? static_cast<double>(m[t][p]) / static_cast<double>(support) : 0.0;
            const Rgb shade = {static_cast<std::uint8_t>(255 - 247 * f), static_cast<std::uint8_t>(255 - 207 * f),
                               static_cast<std::uint8_t>(255 - 148 * f)};
            const long x = kLeft + static_cast<long>(p) * kCell, y = kTop + static_cast<long>(t) * kCell;
            cv.rect(x, y, x + kCell, y + kCell, shade);
            const std::string count = std::to_string(m[t][p]);
            cv.text(x + (kCell - Canvas::text_width(count)) / 2, y + kCell / 2 - 7, count,
                    f > 0.5 ? Rgb{255, 255, 255} : kBlack, 2);
        }
    }
    for (long k = 0; k <= static_cast<long>(kClassCount); ++k) {
        const long edge = k * kCell;
        cv.line(kLeft + edge, kTop, kLeft + edge, kTop + kCell * static_cast<long>(kClassCount), kGrey);
        cv.line(kLeft, kTop + edge, kLeft + kCell * static_cast<long>(kClassCount), kTop + edge, kGrey);
    }
    for (std::size_t c = 0; c < kClassCount; ++c) {
        const std::string name = class_name(c);
        const long off = static_cast<long>(c) * kCell;
        cv.text(kLeft + off + (kCell - Canvas::text_width(name)) / 2, kTop - 24, name, kBlack, 2);
        cv.text(kLeft - 16 - Canvas::text_width(name), kTop + off + kCell / 2 - 7, name, kBlack, 2);
    }
    cv.text(kLeft, kTop - 50, "PREDICTED", kGrey, 2);
    cv.text(20, kTop + kCell * static_cast<long>(kClassCount) + 20, "ROWS: TRUE CLASS", kGrey, 2);
    dataset::write_png(path, cv.image());
}

}  // namespace stonefuse::evaluation
