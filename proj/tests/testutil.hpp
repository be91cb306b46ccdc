#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "adr/data.hpp"
#include "adr/rng.hpp"
#include "adr/tensor.hpp"

namespace testutil {

inline std::string make_temp_dir(const std::string& prefix) {
    static std::atomic<int> counter{0};
    const auto base = std::filesystem::temp_directory_path() /
                      (prefix + "-" + std::to_string(::getpid()) + "-" +
                       std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(base);
    return base.string();
}

inline void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xFF),
                                static_cast<unsigned char>((v >> 16) & 0xFF),
                                static_cast<unsigned char>((v >> 8) & 0xFF),
                                static_cast<unsigned char>(v & 0xFF)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

/// Write a pair of IDX files (big-endian magics 2051/2049).
inline void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                           const std::vector<std::vector<unsigned char>>& images,
                           const std::vector<unsigned char>& labels, std::uint32_t rows,
                           std::uint32_t cols) {
    std::ofstream im(images_path, std::ios::binary);
    write_be32(im, 0x00000803u);
    write_be32(im, static_cast<std::uint32_t>(images.size()));
    write_be32(im, rows);
    write_be32(im, cols);
    for (const auto& img : images)
        im.write(reinterpret_cast<const char*>(img.data()),
                 static_cast<std::streamsize>(img.size()));
    std::ofstream lb(labels_path, std::ios::binary);
    write_be32(lb, 0x00000801u);
    write_be32(lb, static_cast<std::uint32_t>(labels.size()));
    lb.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
}

// Coarse 7-segment digit masks on a 4x7 cell grid (segments: top, top-left,
// top-right, middle, bottom-left, bottom-right, bottom).
inline const std::array<std::array<bool, 7>, 10>& digit_segments() {
    static const std::array<std::array<bool, 7>, 10> seg = {{
        {true, true, true, false, true, true, true},      // 0
        {false, false, true, false, false, true, false},  // 1
        {true, false, true, true, true, false, true},     // 2
        {true, false, true, true, false, true, true},     // 3
        {false, true, true, true, false, true, false},    // 4
        {true, true, false, true, false, true, true},     // 5
        {true, true, false, true, true, true, true},      // 6
        {true, false, true, false, false, true, false},   // 7
        {true, true, true, true, true, true, true},       // 8
        {true, true, true, true, false, true, true},      // 9
    }};
    return seg;
}

/// Render one digit as a 28x28 grayscale image with random shift, stroke
/// intensity and pixel noise. Values in [0, 1].
inline std::vector<double> render_digit(int digit, adr::Rng& rng) {
    std::vector<double> img(28 * 28, 0.0);
    const auto& seg = digit_segments()[static_cast<std::size_t>(digit)];
    const int ox = 6 + static_cast<int>(rng.below(7)) - 3; // horizontal shift in [-3, 3]
    const int oy = 4 + static_cast<int>(rng.below(7)) - 3;
    const double ink = rng.uniform(0.55, 1.0);
    const int sw = 12, sh = 18, th = 3; // glyph width/height, stroke thickness
    auto draw = [&](int x0, int y0, int x1, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                const int px = ox + x, py = oy + y;
                if (px >= 0 && px < 28 && py >= 0 && py < 28)
                    img[static_cast<std::size_t>(py * 28 + px)] = ink;
            }
    };
    if (seg[0]) draw(0, 0, sw, th);                            // top
    if (seg[1]) draw(0, 0, th, sh / 2);                        // top-left
    if (seg[2]) draw(sw - th, 0, sw, sh / 2);                  // top-right
    if (seg[3]) draw(0, sh / 2 - th / 2, sw, sh / 2 + th - th / 2); // middle
    if (seg[4]) draw(0, sh / 2, th, sh);                       // bottom-left
    if (seg[5]) draw(sw - th, sh / 2, sw, sh);                 // bottom-right
    if (seg[6]) draw(0, sh - th, sw, sh);                      // bottom
    for (auto& v : img) {
        v += rng.uniform(0.0, 0.12);
        if (v > 1.0) v = 1.0;
    }
    return img;
}

/// MNIST-format digit dataset written through the IDX loader path.
inline adr::Dataset make_digit_dataset(std::uint64_t seed, std::int64_t n,
                                       const std::string& dir, const std::string& tag) {
    std::vector<std::vector<unsigned char>> images;
    std::vector<unsigned char> labels;
    adr::Rng rng = adr::Rng::substream(seed, "digits-" + std::string(tag), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        const auto img = render_digit(digit, rng);
        std::vector<unsigned char> bytes(img.size());
        for (std::size_t j = 0; j < img.size(); ++j)
            bytes[j] = static_cast<unsigned char>(std::lround(img[j] * 255.0));
        images.push_back(std::move(bytes));
        labels.push_back(static_cast<unsigned char>(digit));
    }
    const std::string ip = dir + "/" + tag + "-images-idx3-ubyte";
    const std::string lp = dir + "/" + tag + "-labels-idx1-ubyte";
    write_idx_pair(ip, lp, images, labels, 28, 28);
    return adr::load_mnist_idx(ip, lp);
}

/// Run a shell command, capture stdout, return the exit code.
inline int run_command(const std::string& cmd, std::string* out = nullptr) {
    std::string full = cmd + " 2>/dev/null";
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) return -1;
    std::string text;
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) text.append(buf, got);
    const int status = ::pclose(pipe);
    if (out) *out = text;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

} // namespace testutil
