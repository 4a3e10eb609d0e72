#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "alen/data.hpp"
#include "alen/matrix.hpp"

namespace testing {

inline alen::Matrix random_matrix(std::size_t r, std::size_t c, alen::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    alen::Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

inline double max_abs_diff(const alen::Matrix& a, const alen::Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("alen_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing
