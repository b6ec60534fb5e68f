#include "noisy/harness/datasets.hpp"

#include "noisy/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace noisy::harness {

SyntheticDataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n_per_class, std::size_t dimension) {
    if (n_per_class == 0) throw std::invalid_argument("gen_gaussian_mixture: n must be at least 1");
    if (dimension < 2) throw std::invalid_argument("gen_gaussian_mixture: dimension must be at least 2");
    RngStream rng(seed, 0x6d6978);
    SyntheticDataset ds{"gaussian-mixture", {Tensor({3 * n_per_class, dimension}), {}}, 3, seed};
    ds.data.labels.reserve(3 * n_per_class);
    std::size_t row = 0;
    for (int k = 0; k < 3; ++k) {
        const auto& comp = kMixture[k];
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (std::size_t d = 0; d < dimension; ++d) {
                const double mean = d == 0 ? comp.mean_x : d == 1 ? comp.mean_y : 0.0;
                ds.data.inputs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d)) =
                    mean + comp.stddev * rng.normal();
            }
            ds.data.labels.push_back(k);
        }
    }
    return ds;
}

std::size_t count_unique(std::span<const int> values) {
    return std::set<int>(values.begin(), values.end()).size();
}

SyntheticDataset gen_unique_count(std::uint64_t seed, std::size_t n, std::size_t length, int value_lo,
                                  int value_hi) {
    if (length == 0) throw std::invalid_argument("gen_unique_count: length must be at least 1");
    if (value_hi < value_lo) throw std::invalid_argument("gen_unique_count: empty value range");
    const auto range = static_cast<std::size_t>(value_hi - value_lo + 1);
    RngStream rng(seed, 0x756e71);
    SyntheticDataset ds{"unique-count", {Tensor({n, length}), std::vector<int>(n)},
                        std::min(length, range), seed};
    std::vector<int> seq(length);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t t = 0; t < length; ++t) {
            seq[t] = static_cast<int>(rng.uniform_int(value_lo, value_hi));
            // Tokens are offsets into the value range.
            ds.data.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = seq[t] - value_lo;
        }
        ds.data.labels[r] = static_cast<int>(count_unique(seq)) - 1;
    }
    return ds;
}

std::filesystem::path default_digits_path() {
#ifdef NOISY_DATA_DIR
    return std::filesystem::path(NOISY_DATA_DIR) / "digits.csv";
#else
    return "data/digits.csv";
#endif
}

SyntheticDataset load_digits(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open digits file " + path.string());
    std::string line;
    std::getline(is, line);  // header
    std::vector<double> pixels;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != 65) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 65 fields");
        }
        for (int i = 0; i < 64; ++i) pixels.push_back(row[i] / 16.0);
        labels.push_back(static_cast<int>(row[64]));
    }
    SyntheticDataset ds{"digits", {Tensor({labels.size(), 64}, std::span<const double>(pixels)), labels}, 10, 0};
    return ds;
}

std::pair<LabeledData, LabeledData> split(const LabeledData& data, double eval_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream rng(seed, 0x73706c);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
    }
    const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(data.size())));
    return {gather(data, order, n_eval, data.size() - n_eval), gather(data, order, 0, n_eval)};
}

void write_dataset_csv(const std::filesystem::path& path, const SyntheticDataset& ds) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    const bool sequence = ds.kind == "unique-count";
    const auto cols = static_cast<std::size_t>(ds.data.inputs.cols());
    for (std::size_t c = 0; c < cols; ++c) os << (sequence ? "t" : "f") << c << ',';
    os << "label\n";
    char buf[32];
    for (std::size_t r = 0; r < ds.data.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g",
                          ds.data.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
            os << buf << ',';
        }
        os << ds.data.labels[r] << '\n';
    }
}

}  // namespace noisy::harness
