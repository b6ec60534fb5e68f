#pragma once

#include "noisy/training.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

namespace noisy::harness {

struct SyntheticDataset {
    std::string kind;
    LabeledData data;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
};

/// Component constants of the 3-class mixture (first two coordinates; any
/// further dimensions have mean 0 and the component's std).
struct MixtureComponent {
    double mean_x;
    double mean_y;
    double stddev;
};
inline constexpr MixtureComponent kMixture[3] = {{0.0, 0.0, 0.5}, {3.0, 3.0, 1.0}, {-3.0, 3.0, 1.5}};

/// n_per_class samples from each isotropic Gaussian of kMixture, label = component.
SyntheticDataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n_per_class, std::size_t dimension);

/// Number of distinct values in a sequence.
std::size_t count_unique(std::span<const int> values);

/// n sequences of `length` iid uniform integers in [value_lo, value_hi]. The
/// label is (number of distinct values - 1), so classes = min(length, range size).
SyntheticDataset gen_unique_count(std::uint64_t seed, std::size_t n, std::size_t length, int value_lo,
                                  int value_hi);

/// The bundled 8x8 digits (pixel values 0..16, scaled to [0, 1]).
SyntheticDataset load_digits(const std::filesystem::path& path);
std::filesystem::path default_digits_path();

/// Shuffles with `seed` and holds out round(eval_fraction * n) rows.
std::pair<LabeledData, LabeledData> split(const LabeledData& data, double eval_fraction, std::uint64_t seed);

/// CSV with header f0..fN-1,label (or t0..,label for sequences).
void write_dataset_csv(const std::filesystem::path& path, const SyntheticDataset& ds);

}  // namespace noisy::harness
