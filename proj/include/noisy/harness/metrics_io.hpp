#pragma once

#include "noisy/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace noisy::harness {

// metrics CSV (deterministic, byte-stable for a given config and seed):
//   epoch,minibatches,train_nll,eval_nll,eval_accuracy,eval_error_pct,c
// timing CSV (wall clock, kept apart so metrics files stay reproducible):
//   epoch,seconds
// Floating-point fields use %.17g.

inline constexpr const char* kMetricsHeader = "epoch,minibatches,train_nll,eval_nll,eval_accuracy,eval_error_pct,c";

void write_metrics_csv(std::ostream& os, const MetricsRecord& record);
void write_metrics_csv(const std::filesystem::path& path, const MetricsRecord& record);
void write_timing_csv(const std::filesystem::path& path, const MetricsRecord& record);
MetricsRecord read_metrics_csv(const std::filesystem::path& path);

/// Per-epoch median over runs of every numeric field. Runs are truncated to
/// the shortest one.
MetricsRecord median_summary(const std::vector<MetricsRecord>& runs);

double median(std::vector<double> values);

}  // namespace noisy::harness
