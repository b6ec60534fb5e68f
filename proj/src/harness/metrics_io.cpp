#include "noisy/harness/metrics_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace noisy::harness {

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const MetricsRecord& record) {
    os << kMetricsHeader << '\n';
    for (const auto& r : record.rows) {
        os << r.epoch << ',' << r.minibatches << ',' << fmt17(r.train_nll) << ',' << fmt17(r.eval_nll) << ','
           << fmt17(r.eval_accuracy) << ',' << fmt17(r.eval_error_pct) << ',' << fmt17(r.c) << '\n';
    }
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsRecord& record) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_metrics_csv(os, record);
}

void write_timing_csv(const std::filesystem::path& path, const MetricsRecord& record) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "epoch,seconds\n";
    for (const auto& r : record.rows) os << r.epoch << ',' << fmt17(r.seconds) << '\n';
}

MetricsRecord read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != kMetricsHeader) {
        throw std::runtime_error(path.string() + ": unexpected header");
    }
    MetricsRecord record;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
        }
        MetricsRow r;
        try {
            r.epoch = std::stoul(cells[0]);
            r.minibatches = std::stoull(cells[1]);
            r.train_nll = std::stod(cells[2]);
            r.eval_nll = std::stod(cells[3]);
            r.eval_accuracy = std::stod(cells[4]);
            r.eval_error_pct = std::stod(cells[5]);
            r.c = std::stod(cells[6]);
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
        record.rows.push_back(r);
    }
    return record;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty list");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MetricsRecord median_summary(const std::vector<MetricsRecord>& runs) {
    MetricsRecord out;
    if (runs.empty()) return out;
    std::size_t rows = runs.front().rows.size();
    for (const auto& r : runs) rows = std::min(rows, r.rows.size());
    for (std::size_t i = 0; i < rows; ++i) {
        const auto field = [&](auto member) {
            std::vector<double> v;
            for (const auto& r : runs) v.push_back(static_cast<double>(r.rows[i].*member));
            return median(std::move(v));
        };
        MetricsRow m;
        m.epoch = runs.front().rows[i].epoch;
        m.minibatches = static_cast<std::uint64_t>(field(&MetricsRow::minibatches));
        m.train_nll = field(&MetricsRow::train_nll);
        m.eval_nll = field(&MetricsRow::eval_nll);
        m.eval_accuracy = field(&MetricsRow::eval_accuracy);
        m.eval_error_pct = field(&MetricsRow::eval_error_pct);
        m.c = field(&MetricsRow::c);
        m.seconds = field(&MetricsRow::seconds);
        out.rows.push_back(m);
    }
    return out;
}

}  // namespace noisy::harness
