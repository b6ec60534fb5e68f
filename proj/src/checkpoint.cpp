#include "noisy/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>

namespace noisy {

namespace {

constexpr const char* kMagic = "noisy-checkpoint";

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& token, const std::string& name) {
    // strtod handles inf/nan spellings that from_chars rejects on some libraries.
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("checkpoint: bad value '" + token + "' in '" + name + "'");
    }
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ParameterSet& params) {
    os << kMagic << " 1\n";
    for (const auto& [name, t] : params) {
        os << name << ' ' << t.rank();
        for (auto d : t.shape()) os << ' ' << d;
        os << '\n';
        const auto values = t.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) os << ' ';
            os << format_double(values[i]);
        }
        os << '\n';
    }
}

ParameterSet read_checkpoint(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kMagic || version != 1) {
        throw std::runtime_error("checkpoint: missing or unsupported header");
    }
    ParameterSet params;
    std::string name;
    while (is >> name) {
        std::size_t rank = 0;
        if (!(is >> rank) || rank > 2) {
            throw std::runtime_error("checkpoint: bad rank for '" + name + "'");
        }
        Shape shape(rank);
        for (auto& d : shape) {
            if (!(is >> d)) throw std::runtime_error("checkpoint: bad shape for '" + name + "'");
        }
        Tensor t(shape);
        std::string token;
        for (double& v : t.values()) {
            if (!(is >> token)) throw std::runtime_error("checkpoint: truncated values for '" + name + "'");
            v = parse_double(token, name);
        }
        if (!params.emplace(name, std::move(t)).second) {
            throw std::runtime_error("checkpoint: duplicate parameter '" + name + "'");
        }
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    write_checkpoint(os, params);
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
    return read_checkpoint(is);
}

}  // namespace noisy
