#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "burstlab/common.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

constexpr double kPsnrCapDb = 99.0; // reported for identical images instead of +inf

template <class T>
double psnr(const TensorT<T>& a, const TensorT<T>& b, double peak = 1.0) {
    require_same_shape(a, b, "psnr");
    double m = mse(a, b);
    if (m <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / m));
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), computed per channel over all
/// fully-interior window positions, then averaged across channels.
template <class T>
double ssim(const TensorT<T>& a, const TensorT<T>& b, int window = 11, double k1 = 0.01,
            double k2 = 0.03, double peak = 1.0) {
    require_same_shape(a, b, "ssim");
    if (a.h < window || a.w < window)
        throw param_error("ssim: image smaller than the window");
    const double c1 = (k1 * peak) * (k1 * peak);
    const double c2 = (k2 * peak) * (k2 * peak);

    std::vector<double> g(static_cast<size_t>(window) * window);
    {
        const double sigma = 1.5;
        const int r = window / 2;
        double sum = 0.0;
        for (int y = 0; y < window; ++y)
            for (int x = 0; x < window; ++x) {
                double d2 = (y - r) * double(y - r) + (x - r) * double(x - r);
                g[y * window + x] = std::exp(-d2 / (2.0 * sigma * sigma));
                sum += g[y * window + x];
            }
        for (double& w : g) w /= sum;
    }

    double total = 0.0;
    size_t count = 0;
    for (int ci = 0; ci < a.c; ++ci)
        for (int y = 0; y + window <= a.h; ++y)
            for (int x = 0; x + window <= a.w; ++x) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int wy = 0; wy < window; ++wy)
                    for (int wx = 0; wx < window; ++wx) {
                        double wgt = g[wy * window + wx];
                        double va = a.at(ci, y + wy, x + wx);
                        double vb = b.at(ci, y + wy, x + wx);
                        mx += wgt * va;
                        my += wgt * vb;
                        sxx += wgt * va * va;
                        syy += wgt * vb * vb;
                        sxy += wgt * va * vb;
                    }
                double vx = sxx - mx * mx;
                double vy = syy - my * my;
                double cxy = sxy - mx * my;
                double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
                double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                total += num / den;
                ++count;
            }
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// External perceptual-metric plug-in. Shells out per image pair (or once per
// directory pair for distribution metrics) and parses one float from stdout.
// Nothing is ever fabricated: a missing executable reports "unavailable".
// ---------------------------------------------------------------------------

struct MetricValue {
    enum class Status { ok, failed, unavailable };
    double value = 0.0;
    Status status = Status::unavailable;

    static MetricValue ok_value(double v) { return {v, Status::ok}; }
    static MetricValue failed() { return {0.0, Status::failed}; }
    static MetricValue unavailable() { return {0.0, Status::unavailable}; }
};

inline const char* to_string(MetricValue::Status s) {
    switch (s) {
        case MetricValue::Status::ok: return "ok";
        case MetricValue::Status::failed: return "failed";
        default: return "unavailable";
    }
}

class PerceptualPlugin {
public:
    /// spec: "name:command template", where the template contains {a} and {b}
    /// placeholders for per-pair metrics or {dir_a} and {dir_b} for
    /// distribution metrics evaluated once per directory.
    static PerceptualPlugin parse(const std::string& spec) {
        auto colon = spec.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 >= spec.size())
            throw param_error("plugin spec must look like name:command-template");
        return PerceptualPlugin(spec.substr(0, colon), spec.substr(colon + 1));
    }

    PerceptualPlugin(std::string name, std::string cmd_template)
        : name_(std::move(name)), cmd_(std::move(cmd_template)) {
        distribution_ = cmd_.find("{dir_a}") != std::string::npos || cmd_.find("{dir_b}") != std::string::npos;
        available_ = executable_resolves(first_token(cmd_));
    }

    const std::string& name() const { return name_; }
    bool available() const { return available_; }
    bool is_distribution() const { return distribution_; }

    MetricValue run_pair(const std::string& a, const std::string& b) const {
        if (!available_) return MetricValue::unavailable();
        std::string cmd = cmd_;
        replace_all(cmd, "{a}", a);
        replace_all(cmd, "{b}", b);
        return run_command(cmd);
    }

    MetricValue run_dirs(const std::string& dir_a, const std::string& dir_b) const {
        if (!available_) return MetricValue::unavailable();
        std::string cmd = cmd_;
        replace_all(cmd, "{dir_a}", dir_a);
        replace_all(cmd, "{dir_b}", dir_b);
        return run_command(cmd);
    }

private:
    static void replace_all(std::string& s, const std::string& from, const std::string& to) {
        size_t pos = 0;
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, from.size(), to);
            pos += to.size();
        }
    }

    static std::string first_token(const std::string& cmd) {
        size_t b = cmd.find_first_not_of(" \t");
        if (b == std::string::npos) return {};
        size_t e = cmd.find_first_of(" \t", b);
        return cmd.substr(b, e == std::string::npos ? std::string::npos : e - b);
    }

    static bool executable_resolves(const std::string& tok) {
        if (tok.empty()) return false;
        if (tok.find('/') != std::string::npos) return ::access(tok.c_str(), X_OK) == 0;
        const char* path = std::getenv("PATH");
        if (!path) return false;
        std::stringstream ss(path);
        std::string dir;
        while (std::getline(ss, dir, ':')) {
            if (dir.empty()) continue;
            std::string full = dir + "/" + tok;
            if (::access(full.c_str(), X_OK) == 0) return true;
        }
        return false;
    }

    static MetricValue run_command(const std::string& cmd) {
        std::FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) return MetricValue::failed();
        std::string out;
        char buf[256];
        while (std::fgets(buf, sizeof buf, pipe)) out += buf;
        int rc = ::pclose(pipe);
        if (rc != 0) return MetricValue::failed();
        // first parseable float anywhere in the output
        const char* p = out.c_str();
        while (*p) {
            char* end = nullptr;
            double v = std::strtod(p, &end);
            if (end != p && std::isfinite(v)) return MetricValue::ok_value(v);
            ++p;
        }
        return MetricValue::failed();
    }

    std::string name_;
    std::string cmd_;
    bool available_ = false;
    bool distribution_ = false;
};

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct MetricReport {
    // experiment identifiers
    int tau = 0;
    std::string schedule;
    std::string initializer;
    uint64_t seed = 0;

    std::vector<std::string> metric_names;
    struct Row {
        int index = 0;
        std::map<std::string, MetricValue> values;
    };
    std::vector<Row> rows;
    std::map<std::string, MetricValue> aggregates; // mean over ok samples; distribution metrics land here directly

    void add_row(Row row) { rows.push_back(std::move(row)); }

    /// Aggregate = arithmetic mean of the per-sample values with ok status.
    void finalize() {
        for (const auto& name : metric_names) {
            if (aggregates.count(name)) continue; // distribution metric, already set
            double sum = 0.0;
            size_t n = 0;
            bool any_unavailable = false;
            for (const auto& row : rows) {
                auto it = row.values.find(name);
                if (it == row.values.end()) continue;
                if (it->second.status == MetricValue::Status::ok) {
                    sum += it->second.value;
                    ++n;
                } else if (it->second.status == MetricValue::Status::unavailable) {
                    any_unavailable = true;
                }
            }
            if (n > 0)
                aggregates[name] = MetricValue::ok_value(sum / static_cast<double>(n));
            else
                aggregates[name] = any_unavailable ? MetricValue::unavailable() : MetricValue::failed();
        }
    }

    void write_csv(std::ostream& os) const {
        os << "sample";
        for (const auto& name : metric_names) os << "," << name << "," << name << "_status";
        os << "\n";
        os.precision(10);
        for (const auto& row : rows) {
            os << row.index;
            for (const auto& name : metric_names) {
                auto it = row.values.find(name);
                if (it != row.values.end() && it->second.status == MetricValue::Status::ok)
                    os << "," << it->second.value << ",ok";
                else
                    os << ",," << (it != row.values.end() ? to_string(it->second.status) : "unavailable");
            }
            os << "\n";
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tau"] = tau;
        j["schedule"] = schedule;
        j["initializer"] = initializer;
        j["seed"] = seed;
        j["sample_count"] = rows.size();
        nlohmann::json aggs = nlohmann::json::object();
        for (const auto& [name, mv] : aggregates) {
            nlohmann::json e;
            e["status"] = to_string(mv.status);
            if (mv.status == MetricValue::Status::ok) e["value"] = mv.value;
            aggs[name] = e;
        }
        j["aggregates"] = aggs;
        return j;
    }
};

} // namespace burstlab
