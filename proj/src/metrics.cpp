#include "smoothlab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "smoothlab/error.hpp"

namespace smoothlab {

namespace {
constexpr double kFitFloor = 1e-300;
}

double energy(const Matrix& x) {
    require(x.rows() >= 1, "energy: need at least one row");
    const double n = static_cast<double>(x.rows());
    std::vector<double> mean = column_sums(x);
    for (double& m : mean) m /= n;
    Matrix centered = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = centered.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] -= mean[j];
    }
    return frobenius_norm(centered) / std::sqrt(n);
}

double epsilon_n(const Matrix& output_signal) {
    const auto sums = column_sums(output_signal);
    return euclidean_norm(sums);
}

RateFit fit_decay_rate(const std::vector<double>& series, std::size_t k_lo, std::size_t k_hi) {
    require(k_hi < series.size(), "fit_decay_rate: range end beyond series");
    require(k_hi >= k_lo + 3, "fit_decay_rate: need at least four points (k_hi - k_lo >= 3)");
    for (std::size_t k = k_lo; k <= k_hi; ++k)
        require(series[k] > 0.0 && series[k] >= kFitFloor,
                "fit_decay_rate: value at k=" + std::to_string(k) +
                    " is not positive; shrink the range above the floating-point floor");

    const double count = static_cast<double>(k_hi - k_lo + 1);
    double mean_k = 0.0;
    double mean_y = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        mean_k += static_cast<double>(k);
        mean_y += std::log(series[k]);
    }
    mean_k /= count;
    mean_y /= count;
    double s_kk = 0.0;
    double s_ky = 0.0;
    double s_yy = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const double dk = static_cast<double>(k) - mean_k;
        const double dy = std::log(series[k]) - mean_y;
        s_kk += dk * dk;
        s_ky += dk * dy;
        s_yy += dy * dy;
    }
    const double slope = s_ky / s_kk;
    RateFit fit;
    fit.rate = std::exp(slope);
    fit.intercept = mean_y - slope * mean_k;
    fit.r_squared = s_yy == 0.0 ? 1.0 : (s_ky * s_ky) / (s_kk * s_yy);
    return fit;
}

std::optional<RateFit> fit_decay_rate_auto(const std::vector<double>& series, std::size_t trim) {
    if (series.size() < 2 * trim + 4) return std::nullopt;
    const std::size_t lo = trim;
    std::size_t hi = lo;
    // Longest run starting at `lo` that stays above the floor.
    while (hi + 1 <= series.size() - 1 - trim && series[hi + 1] >= kFitFloor) ++hi;
    if (series[lo] < kFitFloor || hi < lo + 3) return std::nullopt;
    return fit_decay_rate(series, lo, hi);
}

ProfileReport profile(const GnnModel& model, const ForwardTrace& trace, const BackwardTrace& btrace,
                      const LabelSet& labels) {
    const std::size_t layers = model.depth() + 1;
    require(trace.f.size() == layers && btrace.b.size() == layers && btrace.grads.size() == layers,
            "profile: traces do not match the model depth");
    ProfileReport report;
    for (std::size_t k = 0; k < layers; ++k) {
        report.forward_energy.push_back(energy(trace.f[k]));
        report.backward_energy.push_back(energy(btrace.b[k]));
        report.grad_norms.push_back(frobenius_norm(btrace.grads[k]));
    }
    report.spectral_norms = model.spectral_norms();
    report.epsilon_n = epsilon_n(btrace.b.back());
    report.loss = loss_value(labels, trace.output());
    report.forward_rate = fit_decay_rate_auto(report.forward_energy);
    report.backward_rate = fit_decay_rate_auto(report.backward_energy);
    return report;
}

ProfileReport profile(const GnnModel& model, const Matrix& x0, const LabelSet& labels) {
    const auto trace = forward(model, x0);
    const auto btrace = backward(model, trace, labels);
    return profile(model, trace, btrace, labels);
}

std::string format_profile_csv(const ProfileReport& report) {
    std::string out = "k,forward_energy,backward_energy,grad_norm,spectral_norm\n";
    for (std::size_t k = 0; k < report.forward_energy.size(); ++k) {
        out += fmt::format("{},{},{},{},{}\n", k, report.forward_energy[k], report.backward_energy[k],
                           report.grad_norms[k], report.spectral_norms[k]);
    }
    return out;
}

std::string format_profile_json(const ProfileReport& report) {
    nlohmann::json doc;
    doc["forward_energy"] = report.forward_energy;
    doc["backward_energy"] = report.backward_energy;
    doc["grad_norms"] = report.grad_norms;
    doc["spectral_norms"] = report.spectral_norms;
    doc["epsilon_n"] = report.epsilon_n;
    doc["loss"] = report.loss;
    auto fit_json = [](const std::optional<RateFit>& fit) {
        if (!fit) return nlohmann::json(nullptr);
        return nlohmann::json{{"rate", fit->rate}, {"intercept", fit->intercept}, {"r_squared", fit->r_squared}};
    };
    doc["forward_rate"] = fit_json(report.forward_rate);
    doc["backward_rate"] = fit_json(report.backward_rate);
    return doc.dump(2) + "\n";
}

StationarityReport stationarity(const BackwardTrace& btrace, double delta) {
    require(delta > 0.0, "stationarity: delta must be positive");
    StationarityReport report;
    report.global = true;
    for (const auto& g : btrace.grads) {
        const double norm = frobenius_norm(g);
        report.max_grad_norm = std::max(report.max_grad_norm, norm);
        report.per_layer.push_back(norm <= delta);
        report.global = report.global && norm <= delta;
    }
    return report;
}

} // namespace smoothlab
