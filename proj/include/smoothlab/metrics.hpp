#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "smoothlab/backprop.hpp"
#include "smoothlab/loss.hpp"
#include "smoothlab/model.hpp"

namespace smoothlab {

/// Root-mean-square pairwise row distance, E(X)² = (1/2n²) Σ_ij ‖X_i − X_j‖²,
/// evaluated as n^{-1/2} ‖X − 1 mean(X)‖_F.
double energy(const Matrix& x);

/// ‖1ᵀ B‖₂: norm of the column sums.
double epsilon_n(const Matrix& output_signal);

struct RateFit {
    double rate = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Least-squares fit of log(series[k]) = intercept + k log(rate) over
/// k in [k_lo, k_hi]. Needs k_hi - k_lo >= 3 and every value in range >= 1e-300.
RateFit fit_decay_rate(const std::vector<double>& series, std::size_t k_lo, std::size_t k_hi);

/// Fits over [2, size-3] by default, shortened to stay above the 1e-300 floor;
/// nullopt when fewer than four usable points remain.
std::optional<RateFit> fit_decay_rate_auto(const std::vector<double>& series, std::size_t trim = 2);

struct ProfileReport {
    /// E(F^(k)), k = 0..L
    std::vector<double> forward_energy;
    /// E(B^(k))
    std::vector<double> backward_energy;
    /// ‖∂L/∂W^(k)‖_F
    std::vector<double> grad_norms;
    /// s_k
    std::vector<double> spectral_norms;
    double epsilon_n = 0.0;
    double loss = 0.0;
    std::optional<RateFit> forward_rate;
    std::optional<RateFit> backward_rate;
};

ProfileReport profile(const GnnModel& model, const ForwardTrace& trace, const BackwardTrace& btrace,
                      const LabelSet& labels);
/// Runs forward and backward, then profiles.
ProfileReport profile(const GnnModel& model, const Matrix& x0, const LabelSet& labels);

/// Columns: k,forward_energy,backward_energy,grad_norm,spectral_norm.
std::string format_profile_csv(const ProfileReport& report);
std::string format_profile_json(const ProfileReport& report);

struct StationarityReport {
    std::vector<bool> per_layer;
    bool global = false;
    double max_grad_norm = 0.0;
};

/// Per-layer δ-stationarity ‖∂L/∂W^(k)‖_F ≤ δ; global when every layer is.
StationarityReport stationarity(const BackwardTrace& btrace, double delta);

} // namespace smoothlab
