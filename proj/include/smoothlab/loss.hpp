#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "smoothlab/numkit.hpp"

namespace smoothlab {

enum class TaskKind { regression, classification };

/// Node labels for one of the two supported losses.
///
/// Regression uses ℓ_i(h) = ½‖h − y_i‖² with ‖y_i‖ ≤ 1; classification uses
/// softmax cross-entropy over `num_classes` classes. Masked-out nodes
/// contribute ℓ_i = 0. The total loss is (1/n) Σ ℓ_i over all n nodes unless
/// `normalize_by_labeled` is set, in which case it is 1/n_labeled.
class LabelSet {
public:
    static LabelSet regression(Matrix targets, std::vector<bool> mask = {});
    static LabelSet classification(std::vector<int> classes, int num_classes, std::vector<bool> mask = {});

    TaskKind kind() const { return kind_; }
    bool is_regression() const { return kind_ == TaskKind::regression; }
    std::size_t node_count() const;
    /// d_out expected from the model.
    std::size_t output_dim() const;

    const Matrix& targets() const { return targets_; }
    const std::vector<int>& classes() const { return classes_; }
    int num_classes() const { return num_classes_; }

    bool labeled(std::size_t i) const { return mask_.empty() || mask_[i]; }
    const std::vector<bool>& mask() const { return mask_; }
    std::size_t labeled_count() const;

    bool normalize_by_labeled() const { return normalize_by_labeled_; }
    LabelSet& set_normalize_by_labeled(bool on) {
        normalize_by_labeled_ = on;
        return *this;
    }

    /// The loss normalizer: 1/n or 1/n_labeled.
    double weight() const;

private:
    TaskKind kind_ = TaskKind::regression;
    Matrix targets_;
    std::vector<int> classes_;
    int num_classes_ = 0;
    std::vector<bool> mask_;
    bool normalize_by_labeled_ = false;
};

/// D_L and D′_L such that ‖∂ℓ_i/∂h‖ ≤ D_L‖h‖ + D′_L.
struct LossConstants {
    double d_l = 0.0;
    double d_l_prime = 0.0;
};

double loss_value(const LabelSet& labels, const Matrix& h);
/// ∂L/∂H, i.e. the output backward signal B^(L).
Matrix output_gradient(const LabelSet& labels, const Matrix& h);
LossConstants loss_constants(const LabelSet& labels);

/// Per-node gradient ∂ℓ_i/∂h for a single row (unnormalized).
std::vector<double> node_loss_gradient(const LabelSet& labels, std::size_t node, std::span<const double> h);

/// CSV with header: node_id,label[,mask] or node_id,y_0..y_{d-1}[,mask].
/// Rows may come in any order but must cover ids 0..n-1 exactly once.
LabelSet parse_labels_csv(std::string_view text, TaskKind kind, int num_classes = 0);
LabelSet read_labels_csv(const std::filesystem::path& path, TaskKind kind, int num_classes = 0);
std::string format_labels_csv(const LabelSet& labels);

} // namespace smoothlab
