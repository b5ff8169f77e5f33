#include "smoothlab/loss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "smoothlab/error.hpp"

namespace smoothlab {

LabelSet LabelSet::regression(Matrix targets, std::vector<bool> mask) {
    require(targets.rows() > 0 && targets.cols() > 0, "regression labels: empty target matrix");
    require(targets.all_finite(), "regression labels: non-finite target");
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        const double norm = euclidean_norm(targets.row(i));
        require(norm <= 1.0 + 1e-12,
                "regression labels: target of node " + std::to_string(i) + " has norm " +
                    std::to_string(norm) + " > 1");
    }
    require(mask.empty() || mask.size() == targets.rows(), "regression labels: mask length mismatch");
    LabelSet set;
    set.kind_ = TaskKind::regression;
    set.targets_ = std::move(targets);
    set.mask_ = std::move(mask);
    return set;
}

LabelSet LabelSet::classification(std::vector<int> classes, int num_classes, std::vector<bool> mask) {
    require(!classes.empty(), "classification labels: no nodes");
    require(num_classes >= 2, "classification labels: need at least 2 classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
        require(classes[i] >= 0 && classes[i] < num_classes,
                "classification labels: node " + std::to_string(i) + " has class " +
                    std::to_string(classes[i]) + " outside [0, " + std::to_string(num_classes) + ")");
    require(mask.empty() || mask.size() == classes.size(), "classification labels: mask length mismatch");
    LabelSet set;
    set.kind_ = TaskKind::classification;
    set.classes_ = std::move(classes);
    set.num_classes_ = num_classes;
    set.mask_ = std::move(mask);
    return set;
}

std::size_t LabelSet::node_count() const { return is_regression() ? targets_.rows() : classes_.size(); }

std::size_t LabelSet::output_dim() const {
    return is_regression() ? targets_.cols() : static_cast<std::size_t>(num_classes_);
}

std::size_t LabelSet::labeled_count() const {
    if (mask_.empty()) return node_count();
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

double LabelSet::weight() const {
    const std::size_t denom = normalize_by_labeled_ ? labeled_count() : node_count();
    require(denom > 0, "labels: no labeled nodes to normalize by");
    return 1.0 / static_cast<double>(denom);
}

namespace {

void check_shape(const LabelSet& labels, const Matrix& h) {
    require(h.rows() == labels.node_count() && h.cols() == labels.output_dim(),
            "loss: output is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                " but labels expect " + std::to_string(labels.node_count()) + "x" +
                std::to_string(labels.output_dim()));
}

double log_sum_exp(std::span<const double> row) {
    const double top = *std::max_element(row.begin(), row.end());
    double acc = 0.0;
    for (double v : row) acc += std::exp(v - top);
    return top + std::log(acc);
}

} // namespace

double loss_value(const LabelSet& labels, const Matrix& h) {
    check_shape(labels, h);
    double total = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) {
        if (!labels.labeled(i)) continue;
        auto row = h.row(i);
        if (labels.is_regression()) {
            auto y = labels.targets().row(i);
            double sq = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) sq += (row[j] - y[j]) * (row[j] - y[j]);
            total += 0.5 * sq;
        } else {
            total += log_sum_exp(row) - row[static_cast<std::size_t>(labels.classes()[i])];
        }
    }
    return labels.weight() * total;
}

std::vector<double> node_loss_gradient(const LabelSet& labels, std::size_t node, std::span<const double> h) {
    require(h.size() == labels.output_dim(), "node_loss_gradient: output width mismatch");
    std::vector<double> g(h.size(), 0.0);
    if (!labels.labeled(node)) return g;
    if (labels.is_regression()) {
        auto y = labels.targets().row(node);
        for (std::size_t j = 0; j < h.size(); ++j) g[j] = h[j] - y[j];
    } else {
        const double lse = log_sum_exp(h);
        for (std::size_t j = 0; j < h.size(); ++j) g[j] = std::exp(h[j] - lse);
        g[static_cast<std::size_t>(labels.classes()[node])] -= 1.0;
    }
    return g;
}

Matrix output_gradient(const LabelSet& labels, const Matrix& h) {
    check_shape(labels, h);
    Matrix b(h.rows(), h.cols());
    const double w = labels.weight();
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const auto g = node_loss_gradient(labels, i, h.row(i));
        auto out = b.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) out[j] = w * g[j];
    }
    return b;
}

LossConstants loss_constants(const LabelSet& labels) {
    if (labels.is_regression()) return {1.0, 1.0};
    return {0.0, static_cast<double>(labels.num_classes() + 1)};
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        fields.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
    T value{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError("labels line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
    return value;
}

} // namespace

LabelSet parse_labels_csv(std::string_view text, TaskKind kind, int num_classes) {
    std::vector<std::vector<std::string_view>> rows;
    std::vector<std::size_t> line_numbers;
    std::vector<std::string_view> header;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        if (header.empty()) {
            header = split_csv(line);
            continue;
        }
        rows.push_back(split_csv(line));
        line_numbers.push_back(line_no);
    }
    if (header.empty() || header.front() != "node_id") throw ParseError("labels: header must start with node_id");
    const bool has_mask = header.back() == "mask";
    const std::size_t value_cols = header.size() - 1 - (has_mask ? 1 : 0);
    if (value_cols == 0) throw ParseError("labels: no value columns");
    if (kind == TaskKind::classification && (value_cols != 1 || header[1] != "label"))
        throw ParseError("labels: classification files need a single 'label' column");

    const std::size_t n = rows.size();
    if (n == 0) throw ParseError("labels: no rows");
    std::vector<bool> seen(n, false);
    std::vector<bool> mask(n, true);
    Matrix targets(kind == TaskKind::regression ? n : 0, value_cols);
    std::vector<int> classes(kind == TaskKind::classification ? n : 0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& fields = rows[r];
        if (fields.size() != header.size())
            throw ParseError("labels line " + std::to_string(line_numbers[r]) + ": expected " +
                             std::to_string(header.size()) + " fields");
        const auto id = parse_number<std::size_t>(fields[0], line_numbers[r]);
        if (id >= n || seen[id])
            throw ParseError("labels line " + std::to_string(line_numbers[r]) + ": node id " +
                             std::to_string(id) + " out of range or repeated");
        seen[id] = true;
        if (kind == TaskKind::regression) {
            for (std::size_t j = 0; j < value_cols; ++j)
                targets(id, j) = parse_number<double>(fields[1 + j], line_numbers[r]);
        } else {
            classes[id] = parse_number<int>(fields[1], line_numbers[r]);
        }
        if (has_mask) mask[id] = parse_number<int>(fields.back(), line_numbers[r]) != 0;
    }
    if (!has_mask) mask.clear();
    if (kind == TaskKind::regression) return LabelSet::regression(std::move(targets), std::move(mask));
    if (num_classes <= 0) num_classes = *std::max_element(classes.begin(), classes.end()) + 1;
    return LabelSet::classification(std::move(classes), std::max(num_classes, 2), std::move(mask));
}

LabelSet read_labels_csv(const std::filesystem::path& path, TaskKind kind, int num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open labels file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_labels_csv(buffer.str(), kind, num_classes);
}

std::string format_labels_csv(const LabelSet& labels) {
    std::string out = "node_id";
    const bool has_mask = !labels.mask().empty();
    if (labels.is_regression()) {
        for (std::size_t j = 0; j < labels.output_dim(); ++j) out += fmt::format(",y_{}", j);
    } else {
        out += ",label";
    }
    if (has_mask) out += ",mask";
    out += "\n";
    for (std::size_t i = 0; i < labels.node_count(); ++i) {
        out += std::to_string(i);
        if (labels.is_regression()) {
            for (double v : labels.targets().row(i)) out += fmt::format(",{}", v);
        } else {
            out += fmt::format(",{}", labels.classes()[i]);
        }
        if (has_mask) out += labels.labeled(i) ? ",1" : ",0";
        out += "\n";
    }
    return out;
}

} // namespace smoothlab
