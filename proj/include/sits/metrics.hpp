#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace sits {

/// Rows are reference classes, columns predicted classes.
class ConfusionMatrix {
public:
    using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

    explicit ConfusionMatrix(int k, std::vector<std::string> class_names = {});

    int k() const { return static_cast<int>(counts_.rows()); }
    const Counts& counts() const { return counts_; }
    const std::vector<std::string>& class_names() const { return names_; }
    std::int64_t total() const { return counts_.sum(); }

    void add(int ref, int pred, std::int64_t n = 1);
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    ConfusionMatrix transposed() const;

private:
    Counts counts_;
    std::vector<std::string> names_;
};

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> ref, int k);

struct ClassScore {
    double precision = 0, recall = 0, f1 = 0;
    // false where the ratio was 0/0 and the score was set to 0
    bool precision_defined = true, recall_defined = true, f1_defined = true;
};

std::vector<ClassScore> class_scores(const ConfusionMatrix& cm);

struct Summary {
    double macro_f1 = 0;
    double overall_accuracy = 0;
};

/// Macro-F1 averages every class including Background.
Summary summary(const ConfusionMatrix& cm);

double macro_f1(std::span<const int> pred, std::span<const int> ref, int k);

nlohmann::json report_json(const ConfusionMatrix& cm);
/// One row per class: class,F1,Re.,Pr. followed by a mean row.
std::string report_csv(const ConfusionMatrix& cm);

} // namespace sits
