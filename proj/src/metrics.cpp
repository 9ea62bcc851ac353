#include "sits/metrics.hpp"

#include <cstdio>

#include "sits/error.hpp"

namespace sits {

ConfusionMatrix::ConfusionMatrix(int k, std::vector<std::string> class_names)
    : counts_(Counts::Zero(k, k)), names_(std::move(class_names))
{
    if (k <= 0) throw ConfigError("confusion matrix needs at least one class");
    if (names_.empty()) {
        for (int i = 0; i < k; ++i) names_.push_back(std::to_string(i));
    }
    if (static_cast<int>(names_.size()) != k) throw ConfigError("class name count differs from K");
}

void ConfusionMatrix::add(int ref, int pred, std::int64_t n)
{
    if (ref < 0 || ref >= k() || pred < 0 || pred >= k()) {
        throw IndexError("class id " + std::to_string(ref < 0 || ref >= k() ? ref : pred) + " outside [0, " +
                         std::to_string(k()) + ")");
    }
    counts_(ref, pred) += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other)
{
    if (other.k() != k()) throw ShapeError("cannot merge confusion matrices of different size");
    counts_ += other.counts_;
    return *this;
}

ConfusionMatrix ConfusionMatrix::transposed() const
{
    ConfusionMatrix out(k(), names_);
    out.counts_ = counts_.transpose();
    return out;
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> ref, int k)
{
    if (pred.size() != ref.size()) {
        throw ShapeError("prediction has " + std::to_string(pred.size()) + " pixels, reference " +
                         std::to_string(ref.size()));
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < pred.size(); ++i) cm.add(ref[i], pred[i]);
    return cm;
}

std::vector<ClassScore> class_scores(const ConfusionMatrix& cm)
{
    const auto& c = cm.counts();
    std::vector<ClassScore> out(static_cast<std::size_t>(cm.k()));
    for (int i = 0; i < cm.k(); ++i) {
        auto& s = out[static_cast<std::size_t>(i)];
        const double tp = static_cast<double>(c(i, i));
        const double col = static_cast<double>(c.col(i).sum()), row = static_cast<double>(c.row(i).sum());
        s.precision_defined = col > 0;
        s.recall_defined = row > 0;
        s.precision = col > 0 ? tp / col : 0.0;
        s.recall = row > 0 ? tp / row : 0.0;
        s.f1_defined = s.precision + s.recall > 0;
        s.f1 = s.f1_defined ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    }
    return out;
}

Summary summary(const ConfusionMatrix& cm)
{
    const auto total = cm.total();
    if (total == 0) throw InputError("empty confusion matrix");
    Summary s;
    for (const auto& c : class_scores(cm)) s.macro_f1 += c.f1;
    s.macro_f1 /= cm.k();
    s.overall_accuracy = static_cast<double>(cm.counts().trace()) / static_cast<double>(total);
    return s;
}

double macro_f1(std::span<const int> pred, std::span<const int> ref, int k)
{
    return summary(confusion(pred, ref, k)).macro_f1;
}

nlohmann::json report_json(const ConfusionMatrix& cm)
{
    nlohmann::json matrix = nlohmann::json::array();
    for (int r = 0; r < cm.k(); ++r) {
        std::vector<std::int64_t> row(static_cast<std::size_t>(cm.k()));
        for (int p = 0; p < cm.k(); ++p) row[static_cast<std::size_t>(p)] = cm.counts()(r, p);
        matrix.push_back(row);
    }
    nlohmann::json classes = nlohmann::json::array();
    const auto scores = class_scores(cm);
    for (int i = 0; i < cm.k(); ++i) {
        const auto& s = scores[static_cast<std::size_t>(i)];
        classes.push_back({{"class", cm.class_names()[static_cast<std::size_t>(i)]},
                           {"id", i},
                           {"f1", s.f1},
                           {"recall", s.recall},
                           {"precision", s.precision},
                           {"support", cm.counts().row(i).sum()},
                           {"f1_defined", s.f1_defined},
                           {"recall_defined", s.recall_defined},
                           {"precision_defined", s.precision_defined}});
    }
    const auto sum = summary(cm);
    return {{"confusion", matrix},
            {"rows", "reference"},
            {"columns", "predicted"},
            {"classes", classes},
            {"macro_f1", sum.macro_f1},
            {"overall_accuracy", sum.overall_accuracy},
            {"total", cm.total()}};
}

std::string report_csv(const ConfusionMatrix& cm)
{
    std::string out = "class,F1,Re.,Pr.\n";
    char buf[128];
    const auto scores = class_scores(cm);
    for (int i = 0; i < cm.k(); ++i) {
        const auto& s = scores[static_cast<std::size_t>(i)];
        std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f\n", s.f1, s.recall, s.precision);
        out += cm.class_names()[static_cast<std::size_t>(i)] + buf;
    }
    std::snprintf(buf, sizeof buf, "Mean,%.4f,,\n", summary(cm).macro_f1);
    return out + buf;
}

} // namespace sits
