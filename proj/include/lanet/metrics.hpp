#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanet/ops.hpp"

namespace lanet {

/// K x K pixel counts, counts[ref][pred].
struct ConfusionMatrix {
    int k;
    std::vector<std::uint64_t> counts;

    explicit ConfusionMatrix(int classes = 6) : k(classes), counts(static_cast<std::size_t>(classes) * classes, 0) {}

    std::uint64_t& at(int ref, int pred) { return counts[static_cast<std::size_t>(ref) * k + pred]; }
    std::uint64_t at(int ref, int pred) const { return counts[static_cast<std::size_t>(ref) * k + pred]; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }

    void merge(const ConfusionMatrix& other) {
        if (other.k != k) throw std::invalid_argument("confusion matrix merge: class count mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    }
};

/// Adds one count per non-ignored pixel. `ignore < 0` disables ignoring.
inline void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& ref,
                       int ignore = -1) {
    if (pred.n != ref.n || pred.h != ref.h || pred.w != ref.w)
        throw std::invalid_argument("accumulate: pred (" + std::to_string(pred.h) + "," +
                                    std::to_string(pred.w) + ") vs ref (" + std::to_string(ref.h) +
                                    "," + std::to_string(ref.w) + ")");
    for (std::size_t i = 0; i < pred.ids.size(); ++i) {
        const int r = ref.ids[i], p = pred.ids[i];
        if (r == ignore) continue;
        if (r < 0 || r >= cm.k || p < 0 || p >= cm.k)
            throw std::invalid_argument("accumulate: label out of range (ref " + std::to_string(r) +
                                        ", pred " + std::to_string(p) + ")");
        cm.at(r, p)++;
    }
}

inline double overall_accuracy(const ConfusionMatrix& cm) {
    const std::uint64_t t = cm.total();
    if (t == 0) throw std::invalid_argument("overall_accuracy: empty confusion matrix");
    std::uint64_t diag = 0;
    for (int i = 0; i < cm.k; ++i) diag += cm.at(i, i);
    return static_cast<double>(diag) / static_cast<double>(t);
}

struct F1Report {
    std::vector<double> per_class;  // classes absent from the reference carry -1
    double mean = 0.0;
};

/// Per-class F1 = 2PR/(P+R); classes with an empty reference row are excluded
/// from the unweighted mean (marked -1). P+R = 0 gives F1 = 0.
inline F1Report f1_scores(const ConfusionMatrix& cm,
                          const std::vector<int>& exclude_from_mean = {}) {
    if (cm.total() == 0) throw std::invalid_argument("f1_scores: empty confusion matrix");
    F1Report rep;
    rep.per_class.assign(cm.k, -1.0);
    double acc = 0.0;
    int included = 0;
    for (int c = 0; c < cm.k; ++c) {
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < cm.k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        if (row == 0) continue;  // class absent from the reference
        const double tp = static_cast<double>(cm.at(c, c));
        const double precision = col ? tp / static_cast<double>(col) : 0.0;
        const double recall = tp / static_cast<double>(row);
        const double f1 =
            (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        rep.per_class[c] = f1;
        bool excluded = false;
        for (int e : exclude_from_mean) excluded = excluded || (e == c);
        if (!excluded) {
            acc += f1;
            ++included;
        }
    }
    rep.mean = included ? acc / included : 0.0;
    return rep;
}

/// Aligned text table plus machine-readable CSV rows.
inline std::string metrics_report(const ConfusionMatrix& cm,
                                  const std::vector<std::string>& names,
                                  const std::vector<int>& exclude_from_mean = {}) {
    const F1Report rep = f1_scores(cm, exclude_from_mean);
    const double oa = overall_accuracy(cm);
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(16) << "class" << "F1\n";
    for (int c = 0; c < cm.k; ++c) {
        os << std::left << std::setw(16) << (c < static_cast<int>(names.size()) ? names[c] : std::to_string(c));
        if (rep.per_class[c] < 0)
            os << "absent\n";
        else
            os << rep.per_class[c] << "\n";
    }
    os << std::left << std::setw(16) << "mean_f1" << rep.mean << "\n";
    os << std::left << std::setw(16) << "overall_accuracy" << " " << oa << "\n";
    os << "\n";
    for (int c = 0; c < cm.k; ++c)
        if (rep.per_class[c] >= 0)
            os << (c < static_cast<int>(names.size()) ? names[c] : std::to_string(c)) << ","
               << rep.per_class[c] << "\n";
    os << "mean_f1," << rep.mean << "\n";
    os << "overall_accuracy," << oa << "\n";
    return os.str();
}

}  // namespace lanet
