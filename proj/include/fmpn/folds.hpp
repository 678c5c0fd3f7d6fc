#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmpn/errors.hpp"
#include "fmpn/manifest.hpp"

namespace fmpn {

/// Subject-disjoint k-fold partition. Every sample is assigned the fold of
/// its subject, so no identity can span train and test.
struct FoldPlan {
    int k = 0;
    std::vector<std::vector<std::string>> folds; // subject ids per fold
    std::vector<int> assignment;                 // sample index -> fold index
};

/// Subjects are sorted ascending by id and partitioned into k contiguous
/// groups whose sizes differ by at most one; earlier folds take the extra
/// subject.
inline FoldPlan plan_folds(const DatasetManifest& manifest, int k) {
    if (k < 2) throw PlanError("plan_folds: k must be >= 2");
    std::set<std::string> subject_set;
    for (const auto& s : manifest.samples) subject_set.insert(s.subject_id);
    std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
    if (static_cast<int>(subjects.size()) < k) {
        throw PlanError("plan_folds: " + std::to_string(subjects.size()) + " subjects but k=" +
                        std::to_string(k));
    }

    FoldPlan plan;
    plan.k = k;
    plan.folds.resize(static_cast<std::size_t>(k));
    std::unordered_map<std::string, int> fold_of;
    const int n = static_cast<int>(subjects.size());
    const int base = n / k;
    const int extra = n % k;
    int cursor = 0;
    for (int f = 0; f < k; ++f) {
        const int take = base + (f < extra ? 1 : 0);
        for (int i = 0; i < take; ++i) {
            plan.folds[static_cast<std::size_t>(f)].push_back(subjects[static_cast<std::size_t>(cursor)]);
            fold_of[subjects[static_cast<std::size_t>(cursor)]] = f;
            ++cursor;
        }
    }

    plan.assignment.reserve(manifest.samples.size());
    for (const auto& s : manifest.samples) plan.assignment.push_back(fold_of.at(s.subject_id));
    return plan;
}

/// Sample indices of (train, test) for one held-out fold.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
fold_split(const FoldPlan& plan, int fold) {
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split;
    for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
        if (plan.assignment[i] == fold) {
            split.second.push_back(i);
        } else {
            split.first.push_back(i);
        }
    }
    return split;
}

/// Throws if any subject appears on both sides of a split. Used as a hard
/// guard inside cross-validation, not just in tests.
inline void assert_subject_disjoint(const DatasetManifest& manifest,
                                    const std::vector<std::size_t>& train,
                                    const std::vector<std::size_t>& test) {
    std::set<std::string> train_subjects;
    for (auto i : train) train_subjects.insert(manifest.samples[i].subject_id);
    for (auto i : test) {
        if (train_subjects.count(manifest.samples[i].subject_id)) {
            throw PlanError("subject leakage: '" + manifest.samples[i].subject_id +
                            "' present in both train and test");
        }
    }
}

} // namespace fmpn
