#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agf/tape.hpp"

namespace agf {

/// Builds a scalar loss graph from leaf Vars (one per named input). The
/// function must be pure: the numeric side evaluates it many times.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;

    bool all_pass() const {
        for (const auto& e : entries) {
            if (!e.pass) return false;
        }
        return true;
    }
    double worst() const {
        double w = 0.0;
        for (const auto& e : entries) w = std::max(w, e.max_rel_err);
        return w;
    }
};

/// Central finite-difference check of the tape's analytic gradients.
/// Relative error per element is |a - n| / max(|a|, |n|, 1e-8); each entry
/// reports the max over its elements. Reports failures, never throws on them.
GradCheckReport gradcheck(const ScalarGraph& f,
                          const std::vector<std::pair<std::string, Tensor>>& inputs,
                          double tol = 1e-6, double step = 1e-6,
                          double backward_fault = 1.0);

}  // namespace agf
