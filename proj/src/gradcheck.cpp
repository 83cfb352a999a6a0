#include "agf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace agf {

namespace {

double eval(const ScalarGraph& f, const std::vector<std::pair<std::string, Tensor>>& inputs) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& [name, tensor] : inputs) vars.push_back(t.leaf(tensor));
    Var loss = f(t, vars);
    AGF_CHECK(t.value(loss).size() == 1, "gradcheck: graph must produce a scalar");
    return t.value(loss)[0];
}

}  // namespace

GradCheckReport gradcheck(const ScalarGraph& f,
                          const std::vector<std::pair<std::string, Tensor>>& inputs,
                          double tol, double step, double backward_fault) {
    GradCheckReport report;
    report.tol = tol;

    // Analytic gradients in one reverse pass.
    Tape t;
    t.set_backward_fault(backward_fault);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& [name, tensor] : inputs) vars.push_back(t.leaf(tensor));
    Var loss = f(t, vars);
    t.backward(loss);

    std::vector<std::pair<std::string, Tensor>> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& analytic = t.grad(vars[k]);
        GradCheckEntry entry;
        entry.name = inputs[k].first;
        for (std::size_t i = 0; i < probe[k].second.size(); ++i) {
            const double saved = probe[k].second[i];
            probe[k].second[i] = saved + step;
            const double fp = eval(f, probe);
            probe[k].second[i] = saved - step;
            const double fm = eval(f, probe);
            probe[k].second[i] = saved;

            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.pass = entry.max_rel_err <= tol;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace agf
