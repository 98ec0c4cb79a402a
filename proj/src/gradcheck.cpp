#include "trackattr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trackattr/error.hpp"

namespace trackattr {

std::string GradCheckReport::to_text() const {
    std::ostringstream out;
    out << (pass ? "PASS" : "FAIL") << ": checked " << n_checked << " elements, skipped "
        << n_skipped << " near kinks, max rel err " << max_rel_err;
    if (!worst_param.empty()) out << " at " << worst_param;
    for (std::size_t i = 0; i < failures.size() && i < 8; ++i) {
        const GradCheckEntry& e = failures[i];
        out << "\n  " << e.param << "[" << e.index << "] ad=" << e.g_ad << " fd=" << e.g_fd
            << " rel=" << e.rel_err;
    }
    if (failures.size() > 8) out << "\n  ... " << failures.size() - 8 << " more failures";
    return out.str();
}

GradCheckReport grad_check(const LossFragment& fragment, const ParamStore& params,
                           double tolerance, double h) {
    if (!(h > 0)) throw ValidationError("grad_check step h must be positive");
    ParamStore grads;
    fragment(params, &grads, nullptr);

    GradCheckReport report;
    ParamStore work = params;
    for (const std::string& name : params.names()) {
        const Tensor& g_ad_tensor = grads.tensor(name);
        Tensor& wt = work.tensor(name);
        for (std::size_t i = 0; i < wt.numel(); ++i) {
            double orig = wt[i];
            std::uint64_t s_plus = 0, s_minus = 0;
            wt[i] = orig + h;
            double f_plus = fragment(work, nullptr, &s_plus);
            wt[i] = orig - h;
            double f_minus = fragment(work, nullptr, &s_minus);
            wt[i] = orig;
            if (s_plus != s_minus) {
                ++report.n_skipped;
                continue;
            }
            double g_fd = (f_plus - f_minus) / (2.0 * h);
            double g_ad = g_ad_tensor[i];
            double rel =
                std::abs(g_ad - g_fd) / std::max({std::abs(g_ad), std::abs(g_fd), 1e-8});
            ++report.n_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name + "[" + std::to_string(i) + "]";
            }
            if (rel >= tolerance) {
                report.pass = false;
                report.failures.push_back({name, i, g_ad, g_fd, rel});
            }
        }
    }
    return report;
}

}  // namespace trackattr
