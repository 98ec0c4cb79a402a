#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trackattr/params.hpp"

namespace trackattr {

// Evaluates a scalar loss for the given parameters. When `grads` is non-null
// the fragment must fill it with one gradient tensor per parameter (same
// names and shapes). When `structure` is non-null the fragment must store the
// tape's structure hash of the evaluation.
using LossFragment =
    std::function<double(const ParamStore& params, ParamStore* grads, std::uint64_t* structure)>;

struct GradCheckEntry {
    std::string param;
    std::size_t index = 0;
    double g_ad = 0.0;
    double g_fd = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t n_checked = 0;
    std::size_t n_skipped = 0;
    std::vector<GradCheckEntry> failures;

    std::string to_text() const;
};

// Central finite differences against the fragment's reverse-mode gradients.
// rel_err = |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8). Elements whose +h/-h
// evaluations disagree on the tape structure hash are skipped: their
// difference window straddles a relu/maxpool/l2 kink (or sits within kKinkEps
// of one, which flips the hash's near-kink bits).
GradCheckReport grad_check(const LossFragment& fragment, const ParamStore& params,
                           double tolerance, double h = 1e-4);

}  // namespace trackattr
