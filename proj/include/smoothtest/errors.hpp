#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace smoothtest {

// Exit-code mapping used by the CLI: data_error -> 2, numeric_error and
// derived -> 3, integrity_error -> 4.

struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invalid_interval_error : numeric_error {
    using numeric_error::numeric_error;
};

struct not_positive_definite_error : numeric_error {
    using numeric_error::numeric_error;
};

struct parameter_error : numeric_error {
    using numeric_error::numeric_error;
};

struct estimation_failure_error : numeric_error {
    using numeric_error::numeric_error;
};

struct convergence_error : estimation_failure_error {
    std::vector<double> best_iterate;
    convergence_error(const std::string& msg, std::vector<double> best)
        : estimation_failure_error(msg), best_iterate(std::move(best)) {}
};

struct support_mismatch_error : numeric_error {
    using numeric_error::numeric_error;
};

struct support_violation_error : data_error {
    using data_error::data_error;
};

struct evaluation_error : numeric_error {
    using numeric_error::numeric_error;
};

struct span_degeneracy_error : numeric_error {
    using numeric_error::numeric_error;
};

struct degenerate_line_error : numeric_error {
    using numeric_error::numeric_error;
};

struct complexity_guard_error : numeric_error {
    using numeric_error::numeric_error;
};

struct integrity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct format_error : data_error {
    using data_error::data_error;
};

}  // namespace smoothtest
