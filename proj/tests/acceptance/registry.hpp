// SPDX-License-Identifier: BSD-3-Clause

#ifndef ACCEPTANCE_REGISTRY_HPP
#define ACCEPTANCE_REGISTRY_HPP

#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

/** One acceptance criterion: fn runs the checks and may append detail text;
 *  any exception marks the criterion failed. */
struct Criterion {
    int id;
    const char* title;
    std::function<void(std::string& detail)> fn;
};

const std::vector<Criterion>& criteria();

/** Assert helper: throws with location and message when `cond` is false. */
#define ACCEPT(cond, message)                                                                  \
    do {                                                                                       \
        if (!(cond)) {                                                                         \
            std::ostringstream oss_;                                                           \
            oss_ << message << " [" << #cond << " @ " << __FILE__ << ":" << __LINE__ << "]";   \
            throw std::runtime_error(oss_.str());                                              \
        }                                                                                      \
    } while (0)

#endif
