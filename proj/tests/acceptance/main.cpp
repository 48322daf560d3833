// SPDX-License-Identifier: BSD-3-Clause

#include "acceptance/registry.hpp"

#include <cstdio>
#include <exception>

int main()
{
    int failures = 0;
    for (const Criterion& c : criteria()) {
        std::string detail;
        bool ok = true;
        try {
            c.fn(detail);
        } catch (const std::exception& e) {
            ok = false;
            if (!detail.empty()) {
                detail += "; ";
            }
            detail += e.what();
        }
        std::printf("criterion %2d [%s]: %s%s%s\n", c.id, c.title, ok ? "PASS" : "FAIL",
                    detail.empty() ? "" : " — ", detail.c_str());
        std::fflush(stdout);
        failures += ok ? 0 : 1;
    }
    if (failures > 0) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria().size());
    return 0;
}
