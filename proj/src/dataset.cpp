#include "sysid/dataset.hpp"

#include <string>

#include "sysid/error.hpp"

namespace sysid {

Eigen::Index Dataset::total_samples() const
{
    Eigen::Index n = 0;
    for (const auto& e : experiments) n += e.length();
    return n;
}

void Dataset::validate() const
{
    for (std::size_t j = 0; j < experiments.size(); ++j) {
        const auto& e = experiments[j];
        const std::string where = "experiment " + std::to_string(j);
        if (e.U.rows() != e.Y.rows()) throw DimensionError("data", where + ": U and Y lengths differ");
        if (e.U.cols() != n_u()) throw DimensionError("U", where + ": input count differs from experiment 0");
        if (e.Y.cols() != n_y()) throw DimensionError("Y", where + ": output count differs from experiment 0");
        if (!e.U.allFinite() || !e.Y.allFinite()) throw DimensionError("data", where + ": non-finite sample");
    }
}

} // namespace sysid
