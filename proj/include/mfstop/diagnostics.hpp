#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mfstop {

/// Raised when an iteration produces NaN/inf. Carries the offending iterate.
class NumericFailure : public std::runtime_error {
public:
    NumericFailure(const std::string& what, std::vector<double> iterate = {})
        : std::runtime_error(what), iterate_(std::move(iterate)) {}

    const std::vector<double>& iterate() const noexcept { return iterate_; }

private:
    std::vector<double> iterate_;
};

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the process-wide warning sink (default: stderr). Returns the old one.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);
std::size_t warning_count() noexcept;

}  // namespace mfstop
