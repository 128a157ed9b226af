#include "excursion/error.hpp"

#include <iostream>
#include <mutex>

namespace excursion {

FactorizationError::FactorizationError(std::size_t row, const std::string& what)
    : Error(what + " (row " + std::to_string(row) + ")"), row_(row) {}

namespace {
std::mutex sink_mutex;
WarningSink current_sink;
} // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex);
    current_sink = std::move(sink);
}

void warn(const std::string& message) {
    std::lock_guard lock(sink_mutex);
    if (current_sink)
        current_sink(message);
    else
        std::cerr << "warning: " << message << '\n';
}

} // namespace excursion
