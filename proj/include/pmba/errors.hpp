#pragma once

#include <stdexcept>
#include <string>

namespace pmba {

struct NonPositiveDepth : std::runtime_error {
    explicit NonPositiveDepth(double depth)
        : std::runtime_error("point has non-positive camera depth " + std::to_string(depth)) {}
};

struct SingularRotation : std::runtime_error {
    SingularRotation() : std::runtime_error("rotation angle at pi, log map axis is ambiguous") {}
};

struct Underdetermined : std::runtime_error {
    explicit Underdetermined(const std::string& what) : std::runtime_error(what) {}
};

struct SolverDiverged : std::runtime_error {
    SolverDiverged() : std::runtime_error("damping exceeded 1e12 without an accepted step") {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
    ParseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    int line_number;
};

struct NonMonotonicTimestamps : std::runtime_error {
    explicit NonMonotonicTimestamps(int line)
        : std::runtime_error("line " + std::to_string(line) + ": timestamps must strictly increase") {}
};

struct InvalidBox : std::runtime_error {
    explicit InvalidBox(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateConfiguration : std::runtime_error {
    explicit DegenerateConfiguration(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientPairs : std::runtime_error {
    explicit InsufficientPairs(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySeries : std::runtime_error {
    EmptySeries() : std::runtime_error("cannot summarize an empty error series") {}
};

struct EmptyScene : std::runtime_error {
    EmptyScene() : std::runtime_error("no landmark is ever visible in the generated scene") {}
};

}  // namespace pmba
