#ifndef ACTLOC_ERRORS_HPP
#define ACTLOC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace actloc {

// Malformed input file or stream.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally well-formed input that violates a model invariant
// (negative probability, CPT row not normalized, bad configuration, ...).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Every state was pruned to zero probability at some frame, e.g. under
// contradictory hard evidence.
class InferenceCollapseError : public std::runtime_error {
public:
    InferenceCollapseError(int frame, const std::string& what)
        : std::runtime_error(what), frame_(frame) {}
    int frame() const { return frame_; }

private:
    int frame_;
};

// Weak-learner training found no usable split (all samples identical in
// every feature).
class NoSplitError : public std::runtime_error {
public:
    explicit NoSplitError(const std::string& what) : std::runtime_error(what) {}
};

// Best achievable weighted stump error is >= 0.5; boosting cannot proceed.
class BoostingStallError : public std::runtime_error {
public:
    explicit BoostingStallError(const std::string& what) : std::runtime_error(what) {}
};

// World generation could not place the requested buildings.
class PlacementError : public std::runtime_error {
public:
    explicit PlacementError(const std::string& what) : std::runtime_error(what) {}
};

// A simulation script requests a forbidden state/environment combination.
class InvalidScriptError : public std::runtime_error {
public:
    explicit InvalidScriptError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace actloc

#endif
