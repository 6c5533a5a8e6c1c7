#pragma once

#include <stdexcept>
#include <string>

namespace mvmr {

/// Failure categories shared by every module. The CLI maps them onto exit codes.
enum class ErrorKind {
    Argument,         // caller passed values outside the documented contract
    Format,           // malformed input file or text
    Duplicate,        // repeated key in an input table
    Lookup,           // unknown node / SNP / gene name
    StructuralCycle,  // (I - C) singular
    PathOverflow,     // path enumeration exceeded the node cap
    Combinatorial,    // witness search too large
    Underdetermined,  // rank-deficient instrument-exposure covariance
    IllConditionedLd, // near-singular LD matrix
    WeakInstrument,   // instrument covariance below tolerance
    Feasibility,      // genotype model cannot reach the requested moments
    Degenerate,       // sampling produced unusable data (e.g. monomorphic SNP)
    Conditioning,     // collinear exposures in conditional F
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Format: return "format";
    case ErrorKind::Duplicate: return "duplicate";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::StructuralCycle: return "structural-cycle";
    case ErrorKind::PathOverflow: return "path-overflow";
    case ErrorKind::Combinatorial: return "combinatorial";
    case ErrorKind::Underdetermined: return "underdetermined";
    case ErrorKind::IllConditionedLd: return "ill-conditioned-ld";
    case ErrorKind::WeakInstrument: return "weak-instrument";
    case ErrorKind::Feasibility: return "feasibility";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Conditioning: return "conditioning";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace mvmr
