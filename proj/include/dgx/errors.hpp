#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dgx {

// Position inside a grammar source file, 1-based. line == 0 means "no location".
struct SourceLoc {
    int line = 0;
    int col = 0;
};

// Base class for everything thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnboundVariable : public Error {
public:
    explicit UnboundVariable(const std::string& var)
        : Error("unbound variable '" + var + "'"), name(var) {}
    std::string name;
};

class DomainError : public Error {
public:
    DomainError(SourceLoc where, const std::string& reason)
        : Error("domain error: " + reason), loc(where) {}
    SourceLoc loc;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

// Survivor probability fell below eps_survivor: the delay has essentially
// surely fired and the hazard ratio is no longer meaningful.
class SurvivorUnderflow : public Error {
public:
    explicit SurvivorUnderflow(double survivor)
        : Error("survivor probability underflow (" + std::to_string(survivor) + ")"),
          remaining(survivor) {}
    double remaining;
};

class SyntaxError : public Error {
public:
    SyntaxError(SourceLoc where, const std::string& message)
        : Error(std::to_string(where.line) + ":" + std::to_string(where.col) + ": " + message),
          loc(where), reason(message) {}
    SourceLoc loc;
    std::string reason;
};

class SortError : public Error {
public:
    SortError(SourceLoc where, const std::string& message)
        : Error(std::to_string(where.line) + ":" + std::to_string(where.col) + ": " + message),
          loc(where), reason(message) {}
    SourceLoc loc;
    std::string reason;
};

class DeclarationConflict : public Error {
public:
    using Error::Error;
};

class UnknownTerm : public Error {
public:
    explicit UnknownTerm(std::uint64_t id)
        : Error("unknown term id " + std::to_string(id)), term_id(id) {}
    std::uint64_t term_id;
};

class StaleMatch : public Error {
public:
    using Error::Error;
};

class NotAnSPG : public Error {
public:
    using Error::Error;
};

class NotCountBased : public Error {
public:
    using Error::Error;
};

class CapTooLarge : public Error {
public:
    using Error::Error;
};

class PropensityError : public Error {
public:
    using Error::Error;
};

class OdeFailure : public Error {
public:
    using Error::Error;
};

class ReplayMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace dgx
