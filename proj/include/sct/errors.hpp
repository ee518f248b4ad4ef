#ifndef SCT_ERRORS_HPP
#define SCT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sct {

struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidConfig : std::runtime_error {
    explicit InvalidConfig(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IncompatibleCheckpoint : std::runtime_error {
    explicit IncompatibleCheckpoint(const std::string& msg) : std::runtime_error(msg) {}
};

struct CorruptCheckpoint : std::runtime_error {
    explicit CorruptCheckpoint(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyCorpus : std::runtime_error {
    explicit EmptyCorpus(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnknownSymbol : std::runtime_error {
    explicit UnknownSymbol(const std::string& msg) : std::runtime_error(msg) {}
};

struct IncompatibleModel : std::runtime_error {
    explicit IncompatibleModel(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoFeasibleWord : std::runtime_error {
    explicit NoFeasibleWord(const std::string& msg) : std::runtime_error(msg) {}
};

struct TooLargeForOracle : std::runtime_error {
    explicit TooLargeForOracle(const std::string& msg) : std::runtime_error(msg) {}
};

struct InfeasibleTarget : std::runtime_error {
    explicit InfeasibleTarget(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sct

#endif  // SCT_ERRORS_HPP
