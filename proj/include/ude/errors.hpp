#pragma once

#include <stdexcept>
#include <string>

namespace ude {

// Base for every error raised by the library. The CLI maps the concrete
// categories onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class TrainingError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class PreprocessError : public Error { public: using Error::Error; };
class MappingError : public Error { public: using Error::Error; };
class AudioError : public Error { public: using Error::Error; };
class TokenError : public Error { public: using Error::Error; };
class LengthError : public Error { public: using Error::Error; };
class MetricError : public Error { public: using Error::Error; };
class DependencyError : public Error { public: using Error::Error; };

}  // namespace ude
