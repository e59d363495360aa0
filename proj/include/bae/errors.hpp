#ifndef BAE_ERRORS_HPP
#define BAE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bae {

/// Broad failure classes. The CLI maps each one to a process exit code.
enum class ErrorKind { config, dimension, numeric, training, ingestion, persistence };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::dimension, what) {}
};

/// A non-finite value showed up. `term` names the quantity that blew up.
struct NumericError : Error {
  NumericError(const std::string& term, const std::string& what)
      : Error(ErrorKind::numeric, what), term(term) {}
  std::string term;
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error(ErrorKind::training, what) {}
};

struct IngestionError : Error {
  explicit IngestionError(const std::string& what) : Error(ErrorKind::ingestion, what) {}
};

struct PersistenceError : Error {
  explicit PersistenceError(const std::string& what) : Error(ErrorKind::persistence, what) {}
};

}  // namespace bae

#endif  // BAE_ERRORS_HPP
