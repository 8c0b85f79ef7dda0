#pragma once

#include <stdexcept>
#include <string>

namespace reformkit {

/// Root of every error thrown by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad input data, files, templates or configuration. The CLI maps these to exit status 2.
class DataError : public Error {
  public:
    using Error::Error;
};

/// LLM or searcher failure that survived the retry policy. CLI exit status 3.
class BackendError : public Error {
  public:
    using Error::Error;
};

/// Caller misuse of an API (unknown names, missing required handles). CLI exit status 1.
class UsageError : public Error {
  public:
    using Error::Error;
};

class IoError : public DataError {
  public:
    using DataError::DataError;
};

class MalformedLine : public DataError {
  public:
    MalformedLine(std::string path, std::size_t line, const std::string& detail)
        : DataError(path + ":" + std::to_string(line) + ": malformed line: " + detail),
          path_(std::move(path)),
          line_(line) {}

    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

  private:
    std::string path_;
    std::size_t line_;
};

/// A qid or docid appeared twice in one file.
class DuplicateId : public DataError {
  public:
    DuplicateId(const std::string& kind, std::string id, std::size_t first_line, std::size_t second_line)
        : DataError("duplicate " + kind + " '" + id + "' on lines " + std::to_string(first_line) + " and " +
                    std::to_string(second_line)),
          id_(std::move(id)),
          first_line_(first_line),
          second_line_(second_line) {}

    const std::string& id() const noexcept { return id_; }
    std::size_t first_line() const noexcept { return first_line_; }
    std::size_t second_line() const noexcept { return second_line_; }

  private:
    std::string id_;
    std::size_t first_line_;
    std::size_t second_line_;
};

class DuplicateQid : public DuplicateId {
  public:
    DuplicateQid(std::string id, std::size_t first_line, std::size_t second_line)
        : DuplicateId("qid", std::move(id), first_line, second_line) {}
};

class DuplicateDocid : public DuplicateId {
  public:
    DuplicateDocid(std::string id, std::size_t first_line, std::size_t second_line)
        : DuplicateId("docid", std::move(id), first_line, second_line) {}
};

class MixedLayout : public DataError {
  public:
    using DataError::DataError;
};

/// Missing or mistyped field in a YAML/JSON document. `where` is a file or a field path.
class SchemaError : public DataError {
  public:
    SchemaError(std::string where, const std::string& detail)
        : DataError(where + ": " + detail), where_(std::move(where)) {}

    const std::string& where() const noexcept { return where_; }

  private:
    std::string where_;
};

class UndeclaredPlaceholder : public DataError {
  public:
    using DataError::DataError;
};

class DuplicateVersion : public DataError {
  public:
    using DataError::DataError;
};

class UnknownTemplate : public DataError {
  public:
    using DataError::DataError;
};

class UnknownVersion : public DataError {
  public:
    using DataError::DataError;
};

class MissingVariable : public DataError {
  public:
    explicit MissingVariable(std::string name)
        : DataError("missing template variable '" + name + "'"), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

  private:
    std::string name_;
};

class EmptyCorpus : public DataError {
  public:
    using DataError::DataError;
};

class IndexFormatError : public DataError {
  public:
    using DataError::DataError;
};

class AllMissing : public DataError {
  public:
    using DataError::DataError;
};

class MissingRetrievalConfig : public DataError {
  public:
    using DataError::DataError;
};

class AuthError : public BackendError {
  public:
    using BackendError::BackendError;
};

class BadRequest : public BackendError {
  public:
    using BackendError::BackendError;
};

class ExhaustedRetries : public BackendError {
  public:
    ExhaustedRetries(const std::string& what, int last_status)
        : BackendError(what), last_status_(last_status) {}

    /// HTTP status of the final attempt, or 0 for a transport failure.
    int last_status() const noexcept { return last_status_; }

  private:
    int last_status_;
};

class EmptyResponse : public BackendError {
  public:
    using BackendError::BackendError;
};

class ScriptExhausted : public BackendError {
  public:
    using BackendError::BackendError;
};

class RemoteError : public BackendError {
  public:
    using BackendError::BackendError;
};

class DuplicateRegistration : public UsageError {
  public:
    using UsageError::UsageError;
};

class UnknownSearcher : public UsageError {
  public:
    using UsageError::UsageError;
};

class UnknownMethod : public UsageError {
  public:
    using UsageError::UsageError;
};

class MissingSearcher : public UsageError {
  public:
    using UsageError::UsageError;
};

class InvalidParam : public UsageError {
  public:
    using UsageError::UsageError;
};

}  // namespace reformkit
