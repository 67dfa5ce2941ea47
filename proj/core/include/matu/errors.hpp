#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace matu {

// Base for all library errors. `kind()` is a stable machine-readable tag;
// `category()` drives the CLI exit code (data -> 2, numerical -> 3).
class Error : public std::runtime_error {
public:
  enum class Category { data, numerical };

  Error(std::string kind, Category cat, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)), category_(cat) {}

  const std::string& kind() const noexcept { return kind_; }
  Category category() const noexcept { return category_; }

private:
  std::string kind_;
  Category category_;
};

struct DataError : Error {
  DataError(std::string kind, const std::string& msg)
      : Error(std::move(kind), Category::data, msg) {}
};

struct NumericalError : Error {
  NumericalError(std::string kind, const std::string& msg)
      : Error(std::move(kind), Category::numerical, msg) {}
};

// -- trajectory ingestion ----------------------------------------------------

struct MalformedLine : DataError {
  std::size_t line_no;
  MalformedLine(std::size_t line, const std::string& detail)
      : DataError("MalformedLine",
                  "line " + std::to_string(line) + ": " + detail),
        line_no(line) {}
};

struct SchemaViolation : DataError {
  std::string field;
  SchemaViolation(std::string f, const std::string& detail)
      : DataError("SchemaViolation", detail + " (field: " + f + ")"),
        field(std::move(f)) {}
};

struct DuplicateRun : DataError {
  std::string task_id;
  int run_index;
  DuplicateRun(std::string task, int run)
      : DataError("DuplicateRun", "task " + task + " has duplicate run_index " +
                                      std::to_string(run)),
        task_id(std::move(task)), run_index(run) {}
};

// -- embedding gateway -------------------------------------------------------

struct ServiceUnavailable : DataError {
  explicit ServiceUnavailable(const std::string& msg)
      : DataError("ServiceUnavailable", msg) {}
};

struct DimensionMismatch : DataError {
  explicit DimensionMismatch(const std::string& msg)
      : DataError("DimensionMismatch", msg) {}
};

struct ZeroVector : DataError {
  explicit ZeroVector(const std::string& msg) : DataError("ZeroVector", msg) {}
};

struct CorruptCacheFile : DataError {
  std::uint64_t offset;
  CorruptCacheFile(std::uint64_t off, const std::string& detail)
      : DataError("CorruptCacheFile",
                  detail + " (offset " + std::to_string(off) + ")"),
        offset(off) {}
};

// -- tensor / solver ---------------------------------------------------------

struct EmptyTensor : DataError {
  explicit EmptyTensor(const std::string& msg) : DataError("EmptyTensor", msg) {}
};

struct ShapeMismatch : DataError {
  explicit ShapeMismatch(const std::string& msg)
      : DataError("ShapeMismatch", msg) {}
};

struct InfeasibleRank : DataError {
  explicit InfeasibleRank(const std::string& msg)
      : DataError("InfeasibleRank", msg) {}
};

struct NumericalBreakdown : NumericalError {
  explicit NumericalBreakdown(const std::string& msg)
      : NumericalError("NumericalBreakdown", msg) {}
};

struct MissingComponent : DataError {
  explicit MissingComponent(const std::string& msg)
      : DataError("MissingComponent", msg) {}
};

// -- baselines ---------------------------------------------------------------

struct SingularDegree : NumericalError {
  explicit SingularDegree(const std::string& msg)
      : NumericalError("SingularDegree", msg) {}
};

// -- evaluation --------------------------------------------------------------

struct DegenerateLabels : DataError {
  explicit DegenerateLabels(const std::string& msg)
      : DataError("DegenerateLabels", msg) {}
};

struct NoOverlap : DataError {
  explicit NoOverlap(const std::string& msg) : DataError("NoOverlap", msg) {}
};

struct EmptyCandidates : DataError {
  explicit EmptyCandidates(const std::string& msg)
      : DataError("EmptyCandidates", msg) {}
};

// -- synthetic ---------------------------------------------------------------

struct InfeasibleSpec : DataError {
  explicit InfeasibleSpec(const std::string& msg)
      : DataError("InfeasibleSpec", msg) {}
};

}  // namespace matu
