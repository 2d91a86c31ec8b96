#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hotspot {

// Exit codes shared by the command-line front end.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept = 0;
};

class UsageError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

class DataError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::data; }
};

class NumericError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::numeric; }
};

class OutOfMaskError : public DataError {
public:
    OutOfMaskError(double x, double y)
        : DataError("point (" + std::to_string(x) + ", " + std::to_string(y) +
                    ") lies outside the city mask"),
          x_(x), y_(y) {}
    double x() const noexcept { return x_; }
    double y() const noexcept { return y_; }

private:
    double x_;
    double y_;
};

class InsufficientHistoryError : public DataError {
public:
    InsufficientHistoryError(int requested_week, int earliest_week)
        : DataError("insufficient history for week " + std::to_string(requested_week) +
                    "; earliest feasible week is " + std::to_string(earliest_week)),
          earliest_(earliest_week) {}
    int earliest_feasible_week() const noexcept { return earliest_; }

private:
    int earliest_;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, int iterations, double last_value)
        : NumericError(what + " did not converge after " + std::to_string(iterations) +
                       " iterations (last value " + std::to_string(last_value) + ")"),
          iterations_(iterations), last_value_(last_value) {}
    int iterations() const noexcept { return iterations_; }
    double last_value() const noexcept { return last_value_; }

private:
    int iterations_;
    double last_value_;
};

class RankDeficiencyError : public NumericError {
public:
    explicit RankDeficiencyError(std::vector<std::string> columns)
        : NumericError(describe(columns)), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    static std::string describe(const std::vector<std::string>& cols) {
        std::string s = "design matrix is rank deficient; collinear columns:";
        for (const auto& c : cols) s += " [" + c + "]";
        return s;
    }
    std::vector<std::string> columns_;
};

// A command was run before the one that produces its inputs.
class PrerequisiteError : public DataError {
public:
    PrerequisiteError(const std::string& missing, const std::string& command)
        : DataError("missing " + missing + "; run `" + command + "` first"),
          command_(command) {}
    const std::string& command() const noexcept { return command_; }

private:
    std::string command_;
};

}  // namespace hotspot
