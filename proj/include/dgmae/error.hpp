#pragma once

#include <stdexcept>
#include <string>

namespace dgmae {

// Machine-checkable reason attached to every dgmae exception.
enum class Errc {
    malformed_header,
    bad_value,
    non_symmetric_edge_list,
    index_out_of_range,
    self_loop,
    duplicate_edge,
    dimension_mismatch,
    empty_edge_set,
    infeasible_spec,
    empty_subset,
    not_normalized,
    bad_config,
    bad_checkpoint,
    non_finite,
    single_class_train_set,
    unknown_variant,
    empty_grid,
    io_failure,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }
    // Process exit code for the CLI: 2 usage, 3 data, 4 numerical.
    virtual int exit_code() const noexcept { return 3; }

private:
    Errc code_;
};

// Bad flags, bad config schema, out-of-range settings.
class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

// Malformed or inconsistent data: files, shapes, labels, indices.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

// NaN/Inf or a diverged computation.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace dgmae
