#pragma once

#include <doctest.h>

#include <filesystem>
#include <optional>
#include <string>

#include "indexprobe/error.hpp"

// Runs f and returns the toolkit error code it raised, if any.
template <class F>
std::optional<indexprobe::ErrorCode> error_of(F&& f) {
    try {
        f();
    } catch (const indexprobe::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

#define CHECK_RAISES(expr, code) CHECK(error_of([&] { (void)(expr); }) == indexprobe::ErrorCode::code)

inline std::filesystem::path fixture(const std::string& rel) {
    return std::filesystem::path(INDEXPROBE_FIXTURES) / rel;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::path(INDEXPROBE_SCRATCH) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}
