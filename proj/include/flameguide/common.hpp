#pragma once

// Error types and little-endian binary helpers shared by every module.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <exception>
#include <istream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace flameguide {

/// Base for every error raised by the library. The CLI maps the subclasses
/// onto exit codes: UsageError -> 2, ValidationError -> 3, IoError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inputs whose shapes or contents violate a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Missing files, short reads, bad magic bytes.
class IoError : public Error {
public:
    using Error::Error;
};

/// Caller passed arguments outside an operation's preconditions.
class UsageError : public Error {
public:
    using Error::Error;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <class T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&v, bytes, sizeof(T));
    }
    return v;
}

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& os) : os_(os) {}

    void magic(std::string_view m) { os_.write(m.data(), static_cast<std::streamsize>(m.size())); }

    template <class T>
    void put(T v) {
        v = byteswap_if_big(v);
        os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    /// Narrows each value to float32.
    template <class Range>
    void put_f32(const Range& values) {
        for (auto v : values) put(static_cast<float>(v));
    }

    void check(const std::string& what) const {
        if (!os_) throw IoError("write failed: " + what);
    }

private:
    std::ostream& os_;
};

class BinaryReader {
public:
    BinaryReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

    void expect_magic(std::string_view m) {
        std::string got(m.size(), '\0');
        is_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (!is_ || got != m) throw IoError(source_ + ": bad magic, expected \"" + std::string(m) + "\"");
    }

    template <class T>
    T get() {
        T v{};
        is_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!is_) throw IoError(source_ + ": unexpected end of file");
        return byteswap_if_big(v);
    }

    std::vector<double> get_f32(std::size_t count) {
        std::vector<double> out(count);
        for (auto& v : out) v = static_cast<double>(get<float>());
        return out;
    }

    void expect_eof() {
        if (is_.peek() != std::char_traits<char>::eof()) throw IoError(source_ + ": trailing bytes after payload");
    }

private:
    std::istream& is_;
    std::string source_;
};

}  // namespace detail

/// Runs `fn(i)` for i in [0, count) on up to `jobs` threads. The first
/// exception thrown by any call is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace flameguide
