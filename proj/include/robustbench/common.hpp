#ifndef ROBUSTBENCH_COMMON_HPP
#define ROBUSTBENCH_COMMON_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace robustbench
{

inline constexpr const char *kVersion = "0.3.0";

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Errors. Everything thrown by the library derives from Error; DataError marks
// problems with the inputs (exit code 2 at the CLI), everything else is a
// runtime failure.

class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error
{
  public:
    using Error::Error;
};

#define ROBUSTBENCH_DATA_ERROR(Name)                                                               \
    class Name : public DataError                                                                  \
    {                                                                                              \
      public:                                                                                      \
        using DataError::DataError;                                                                \
    }

ROBUSTBENCH_DATA_ERROR(MissingFileError);
ROBUSTBENCH_DATA_ERROR(RowCountMismatchError);
ROBUSTBENCH_DATA_ERROR(NonFiniteValueError);
ROBUSTBENCH_DATA_ERROR(DuplicateSampleIdError);
ROBUSTBENCH_DATA_ERROR(ChecksumMismatchError);
ROBUSTBENCH_DATA_ERROR(FormatError);
ROBUSTBENCH_DATA_ERROR(InvariantError);
ROBUSTBENCH_DATA_ERROR(InsufficientCellError);
ROBUSTBENCH_DATA_ERROR(InsufficientNeighborsError);
ROBUSTBENCH_DATA_ERROR(DimensionMismatchError);
ROBUSTBENCH_DATA_ERROR(RangeError);
ROBUSTBENCH_DATA_ERROR(UndefinedValueError);
ROBUSTBENCH_DATA_ERROR(DegenerateInputError);
ROBUSTBENCH_DATA_ERROR(SpecError);

#undef ROBUSTBENCH_DATA_ERROR

class IoError : public Error
{
  public:
    using Error::Error;
};

class NumericalError : public Error
{
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging. Warnings go to standard error; tests can swap the sink.

using LogSink = std::function<void(std::string_view)>;

inline LogSink &log_sink()
{
    static LogSink sink = [](std::string_view msg) { std::cerr << "[robustbench] " << msg << '\n'; };
    return sink;
}

inline void log_warning(std::string_view msg)
{
    static std::mutex mu;
    std::lock_guard lock(mu);
    if (log_sink())
        log_sink()(msg);
}

// ---------------------------------------------------------------------------
// Threading

inline std::atomic<std::size_t> &thread_setting()
{
    static std::atomic<std::size_t> n{0};
    return n;
}

inline void set_thread_count(std::size_t n) { thread_setting() = n; }

inline std::size_t thread_count()
{
    std::size_t n = thread_setting();
    if (n > 0)
        return n;
    if (const char *env = std::getenv("ROBUSTBENCH_THREADS")) {
        std::size_t parsed = 0;
        auto [p, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), parsed);
        if (ec == std::errc() && parsed > 0)
            return parsed;
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers
/// write results into per-index slots so the outcome does not depend on the
/// thread count. The first exception thrown by any worker is rethrown.
template <class Fn> void parallel_for(std::size_t n, Fn &&fn)
{
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto &t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Random streams

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream index); used for per-replicate and
/// per-initialization randomness so parallel execution stays reproducible.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5EEDu};
    return Rng(seq);
}

/// Uniform index in [0, n) without relying on std::uniform_int_distribution,
/// whose output is implementation-defined.
inline std::size_t uniform_index(Rng &rng, std::size_t n)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

template <class T> void shuffle_in_place(std::vector<T> &v, Rng &rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

/// Standard normal draw (Marsaglia polar method) on top of the raw engine.
class NormalSampler
{
  public:
    double operator()(Rng &rng)
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = unit(rng) * 2.0 - 1.0;
            v = unit(rng) * 2.0 - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    static double unit(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

  private:
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Small helpers

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double x)
{
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, p);
}

inline std::string format_optional(const std::optional<double> &x)
{
    return x ? format_double(*x) : std::string();
}

struct IntRange
{
    int lo = 0;
    int hi = 0;

    [[nodiscard]] bool empty() const { return hi < lo; }
    [[nodiscard]] int size() const { return empty() ? 0 : hi - lo + 1; }
};

} // namespace robustbench

#endif
