#pragma once

#include <cstdarg>
#include <cstdio>
#include <sstream>
#include <string>

namespace advrep {

// Log level is set once from the ADVREP_LOG environment variable
// (error|warn|info|debug, default info).
enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level();
void set_log_level(LogLevel level);
void log_line(LogLevel level, const std::string& msg);

namespace detail {
class LogStream {
 public:
  explicit LogStream(LogLevel level) : level_(level) {}
  ~LogStream() { log_line(level_, os_.str()); }
  template <typename T>
  LogStream& operator<<(const T& v) {
    os_ << v;
    return *this;
  }
  __attribute__((format(printf, 2, 3))) LogStream& operator()(const char* fmt,
                                                              ...) {
    va_list ap;
    va_start(ap, fmt);
    char buf[1024];
    vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    os_ << buf;
    return *this;
  }

 private:
  LogLevel level_;
  std::ostringstream os_;
};
}  // namespace detail

}  // namespace advrep

#define LOG_ERROR ::advrep::detail::LogStream(::advrep::LogLevel::kError)
#define LOG_WARN ::advrep::detail::LogStream(::advrep::LogLevel::kWarn)
#define LOG_INFO ::advrep::detail::LogStream(::advrep::LogLevel::kInfo)
#define LOG_DEBUG ::advrep::detail::LogStream(::advrep::LogLevel::kDebug)
