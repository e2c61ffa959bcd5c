#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace wztt {

using WarningHandler = std::function<void(std::string_view)>;

/// Emit a non-fatal warning. Goes to stderr unless a handler is installed.
void warn(std::string_view message);

/// Install a handler (empty restores stderr). Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);

/// Scoped capture of warnings, used by tests and the pipeline manifest.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view needle) const;

 private:
  std::vector<std::string> messages_;
  WarningHandler previous_;
};

}  // namespace wztt
