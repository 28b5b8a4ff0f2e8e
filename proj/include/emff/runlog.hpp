#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace emff {

// Plain CSV writer.  Numeric cells go through num() (%.17g) so logged runs
// are bit-exact reproducible; free-text cells (the argmin token) are written
// verbatim and must not contain commas.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void header(const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);

  static std::string num(double value);

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::string path_;
};

// Pretty-printed JSON sidecar (resolved config echo, kernel choice, summary).
void write_text_file(const std::string& path, const std::string& content);

}  // namespace emff
