#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace har {

// Two-level coarse/fine label partition. Fine ids are globally ordered
// by (coarse id, position within the coarse line); every fine label
// belongs to exactly one coarse class.
class Hierarchy {
 public:
  Hierarchy() = default;
  Hierarchy(std::vector<std::string> coarse_names,
            std::vector<std::string> fine_names,
            std::vector<int> fine_to_coarse);

  int coarse_count() const { return static_cast<int>(coarse_names_.size()); }
  int fine_count() const { return static_cast<int>(fine_names_.size()); }

  const std::vector<std::string>& coarse_names() const { return coarse_names_; }
  const std::vector<std::string>& fine_names() const { return fine_names_; }

  int coarse_of(int fine) const;
  const std::vector<int>& fines_of(int coarse) const;

  // S = { y : coarse_of(y) != coarse_of(y_star) }, ascending; empty for
  // a single-coarse hierarchy.
  std::vector<int> candidate_targets(int y_star) const;

  struct ChanceBaseline {
    double cross_coarse_fraction;  // |S| / (fine_count - 1)
    double coarse_correct_chance;  // 1 / coarse_count
  };
  ChanceBaseline random_coarse_chance(int y_star) const;

  std::string to_text() const;
  std::uint64_t hash() const;

 private:
  std::vector<std::string> coarse_names_;
  std::vector<std::string> fine_names_;
  std::vector<int> fine_to_coarse_;
  std::vector<std::vector<int>> coarse_to_fine_;
};

// Line format: `coarse_name: fine1, fine2, ...`; `#` starts a comment;
// blank lines ignored. Throws ParseError with a line number on
// duplicates or empty coarse classes.
Hierarchy parse_hierarchy(const std::string& text);
Hierarchy load_hierarchy(const std::filesystem::path& path);
void save_hierarchy(const Hierarchy& h, const std::filesystem::path& path);

}  // namespace har
