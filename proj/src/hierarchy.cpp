#include "har/hierarchy.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "har/errors.hpp"
#include "har/serialize.hpp"

namespace har {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Hierarchy::Hierarchy(std::vector<std::string> coarse_names,
                     std::vector<std::string> fine_names,
                     std::vector<int> fine_to_coarse)
    : coarse_names_(std::move(coarse_names)),
      fine_names_(std::move(fine_names)),
      fine_to_coarse_(std::move(fine_to_coarse)) {
  if (coarse_names_.empty())
    throw ParseError("hierarchy needs at least one coarse class");
  if (fine_names_.size() != fine_to_coarse_.size())
    throw ParseError("fine name and mapping lengths differ");
  coarse_to_fine_.assign(coarse_names_.size(), {});
  for (std::size_t y = 0; y < fine_to_coarse_.size(); ++y) {
    const int z = fine_to_coarse_[y];
    if (z < 0 || z >= coarse_count())
      throw ParseError("fine label maps to unknown coarse id " +
                       std::to_string(z));
    coarse_to_fine_[static_cast<std::size_t>(z)].push_back(
        static_cast<int>(y));
  }
  for (std::size_t z = 0; z < coarse_to_fine_.size(); ++z)
    if (coarse_to_fine_[z].empty())
      throw ParseError("coarse class '" + coarse_names_[z] +
                       "' has no fine members");
}

int Hierarchy::coarse_of(int fine) const {
  if (fine < 0 || fine >= fine_count())
    throw DomainError("fine id " + std::to_string(fine) + " outside [0, " +
                      std::to_string(fine_count()) + ")");
  return fine_to_coarse_[static_cast<std::size_t>(fine)];
}

const std::vector<int>& Hierarchy::fines_of(int coarse) const {
  if (coarse < 0 || coarse >= coarse_count())
    throw DomainError("coarse id " + std::to_string(coarse) +
                      " outside [0, " + std::to_string(coarse_count()) + ")");
  return coarse_to_fine_[static_cast<std::size_t>(coarse)];
}

std::vector<int> Hierarchy::candidate_targets(int y_star) const {
  const int z_star = coarse_of(y_star);
  std::vector<int> s;
  s.reserve(static_cast<std::size_t>(fine_count()));
  for (int y = 0; y < fine_count(); ++y)
    if (fine_to_coarse_[static_cast<std::size_t>(y)] != z_star)
      s.push_back(y);
  return s;
}

Hierarchy::ChanceBaseline Hierarchy::random_coarse_chance(int y_star) const {
  if (fine_count() < 2)
    throw DomainError("chance baseline needs at least 2 fine classes");
  const double s = static_cast<double>(candidate_targets(y_star).size());
  return ChanceBaseline{s / static_cast<double>(fine_count() - 1),
                        1.0 / static_cast<double>(coarse_count())};
}

std::string Hierarchy::to_text() const {
  std::ostringstream out;
  for (int z = 0; z < coarse_count(); ++z) {
    out << coarse_names_[static_cast<std::size_t>(z)] << ": ";
    const auto& members = coarse_to_fine_[static_cast<std::size_t>(z)];
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i) out << ", ";
      out << fine_names_[static_cast<std::size_t>(members[i])];
    }
    out << "\n";
  }
  return out.str();
}

std::uint64_t Hierarchy::hash() const { return fnv1a64(to_text()); }

Hierarchy parse_hierarchy(const std::string& text) {
  std::vector<std::string> coarse_names;
  std::vector<std::string> fine_names;
  std::vector<int> fine_to_coarse;
  std::unordered_set<std::string> seen_coarse;
  std::unordered_set<std::string> seen_fine;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash_pos = raw.find('#'); hash_pos != std::string::npos)
      raw.erase(hash_pos);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 'coarse: fine, ...'");
    const std::string coarse = trim(line.substr(0, colon));
    if (coarse.empty())
      throw ParseError("line " + std::to_string(line_no) +
                       ": empty coarse name");
    if (!seen_coarse.insert(coarse).second)
      throw ParseError("line " + std::to_string(line_no) +
                       ": duplicate coarse class '" + coarse + "'");
    const int coarse_id = static_cast<int>(coarse_names.size());
    coarse_names.push_back(coarse);

    std::size_t members = 0;
    std::istringstream rest(line.substr(colon + 1));
    std::string token;
    while (std::getline(rest, token, ',')) {
      const std::string fine = trim(token);
      if (fine.empty()) continue;
      if (!seen_fine.insert(fine).second)
        throw ParseError("line " + std::to_string(line_no) +
                         ": duplicate fine class '" + fine + "'");
      fine_names.push_back(fine);
      fine_to_coarse.push_back(coarse_id);
      ++members;
    }
    if (members == 0)
      throw ParseError("line " + std::to_string(line_no) +
                       ": coarse class '" + coarse + "' has no fine members");
  }
  if (coarse_names.empty())
    throw ParseError("hierarchy text contains no coarse classes");
  return Hierarchy(std::move(coarse_names), std::move(fine_names),
                   std::move(fine_to_coarse));
}

Hierarchy load_hierarchy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open hierarchy file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_hierarchy(buf.str());
}

void save_hierarchy(const Hierarchy& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IntegrityError("cannot open " + path.string() + " for writing");
  out << h.to_text();
  if (!out) throw IntegrityError("write failed for " + path.string());
}

}  // namespace har
