#ifndef HEMBED_REPORT_HPP
#define HEMBED_REPORT_HPP

#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "hembed/common.hpp"
#include "hembed/metrics.hpp"

namespace hembed {

namespace detail {

// Metric values are rounded through the 9-significant-digit text form so the
// emitted JSON matches every other float surface of the tool set.
inline nlohmann::ordered_json json_metric(const std::optional<double>& v) {
  if (!v) return nullptr;
  return std::stod(format_sig9(*v));
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvalReport& report,
                                             const std::string& model_file,
                                             std::optional<uint64_t> seed) {
  nlohmann::ordered_json j;
  for (const char* section : {"auc", "spearman", "average_precision"}) {
    const auto& src = std::string(section) == "auc"          ? report.auc
                      : std::string(section) == "spearman"   ? report.spearman
                                                             : report.average_precision;
    nlohmann::ordered_json obj;
    for (const auto& [key, value] : src) obj[key] = detail::json_metric(value);
    j[section] = std::move(obj);
  }
  nlohmann::ordered_json means = nlohmann::ordered_json::array();
  for (const auto& m : report.mean_similarity_by_distance)
    means.push_back(detail::json_metric(m));
  j["mean_similarity_by_distance"] = std::move(means);
  nlohmann::ordered_json counts, shortfalls;
  for (int c = 0; c < 4; ++c) {
    counts[std::to_string(c)] = report.pair_counts[c];
    shortfalls[std::to_string(c)] = report.shortfalls[c];
  }
  j["pair_counts"] = std::move(counts);
  j["shortfalls"] = std::move(shortfalls);
  j["model_file"] = model_file;
  if (seed)
    j["seed"] = *seed;
  else
    j["seed"] = nullptr;
  return j;
}

inline void write_report(std::ostream& out, const EvalReport& report,
                         const std::string& model_file, std::optional<uint64_t> seed) {
  out << report_to_json(report, model_file, seed).dump(2) << '\n';
}

}  // namespace hembed

#endif  // HEMBED_REPORT_HPP
