#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rawpc {

struct ScoreRecord {
  std::string utterance_id;
  std::string attack_id;
  int label = 0;  ///< 0 bona fide, 1 spoof
  double score = 0.0;
  bool operator==(const ScoreRecord&) const = default;
};

struct OperatingPoint {
  double threshold;
  double p_miss;  ///< fraction of targets below the threshold
  double p_fa;    ///< fraction of nontargets at or above it
};

/// Points at -inf, every distinct score (ascending) and +inf.
std::vector<OperatingPoint> operating_points(std::span<const double> targets, std::span<const double> nontargets);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// EER where the convex hull of the (p_miss, p_fa) operating points crosses
/// p_miss == p_fa. Both lists must be non-empty.
EerResult compute_eer(std::span<const double> targets, std::span<const double> nontargets);

/// Tandem detection cost, ASVspoof 2019 convention:
///   C1 = p_tar (c_miss_cm - c_miss_asv p_miss_asv) - p_non c_fa_asv p_fa_asv
///   C2 = c_fa_cm p_spoof (1 - p_miss_spoof_asv)
///   t-DCF(t) = (C1 p_miss_cm(t) + C2 p_fa_cm(t)) / min(C1, C2)
/// The ASV error rates default to an error-free ASV system; supply the rates
/// of a real ASV system to reproduce challenge figures.
struct TdcfCosts {
  double p_spoof = 0.05;
  double p_tar = 0.95 * 0.99;
  double p_non = 0.95 * 0.01;
  double c_miss_asv = 1.0;
  double c_fa_asv = 10.0;
  double c_miss_cm = 1.0;
  double c_fa_cm = 10.0;
  double p_miss_asv = 0.0;
  double p_fa_asv = 0.0;
  double p_miss_spoof_asv = 0.0;

  /// Throws ConfigError on invalid priors, costs or rates, or C1/C2 <= 0.
  void validate() const;
  double c1() const;
  double c2() const;
};

/// Reads `key = value` lines with the field names above.
TdcfCosts read_tdcf_costs(const std::filesystem::path& path);
TdcfCosts parse_tdcf_costs(std::string_view text);

struct TdcfResult {
  double min_tdcf = 0.0;
  double threshold = 0.0;
};

/// Minimum over the operating points of (c1 p_miss + c2 p_fa) / min(c1, c2).
TdcfResult min_normalized_tdcf(std::span<const double> bonafide, std::span<const double> spoof, double c1, double c2);
TdcfResult compute_min_tdcf(std::span<const ScoreRecord> records, const TdcfCosts& costs);

struct AttackRow {
  std::string attack_id;
  std::size_t n_spoof = 0;
  double eer = 0.0;
  double threshold = 0.0;
};

struct AttackReport {
  std::vector<AttackRow> attacks;  ///< sorted by attack id
  AttackRow pooled;
  AttackRow worst;
  std::size_t n_bonafide = 0;
  std::optional<TdcfResult> tdcf;
};

/// Each attack's spoof scores against all bona fide scores, plus the pooled
/// row and the attack with the highest EER.
AttackReport per_attack_report(std::span<const ScoreRecord> records);

std::string format_report(const AttackReport& report);
std::string format_report_tsv(const AttackReport& report);

/// Lines `UTT_ID ATTACK_ID KEY SCORE`, score to 6 significant digits.
std::string format_scores(std::span<const ScoreRecord> records);
std::vector<ScoreRecord> parse_scores(std::string_view text);
void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> records);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

}  // namespace rawpc
