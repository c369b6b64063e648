#include "dts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dts {

const char* const kCsvHeader = "case,method,l1,l2,l1_la,l2_la,psnr_db";

ErrorPair l1_l2(const Volume3& pred, const Volume3& truth, const Mask3* mask) {
  require_same_layout(pred, truth, "l1_l2");
  if (mask) require_same_layout(pred, *mask, "l1_l2 mask");
  double s1 = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    s1 += std::abs(d);
    s2 += d * d;
    ++n;
  }
  if (n == 0) fail(ErrorKind::invalid_argument, "l1_l2: mask is empty");
  return {s1 / static_cast<double>(n), s2 / static_cast<double>(n)};
}

PsnrResult psnr_from_mse(double mse) {
  if (!(mse >= 0.0)) fail(ErrorKind::invalid_argument, "psnr: mse must be nonnegative");
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true, 0.0};
  return {10.0 * std::log10(1.0 / mse), false, mse};
}

PsnrResult psnr(const Volume3& pred, const Volume3& truth, const Mask3& mask) {
  require_same_layout(pred, truth, "psnr");
  require_same_layout(pred, mask, "psnr mask");
  if (count(mask) == 0) fail(ErrorKind::invalid_argument, "psnr: mask is empty");
  auto normaliser = [](const Volume3& v) {
    auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
    double a = *lo, span = static_cast<double>(*hi) - a;
    return std::make_pair(a, span > 0.0 ? 1.0 / span : 0.0);
  };
  auto [pa, ps] = normaliser(pred);
  auto [ta, ts] = normaliser(truth);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    double d = (pred[i] - pa) * ps - (truth[i] - ta) * ts;
    acc += d * d;
    ++n;
  }
  return psnr_from_mse(acc / static_cast<double>(n));
}

std::vector<MetricsReport> evaluate_methods(const Case& c, const std::vector<MethodVolume>& methods,
                                            const std::string& case_id) {
  std::vector<MetricsReport> out;
  const bool lesions = count(c.lesion_mask) > 0;
  for (const auto& m : methods) {
    MetricsReport r;
    r.case_id = case_id.empty() ? "case_" + std::to_string(c.phantom_seed) : case_id;
    r.method = m.method;
    auto whole = l1_l2(m.volume, c.vol_ribfree);
    auto lung = l1_l2(m.volume, c.vol_ribfree, &c.lung_mask);
    r.l1 = whole.l1;
    r.l2 = whole.l2;
    r.l1_la = lung.l1;
    r.l2_la = lung.l2;
    if (lesions) r.psnr = psnr(m.volume, c.vol_ribfree, c.lesion_mask);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string psnr_text(const std::optional<PsnrResult>& p) {
  if (!p) return "-";
  return p->infinite ? "inf" : fixed(p->db, 2);
}

}  // namespace

void write_table(std::ostream& os, const std::vector<MetricsReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"case", "method", "L1(e-2)", "L2(e-4)", "L1_LA(e-2)", "L2_LA(e-4)", "PSNR(dB)"});
  for (const auto& r : reports)
    rows.push_back({r.case_id, r.method, fixed(r.l1 * 1e2, 4), fixed(r.l2 * 1e4, 4), fixed(r.l1_la * 1e2, 4),
                    fixed(r.l2_la * 1e4, 4), psnr_text(r.psnr)});
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << "  ";
      std::string pad(width[c] - row[c].size(), ' ');
      if (c < 2) os << row[c] << pad;  // text columns left-aligned
      else os << pad << row[c];
    }
    os << '\n';
  }
}

void write_csv(std::ostream& os, const std::vector<MetricsReport>& reports) {
  os << kCsvHeader << '\n';
  for (const auto& r : reports) {
    os << r.case_id << ',' << r.method << ',' << format_double(r.l1) << ',' << format_double(r.l2) << ','
       << format_double(r.l1_la) << ',' << format_double(r.l2_la) << ',';
    if (r.psnr) os << (r.psnr->infinite ? "inf" : format_double(r.psnr->db));
    os << '\n';
  }
}

}  // namespace dts
