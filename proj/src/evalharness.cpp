#include "unmask/evalharness.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "unmask/advtrain.hpp"
#include "unmask/svg.hpp"

namespace unmask {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<std::string> model_predictions(const TinyNet& net, const Dataset& data) {
  std::vector<std::string> out;
  if (data.empty()) return out;
  for (int k : predict(net, image_matrix(data))) out.push_back(net.labels().at(static_cast<std::size_t>(k)));
  return out;
}

std::size_t count_at_least(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
}

}  // namespace

RocCurve roc(std::span<const ScoredSample> scores) {
  std::vector<double> pos, neg;
  for (const auto& s : scores) {
    if (!std::isfinite(s.distance) || s.distance < 0) throw Error("distances must be finite and non-negative");
    (s.adversarial ? pos : neg).push_back(s.distance);
  }
  if (pos.empty() || neg.empty()) throw Error("ROC needs both adversarial and benign samples");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  std::vector<double> thresholds{0.0};
  for (const auto& s : scores) thresholds.push_back(s.distance);
  const double top = std::max(1.0, std::max(pos.back(), neg.back()));
  thresholds.push_back(std::nextafter(top, std::numeric_limits<double>::infinity()));
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve curve;
  curve.positives = pos.size();
  curve.negatives = neg.size();
  for (double t : thresholds) {
    curve.points.push_back({t, static_cast<double>(count_at_least(pos, t)) / static_cast<double>(pos.size()),
                            static_cast<double>(count_at_least(neg, t)) / static_cast<double>(neg.size())});
  }
  double auc = 0.0;
  for (std::size_t i = curve.points.size() - 1; i > 0; --i) {
    const auto& hi = curve.points[i];
    const auto& lo = curve.points[i - 1];
    auc += (lo.fpr - hi.fpr) * (lo.tpr + hi.tpr) / 2.0;
  }
  curve.auc = auc;
  return curve;
}

double wilcoxon_auc(std::span<const ScoredSample> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].distance < scores[b].distance; });
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]].distance == scores[order[i]].distance) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (scores[order[k]].adversarial) {
        rank_sum += mid_rank;
        ++npos;
      }
    }
    i = j;
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0) throw Error("AUC needs both adversarial and benign samples");
  const double p = static_cast<double>(npos);
  return (rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(nneg));
}

std::optional<std::string> roc_violation(const RocCurve& c) {
  if (c.points.size() < 2) return "fewer than two points";
  const auto& first = c.points.front();
  const auto& last = c.points.back();
  if (first.threshold != 0.0 || first.tpr != 1.0 || first.fpr != 1.0) return "curve does not start at (t=0, 1, 1)";
  if (!(last.threshold > 1.0) || last.tpr != 0.0 || last.fpr != 0.0) return "curve does not end at (t>1, 0, 0)";
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const auto& a = c.points[i - 1];
    const auto& b = c.points[i];
    if (!(b.threshold > a.threshold)) return "thresholds not strictly increasing at point " + std::to_string(i);
    if (b.tpr > a.tpr) return "TPR increases at point " + std::to_string(i);
    if (b.fpr > a.fpr) return "FPR increases at point " + std::to_string(i);
  }
  if (!(c.auc >= 0.0 && c.auc <= 1.0)) return "AUC outside [0,1]";
  return std::nullopt;
}

std::vector<double> distances(const PipelineParts& parts, const Dataset& data) {
  parts.validate();
  const auto preds = model_predictions(*parts.model, data);
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(unmask_with_prediction(data.samples[i], preds[i], parts).detection.distance);
  }
  return out;
}

DetectionResult detection_eval(const PipelineParts& parts, const Dataset& benign, const Dataset& attacked,
                               std::uint64_t seed) {
  if (benign.empty() || attacked.empty()) throw Error("detection needs non-empty benign and adversarial pools");
  const std::size_t m = std::min(benign.size(), attacked.size());
  auto pick = [m](const Dataset& d, std::uint64_t s) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (d.size() > m) {
      std::mt19937_64 rng(s);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(m);
      std::sort(idx.begin(), idx.end());
    }
    return subset(d, idx);
  };
  const Dataset b = pick(benign, mix_seed(seed, 0xbe));
  const Dataset a = pick(attacked, mix_seed(seed, 0xad));
  DetectionResult result;
  for (double d : distances(parts, b)) result.pool.push_back({d, false});
  for (double d : distances(parts, a)) result.pool.push_back({d, true});
  result.curve = roc(result.pool);
  return result;
}

double defense_eval(const PipelineParts& parts, const Dataset& attacked) {
  if (attacked.empty()) throw Error("defense evaluation needs a non-empty dataset");
  parts.validate();
  const auto preds = model_predictions(*parts.model, attacked);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < attacked.size(); ++i) {
    const auto out = unmask_with_prediction(attacked.samples[i], preds[i], parts);
    if (normalize_name(out.predicted_class) == normalize_name(attacked.samples[i].label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(attacked.size());
}

std::vector<AttackVector> reference_attack_vectors(std::size_t desk_pixels, int steps, double linf_step_255) {
  std::vector<AttackVector> out;
  for (AttackMethod method : {AttackMethod::pgd, AttackMethod::mia}) {
    for (Norm norm : {Norm::linf, Norm::l2}) {
      const double budgets[2] = {norm == Norm::linf ? 8.0 : 300.0, norm == Norm::linf ? 16.0 : 600.0};
      for (double nominal_eps : budgets) {
        AttackVector v;
        v.nominal_epsilon = nominal_eps;
        v.config.method = method;
        v.config.norm = norm;
        v.config.steps = steps;
        v.config.epsilon_255 = norm == Norm::linf ? nominal_eps : rescale_l2_epsilon(nominal_eps, desk_pixels);
        v.config.step_255 = norm == Norm::linf ? linf_step_255 : 2.5 * v.config.epsilon_255 / steps;
        v.name = to_string(method) + "-" + to_string(norm) + "-" + fmt(nominal_eps, "%g");
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json doc;
  doc["accuracy"] = nlohmann::json::array();
  for (const auto& c : report.accuracy) {
    doc["accuracy"].push_back({{"defense", c.defense}, {"attack", c.attack}, {"norm", c.norm},
                               {"epsilon", c.epsilon}, {"class_set", c.class_set}, {"accuracy", c.accuracy}});
  }
  doc["detection"] = nlohmann::json::array();
  for (const auto& d : report.detection) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : d.curve.points) pts.push_back({p.threshold, p.tpr, p.fpr});
    doc["detection"].push_back({{"vector", d.vector},
                                {"class_set", d.class_set},
                                {"auc", d.curve.auc},
                                {"positives", d.curve.positives},
                                {"negatives", d.curve.negatives},
                                {"points", pts}});
  }
  doc["metadata"] = report.metadata;
  return doc;
}

EvalReport report_from_json(const nlohmann::json& doc) {
  try {
    EvalReport r;
    for (const auto& c : doc.at("accuracy")) {
      r.accuracy.push_back({c.at("defense").get<std::string>(), c.at("attack").get<std::string>(),
                            c.at("norm").get<std::string>(), c.at("epsilon").get<double>(),
                            c.at("class_set").get<std::string>(), c.at("accuracy").get<double>()});
    }
    for (const auto& d : doc.at("detection")) {
      DetectionCell cell;
      cell.vector = d.at("vector").get<std::string>();
      cell.class_set = d.at("class_set").get<std::string>();
      cell.curve.auc = d.at("auc").get<double>();
      cell.curve.positives = d.at("positives").get<std::size_t>();
      cell.curve.negatives = d.at("negatives").get<std::size_t>();
      for (const auto& p : d.at("points")) {
        cell.curve.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
      }
      r.detection.push_back(std::move(cell));
    }
    if (doc.contains("metadata")) r.metadata = doc.at("metadata");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad report: ") + e.what());
  }
}

EvalReport attack_grid(const std::vector<GridClassSet>& sets, const GridOptions& options) {
  if (sets.empty()) throw ConfigError("attack grid needs at least one class set");
  for (const auto& s : sets) {
    if (!s.matrix || !s.undefended || !s.extractor) {
      throw ConfigError("class set " + s.classes.name + " is missing a component");
    }
    if (s.test.empty()) throw Error("class set " + s.classes.name + " has an empty test split");
  }
  const std::size_t nv = options.vectors.size();

  struct VectorCell {
    double none = 0, at = 0, unmask = 0;
    std::optional<RocCurve> curve;
  };
  std::vector<VectorCell> cells(sets.size() * nv);
  std::vector<std::array<double, 3>> clean(sets.size());

  auto parts_for = [&](const GridClassSet& s, PipelineMode mode) {
    PipelineParts p;
    p.model = s.undefended;
    p.extractor = s.extractor;
    p.matrix = s.matrix;
    p.classes = &s.classes;
    p.threshold = options.threshold;
    p.cutoff = options.cutoff;
    p.mode = mode;
    return p;
  };

  parallel_for(sets.size() * (nv + 1), options.jobs, [&](std::size_t task) {
    const std::size_t si = task / (nv + 1);
    const std::size_t vi = task % (nv + 1);
    const GridClassSet& s = sets[si];
    if (vi == nv) {
      clean[si] = {accuracy(*s.undefended, s.test), s.adv_trained ? accuracy(*s.adv_trained, s.test) : 0.0,
                   defense_eval(parts_for(s, options.defense_mode), s.test)};
      return;
    }
    const AttackConfig& cfg = options.vectors[vi].config;
    const BatchAttackResult vs_model = attack_batch(*s.undefended, s.test, cfg);
    VectorCell& cell = cells[si * nv + vi];
    cell.none = 1.0 - vs_model.success_rate();
    if (s.adv_trained) cell.at = 1.0 - attack_batch(*s.adv_trained, s.test, cfg).success_rate();
    cell.unmask = defense_eval(parts_for(s, options.defense_mode), vs_model.attacked);
    const Dataset fooled = vs_model.successful();
    if (!fooled.empty()) {
      cell.curve = detection_eval(parts_for(s, PipelineMode::detect_then_rectify), s.test, fooled,
                                  mix_seed(options.seed, task))
                       .curve;
    }
  });

  EvalReport report;
  const char* defenses[3] = {"None", "AT", "UnMask"};
  for (std::size_t si = 0; si < sets.size(); ++si) {
    const std::string& cs = sets[si].classes.name;
    for (int d = 0; d < 3; ++d) {
      if (d == 1 && !sets[si].adv_trained) continue;
      report.accuracy.push_back({defenses[d], "none", "none", 0.0, cs, clean[si][static_cast<std::size_t>(d)]});
      for (std::size_t vi = 0; vi < nv; ++vi) {
        const auto& v = options.vectors[vi];
        const auto& cell = cells[si * nv + vi];
        const double acc = d == 0 ? cell.none : (d == 1 ? cell.at : cell.unmask);
        report.accuracy.push_back(
            {defenses[d], to_string(v.config.method), to_string(v.config.norm), v.nominal_epsilon, cs, acc});
      }
    }
    for (std::size_t vi = 0; vi < nv; ++vi) {
      const auto& cell = cells[si * nv + vi];
      if (cell.curve) report.detection.push_back({options.vectors[vi].name, cs, *cell.curve});
    }
  }

  auto& meta = report.metadata;
  meta["seed"] = options.seed;
  meta["threshold"] = options.threshold;
  meta["cutoff"] = options.cutoff;
  meta["defense_mode"] = to_string(options.defense_mode);
  meta["vectors"] = nlohmann::json::array();
  for (const auto& v : options.vectors) {
    meta["vectors"].push_back({{"name", v.name},
                               {"nominal_epsilon", v.nominal_epsilon},
                               {"epsilon_255", v.config.epsilon_255},
                               {"step_255", v.config.step_255},
                               {"steps", v.config.steps},
                               {"decay", v.config.decay}});
  }
  meta["class_sets"] = nlohmann::json::array();
  for (const auto& s : sets) {
    meta["class_sets"].push_back({{"name", s.classes.name},
                                  {"classes", s.classes.classes},
                                  {"test_size", s.test.size()},
                                  {"extractor", s.extractor->kind()}});
  }
  return report;
}

std::string file_slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_';
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(const EvalReport& report, const std::filesystem::path& dir) {
  if (report.empty()) throw Error("refusing to emit an empty report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  std::vector<std::string> class_sets;
  auto note = [&](const std::string& cs) {
    if (std::find(class_sets.begin(), class_sets.end(), cs) == class_sets.end()) class_sets.push_back(cs);
  };
  for (const auto& c : report.accuracy) note(c.class_set);
  for (const auto& d : report.detection) note(d.class_set);

  {
    std::string csv = "defense,attack,norm,epsilon,class_set,accuracy\n";
    for (const auto& c : report.accuracy) {
      csv += c.defense + ',' + c.attack + ',' + c.norm + ',' + fmt(c.epsilon, "%g") + ',' + c.class_set + ',' +
             fmt(c.accuracy) + '\n';
    }
    written.push_back(dir / "accuracy.csv");
    write_text_file(written.back(), csv);
  }
  {
    std::string csv = "vector,class_set,auc,adversarial,benign\n";
    for (const auto& d : report.detection) {
      csv += d.vector + ',' + d.class_set + ',' + fmt(d.curve.auc) + ',' + std::to_string(d.curve.positives) + ',' +
             std::to_string(d.curve.negatives) + '\n';
    }
    written.push_back(dir / "detection.csv");
    write_text_file(written.back(), csv);
  }
  for (const auto& cs : class_sets) {
    LineChart chart;
    chart.title = "Detection ROC, " + cs;
    chart.x_label = "false positive rate";
    chart.y_label = "true positive rate";
    chart.diagonal = true;
    for (const auto& d : report.detection) {
      if (d.class_set != cs) continue;
      LineSeries s;
      s.label = d.vector + " (AUC " + fmt(d.curve.auc, "%.3f") + ")";
      for (const auto& p : d.curve.points) s.points.emplace_back(p.fpr, p.tpr);
      chart.series.push_back(std::move(s));
    }
    written.push_back(dir / ("roc_" + file_slug(cs) + ".svg"));
    write_text_file(written.back(), render_line_chart(chart));
  }
  {
    BarChart chart;
    chart.title = "Mean accuracy under attack";
    chart.y_label = "accuracy";
    std::vector<std::string> defenses;
    for (const auto& c : report.accuracy) {
      if (std::find(defenses.begin(), defenses.end(), c.defense) == defenses.end()) defenses.push_back(c.defense);
    }
    chart.series = defenses;
    for (const auto& cs : class_sets) {
      BarGroup g;
      g.label = cs;
      for (const auto& def : defenses) {
        double total = 0;
        std::size_t n = 0;
        for (const auto& c : report.accuracy) {
          if (c.class_set == cs && c.defense == def && c.attack != "none") {
            total += c.accuracy;
            ++n;
          }
        }
        g.values.push_back(n ? total / static_cast<double>(n) : 0.0);
      }
      chart.groups.push_back(std::move(g));
    }
    written.push_back(dir / "summary.svg");
    write_text_file(written.back(), render_bar_chart(chart));
  }
  written.push_back(dir / "report.json");
  write_text_file(written.back(), report_to_json(report).dump(2) + "\n");
  return written;
}

}  // namespace unmask
