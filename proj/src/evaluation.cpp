#include "pcluster/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace pcluster {

const char* weighting_name(Weighting w) {
  return w == Weighting::per_track ? "track" : "frame";
}

namespace {

double track_weight(const Track& t, Weighting w) {
  return w == Weighting::per_track ? 1.0 : static_cast<double>(t.frames.count());
}

// label -> cluster -> weight, over clustered tracks. Throws on missing labels.
struct ContingencyTable {
  std::vector<std::string> labels;    // ascending
  std::vector<ClusterId> clusters;    // ascending
  std::vector<std::vector<double>> weight;  // [label][cluster]
  std::vector<double> label_total;
  std::vector<double> cluster_total;
  double total = 0.0;
};

ContingencyTable contingency(const Partition& partition, const Dataset& dataset,
                             Weighting weighting) {
  const auto idx = track_index(dataset);
  std::map<std::string, std::size_t> label_pos;
  std::map<ClusterId, std::size_t> cluster_pos;
  for (const auto& [cid, cluster] : partition.clusters) {
    cluster_pos.emplace(cid, cluster_pos.size());
    for (TrackId t : cluster.members) {
      const Track& track = dataset.tracks[idx.at(t)];
      if (!track.label)
        throw std::runtime_error("unlabeled track " + std::to_string(t) + " in evaluation set");
      label_pos.emplace(*track.label, 0);
    }
  }
  std::size_t li = 0;
  for (auto& [name, pos] : label_pos) pos = li++;

  ContingencyTable table;
  table.labels.resize(label_pos.size());
  for (const auto& [name, pos] : label_pos) table.labels[pos] = name;
  table.clusters.resize(cluster_pos.size());
  for (const auto& [cid, pos] : cluster_pos) table.clusters[pos] = cid;
  table.weight.assign(label_pos.size(), std::vector<double>(cluster_pos.size(), 0.0));
  table.label_total.assign(label_pos.size(), 0.0);
  table.cluster_total.assign(cluster_pos.size(), 0.0);

  for (const auto& [cid, cluster] : partition.clusters) {
    const std::size_t c = cluster_pos.at(cid);
    for (TrackId t : cluster.members) {
      const Track& track = dataset.tracks[idx.at(t)];
      const double w = track_weight(track, weighting);
      const std::size_t y = label_pos.at(*track.label);
      table.weight[y][c] += w;
      table.label_total[y] += w;
      table.cluster_total[c] += w;
      table.total += w;
    }
  }
  return table;
}

double entropy(const std::vector<double>& masses, double total) {
  double h = 0.0;
  for (double m : masses) {
    if (m <= 0.0) continue;
    const double p = m / total;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double wcp(const Partition& partition, const Dataset& dataset, Weighting weighting) {
  const ContingencyTable table = contingency(partition, dataset, weighting);
  if (table.total == 0.0) return 1.0;
  double sum = 0.0;
  for (std::size_t c = 0; c < table.clusters.size(); ++c) {
    double best = 0.0;
    for (std::size_t y = 0; y < table.labels.size(); ++y) {
      best = std::max(best, table.weight[y][c]);
    }
    sum += best;
  }
  return sum / table.total;
}

double nmi(const Partition& partition, const Dataset& dataset, Weighting weighting) {
  const ContingencyTable table = contingency(partition, dataset, weighting);
  if (table.total == 0.0) return 1.0;

  // A weighted permutation matrix means the clustering and the labels induce
  // the same grouping; NMI is exactly 1 there.
  bool permutation = table.labels.size() == table.clusters.size();
  if (permutation) {
    for (std::size_t y = 0; y < table.labels.size() && permutation; ++y) {
      std::size_t nonzero = 0;
      for (std::size_t c = 0; c < table.clusters.size(); ++c) {
        if (table.weight[y][c] > 0.0) ++nonzero;
      }
      permutation = nonzero == 1;
    }
    for (std::size_t c = 0; c < table.clusters.size() && permutation; ++c) {
      std::size_t nonzero = 0;
      for (std::size_t y = 0; y < table.labels.size(); ++y) {
        if (table.weight[y][c] > 0.0) ++nonzero;
      }
      permutation = nonzero == 1;
    }
    if (permutation) return 1.0;
  }

  const double hy = entropy(table.label_total, table.total);
  const double hc = entropy(table.cluster_total, table.total);
  if (hy == 0.0 && hc == 0.0) return 1.0;
  if (hy == 0.0 || hc == 0.0) return 0.0;

  double mi = 0.0;
  for (std::size_t y = 0; y < table.labels.size(); ++y) {
    for (std::size_t c = 0; c < table.clusters.size(); ++c) {
      const double w = table.weight[y][c];
      if (w <= 0.0) continue;
      const double pyc = w / table.total;
      const double py = table.label_total[y] / table.total;
      const double pc = table.cluster_total[c] / table.total;
      mi += pyc * std::log(pyc / (py * pc));
    }
  }
  const double value = 2.0 * mi / (hy + hc);
  return std::clamp(value, 0.0, 1.0);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Classic O(n^3) min-cost perfect matching on a square matrix via potentials.
// Returns row -> column. Deterministic: ties pick the smallest column.
std::vector<int> solve_square(const std::vector<std::vector<double>>& a, double* cost_out) {
  const int n = static_cast<int>(a.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  double cost = 0.0;
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) {
      row_to_col[p[j] - 1] = j - 1;
      cost += a[p[j] - 1][j - 1];
    }
  }
  if (cost_out) *cost_out = cost;
  return row_to_col;
}

}  // namespace

HungarianResult hungarian(const std::vector<std::vector<double>>& cost) {
  HungarianResult result;
  const int rows = static_cast<int>(cost.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(cost.front().size());
  if (rows == 0 || cols == 0) return result;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != cols)
      throw std::invalid_argument("cost matrix is ragged");
    for (double v : row) {
      if (!std::isfinite(v)) throw std::invalid_argument("cost matrix entry is not finite");
    }
  }

  const int n = std::max(rows, cols);
  double pad = cost[0][0];
  for (const auto& row : cost) {
    for (double v : row) pad = std::max(pad, v);
  }
  std::vector<std::vector<double>> square(n, std::vector<double>(n, pad));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) square[i][j] = cost[i][j];
  }

  double best_total = 0.0;
  solve_square(square, &best_total);
  const double eps = 1e-9 * (1.0 + std::abs(best_total));

  // Fix rows in order to the smallest column that still admits an optimal
  // completion; a dummy column (unmatched) ranks after every real column.
  std::vector<int> fixed(n, -1);
  std::vector<char> col_used(n, 0);
  double fixed_cost = 0.0;
  for (int i = 0; i < rows; ++i) {
    std::vector<int> candidates;
    for (int j = 0; j < cols; ++j) {
      if (!col_used[j]) candidates.push_back(j);
    }
    for (int j = cols; j < n; ++j) {
      if (!col_used[j]) {
        candidates.push_back(j);  // identical dummy columns; one suffices
        break;
      }
    }
    for (int j : candidates) {
      // Remaining square problem once row i takes column j.
      std::vector<int> free_cols;
      for (int j2 = 0; j2 < n; ++j2) {
        if (!col_used[j2] && j2 != j) free_cols.push_back(j2);
      }
      std::vector<std::vector<double>> sub;
      for (int i2 = i + 1; i2 < n; ++i2) {
        std::vector<double> row;
        row.reserve(free_cols.size());
        for (int j2 : free_cols) row.push_back(square[i2][j2]);
        sub.push_back(std::move(row));
      }
      double sub_cost = 0.0;
      if (!sub.empty()) solve_square(sub, &sub_cost);
      if (fixed_cost + square[i][j] + sub_cost <= best_total + eps) {
        fixed[i] = j;
        col_used[j] = 1;
        fixed_cost += square[i][j];
        break;
      }
    }
  }

  result.assignment.assign(rows, std::nullopt);
  for (int i = 0; i < rows; ++i) {
    if (fixed[i] >= 0 && fixed[i] < cols) {
      result.assignment[i] = fixed[i];
      result.cost += cost[i][fixed[i]];
    }
  }
  return result;
}

CharacterPr character_pr(const Partition& partition, const Dataset& dataset,
                         Weighting weighting) {
  const ContingencyTable table = contingency(partition, dataset, weighting);
  CharacterPr result;
  if (table.labels.empty()) return result;

  // CR(y, c) = share of character y's weight inside cluster c; the Hungarian
  // assignment maximizes total CR.
  std::vector<std::vector<double>> negated(table.labels.size(),
                                           std::vector<double>(table.clusters.size(), 0.0));
  for (std::size_t y = 0; y < table.labels.size(); ++y) {
    for (std::size_t c = 0; c < table.clusters.size(); ++c) {
      const double cr =
          table.label_total[y] > 0.0 ? table.weight[y][c] / table.label_total[y] : 0.0;
      negated[y][c] = -cr;
    }
  }
  const HungarianResult match = hungarian(negated);

  double cp_sum = 0.0;
  double cr_sum = 0.0;
  for (std::size_t y = 0; y < table.labels.size(); ++y) {
    CharacterRow row;
    row.character = table.labels[y];
    if (y < match.assignment.size() && match.assignment[y]) {
      const std::size_t c = static_cast<std::size_t>(*match.assignment[y]);
      row.cluster = table.clusters[c];
      row.cr = table.label_total[y] > 0.0 ? table.weight[y][c] / table.label_total[y] : 0.0;
      row.cp = table.cluster_total[c] > 0.0 ? table.weight[y][c] / table.cluster_total[c] : 0.0;
    }
    cp_sum += row.cp;
    cr_sum += row.cr;
    result.rows.push_back(std::move(row));
  }
  result.cp = cp_sum / static_cast<double>(table.labels.size());
  result.cr = cr_sum / static_cast<double>(table.labels.size());
  return result;
}

MetricsReport evaluate(const Partition& partition, const Dataset& dataset, Weighting weighting) {
  MetricsReport report;
  report.weighting = weighting;
  report.wcp = wcp(partition, dataset, weighting);
  report.nmi = nmi(partition, dataset, weighting);
  CharacterPr pr = character_pr(partition, dataset, weighting);
  report.cp = pr.cp;
  report.cr = pr.cr;
  report.per_character = std::move(pr.rows);
  report.predicted_clusters = static_cast<std::int64_t>(partition.cluster_count());
  report.ground_truth_clusters = static_cast<std::int64_t>(report.per_character.size());
  return report;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to average");
  MetricsReport avg;
  avg.weighting = reports.front().weighting;
  double pc = 0.0, gc = 0.0;
  for (const MetricsReport& r : reports) {
    avg.wcp += r.wcp;
    avg.nmi += r.nmi;
    avg.cp += r.cp;
    avg.cr += r.cr;
    pc += static_cast<double>(r.predicted_clusters);
    gc += static_cast<double>(r.ground_truth_clusters);
  }
  const double n = static_cast<double>(reports.size());
  avg.wcp /= n;
  avg.nmi /= n;
  avg.cp /= n;
  avg.cr /= n;
  avg.predicted_clusters = static_cast<std::int64_t>(pc / n);
  avg.ground_truth_clusters = static_cast<std::int64_t>(gc / n);
  return avg;
}

namespace {

CoOccurrenceMatrix cooccurrence_from_frames(
    const std::vector<std::string>& characters,
    const std::map<std::string, std::vector<const FrameSet*>>& frames_by_character,
    const Dataset& dataset, std::int64_t total_frames) {
  if (total_frames <= 0) {
    std::int64_t max_frame = -1;
    for (const Track& t : dataset.tracks) {
      if (!t.frames.empty()) max_frame = std::max(max_frame, t.frames.max_frame());
    }
    total_frames = max_frame + 1;
  }
  if (total_frames <= 0) throw std::invalid_argument("total_frames must be positive");

  std::vector<FrameSet> unions;
  unions.reserve(characters.size());
  for (const std::string& name : characters) {
    auto it = frames_by_character.find(name);
    unions.push_back(it == frames_by_character.end() ? FrameSet{}
                                                     : FrameSet::union_of(it->second));
  }

  CoOccurrenceMatrix m;
  m.characters = characters;
  m.total_frames = total_frames;
  m.values.assign(characters.size(), std::vector<double>(characters.size(), 0.0));
  for (std::size_t i = 0; i < characters.size(); ++i) {
    for (std::size_t j = i; j < characters.size(); ++j) {
      const double shared =
          static_cast<double>(unions[i].intersection_count(unions[j]));
      m.values[i][j] = m.values[j][i] = shared / static_cast<double>(total_frames);
    }
  }
  return m;
}

void require_known(const std::vector<std::string>& characters,
                   const std::set<std::string>& known) {
  for (const std::string& name : characters) {
    if (!known.count(name)) throw std::runtime_error("unknown character " + name);
  }
}

}  // namespace

CoOccurrenceMatrix cooccurrence_ground_truth(const Dataset& dataset,
                                             const std::vector<std::string>& characters,
                                             std::int64_t total_frames) {
  std::set<std::string> known;
  std::map<std::string, std::vector<const FrameSet*>> frames;
  for (const Track& t : dataset.tracks) {
    if (!t.label) continue;
    known.insert(*t.label);
    frames[*t.label].push_back(&t.frames);
  }
  require_known(characters, known);
  return cooccurrence_from_frames(characters, frames, dataset, total_frames);
}

CoOccurrenceMatrix cooccurrence_predicted(const Dataset& dataset, const Partition& partition,
                                          const std::vector<std::string>& characters,
                                          std::int64_t total_frames) {
  const auto idx = track_index(dataset);
  std::set<std::string> known;
  for (const Track& t : dataset.tracks) {
    if (t.label) known.insert(*t.label);
  }
  require_known(characters, known);

  std::map<std::string, std::vector<const FrameSet*>> frames;
  for (const auto& [cid, cluster] : partition.clusters) {
    // Majority ground-truth label of the cluster, by track count, ties by
    // ascending name.
    std::map<std::string, std::size_t> counts;
    for (TrackId t : cluster.members) {
      const Track& track = dataset.tracks[idx.at(t)];
      if (!track.label)
        throw std::runtime_error("unlabeled track " + std::to_string(t) + " in evaluation set");
      counts[*track.label] += 1;
    }
    std::string majority;
    std::size_t best = 0;
    for (const auto& [name, count] : counts) {
      if (count > best) {
        majority = name;
        best = count;
      }
    }
    for (TrackId t : cluster.members) {
      frames[majority].push_back(&dataset.tracks[idx.at(t)].frames);
    }
  }
  return cooccurrence_from_frames(characters, frames, dataset, total_frames);
}

CoOccurrenceMatrix relative_cooccurrence(const CoOccurrenceMatrix& predicted,
                                         const CoOccurrenceMatrix& ground_truth) {
  if (predicted.characters != ground_truth.characters)
    throw std::invalid_argument("co-occurrence matrices cover different characters");
  CoOccurrenceMatrix rel;
  rel.characters = predicted.characters;
  rel.total_frames = ground_truth.total_frames;
  rel.values.assign(rel.characters.size(), std::vector<double>(rel.characters.size(), 0.0));
  for (std::size_t i = 0; i < rel.characters.size(); ++i) {
    for (std::size_t j = 0; j < rel.characters.size(); ++j) {
      const double p = predicted.values[i][j];
      const double g = ground_truth.values[i][j];
      rel.values[i][j] = g == 0.0 ? (p == 0.0 ? 1.0 : std::numeric_limits<double>::infinity())
                                  : p / g;
    }
  }
  return rel;
}

}  // namespace pcluster
