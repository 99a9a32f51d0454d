#pragma once

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cops/csv.hpp"
#include "cops/train.hpp"

namespace cops {

/// Ordered parameter -> candidate values. Known names: beta, lr,
/// batch_size, latent_dim, embed_dim, encoder_lstm_dim,
/// pre_latent_dense_dim, decoder_lstm_dim, decoder_bilstm_dim, dropout_rate.
struct GridSpec {
  std::vector<std::pair<std::string, std::vector<double>>> params;

  static const std::vector<std::string>& known_names() {
    static const std::vector<std::string> names{"beta",           "lr",
                                                "batch_size",     "latent_dim",
                                                "embed_dim",      "encoder_lstm_dim",
                                                "pre_latent_dense_dim", "decoder_lstm_dim",
                                                "decoder_bilstm_dim",   "dropout_rate"};
    return names;
  }

  void validate() const {
    require(!params.empty(), ErrorCode::InvalidArgument, "grid spec has no parameters");
    for (const auto& [name, values] : params) {
      const auto& known = known_names();
      require(std::find(known.begin(), known.end(), name) != known.end(), ErrorCode::InvalidArgument,
              "unknown grid parameter '" + name + "'");
      require(!values.empty(), ErrorCode::InvalidArgument, "grid parameter '" + name + "' has no values");
    }
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& p : params) n *= p.second.size();
    return n;
  }

  /// Cartesian product; the last parameter varies fastest.
  std::vector<std::vector<std::pair<std::string, double>>> cells() const {
    validate();
    std::vector<std::vector<std::pair<std::string, double>>> out;
    std::vector<std::size_t> at(params.size(), 0);
    for (std::size_t c = 0; c < size(); ++c) {
      auto& cell = out.emplace_back();
      for (std::size_t i = 0; i < params.size(); ++i) cell.emplace_back(params[i].first, params[i].second[at[i]]);
      for (std::size_t i = params.size(); i-- > 0;) {
        if (++at[i] < params[i].second.size()) break;
        at[i] = 0;
      }
    }
    return out;
  }
};

/// Parses "name=v1,v2,..." into one grid parameter.
inline std::pair<std::string, std::vector<double>> parse_grid_param(std::string_view spec) {
  const auto eq = spec.find('=');
  require(eq != std::string_view::npos && eq > 0, ErrorCode::InvalidArgument,
          "grid parameter must look like name=v1,v2: '" + std::string(spec) + "'");
  std::pair<std::string, std::vector<double>> out{detail::trim(spec.substr(0, eq)), {}};
  std::string_view rest = spec.substr(eq + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = detail::trim(rest.substr(0, comma));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    require(ec == std::errc() && ptr == item.data() + item.size() && !item.empty(), ErrorCode::InvalidArgument,
            "grid value '" + item + "' for " + out.first + " is not a number");
    out.second.push_back(v);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  return out;
}

inline void apply_grid_value(const std::string& name, double v, TrainConfig& cfg, ModelConfig& mcfg) {
  const auto dim = [&] {
    require(v >= 1 && v == static_cast<double>(static_cast<std::size_t>(v)), ErrorCode::InvalidArgument,
            name + " must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  if (name == "beta") mcfg.beta = v;
  else if (name == "lr") cfg.lr = v;
  else if (name == "batch_size") cfg.batch_size = dim();
  else if (name == "latent_dim") mcfg.latent_dim = dim();
  else if (name == "embed_dim") mcfg.embed_dim = dim();
  else if (name == "encoder_lstm_dim") mcfg.encoder_lstm_dim = dim();
  else if (name == "pre_latent_dense_dim") mcfg.pre_latent_dense_dim = dim();
  else if (name == "decoder_lstm_dim") mcfg.decoder_lstm_dim = dim();
  else if (name == "decoder_bilstm_dim") mcfg.decoder_bilstm_dim = dim();
  else if (name == "dropout_rate") mcfg.dropout_rate = v;
  else throw Error(ErrorCode::InvalidArgument, "unknown grid parameter '" + name + "'");
}

struct GridRow {
  std::size_t cell = 0;
  std::vector<std::pair<std::string, double>> params;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double val_acc = 0.0;
  double val_f1 = 0.0;
  double val_loss = 0.0;
  std::optional<std::string> error;
};

struct GridResult {
  std::vector<std::string> param_names;
  /// Successful cells by val accuracy then F1 (descending), failed cells last.
  std::vector<GridRow> rows;

  void write_csv(std::ostream& out) const {
    std::vector<std::string> header{"rank", "cell"};
    header.insert(header.end(), param_names.begin(), param_names.end());
    for (const char* h : {"seed", "best_epoch", "val_acc", "val_f1", "val_loss", "error"}) header.emplace_back(h);
    csv::write_row(out, header);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      std::vector<std::string> f{std::to_string(i + 1), std::to_string(r.cell)};
      for (const auto& p : r.params) f.push_back(csv::number(p.second));
      f.push_back(std::to_string(r.seed));
      if (r.error) {
        f.insert(f.end(), {"", "", "", ""});
        f.push_back(*r.error);
      } else {
        f.insert(f.end(), {std::to_string(r.best_epoch), csv::number(r.val_acc), csv::number(r.val_f1),
                           csv::number(r.val_loss), ""});
      }
      csv::write_row(out, f);
    }
  }

  /// beta,val_acc,val_f1 for successful cells, sorted by beta. When other
  /// parameters vary too, the best cell per beta is kept.
  void write_beta_curve(std::ostream& out) const {
    std::map<double, const GridRow*> best;
    for (const auto& r : rows) {
      if (r.error) continue;
      const auto it = std::find_if(r.params.begin(), r.params.end(), [](const auto& p) { return p.first == "beta"; });
      require(it != r.params.end(), ErrorCode::InvalidArgument, "grid has no beta parameter");
      // Rows are already ranked, so the first row seen per beta is the best.
      best.try_emplace(it->second, &r);
    }
    csv::write_row(out, {"beta", "val_acc", "val_f1"});
    for (const auto& [beta, r] : best) csv::write_row(out, {csv::number(beta), csv::number(r->val_acc), csv::number(r->val_f1)});
  }
};

/// Trains one classifier per grid cell on `data` (same validation split for
/// every cell) and ranks the cells. Cell i uses seed base.seed + i. Cells
/// whose training throws are kept with the error message.
inline GridResult grid_search(const GridSpec& spec, std::span<const LabeledRecord> data, const TrainConfig& base,
                              const ModelConfig& base_model, const ClassWeights& weights, const PreprocessConfig& prep,
                              const std::function<void(const GridRow&)>& on_cell = nullptr) {
  GridResult result;
  for (const auto& p : spec.params) result.param_names.push_back(p.first);
  const auto cells = spec.cells();
  const Featurizer featurizer = [&] {
    auto [train_idx, val_idx] = detail::validation_split(data, base.val_fraction, base.split_seed);
    return Featurizer::fit(detail::gather(data, train_idx), prep);
  }();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    GridRow row;
    row.cell = i;
    row.params = cells[i];
    TrainConfig cfg = base;
    cfg.seed = base.seed + i;
    cfg.on_epoch = nullptr;
    row.seed = cfg.seed;
    ModelConfig mcfg = base_model;
    try {
      for (const auto& [name, v] : cells[i]) apply_grid_value(name, v, cfg, mcfg);
      const auto c = train_classifier(data, cfg, mcfg, weights, prep, &featurizer);
      const auto& h = c.history.at(c.best_epoch - 1);
      row.best_epoch = c.best_epoch;
      row.val_acc = h["val_acc"].get<double>();
      row.val_f1 = h["val_f1"].get<double>();
      row.val_loss = h["val_loss"].get<double>();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (on_cell) on_cell(row);
    result.rows.push_back(std::move(row));
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const GridRow& a, const GridRow& b) {
    if (a.error.has_value() != b.error.has_value()) return !a.error.has_value();
    if (a.error) return false;
    if (a.val_acc != b.val_acc) return a.val_acc > b.val_acc;
    return a.val_f1 > b.val_f1;
  });
  return result;
}

}  // namespace cops
