#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iterator>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "regmarket/dataset.hpp"
#include "regmarket/market.hpp"
#include "regmarket/registry.hpp"
#include "regmarket/simulation.hpp"

namespace regmkt {

struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest decimal that round-trips the exact double (never more than 17
/// significant digits).
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw parse_error("not a number: '" + s + "'");
    return v;
}

/// Writes content to a temporary file and renames it into place, so an
/// interrupted run leaves no partial artifact.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

/// Column-ordered table of pre-formatted cells, the CLI's plot-ready output.
struct TidyTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != columns.size())
            throw std::invalid_argument("tidy table: row width mismatch");
        rows.push_back(std::move(cells));
    }
};

inline std::string to_csv(const TidyTable& table) {
    std::ostringstream out;
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? "," : "") << table.columns[c];
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << "\n";
    }
    return out.str();
}

inline void write_table_csv(const TidyTable& table, const std::string& path) {
    write_file_atomic(path, to_csv(table));
}

// ---------------------------------------------------------------------------
// timestamps

namespace detail {
// days since 1970-01-01 from a civil date (Howard Hinnant's algorithm)
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}
}  // namespace detail

/// Parses "YYYY-MM-DD HH:MM:SS" (or with 'T', optional trailing 'Z') to
/// epoch seconds.
inline std::int64_t parse_iso8601(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    char sep = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &se) < 7 ||
        (sep != 'T' && sep != ' '))
        throw parse_error("bad timestamp: '" + s + "'");
    return detail::days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
           h * 3600 + mi * 60 + se;
}

inline std::string quarter_label(std::int64_t epoch_seconds) {
    int y;
    unsigned m, d;
    detail::civil_from_days(epoch_seconds / 86400, y, m, d);
    return std::to_string(y) + "Q" + std::to_string((m - 1) / 3 + 1);
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Hourly series table: strictly increasing timestamps, one numeric column
/// per entity. Rows with missing cells are dropped and counted; rows that
/// follow a gap in the nominal step are flagged.
struct RawSeriesTable {
    std::vector<std::string> entities;
    std::vector<std::int64_t> timestamps;
    Eigen::MatrixXd values;  // rows x entities
    std::vector<std::uint8_t> gap_after_previous;
    long dropped_rows = 0;
};

struct IngestSchema {
    std::string timestamp_column = "timestamp";
    std::int64_t nominal_step_seconds = 3600;
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}
}  // namespace detail

inline RawSeriesTable ingest_csv(const std::string& path, const IngestSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ":1: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);
    if (header.empty() || header[0] != schema.timestamp_column)
        throw parse_error(path + ":1: header must start with '" + schema.timestamp_column + "'");
    for (std::size_t c = 1; c < header.size(); ++c)
        if (header[c].empty()) throw parse_error(path + ":1: empty entity name in header");
    if (header.size() < 2) throw parse_error(path + ":1: no entity columns");

    RawSeriesTable table;
    table.entities.assign(header.begin() + 1, header.end());

    std::vector<std::int64_t> stamps;
    std::vector<std::vector<double>> rows;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw parse_error(path + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " cells");
        bool missing = false;
        for (const auto& c : cells)
            if (c.empty()) missing = true;
        if (missing) {
            ++table.dropped_rows;
            continue;
        }
        std::vector<double> row(table.entities.size());
        try {
            for (std::size_t c = 1; c < cells.size(); ++c) {
                row[c - 1] = parse_double(cells[c]);
                if (!std::isfinite(row[c - 1]))
                    throw parse_error("non-finite value");
            }
            stamps.push_back(parse_iso8601(cells[0]));
        } catch (const parse_error& e) {
            throw parse_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        rows.push_back(std::move(row));
    }

    for (std::size_t r = 1; r < stamps.size(); ++r)
        if (stamps[r] <= stamps[r - 1])
            throw std::invalid_argument(path + ": timestamps must be strictly increasing (row " +
                                        std::to_string(r + 1) + ")");

    table.timestamps = std::move(stamps);
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.entities.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    table.gap_after_previous.assign(table.timestamps.size(), 0);
    for (std::size_t r = 1; r < table.timestamps.size(); ++r)
        if (table.timestamps[r] - table.timestamps[r - 1] != schema.nominal_step_seconds)
            table.gap_after_previous[r] = 1;
    return table;
}

// ---------------------------------------------------------------------------
// lagged ARX dataset

struct ReplaySpec {
    std::string target_entity;
    int lag_order = 1;
    MarketConfig market;
    bool all_entities_as_central = false;
    bool apply_selection = false;
    double validation_fraction = 0.2;
};

/// Builds the 1-lag (or k-lag) ARX dataset for one central entity: the
/// target at t is explained by every entity's lagged values, where lags of
/// the target itself belong to the central agent and each foreign entity's
/// lags to that entity's agent. Feature values at row t only ever reference
/// timestamps before t. Lags across a flagged gap come from the previous
/// available row.
inline std::pair<Dataset, AgentRegistry> build_lagged_dataset(const RawSeriesTable& table,
                                                              const ReplaySpec& spec) {
    const auto it = std::find(table.entities.begin(), table.entities.end(), spec.target_entity);
    if (it == table.entities.end())
        throw std::invalid_argument("replay: target entity '" + spec.target_entity +
                                    "' not in table");
    if (spec.lag_order < 1) throw std::invalid_argument("replay: lag order must be >= 1");
    const Eigen::Index n = table.values.rows();
    if (n <= spec.lag_order)
        throw std::invalid_argument("replay: lag order exceeds the table length");
    const Eigen::Index target_col = std::distance(table.entities.begin(), it);
    const Eigen::Index n_entities = table.values.cols();
    const int lags = spec.lag_order;
    const Eigen::Index n_rows = n - lags;

    Eigen::MatrixXd x(n_rows, n_entities * lags);
    Eigen::VectorXd y(n_rows);
    std::vector<std::int64_t> stamps(static_cast<std::size_t>(n_rows));
    std::vector<std::uint8_t> gaps(static_cast<std::size_t>(n_rows), 0);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        const Eigen::Index t = r + lags;
        y[r] = table.values(t, target_col);
        stamps[static_cast<std::size_t>(r)] = table.timestamps[static_cast<std::size_t>(t)];
        gaps[static_cast<std::size_t>(r)] =
            table.gap_after_previous.empty() ? 0
                                             : table.gap_after_previous[static_cast<std::size_t>(t)];
        for (Eigen::Index e = 0; e < n_entities; ++e)
            for (int l = 1; l <= lags; ++l)
                x(r, e * lags + (l - 1)) = table.values(t - l, e);
    }

    Dataset data(std::move(x), std::move(y));
    data.timestamps = std::move(stamps);
    data.gap_flag = std::move(gaps);

    AgentRegistry registry;
    registry.central_agent = spec.target_entity;
    for (Eigen::Index e = 0; e < n_entities; ++e) {
        std::vector<int> feats;
        for (int l = 0; l < lags; ++l) feats.push_back(static_cast<int>(e * lags + l));
        if (e == target_col)
            registry.central_features = feats;
        else
            registry.support[table.entities[static_cast<std::size_t>(e)]] = feats;
    }
    return {std::move(data), std::move(registry)};
}

// ---------------------------------------------------------------------------
// ledger serialization

enum class LedgerFormat { Csv, Json };

inline TidyTable ledger_table(const ClearingResult& result) {
    TidyTable t;
    t.columns = {"t", "stage", "design", "pi_c"};
    for (const auto& agent : result.agents) t.columns.push_back("pi_a_" + agent);
    for (int f : result.support_features) t.columns.push_back("E_phi_f" + std::to_string(f));

    const auto emit = [&](const std::vector<ClearingRow>& rows) {
        for (const auto& row : rows) {
            std::vector<std::string> cells;
            cells.push_back(std::to_string(row.t));
            cells.push_back(to_string(row.stage));
            cells.push_back(to_string(result.design));
            cells.push_back(format_double(row.pi_c));
            for (double v : row.pi_a) cells.push_back(format_double(v));
            for (double v : row.expected_phi) cells.push_back(format_double(v));
            t.add_row(std::move(cells));
        }
    };
    emit(result.in_rows);
    emit(result.out_rows);
    return t;
}

inline void write_ledger(const ClearingResult& result, const std::string& path,
                         LedgerFormat format) {
    const TidyTable table = ledger_table(result);
    if (format == LedgerFormat::Csv) {
        write_table_csv(table, path);
        return;
    }
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json obj;
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const std::string& col = table.columns[c];
            if (col == "t")
                obj[col] = std::stol(row[c]);
            else if (col == "stage" || col == "design")
                obj[col] = row[c];
            else
                obj[col] = parse_double(row[c]);
        }
        rows.push_back(std::move(obj));
    }
    write_file_atomic(path, rows.dump(2) + "\n");
}

/// Minimal CSV reader for ledgers and test round-trips.
inline TidyTable read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TidyTable t;
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.columns = detail::split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        t.add_row(detail::split_csv_line(line));
    }
    return t;
}

// ---------------------------------------------------------------------------
// configuration

inline MarketConfig market_config_from_json(const nlohmann::json& j, int n_features) {
    MarketConfig cfg;
    cfg.design = design_from_string(j.value("design", "blr_nll"));
    cfg.lambda_in = j.value("lambda_in", 1.0);
    cfg.lambda_out = j.value("lambda_out", 1.0);
    cfg.tau = j.value("tau", 1.0);
    cfg.alpha = j.value("alpha", 0.05);
    cfg.seed = j.value("seed", 0ULL);
    cfg.hypothesis = Hypothesis::linear(n_features, j.value("xi", 1.0), j.value("gamma", 1e-6),
                                        cfg.tau);
    if (j.contains("basis")) {
        const auto& names = j.at("basis");
        for (std::size_t k = 0; k < names.size() && k + 1 < cfg.hypothesis.basis.size(); ++k) {
            const std::string name = names[k].get<std::string>();
            cfg.hypothesis.basis[k + 1] =
                name == "square" ? BasisKind::Square : BasisKind::Identity;
        }
    }
    cfg.validate();
    return cfg;
}

inline nlohmann::ordered_json market_config_to_json(const MarketConfig& cfg) {
    nlohmann::ordered_json j;
    j["design"] = to_string(cfg.design);
    j["lambda_in"] = cfg.lambda_in;
    j["lambda_out"] = cfg.lambda_out;
    j["tau"] = cfg.tau;
    j["xi"] = cfg.hypothesis.noise_precision;
    j["gamma"] = cfg.hypothesis.prior_precision;
    j["alpha"] = cfg.alpha;
    j["seed"] = cfg.seed;
    return j;
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

}  // namespace regmkt
