#include "dcmsearch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_map>

namespace dcmsearch {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            out.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    out.push_back(cell);
    for (auto& c : out) {
        auto b = c.find_first_not_of(" \t");
        auto e = c.find_last_not_of(" \t");
        c = b == std::string::npos ? std::string{} : c.substr(b, e - b + 1);
    }
    return out;
}

std::string cell_error(const char* what, std::size_t row, const std::string& column, const std::string& cell) {
    std::ostringstream os;
    os << what << " at row " << row << ", column '" << column << "': '" << cell << "'";
    return os.str();
}

double parse_real(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc{} || ptr != last) {
        throw DatasetError(cell_error("parse error: non-numeric cell", row, column, cell));
    }
    return v;
}

long long parse_integer(const std::string& cell, std::size_t row, const std::string& column) {
    double v = parse_real(cell, row, column);
    if (!std::isfinite(v) || v != std::floor(v)) {
        throw DatasetError(cell_error("parse error: expected an integer", row, column, cell));
    }
    return static_cast<long long>(v);
}

void detect_columns(const std::vector<std::string>& header, CsvSchema& schema) {
    static const std::regex alt_re(R"(^(.+)_alt(\d+)$)");
    std::vector<std::string> order;
    std::map<std::string, std::map<int, std::string>> by_name;
    std::map<int, std::string> avail;
    for (const auto& col : header) {
        std::smatch m;
        if (std::regex_match(col, m, alt_re)) {
            const std::string name = m[1];
            const int j = std::stoi(m[2]);
            if (name == "avail") {
                avail[j] = col;
                continue;
            }
            if (!by_name.count(name)) order.push_back(name);
            by_name[name][j] = col;
        } else if (col != schema.choice && col.rfind("cov", 0) == 0) {
            schema.covariates.push_back(col);
        }
    }
    for (const auto& name : order) {
        CsvSchema::Attribute a{name, {}};
        int expect = 0;
        for (const auto& [j, col] : by_name[name]) {
            if (j != expect++) {
                throw DatasetError("schema error: attribute '" + name + "' has non-contiguous alternative columns");
            }
            a.columns.push_back(col);
        }
        schema.attributes.push_back(std::move(a));
    }
    int expect = 0;
    for (const auto& [j, col] : avail) {
        if (j != expect++) throw DatasetError("schema error: non-contiguous avail_alt columns");
        schema.availability.push_back(col);
    }
}

}  // namespace

void ChoiceDataset::validate() const {
    if (n_alts < 2) throw DatasetError("validation error: at least 2 alternatives required");
    if (attrs.size() != n_obs * n_alts * n_attrs || covs.size() != n_obs * n_covs || choice.size() != n_obs ||
        avail.size() != n_obs * n_alts || cov_levels.size() != n_covs) {
        throw DatasetError("validation error: inconsistent field sizes");
    }
    std::vector<std::size_t> bad;
    std::vector<std::string> reasons;
    for (std::size_t n = 0; n < n_obs; ++n) {
        std::string why;
        std::size_t n_avail = 0;
        for (std::size_t j = 0; j < n_alts; ++j) n_avail += available(n, j) ? 1 : 0;
        if (n_avail < 2) why = "fewer than 2 available alternatives";
        if (choice[n] < 0 || static_cast<std::size_t>(choice[n]) >= n_alts) {
            why = "choice out of range";
        } else if (!available(n, static_cast<std::size_t>(choice[n]))) {
            why = "chosen alternative unavailable";
        }
        for (std::size_t i = 0; i < n_alts * n_attrs && why.empty(); ++i) {
            if (!std::isfinite(attrs[n * n_alts * n_attrs + i])) why = "non-finite attribute";
        }
        for (std::size_t c = 0; c < n_covs && why.empty(); ++c) {
            if (cov(n, c) < 0 || cov(n, c) >= cov_levels[c]) why = "covariate level out of range";
        }
        if (!why.empty()) {
            bad.push_back(n + 1);
            reasons.push_back(std::move(why));
        }
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "validation error in " << bad.size() << " row(s):";
        for (std::size_t i = 0; i < bad.size() && i < 20; ++i) os << " row " << bad[i] << " (" << reasons[i] << ")";
        if (bad.size() > 20) os << " ...";
        throw DatasetError(os.str());
    }
}

ChoiceDataset ChoiceDataset::subset(const std::vector<std::size_t>& rows) const {
    ChoiceDataset out;
    out.n_obs = rows.size();
    out.n_alts = n_alts;
    out.n_attrs = n_attrs;
    out.n_covs = n_covs;
    out.attr_names = attr_names;
    out.cov_names = cov_names;
    out.cov_levels = cov_levels;
    out.cov_codes = cov_codes;
    const std::size_t row_attrs = n_alts * n_attrs;
    out.attrs.reserve(rows.size() * row_attrs);
    for (std::size_t r : rows) {
        out.attrs.insert(out.attrs.end(), attrs.begin() + r * row_attrs, attrs.begin() + (r + 1) * row_attrs);
        out.covs.insert(out.covs.end(), covs.begin() + r * n_covs, covs.begin() + (r + 1) * n_covs);
        out.choice.push_back(choice[r]);
        out.avail.insert(out.avail.end(), avail.begin() + r * n_alts, avail.begin() + (r + 1) * n_alts);
    }
    return out;
}

ChoiceDataset parse_wide_csv(const std::string& text, const CsvSchema& schema_in) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("schema error: empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_line(line);
    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

    CsvSchema schema = schema_in;
    if (schema.autodetect && schema.attributes.empty()) {
        CsvSchema detected;
        detected.choice = schema.choice;
        detect_columns(header, detected);
        schema.attributes = detected.attributes;
        if (schema.covariates.empty()) schema.covariates = detected.covariates;
        if (schema.availability.empty()) schema.availability = detected.availability;
    }
    auto require = [&](const std::string& col) {
        auto it = col_index.find(col);
        if (it == col_index.end()) throw DatasetError("schema error: missing column '" + col + "'");
        return it->second;
    };

    const std::size_t choice_col = require(schema.choice);
    if (schema.attributes.empty()) throw DatasetError("schema error: no attribute columns");
    const std::size_t n_alts = schema.attributes.front().columns.size();
    for (const auto& a : schema.attributes) {
        if (a.columns.size() != n_alts) {
            throw DatasetError("schema error: attribute '" + a.name + "' does not cover every alternative");
        }
    }
    if (!schema.availability.empty() && schema.availability.size() != n_alts) {
        throw DatasetError("schema error: availability columns must cover every alternative");
    }

    std::vector<std::vector<std::size_t>> attr_cols;
    for (const auto& a : schema.attributes) {
        std::vector<std::size_t> cols;
        for (const auto& c : a.columns) cols.push_back(require(c));
        attr_cols.push_back(std::move(cols));
    }
    std::vector<std::size_t> cov_cols, avail_cols;
    for (const auto& c : schema.covariates) cov_cols.push_back(require(c));
    for (const auto& c : schema.availability) avail_cols.push_back(require(c));

    ChoiceDataset ds;
    ds.n_alts = n_alts;
    ds.n_attrs = schema.attributes.size();
    ds.n_covs = schema.covariates.size();
    for (const auto& a : schema.attributes) ds.attr_names.push_back(a.name);
    ds.cov_names = schema.covariates;

    std::vector<long long> raw_covs;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw DatasetError("parse error at row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        }
        ds.choice.push_back(static_cast<int>(parse_integer(cells[choice_col], row, schema.choice)));
        for (std::size_t j = 0; j < n_alts; ++j) {
            for (std::size_t k = 0; k < ds.n_attrs; ++k) {
                const std::size_t c = attr_cols[k][j];
                ds.attrs.push_back(parse_real(cells[c], row, header[c]));
            }
        }
        for (std::size_t c : cov_cols) raw_covs.push_back(parse_integer(cells[c], row, header[c]));
        for (std::size_t j = 0; j < n_alts; ++j) {
            if (avail_cols.empty()) {
                ds.avail.push_back(1);
            } else {
                const auto v = parse_integer(cells[avail_cols[j]], row, header[avail_cols[j]]);
                if (v != 0 && v != 1) {
                    throw DatasetError(cell_error("parse error: availability must be 0/1", row,
                                                  header[avail_cols[j]], cells[avail_cols[j]]));
                }
                ds.avail.push_back(static_cast<std::uint8_t>(v));
            }
        }
    }
    ds.n_obs = row;
    if (ds.n_obs == 0) throw DatasetError("validation error: no observations");

    // Dense re-mapping of covariate codes, ascending by original value.
    ds.covs.resize(raw_covs.size());
    for (std::size_t c = 0; c < ds.n_covs; ++c) {
        std::vector<long long> codes;
        for (std::size_t n = 0; n < ds.n_obs; ++n) codes.push_back(raw_covs[n * ds.n_covs + c]);
        std::sort(codes.begin(), codes.end());
        codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
        for (std::size_t n = 0; n < ds.n_obs; ++n) {
            const auto v = raw_covs[n * ds.n_covs + c];
            ds.covs[n * ds.n_covs + c] =
                static_cast<int>(std::lower_bound(codes.begin(), codes.end(), v) - codes.begin());
        }
        ds.cov_levels.push_back(static_cast<int>(codes.size()));
        ds.cov_codes.push_back(std::move(codes));
    }
    ds.validate();
    return ds;
}

ChoiceDataset load_wide_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_wide_csv(ss.str(), schema);
}

std::string to_wide_csv(const ChoiceDataset& ds) {
    std::ostringstream os;
    os << "choice";
    for (std::size_t k = 0; k < ds.n_attrs; ++k) {
        for (std::size_t j = 0; j < ds.n_alts; ++j) os << ',' << ds.attr_names[k] << "_alt" << j;
    }
    for (const auto& c : ds.cov_names) os << ',' << c;
    for (std::size_t j = 0; j < ds.n_alts; ++j) os << ",avail_alt" << j;
    os << '\n';
    char buf[64];
    for (std::size_t n = 0; n < ds.n_obs; ++n) {
        os << ds.choice[n];
        for (std::size_t k = 0; k < ds.n_attrs; ++k) {
            for (std::size_t j = 0; j < ds.n_alts; ++j) {
                auto [end, ec] = std::to_chars(buf, buf + sizeof buf, ds.attr(n, j, k));
                os << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
            }
        }
        for (std::size_t c = 0; c < ds.n_covs; ++c) {
            const int level = ds.cov(n, c);
            os << ',' << (c < ds.cov_codes.size() ? ds.cov_codes[c][static_cast<std::size_t>(level)] : level);
        }
        for (std::size_t j = 0; j < ds.n_alts; ++j) os << ',' << (ds.available(n, j) ? 1 : 0);
        os << '\n';
    }
    return os.str();
}

void save_wide_csv(const ChoiceDataset& ds, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot write " + path.string());
    f << to_wide_csv(ds);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(std::size_t n_obs,
                                                                              double in_sample_frac,
                                                                              std::uint64_t seed) {
    if (!(in_sample_frac > 0.0 && in_sample_frac < 1.0)) {
        throw DatasetError("split error: in-sample fraction must lie in (0, 1)");
    }
    const auto n_in = static_cast<std::size_t>(std::llround(in_sample_frac * static_cast<double>(n_obs)));
    if (n_in == 0 || n_in >= n_obs) throw DatasetError("split error: fraction yields an empty partition");
    std::vector<std::size_t> idx(n_obs);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> in(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_in));
    std::vector<std::size_t> out(idx.begin() + static_cast<std::ptrdiff_t>(n_in), idx.end());
    std::sort(in.begin(), in.end());
    std::sort(out.begin(), out.end());
    return {std::move(in), std::move(out)};
}

std::pair<ChoiceDataset, ChoiceDataset> split_holdout(const ChoiceDataset& ds, double in_sample_frac,
                                                      std::uint64_t seed) {
    auto [in, out] = holdout_indices(ds.n_obs, in_sample_frac, seed);
    return {ds.subset(in), ds.subset(out)};
}

}  // namespace dcmsearch
