#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "clusterdr/cli.hpp"
#include "clusterdr/error.hpp"

namespace clusterdr {

namespace {

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

struct CsvFile {
    std::string name;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;
};

[[noreturn]] void bad_cell(const CsvFile& f, std::size_t line, std::size_t col,
                           const std::string& why) {
    throw Error(ErrorCode::UnparseableCell, f.name + ":" + std::to_string(line) + ":" +
                                                std::to_string(col + 1) + ": " + why);
}

// Splits one record; double quotes may wrap a field and "" escapes a quote.
// Quoted fields spanning lines are not supported.
std::vector<std::string> split_record(const std::string& text, const CsvFile& f, std::size_t line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += ch;
            }
        } else if (ch == '"' && cell.empty() && !was_quoted) {
            quoted = was_quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
            was_quoted = false;
        } else {
            if (was_quoted) bad_cell(f, line, cells.size(), "text after closing quote");
            cell += ch;
        }
    }
    if (quoted) bad_cell(f, line, cells.size(), "unterminated quote");
    cells.push_back(std::move(cell));
    return cells;
}

CsvFile read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    CsvFile f;
    f.name = path.filename().string();
    std::string text;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (line == 1 && text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);
        if (text.empty()) continue;
        auto cells = split_record(text, f, line);
        if (!have_header) {
            f.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != f.header.size()) {
            bad_cell(f, line, std::min(cells.size(), f.header.size()),
                     "expected " + std::to_string(f.header.size()) + " fields, found " +
                         std::to_string(cells.size()));
        }
        f.rows.push_back({line, std::move(cells)});
    }
    if (!have_header) throw Error(ErrorCode::UnparseableCell, f.name + ": missing header row");
    return f;
}

double parse_number(const CsvFile& f, const CsvRow& row, std::size_t col) {
    const std::string& s = row.cells[col];
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        bad_cell(f, row.line, col, "'" + s + "' is not a number");
    }
    return v;
}

// Checks the fixed leading columns and counts the numbered ones after them.
std::size_t check_header(const CsvFile& f, const std::vector<std::string>& fixed, char prefix) {
    for (std::size_t k = 0; k < fixed.size(); ++k) {
        if (k >= f.header.size() || f.header[k] != fixed[k]) {
            bad_cell(f, 1, k, "expected column '" + fixed[k] + "'");
        }
    }
    for (std::size_t k = fixed.size(); k < f.header.size(); ++k) {
        const std::string expected = std::string(1, prefix) + std::to_string(k - fixed.size() + 1);
        if (f.header[k] != expected) bad_cell(f, 1, k, "expected column '" + expected + "'");
    }
    return f.header.size() - fixed.size();
}

}  // namespace

StudyDataset load_csv(const std::filesystem::path& clusters_path,
                      const std::filesystem::path& individuals_path,
                      std::span<const std::string> required_arms) {
    const CsvFile cf = read_csv(clusters_path);
    const CsvFile inf = read_csv(individuals_path);
    const std::size_t q = check_header(cf, {"cluster_id", "s", "arm"}, 'x');
    const std::size_t p = check_header(inf, {"cluster_id", "y"}, 'w');

    std::vector<ClusterRecord> records;
    std::map<std::string, std::size_t> index;
    for (const CsvRow& row : cf.rows) {
        ClusterRecord rec;
        rec.cluster_id = row.cells[0];
        if (row.cells[1] == "1") {
            rec.participates = true;
        } else if (row.cells[1] != "0") {
            bad_cell(cf, row.line, 1, "s must be 0 or 1");
        }
        if (!row.cells[2].empty()) rec.arm = row.cells[2];
        rec.x.resize(static_cast<Eigen::Index>(q));
        for (std::size_t k = 0; k < q; ++k) rec.x(static_cast<Eigen::Index>(k)) = parse_number(cf, row, 3 + k);
        if (!index.emplace(rec.cluster_id, records.size()).second) {
            throw Error(ErrorCode::DuplicateId, cf.name + ":" + std::to_string(row.line) +
                                                    ": duplicate cluster_id '" + rec.cluster_id + "'");
        }
        records.push_back(std::move(rec));
    }

    std::vector<std::vector<const CsvRow*>> members(records.size());
    for (const CsvRow& row : inf.rows) {
        auto it = index.find(row.cells[0]);
        if (it == index.end()) {
            throw Error(ErrorCode::OrphanIndividual,
                        inf.name + ":" + std::to_string(row.line) + ": cluster_id '" +
                            row.cells[0] + "' is not in " + cf.name);
        }
        members[it->second].push_back(&row);
    }

    for (std::size_t j = 0; j < records.size(); ++j) {
        ClusterRecord& rec = records[j];
        const auto n = static_cast<Eigen::Index>(members[j].size());
        rec.w.resize(n, static_cast<Eigen::Index>(p));
        Eigen::VectorXd y(n);
        std::size_t with_y = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const CsvRow& row = *members[j][static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < p; ++k) {
                rec.w(i, static_cast<Eigen::Index>(k)) = parse_number(inf, row, 2 + k);
            }
            if (!row.cells[1].empty()) {
                y(i) = parse_number(inf, row, 1);
                ++with_y;
            }
        }
        if (!rec.participates) continue;  // outcomes of non-randomized clusters are not used
        if (with_y != static_cast<std::size_t>(n)) {
            throw Error(ErrorCode::IncompleteTrialCluster,
                        "randomized cluster '" + rec.cluster_id + "' has " +
                            std::to_string(static_cast<std::size_t>(n) - with_y) +
                            " individuals without an outcome");
        }
        rec.y = std::move(y);
    }
    return validate_dataset(std::move(records), required_arms);
}

}  // namespace clusterdr
