#include "mfgp/dataset.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mfgp {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_atomic(const std::string& path, const std::string& content) {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out.good()) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    CsvTable table;
    std::string line;
    std::vector<std::vector<double>> rows;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (line_no == 1) {
            while (std::getline(ss, cell, ',')) table.header.push_back(cell);
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(line_no) + ": not a number: '" +
                                cell + "'");
            }
        }
        if (row.size() != table.header.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " columns, got " +
                            std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (table.header.empty()) throw DataError(path + ": empty file");
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Matrix& values) {
    check_shape(values.cols() == static_cast<Eigen::Index>(header.size()),
                "write_csv: header/column mismatch");
    std::ostringstream out;
    for (std::size_t j = 0; j < header.size(); ++j)
        out << header[j] << (j + 1 < header.size() ? "," : "\n");
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index j = 0; j < values.cols(); ++j)
            out << format_double(values(i, j)) << (j + 1 < values.cols() ? "," : "\n");
    write_atomic(path, out.str());
}

void FidelityDataset::validate() const {
    if (levels.empty()) throw DataError("dataset has no fidelity levels");
    const auto d = levels.front().X.cols();
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& lev = levels[l];
        if (lev.X.rows() == 0) throw DataError("level " + std::to_string(l + 1) + " is empty");
        if (lev.X.cols() != d)
            throw DataError("level " + std::to_string(l + 1) + " has input width " +
                            std::to_string(lev.X.cols()) + ", expected " + std::to_string(d));
        if (lev.y.size() != lev.X.rows())
            throw DataError("level " + std::to_string(l + 1) + " has " +
                            std::to_string(lev.y.size()) + " outputs for " +
                            std::to_string(lev.X.rows()) + " inputs");
        if (lev.prev_exact && lev.prev_exact->size() != lev.X.rows())
            throw DataError("level " + std::to_string(l + 1) + " prev_exact length mismatch");
        if (lev.prev_delay &&
            (lev.prev_delay->rows() != lev.X.rows() || lev.prev_delay->cols() != d))
            throw DataError("level " + std::to_string(l + 1) + " prev_delay shape mismatch");
        if (lev.cost_per_eval && *lev.cost_per_eval <= 0)
            throw DataError("level " + std::to_string(l + 1) + " cost must be positive");
    }
    if (domain.size() > 0) {
        if (domain.rows() != d || domain.cols() != 2)
            throw DataError("domain box must be d x 2");
        for (Eigen::Index k = 0; k < d; ++k)
            if (!(domain(k, 0) < domain(k, 1)))
                throw DataError("domain box has lo >= hi in dimension " + std::to_string(k));
    }
}

std::vector<Eigen::Index> nesting_map(const Matrix& inner, const Matrix& outer, double tol) {
    std::vector<Eigen::Index> map(inner.rows(), -1);
    for (Eigen::Index i = 0; i < inner.rows(); ++i) {
        for (Eigen::Index j = 0; j < outer.rows(); ++j) {
            if ((inner.row(i) - outer.row(j)).cwiseAbs().maxCoeff() <= tol) {
                map[static_cast<std::size_t>(i)] = j;
                break;
            }
        }
        if (map[static_cast<std::size_t>(i)] < 0)
            throw DataError("designs not nested: row " + std::to_string(i) +
                            " of the finer level has no match in the coarser level");
    }
    return map;
}

std::vector<bool> FidelityDataset::nesting_flags(double tol) const {
    std::vector<bool> flags;
    for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
        bool ok = true;
        try {
            nesting_map(levels[l + 1].X, levels[l].X, tol);
        } catch (const DataError&) {
            ok = false;
        }
        flags.push_back(ok);
    }
    return flags;
}

bool FidelityDataset::fully_nested(double tol) const {
    auto flags = nesting_flags(tol);
    for (bool f : flags)
        if (!f) return false;
    return true;
}

namespace {

Matrix table_columns(const CsvTable& t, Eigen::Index first, Eigen::Index count) {
    return t.values.middleCols(first, count);
}

} // namespace

FidelityDataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("manifest parse error in " + manifest_path + ": " + e.what());
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
        throw DataError("manifest " + manifest_path + ": unsupported or missing format_version");

    fs::path base = fs::path(manifest_path).parent_path();
    FidelityDataset data;

    auto dom = j.at("domain").get<std::vector<std::vector<double>>>();
    data.domain.resize(static_cast<Eigen::Index>(dom.size()), 2);
    for (std::size_t k = 0; k < dom.size(); ++k) {
        if (dom[k].size() != 2) throw DataError("manifest domain entries must be [lo, hi]");
        data.domain(static_cast<Eigen::Index>(k), 0) = dom[k][0];
        data.domain(static_cast<Eigen::Index>(k), 1) = dom[k][1];
    }
    const auto d = data.domain.rows();

    for (const auto& jl : j.at("levels")) {
        FidelityLevel lev;
        CsvTable t = read_csv((base / jl.at("data").get<std::string>()).string());
        if (t.values.cols() != d + 1)
            throw DataError("level file " + jl.at("data").get<std::string>() + " must have " +
                            std::to_string(d + 1) + " columns (x1..xd,y)");
        lev.X = table_columns(t, 0, d);
        lev.y = t.values.col(d);
        if (jl.contains("cost_per_eval")) lev.cost_per_eval = jl["cost_per_eval"].get<double>();
        if (jl.contains("prev_exact")) {
            CsvTable pt = read_csv((base / jl["prev_exact"].get<std::string>()).string());
            if (pt.values.cols() != 1)
                throw DataError("prev_exact file must have a single column");
            lev.prev_exact = pt.values.col(0);
        }
        if (jl.contains("prev_delay")) {
            CsvTable dt = read_csv((base / jl["prev_delay"].get<std::string>()).string());
            if (dt.values.cols() != d)
                throw DataError("prev_delay file must have one column per input dimension");
            lev.prev_delay = dt.values;
        }
        data.levels.push_back(std::move(lev));
    }
    data.validate();
    return data;
}

void save_dataset(const FidelityDataset& data, const std::string& manifest_path) {
    data.validate();
    fs::path base = fs::path(manifest_path).parent_path();
    fs::path stem = fs::path(manifest_path).stem();
    const auto d = data.domain.rows() > 0 ? data.domain.rows() : data.levels.front().X.cols();

    json j;
    j["format_version"] = 1;
    std::vector<std::vector<double>> dom;
    for (Eigen::Index k = 0; k < data.domain.rows(); ++k)
        dom.push_back({data.domain(k, 0), data.domain(k, 1)});
    j["domain"] = dom;
    j["levels"] = json::array();

    std::vector<std::string> xy_header;
    for (Eigen::Index k = 0; k < d; ++k) xy_header.push_back("x" + std::to_string(k + 1));
    xy_header.push_back("y");

    for (std::size_t l = 0; l < data.levels.size(); ++l) {
        const auto& lev = data.levels[l];
        std::string data_file = stem.string() + "_level" + std::to_string(l + 1) + ".csv";
        Matrix xy(lev.X.rows(), d + 1);
        xy.leftCols(d) = lev.X;
        xy.col(d) = lev.y;
        write_csv((base / data_file).string(), xy_header, xy);

        json jl;
        jl["data"] = data_file;
        if (lev.cost_per_eval) jl["cost_per_eval"] = *lev.cost_per_eval;
        if (lev.prev_exact) {
            std::string f = stem.string() + "_level" + std::to_string(l + 1) + "_prev.csv";
            write_csv((base / f).string(), {"f_prev"}, Matrix(*lev.prev_exact));
            jl["prev_exact"] = f;
        }
        if (lev.prev_delay) {
            std::string f = stem.string() + "_level" + std::to_string(l + 1) + "_delay.csv";
            std::vector<std::string> header;
            for (Eigen::Index k = 0; k < d; ++k) header.push_back("f_delay" + std::to_string(k + 1));
            write_csv((base / f).string(), header, *lev.prev_delay);
            jl["prev_delay"] = f;
        }
        j["levels"].push_back(std::move(jl));
    }
    write_atomic(manifest_path, j.dump(2) + "\n");
}

} // namespace mfgp
