#pragma once

#include "mfgp/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mfgp {

/// One fidelity level of a training corpus. `prev_exact` carries exact
/// evaluations of the next-lower fidelity at this level's inputs (derivable
/// from nesting, or supplied explicitly when designs are not nested);
/// `prev_delay` carries lower-fidelity values at the delay-shifted inputs,
/// one column per input dimension.
struct FidelityLevel {
    Matrix X;
    Vector y;
    std::optional<double> cost_per_eval;
    std::optional<Vector> prev_exact;
    std::optional<Matrix> prev_delay;
};

struct FidelityDataset {
    std::vector<FidelityLevel> levels; // ordered low to high fidelity
    Matrix domain;                     // d x 2 box, column 0 = lo, column 1 = hi

    int dim() const { return levels.empty() ? 0 : static_cast<int>(levels.front().X.cols()); }
    int level_count() const { return static_cast<int>(levels.size()); }

    /// Throws DataError on inconsistent dims, empty levels, or a bad box.
    void validate() const;

    /// Nesting status of each consecutive pair (level l+1 into level l).
    std::vector<bool> nesting_flags(double tol = 1e-12) const;
    bool fully_nested(double tol = 1e-12) const;

    double domain_width(int d) const { return domain(d, 1) - domain(d, 0); }
};

/// Row indices of `inner` inside `outer` (exact match within tol). Throws
/// DataError naming the first offending row when not nested.
std::vector<Eigen::Index> nesting_map(const Matrix& inner, const Matrix& outer,
                                      double tol = 1e-12);

/// Manifest-driven load/save. The manifest is a JSON document listing one CSV
/// per fidelity level (columns x1..xd,y) plus the domain box; optional
/// per-level CSVs carry prev_exact / prev_delay columns.
FidelityDataset load_dataset(const std::string& manifest_path);
void save_dataset(const FidelityDataset& data, const std::string& manifest_path);

// CSV helpers shared by the reporting code.
struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Matrix& values);

/// Write-temp-then-rename so partially written artifacts never appear.
void write_atomic(const std::string& path, const std::string& content);

std::string format_double(double v); // round-trip exact, 17 significant digits

} // namespace mfgp
