#include "zsd/semantics.hpp"
#include "zsd/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace zsd {

MarginMatrix::MarginMatrix(std::vector<ClassId> class_ids, Mat values, MarginRange range)
    : ids_(std::move(class_ids)), values_(std::move(values)), range_(range)
{
    const auto n = static_cast<Eigen::Index>(ids_.size());
    if (values_.rows() != n || values_.cols() != n) {
        throw ValidationError("margin matrix shape does not match its class list");
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            throw ValidationError("margin matrix lists class " + std::to_string(ids_[i]) + " twice");
        }
    }
}

std::size_t MarginMatrix::index_of(ClassId id) const
{
    const auto it = index_.find(id);
    if (it == index_.end()) {
        throw ValidationError("margin matrix has no class " + std::to_string(id));
    }
    return it->second;
}

double MarginMatrix::margin(ClassId anchor, ClassId negative) const
{
    const auto i = static_cast<Eigen::Index>(index_of(anchor));
    const auto j = static_cast<Eigen::Index>(index_of(negative));
    return values_(i, j);
}

Mat covariance_of_semantics(const SemanticTable& table, double shrinkage)
{
    if (table.size() < 2) {
        throw ValidationError("covariance needs at least 2 classes");
    }
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
        throw ValidationError("shrinkage must lie in [0, 1]");
    }
    const Mat p = table.stack(table.ids());
    const Vec mean = p.rowwise().mean();
    const Mat centered = p.colwise() - mean;
    Mat sigma = centered * centered.transpose() / static_cast<double>(p.cols());
    sigma = 0.5 * (sigma + sigma.transpose());

    const auto d = static_cast<double>(table.dim());
    const double scale = sigma.trace() / d;
    Mat reg = (1.0 - shrinkage) * sigma;
    reg.diagonal().array() += shrinkage * scale;

    Eigen::SelfAdjointEigenSolver<Mat> eig(reg, Eigen::EigenvaluesOnly);
    const double largest = eig.eigenvalues().maxCoeff();
    const double smallest = eig.eigenvalues().minCoeff();
    if (!(largest > 0.0) || smallest <= largest * 1e-12) {
        throw NumericError("singular covariance, increase shrinkage");
    }
    return reg;
}

Mat mahalanobis_distances(const SemanticTable& table, double shrinkage)
{
    const Mat cov = covariance_of_semantics(table, shrinkage);
    const Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericError("singular covariance, increase shrinkage");
    }
    // Whitening by L^-1 turns Mahalanobis distance into Euclidean distance.
    const Mat white = llt.matrixL().solve(table.stack(table.ids()));
    const auto n = white.cols();
    Mat dist = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (white.col(i) - white.col(j)).norm();
            dist(i, j) = v;
            dist(j, i) = v;
        }
    }
    return dist;
}

MarginMatrix margin_matrix(const SemanticTable& table, double shrinkage, MarginRange range)
{
    if (!(range.min > 0.0 && range.min < range.max)) {
        throw ValidationError("margin range needs 0 < min < max");
    }
    const Mat dist = mahalanobis_distances(table, shrinkage);
    const auto n = dist.rows();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            lo = std::min(lo, dist(i, j));
            hi = std::max(hi, dist(i, j));
        }
    }
    const double spread = hi - lo;
    if (!(spread > 1e-12 * std::max(1.0, hi))) {
        throw NumericError("degenerate semantics");
    }
    Mat values = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double t = (dist(i, j) - lo) / spread;
            const double v = range.min + t * (range.max - range.min);
            values(i, j) = v;
            values(j, i) = v;
        }
    }
    return MarginMatrix(table.ids(), std::move(values), range);
}

void save_margin_matrix(const MarginMatrix& mm, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << "class_id";
    for (const auto id : mm.class_ids()) {
        out << ',' << id;
    }
    out << '\n';
    for (std::size_t i = 0; i < mm.class_ids().size(); ++i) {
        out << mm.class_ids()[i];
        for (Eigen::Index j = 0; j < mm.values().cols(); ++j) {
            out << ',' << format_real(mm.values()(static_cast<Eigen::Index>(i), j));
        }
        out << '\n';
    }
}

MarginMatrix load_margin_matrix(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestError(path.string(), 0, "cannot open file");
    }
    auto split_line = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            out.push_back(field);
        }
        return out;
    };
    std::string line;
    if (!std::getline(in, line)) {
        throw IngestError(path.string(), 1, "missing header");
    }
    const auto header = split_line(line);
    if (header.empty() || header[0] != "class_id") {
        throw IngestError(path.string(), 1, "header must start with class_id");
    }
    std::vector<ClassId> ids;
    for (std::size_t i = 1; i < header.size(); ++i) {
        ids.push_back(std::stoi(header[i]));
    }
    const auto n = static_cast<Eigen::Index>(ids.size());
    Mat values(n, n);
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::getline(in, line)) {
            throw IngestError(path.string(), static_cast<std::size_t>(i + 2), "missing row");
        }
        const auto row = split_line(line);
        if (static_cast<Eigen::Index>(row.size()) != n + 1 || std::stoi(row[0]) != ids[static_cast<std::size_t>(i)]) {
            throw IngestError(path.string(), static_cast<std::size_t>(i + 2), "malformed row");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            values(i, j) = std::stod(row[static_cast<std::size_t>(j + 1)]);
            if (i != j) {
                lo = std::min(lo, values(i, j));
                hi = std::max(hi, values(i, j));
            }
        }
    }
    return MarginMatrix(std::move(ids), std::move(values), MarginRange{lo, hi});
}

} // namespace zsd
