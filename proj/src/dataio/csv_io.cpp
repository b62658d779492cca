#include "zsd/dataio.hpp"
#include "zsd/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string_view>

namespace zsd {

namespace {

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path)
    {
        if (!in_) {
            throw IngestError(path_.string(), 0, "cannot open file");
        }
    }

    bool next(std::string& line)
    {
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!trim(line).empty()) {
                return true;
            }
        }
        return false;
    }

    [[nodiscard]] std::size_t line_no() const noexcept { return line_no_; }

    [[noreturn]] void fail(const std::string& what) const { throw IngestError(path_.string(), line_no_, what); }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

double parse_real(std::string_view field, const LineReader& reader, const char* column)
{
    field = trim(field);
    double value = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        reader.fail("column " + std::string(column) + ": not a number '" + std::string(field) + "'");
    }
    if (!std::isfinite(value)) {
        reader.fail("column " + std::string(column) + ": non-finite value");
    }
    return value;
}

ClassId parse_class_id(std::string_view field, const LineReader& reader, const char* column)
{
    field = trim(field);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        reader.fail("column " + std::string(column) + ": not an integer '" + std::string(field) + "'");
    }
    if (value < 0 || value > std::numeric_limits<ClassId>::max()) {
        reader.fail("column " + std::string(column) + ": class id out of range");
    }
    return static_cast<ClassId>(value);
}

// Checks that header fields [offset, end) are exactly prefix0, prefix1, ...
int vector_columns(const std::vector<std::string_view>& header, std::size_t offset, char prefix,
                   const LineReader& reader)
{
    for (std::size_t i = offset; i < header.size(); ++i) {
        const std::string expected = prefix + std::to_string(i - offset);
        if (trim(header[i]) != expected) {
            reader.fail("header column " + std::to_string(i + 1) + " should be '" + expected + "'");
        }
    }
    return static_cast<int>(header.size() - offset);
}

void write_vector(std::ostream& out, const Vec& v)
{
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out << ',' << format_real(v[i]);
    }
}

std::ofstream open_for_write(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    return out;
}

std::vector<ClassId> json_id_list(const nlohmann::json& doc, const char* key, const std::string& path)
{
    if (!doc.contains(key) || !doc.at(key).is_array()) {
        throw IngestError(path, 0, std::string("missing array '") + key + "'");
    }
    std::vector<ClassId> ids;
    for (const auto& item : doc.at(key)) {
        if (!item.is_number_integer()) {
            throw IngestError(path, 0, std::string("'") + key + "' must contain integers");
        }
        ids.push_back(item.get<ClassId>());
    }
    return ids;
}

} // namespace

std::string format_real(double value)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// SplitSpec

void SplitSpec::validate() const
{
    if (seen.empty() || unseen.empty()) {
        throw ValidationError("split: seen and unseen lists must be non-empty");
    }
    std::set<ClassId> seen_set;
    for (const auto id : seen) {
        if (id < 0) {
            throw ValidationError("split: negative class id " + std::to_string(id));
        }
        if (!seen_set.insert(id).second) {
            throw ValidationError("split: class " + std::to_string(id) + " listed twice in seen");
        }
    }
    std::set<ClassId> unseen_set;
    for (const auto id : unseen) {
        if (id < 0) {
            throw ValidationError("split: negative class id " + std::to_string(id));
        }
        if (seen_set.count(id)) {
            throw ValidationError("split: class " + std::to_string(id) + " is both seen and unseen");
        }
        if (!unseen_set.insert(id).second) {
            throw ValidationError("split: class " + std::to_string(id) + " listed twice in unseen");
        }
    }
    if (background_id < 0) {
        throw ValidationError("split: negative background id");
    }
    if (seen_set.count(background_id) || unseen_set.count(background_id)) {
        throw ValidationError("split: background id " + std::to_string(background_id) + " is also a class");
    }
}

bool SplitSpec::is_seen(ClassId id) const
{
    return std::find(seen.begin(), seen.end(), id) != seen.end();
}

bool SplitSpec::is_unseen(ClassId id) const
{
    return std::find(unseen.begin(), unseen.end(), id) != unseen.end();
}

SplitSpec load_split(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestError(path.string(), 0, "cannot open file");
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw IngestError(path.string(), 0, e.what());
    }
    if (!doc.is_object()) {
        throw IngestError(path.string(), 0, "split must be a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
        if (key != "seen" && key != "unseen" && key != "background_id") {
            throw IngestError(path.string(), 0, "unknown key '" + key + "'");
        }
    }
    SplitSpec split;
    split.seen = json_id_list(doc, "seen", path.string());
    split.unseen = json_id_list(doc, "unseen", path.string());
    if (!doc.contains("background_id") || !doc.at("background_id").is_number_integer()) {
        throw IngestError(path.string(), 0, "missing integer 'background_id'");
    }
    split.background_id = doc.at("background_id").get<ClassId>();
    split.validate();
    return split;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path)
{
    nlohmann::json doc;
    doc["seen"] = split.seen;
    doc["unseen"] = split.unseen;
    doc["background_id"] = split.background_id;
    auto out = open_for_write(path);
    out << doc.dump() << '\n';
}

// ---------------------------------------------------------------------------
// SemanticTable

SemanticTable::SemanticTable(int dim) : dim_(dim)
{
    if (dim <= 0) {
        throw ValidationError("semantic dimension must be positive");
    }
}

void SemanticTable::add(ClassId id, std::string name, Vec vector)
{
    if (vector.size() != dim_) {
        throw ValidationError("class " + std::to_string(id) + ": vector length " + std::to_string(vector.size()) +
                              " != " + std::to_string(dim_));
    }
    if (!entries_.emplace(id, Entry{std::move(name), std::move(vector)}).second) {
        throw ValidationError("duplicate class " + std::to_string(id));
    }
}

const Vec& SemanticTable::vector(ClassId id) const
{
    const auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw ValidationError("no semantics for class " + std::to_string(id));
    }
    return it->second.vector;
}

const std::string& SemanticTable::name(ClassId id) const
{
    const auto it = entries_.find(id);
    if (it == entries_.end()) {
        throw ValidationError("no semantics for class " + std::to_string(id));
    }
    return it->second.name;
}

std::vector<ClassId> SemanticTable::ids() const
{
    std::vector<ClassId> out;
    out.reserve(entries_.size());
    for (const auto& [id, entry] : entries_) {
        out.push_back(id);
    }
    return out;
}

Mat SemanticTable::stack(const std::vector<ClassId>& ids) const
{
    Mat out(dim_, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = vector(ids[i]);
    }
    return out;
}

void SemanticTable::check_covers(const SplitSpec& split) const
{
    for (const auto& list : {split.seen, split.unseen}) {
        for (const auto id : list) {
            if (!contains(id)) {
                throw ValidationError("semantic table has no entry for class " + std::to_string(id));
            }
        }
    }
}

bool operator==(const SemanticTable& a, const SemanticTable& b)
{
    if (a.dim_ != b.dim_ || a.entries_.size() != b.entries_.size()) {
        return false;
    }
    auto it = b.entries_.begin();
    for (const auto& [id, entry] : a.entries_) {
        if (id != it->first || entry.name != it->second.name || entry.vector != it->second.vector) {
            return false;
        }
        ++it;
    }
    return true;
}

SemanticTable load_semantic_table(const std::filesystem::path& path)
{
    LineReader reader(path);
    std::string line;
    if (!reader.next(line)) {
        reader.fail("missing header");
    }
    const auto header = split_fields(line);
    if (header.size() < 3 || trim(header[0]) != "class_id" || trim(header[1]) != "name") {
        reader.fail("header must start with class_id,name,v0");
    }
    const int dim = vector_columns(header, 2, 'v', reader);
    SemanticTable table(dim);
    while (reader.next(line)) {
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            reader.fail("expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
        }
        const ClassId id = parse_class_id(fields[0], reader, "class_id");
        Vec v(dim);
        for (int k = 0; k < dim; ++k) {
            v[k] = parse_real(fields[2 + k], reader, "v");
        }
        if (table.contains(id)) {
            reader.fail("duplicate class " + std::to_string(id));
        }
        table.add(id, std::string(trim(fields[1])), std::move(v));
    }
    return table;
}

void save_semantic_table(const SemanticTable& table, const std::filesystem::path& path)
{
    auto out = open_for_write(path);
    out << "class_id,name";
    for (int k = 0; k < table.dim(); ++k) {
        out << ",v" << k;
    }
    out << '\n';
    for (const auto& [id, entry] : table.entries()) {
        if (entry.name.find(',') != std::string::npos) {
            throw ValidationError("class name may not contain ',': " + entry.name);
        }
        out << id << ',' << entry.name;
        write_vector(out, entry.vector);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// FeatureSet

Mat FeatureSet::matrix() const
{
    Mat out(dim, static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = records[i].feature;
    }
    return out;
}

std::vector<ClassId> FeatureSet::labels() const
{
    std::vector<ClassId> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(r.label);
    }
    return out;
}

bool operator==(const FeatureSet& a, const FeatureSet& b)
{
    if (a.dim != b.dim || a.records.size() != b.records.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto& x = a.records[i];
        const auto& y = b.records[i];
        if (x.image_id != y.image_id || !(x.box == y.box) || x.label != y.label || x.feature != y.feature) {
            return false;
        }
    }
    return true;
}

FeatureSet load_feature_set(const std::filesystem::path& path)
{
    LineReader reader(path);
    std::string line;
    if (!reader.next(line)) {
        reader.fail("missing header");
    }
    const auto header = split_fields(line);
    static constexpr const char* fixed[] = {"image_id", "x", "y", "w", "h", "label"};
    if (header.size() < 7) {
        reader.fail("header must be image_id,x,y,w,h,label,f0..");
    }
    for (std::size_t i = 0; i < 6; ++i) {
        if (trim(header[i]) != fixed[i]) {
            reader.fail("header column " + std::to_string(i + 1) + " should be '" + fixed[i] + "'");
        }
    }
    FeatureSet set;
    set.dim = vector_columns(header, 6, 'f', reader);
    while (reader.next(line)) {
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            reader.fail("record " + std::to_string(set.records.size() + 1) + ": expected " +
                        std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        FeatureRecord rec;
        rec.image_id = std::string(trim(fields[0]));
        rec.box.x = parse_real(fields[1], reader, "x");
        rec.box.y = parse_real(fields[2], reader, "y");
        rec.box.w = parse_real(fields[3], reader, "w");
        rec.box.h = parse_real(fields[4], reader, "h");
        if (rec.box.w <= 0.0 || rec.box.h <= 0.0) {
            reader.fail("record " + std::to_string(set.records.size() + 1) + " (image " + rec.image_id +
                        "): box width and height must be positive");
        }
        rec.label = parse_class_id(fields[5], reader, "label");
        rec.feature.resize(set.dim);
        for (int k = 0; k < set.dim; ++k) {
            rec.feature[k] = parse_real(fields[6 + k], reader, "f");
        }
        set.records.push_back(std::move(rec));
    }
    return set;
}

void save_feature_set(const FeatureSet& features, const std::filesystem::path& path)
{
    auto out = open_for_write(path);
    out << "image_id,x,y,w,h,label";
    for (int k = 0; k < features.dim; ++k) {
        out << ",f" << k;
    }
    out << '\n';
    for (const auto& r : features.records) {
        if (r.feature.size() != features.dim) {
            throw ValidationError("feature of image " + r.image_id + " has wrong length");
        }
        out << r.image_id << ',' << format_real(r.box.x) << ',' << format_real(r.box.y) << ','
            << format_real(r.box.w) << ',' << format_real(r.box.h) << ',' << r.label;
        write_vector(out, r.feature);
        out << '\n';
    }
}

} // namespace zsd
