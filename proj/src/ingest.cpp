#include "obsr/ingest.hpp"

#include <algorithm>
#include <boost/tokenizer.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace obsr {
namespace {

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::string trimmed = line;
    if (!trimmed.empty() && trimmed.back() == '\r') trimmed.pop_back();
    Tokenizer tok(trimmed, boost::escaped_list_separator<char>('\\', ',', '"'));
    return {tok.begin(), tok.end()};
}

std::ifstream open_or_fail(const std::string& path) {
    if (!fs::is_regular_file(path)) fail(Errc::FileNotFound, path);
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, path);
    return in;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string binding(const RawDatasetDescriptor& desc, const std::string& role, const std::string& fallback) {
    const auto it = desc.columns.find(role);
    return it == desc.columns.end() ? fallback : it->second;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name, const std::string& path) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(Errc::HeaderMismatch, "column '" + name + "' not in header of " + path);
    return static_cast<std::size_t>(it - header.begin());
}

std::optional<std::size_t> optional_column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
}

template <typename T>
void sort_and_check_ids(std::vector<T>& items) {
    std::sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.id < b.id; });
    const auto dup = std::adjacent_find(items.begin(), items.end(), [](const T& a, const T& b) { return a.id == b.id; });
    if (dup != items.end()) fail(Errc::DuplicateId, "id '" + dup->id + "' appears more than once");
}

bool timestamps_monotone(const std::vector<Sample>& samples) {
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].time < samples[i - 1].time) return false;
    }
    return true;
}

std::string format_time(std::int64_t t) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{t}};
    const auto day = floor<days>(tp);
    const year_month_day ymd{day};
    const hh_mm_ss hms{tp - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u,%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

// Geolife day count since 1899-12-30, field 4 of a PLT row.
double excel_days(std::int64_t t) { return 25569.0 + static_cast<double>(t) / 86400.0; }

}  // namespace

DatasetFormat parse_dataset_format(const std::string& name) {
    if (name == "point_csv") return DatasetFormat::point_csv;
    if (name == "porto_polyline_csv") return DatasetFormat::porto_polyline_csv;
    if (name == "geolife_plt_dir") return DatasetFormat::geolife_plt_dir;
    fail(Errc::InvalidConfig, "unknown dataset format '" + name + "'");
}

std::string to_string(DatasetFormat f) {
    switch (f) {
        case DatasetFormat::point_csv: return "point_csv";
        case DatasetFormat::porto_polyline_csv: return "porto_polyline_csv";
        case DatasetFormat::geolife_plt_dir: return "geolife_plt_dir";
    }
    return "unknown";
}

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
    if (text.empty()) return std::nullopt;
    const std::size_t digits_from = text[0] == '-' ? 1 : 0;
    if (text.size() > digits_from &&
        std::all_of(text.begin() + static_cast<std::ptrdiff_t>(digits_from), text.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; })) {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc() && ptr == text.data() + text.size()) return v;
        return std::nullopt;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s) != 7 &&
        std::sscanf(text.c_str(), "%d/%d/%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s) != 7) {
        return std::nullopt;
    }
    if (sep != ' ' && sep != 'T') return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) return std::nullopt;
    const sys_seconds tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
    return tp.time_since_epoch().count();
}

LoadResult<PointRecord> load_points(const RawDatasetDescriptor& desc) {
    auto in = open_or_fail(desc.path);
    std::string line;
    if (!std::getline(in, line)) fail(Errc::HeaderMismatch, "missing header row in " + desc.path);
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);

    const std::size_t id_col = column_index(header, binding(desc, "id", "id"), desc.path);
    const std::size_t lat_col = column_index(header, binding(desc, "lat", "lat"), desc.path);
    const std::size_t lon_col = column_index(header, binding(desc, "lon", "lon"), desc.path);
    std::optional<std::size_t> target_col;
    if (desc.columns.count("target")) target_col = column_index(header, desc.columns.at("target"), desc.path);
    std::optional<std::size_t> time_col;
    if (desc.columns.count("timestamp")) time_col = column_index(header, desc.columns.at("timestamp"), desc.path);

    LoadResult<PointRecord> out;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++out.input_rows;
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const boost::escaped_list_error&) {
            ++out.drop_count;
            continue;
        }
        if (fields.size() != header.size() || fields[id_col].empty()) {
            ++out.drop_count;
            continue;
        }
        const auto lat = parse_double(fields[lat_col]);
        const auto lon = parse_double(fields[lon_col]);
        if (!lat || !lon || !GeoPoint::valid(*lat, *lon)) {
            ++out.drop_count;
            continue;
        }
        const GeoPoint p(*lat, *lon);
        if (desc.bbox && !desc.bbox->contains(p)) {
            ++out.drop_count;
            continue;
        }
        PointRecord rec{fields[id_col], p, std::nullopt, std::nullopt, {}};
        if (target_col) {
            rec.target = parse_double(fields[*target_col]);
            if (!rec.target) {
                ++out.drop_count;
                continue;
            }
        }
        if (time_col) {
            rec.timestamp = parse_timestamp(fields[*time_col]);
            if (!rec.timestamp) {
                ++out.drop_count;
                continue;
            }
        }
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i == id_col || i == lat_col || i == lon_col || (target_col && i == *target_col) ||
                (time_col && i == *time_col)) {
                continue;
            }
            if (auto v = parse_double(fields[i])) {
                rec.features.emplace(header[i], *v);
            } else {
                rec.features.emplace(header[i], fields[i]);
            }
        }
        out.items.push_back(std::move(rec));
    }
    if (out.items.empty()) fail(Errc::EmptyDataset, "no valid rows in " + desc.path);
    sort_and_check_ids(out.items);
    return out;
}

std::vector<GeoPoint> parse_polyline(const std::string& text) {
    json arr;
    try {
        arr = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(Errc::MalformedPolyline, e.what());
    }
    if (!arr.is_array()) fail(Errc::MalformedPolyline, "POLYLINE is not an array");
    std::vector<GeoPoint> out;
    out.reserve(arr.size());
    for (const auto& pair : arr) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
            fail(Errc::MalformedPolyline, "expected [lon, lat] pairs");
        }
        const double lon = pair[0].get<double>();
        const double lat = pair[1].get<double>();
        if (!GeoPoint::valid(lat, lon)) fail(Errc::MalformedPolyline, "coordinate out of range");
        out.emplace_back(lat, lon);
    }
    return out;
}

LoadResult<Trajectory> load_porto_trips(const RawDatasetDescriptor& desc) {
    auto in = open_or_fail(desc.path);
    std::string line;
    if (!std::getline(in, line)) fail(Errc::HeaderMismatch, "missing header row in " + desc.path);
    const auto header = split_csv_line(line);
    const std::size_t id_col = column_index(header, binding(desc, "id", "TRIP_ID"), desc.path);
    const std::size_t start_col = column_index(header, binding(desc, "start", "TIMESTAMP"), desc.path);
    const std::size_t poly_col = column_index(header, binding(desc, "polyline", "POLYLINE"), desc.path);
    const auto taxi_col = optional_column(header, "TAXI_ID");
    const auto call_col = optional_column(header, "CALL_TYPE");

    LoadResult<Trajectory> out;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++out.input_rows;
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const boost::escaped_list_error&) {
            ++out.drop_count;
            continue;
        }
        if (fields.size() != header.size()) {
            ++out.drop_count;
            continue;
        }
        const auto start = parse_timestamp(fields[start_col]);
        std::vector<GeoPoint> points;
        try {
            points = parse_polyline(fields[poly_col]);
        } catch (const Error&) {
            ++out.drop_count;
            continue;
        }
        if (!start || points.size() < 2) {
            ++out.drop_count;
            continue;
        }
        if (desc.bbox && !std::all_of(points.begin(), points.end(), [&](const GeoPoint& p) { return desc.bbox->contains(p); })) {
            ++out.drop_count;
            continue;
        }
        Trajectory t{fields[id_col], {}, {}};
        t.samples.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            t.samples.push_back({points[i], *start + desc.sample_interval_s * static_cast<std::int64_t>(i)});
        }
        if (taxi_col) t.meta["taxi_id"] = fields[*taxi_col];
        if (call_col) t.meta["call_type"] = fields[*call_col];
        out.items.push_back(std::move(t));
    }
    sort_and_check_ids(out.items);
    return out;
}

namespace {

struct ModeLabel {
    std::int64_t start, end;
    std::string mode;
};

std::vector<ModeLabel> read_labels(const fs::path& file) {
    std::vector<ModeLabel> labels;
    std::ifstream in(file);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string a, b, mode;
        if (!std::getline(ss, a, '\t') || !std::getline(ss, b, '\t') || !std::getline(ss, mode)) continue;
        const auto s = parse_timestamp(a);
        const auto e = parse_timestamp(b);
        if (s && e) labels.push_back({*s, *e, mode});
    }
    return labels;
}

std::string geolife_id(const fs::path& root, const fs::path& file) {
    std::string id;
    fs::path rel = fs::relative(file, root);
    rel.replace_extension();
    for (const auto& part : rel) {
        if (part == "Trajectory") continue;
        if (!id.empty()) id += '/';
        id += part.string();
    }
    return id;
}

// Returns nullopt when the file is malformed or empty after filtering.
std::optional<Trajectory> parse_plt(const fs::path& root, const fs::path& file, const BoundingBox& box) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    std::string line;
    for (int i = 0; i < 6; ++i) {
        if (!std::getline(in, line)) return std::nullopt;
    }
    Trajectory t{geolife_id(root, file), {}, {}};
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() < 7) return std::nullopt;
        const auto lat = parse_double(f[0]);
        const auto lon = parse_double(f[1]);
        const auto t_s = parse_timestamp(f[5] + " " + f[6]);
        if (!lat || !lon || !t_s || !GeoPoint::valid(*lat, *lon)) return std::nullopt;
        const GeoPoint p(*lat, *lon);
        if (!box.contains(p)) continue;
        t.samples.push_back({p, *t_s});
    }
    if (t.samples.size() < 2 || !timestamps_monotone(t.samples)) return std::nullopt;
    return t;
}

}  // namespace

LoadResult<Trajectory> load_geolife(const RawDatasetDescriptor& desc) {
    if (!fs::is_directory(desc.path)) fail(Errc::FileNotFound, desc.path);
    const BoundingBox box = desc.bbox.value_or(kBeijingBox);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(desc.path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".plt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<std::optional<Trajectory>> parsed(files.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(files.size()); ++i) {
        parsed[static_cast<std::size_t>(i)] = parse_plt(desc.path, files[static_cast<std::size_t>(i)], box);
    }

    std::map<fs::path, std::vector<ModeLabel>> labels_by_dir;
    LoadResult<Trajectory> out;
    out.input_rows = files.size();
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!parsed[i]) {
            ++out.drop_count;
            continue;
        }
        Trajectory t = std::move(*parsed[i]);
        // user directories hold Trajectory/ and an optional labels.txt
        fs::path user_dir = files[i].parent_path();
        if (user_dir.filename() == "Trajectory") user_dir = user_dir.parent_path();
        auto it = labels_by_dir.find(user_dir);
        if (it == labels_by_dir.end()) {
            const fs::path label_file = user_dir / "labels.txt";
            it = labels_by_dir.emplace(user_dir, fs::exists(label_file) ? read_labels(label_file) : std::vector<ModeLabel>{}).first;
        }
        const std::int64_t t0 = t.samples.front().time;
        for (const auto& l : it->second) {
            if (t0 >= l.start && t0 <= l.end) {
                t.meta["mode"] = l.mode;
                break;
            }
        }
        out.items.push_back(std::move(t));
    }
    if (out.items.empty() && !files.empty()) fail(Errc::EmptyAfterFilter, "no trajectory survives the bounding box in " + desc.path);
    sort_and_check_ids(out.items);
    return out;
}

LoadResult<Trajectory> load_trajectories(const RawDatasetDescriptor& desc) {
    switch (desc.format) {
        case DatasetFormat::porto_polyline_csv: return load_porto_trips(desc);
        case DatasetFormat::geolife_plt_dir: return load_geolife(desc);
        case DatasetFormat::point_csv: break;
    }
    fail(Errc::InvalidConfig, "point_csv is not a trajectory format");
}

IdManifest load_id_manifest(const std::string& path) {
    auto in = open_or_fail(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(Errc::InvalidConfig, path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("train") || !j.contains("test")) {
        fail(Errc::InvalidConfig, path + ": expected an object with \"train\" and \"test\" lists");
    }
    IdManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
}

void write_points_csv(const std::vector<PointRecord>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    out << "id,lat,lon,timestamp,target\n";
    out << std::setprecision(17);
    for (const auto& p : points) {
        out << p.id << ',' << p.point.lat() << ',' << p.point.lon() << ',';
        if (p.timestamp) out << *p.timestamp;
        out << ',';
        if (p.target) out << *p.target;
        out << '\n';
    }
}

void write_porto_csv(const std::vector<Trajectory>& trajs, const std::string& path, std::int64_t interval_s) {
    std::ofstream out(path);
    if (!out) fail(Errc::IOError, "cannot write " + path);
    out << "TRIP_ID,TIMESTAMP,POLYLINE\n";
    out << std::setprecision(17);
    for (const auto& t : trajs) {
        for (std::size_t i = 1; i < t.samples.size(); ++i) {
            if (t.samples[i].time - t.samples[i - 1].time != interval_s) {
                fail(Errc::InvalidSpec, "trajectory " + t.id + " does not follow a fixed " + std::to_string(interval_s) + " s cadence");
            }
        }
        out << t.id << ',' << t.samples.front().time << ",\"[";
        for (std::size_t i = 0; i < t.samples.size(); ++i) {
            out << (i ? "," : "") << '[' << t.samples[i].point.lon() << ',' << t.samples[i].point.lat() << ']';
        }
        out << "]\"\n";
    }
}

void write_plt_dir(const std::vector<Trajectory>& trajs, const std::string& dir) {
    for (const auto& t : trajs) {
        const fs::path file = fs::path(dir) / (t.id + ".plt");
        fs::create_directories(file.parent_path());
        std::ofstream out(file);
        if (!out) fail(Errc::IOError, "cannot write " + file.string());
        out << "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";
        out << std::setprecision(12);
        for (const auto& s : t.samples) {
            out << s.point.lat() << ',' << s.point.lon() << ",0,0," << excel_days(s.time) << ',' << format_time(s.time) << '\n';
        }
    }
}

}  // namespace obsr
