#pragma once

// Profile dataset CSV.
//
//   id,tier1,tier2,q=<v1>,...,q=<vd>     header; grid values with 6 decimals
//   <id>,<tier1>,<tier2 or empty>,<intensity>...   one row per profile
//
// Intensities are written with 17 significant digits, so load(save(ds))
// reproduces every double bit for bit. Label tokens are matched after
// trimming and ASCII lower-casing:
//
//   tier1   mica | substrate                         -> mica
//           tissue                                   -> tissue
//   tier2   beta | cross-beta | cross_beta | β | 1   -> beta
//           not_beta | notbeta | non-beta | ¬β | 0   -> not_beta
//           (empty)                                  -> absent

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/profile.hpp"

namespace crossbeta {

namespace csv_detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) {
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
    return out;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
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

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string format_double(double v, int digits = 17) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string format_fixed(double v, int decimals) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace csv_detail

inline std::optional<Tier1> parse_tier1(std::string_view token) {
    const auto t = csv_detail::lower(csv_detail::trim(token));
    if (t == "mica" || t == "substrate") return Tier1::mica;
    if (t == "tissue") return Tier1::tissue;
    return std::nullopt;
}

/// Returns nullopt for an unknown token; an empty token is a valid "absent".
inline std::optional<std::optional<Tier2>> parse_tier2(std::string_view token) {
    const auto t = csv_detail::lower(csv_detail::trim(token));
    if (t.empty()) return std::optional<Tier2>{};
    if (t == "beta" || t == "cross-beta" || t == "cross_beta" || t == "\xce\xb2" || t == "1")
        return std::optional<Tier2>{Tier2::beta};
    if (t == "not_beta" || t == "notbeta" || t == "non-beta" || t == "\xc2\xac\xce\xb2" || t == "0")
        return std::optional<Tier2>{Tier2::not_beta};
    return std::nullopt;
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
    out << "id,tier1,tier2";
    for (double q : ds.grid().values()) out << ",q=" << csv_detail::format_fixed(q, 6);
    out << '\n';
    for (const auto& p : ds.profiles()) {
        if (p.id.find_first_of(",\n\r") != std::string::npos)
            throw DataError("profile id '" + p.id + "' contains a separator character");
        out << p.id << ',' << to_string(p.tier1) << ',';
        if (p.tier2) out << to_string(*p.tier2);
        for (double v : p.intensities) out << ',' << csv_detail::format_double(v);
        out << '\n';
    }
}

inline Dataset read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: empty input, header expected");
    const auto header = csv_detail::split_fields(csv_detail::trim(line));
    if (header.size() < 4 || csv_detail::trim(header[0]) != "id" || csv_detail::trim(header[1]) != "tier1" ||
        csv_detail::trim(header[2]) != "tier2")
        throw DataError("csv header: expected 'id,tier1,tier2,q=...'");

    std::vector<double> q;
    for (std::size_t k = 3; k < header.size(); ++k) {
        auto field = csv_detail::trim(header[k]);
        if (field.substr(0, 2) != "q=") throw DataError("csv header: column " + std::to_string(k + 1) + " is not 'q=<value>'");
        auto v = csv_detail::parse_double(field.substr(2));
        if (!v) throw DataError("csv header: bad q value in column " + std::to_string(k + 1));
        q.push_back(*v);
    }
    QGrid grid(std::move(q));

    std::vector<Profile> profiles;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (csv_detail::trim(line).empty()) continue;
        const auto fields = csv_detail::split_fields(line);
        const std::string where = "csv row " + std::to_string(row);
        if (fields.size() != header.size())
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        Profile p;
        p.id = std::string(csv_detail::trim(fields[0]));
        auto t1 = parse_tier1(fields[1]);
        if (!t1) throw DataError(where + ": unknown tier1 label '" + std::string(fields[1]) + "'");
        p.tier1 = *t1;
        auto t2 = parse_tier2(fields[2]);
        if (!t2) throw DataError(where + ": unknown tier2 label '" + std::string(fields[2]) + "'");
        p.tier2 = *t2;
        p.intensities.reserve(grid.size());
        for (std::size_t k = 3; k < fields.size(); ++k) {
            auto v = csv_detail::parse_double(fields[k]);
            if (!v) throw DataError(where + ": column " + std::to_string(k + 1) + " is not a number");
            if (*v < 0.0) throw DataError(where + ": negative intensity in column " + std::to_string(k + 1));
            p.intensities.push_back(*v);
        }
        profiles.push_back(std::move(p));
    }
    try {
        return Dataset(std::move(grid), std::move(profiles));
    } catch (const DataError& e) {
        throw DataError(std::string("csv: ") + e.what());
    }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_csv(out, ds);
    if (!out) throw DataError("write to '" + path + "' failed");
}

inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return read_csv(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

}  // namespace crossbeta
