#include "hierflow/series.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "hierflow/errors.hpp"
#include "hierflow/io_util.hpp"

namespace hierflow {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_value(const std::string& s, std::size_t row) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ": not a number: '" + s + "'");
    }
    if (pos != s.size())
        throw DataError("row " + std::to_string(row) + ": trailing junk in value '" + s + "'");
    if (v < 0.0)
        throw DataError("row " + std::to_string(row) + ": negative count " + s);
    return v;
}

SeriesTable load_wide(std::istream& in) {
    SeriesTable t;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "node_id")
        throw DataError("wide CSV header must start with node_id,slot_0,...");
    t.slots = header.size() - 1;
    std::size_t row = 1;
    std::map<std::string, bool> seen;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        if (seen.count(fields[0]))
            throw DataError("row " + std::to_string(row) + ": duplicate node_id " + fields[0]);
        seen[fields[0]] = true;
        t.node_ids.push_back(fields[0]);
        for (std::size_t i = 1; i < fields.size(); ++i)
            t.values.push_back(parse_value(fields[i], row));
    }
    if (t.node_ids.empty()) throw DataError("CSV contains no data rows");
    return t;
}

SeriesTable load_long(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV");
    const auto header = split_csv_line(line);
    if (header.size() != 3 || header[0] != "node_id")
        throw DataError("long CSV header must be node_id,timestamp,value");
    std::map<std::string, std::map<long long, double>> by_node;
    std::vector<std::string> order;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw DataError("row " + std::to_string(row) + ": expected 3 fields");
        long long slot;
        try {
            slot = std::stoll(fields[1]);
        } catch (const std::exception&) {
            throw DataError("row " + std::to_string(row) + ": bad timestamp '" + fields[1] + "'");
        }
        if (!by_node.count(fields[0])) order.push_back(fields[0]);
        auto& m = by_node[fields[0]];
        if (m.count(slot))
            throw DataError("row " + std::to_string(row) + ": duplicate slot " +
                            std::to_string(slot) + " for node " + fields[0]);
        m[slot] = parse_value(fields[2], row);
    }
    if (order.empty()) throw DataError("CSV contains no data rows");
    const std::size_t slots = by_node[order[0]].size();
    SeriesTable t;
    t.slots = slots;
    for (const auto& id : order) {
        const auto& m = by_node[id];
        if (m.size() != slots)
            throw DataError("node " + id + " has " + std::to_string(m.size()) +
                            " slots, expected " + std::to_string(slots));
        long long expect = 0;
        for (const auto& [slot, v] : m) {
            if (slot != expect)
                throw DataError("node " + id + " missing slot " + std::to_string(expect));
            ++expect;
        }
        t.node_ids.push_back(id);
        for (const auto& [slot, v] : m) t.values.push_back(v);
    }
    return t;
}

}  // namespace

SeriesTable load_series_csv(const std::string& path, bool long_format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV: " + path);
    return long_format ? load_long(in) : load_wide(in);
}

void save_series_csv(const SeriesTable& table, const std::string& path) {
    std::ostringstream os;
    os << "node_id";
    for (std::size_t s = 0; s < table.slots; ++s) os << ",slot_" << s;
    os << "\n";
    os.precision(17);
    for (std::size_t i = 0; i < table.num_nodes(); ++i) {
        os << table.node_ids[i];
        for (std::size_t s = 0; s < table.slots; ++s) os << "," << table.at(i, s);
        os << "\n";
    }
    write_file_atomic(path, os.str());
}

std::vector<double> daily_profile(const SeriesTable& series, std::size_t node,
                                  std::size_t slots_per_day, std::size_t train_slots) {
    if (train_slots > series.slots) train_slots = series.slots;
    if (train_slots < slots_per_day)
        throw ContractError("daily_profile needs at least one full day (" +
                            std::to_string(train_slots) + " < " +
                            std::to_string(slots_per_day) + " slots)");
    std::vector<double> acc(slots_per_day, 0.0);
    std::vector<std::size_t> cnt(slots_per_day, 0);
    for (std::size_t s = 0; s < train_slots; ++s) {
        acc[s % slots_per_day] += series.at(node, s);
        cnt[s % slots_per_day] += 1;
    }
    for (std::size_t i = 0; i < slots_per_day; ++i) acc[i] /= static_cast<double>(cnt[i]);
    return acc;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ContractError("pearson needs equal-length vectors of size >= 2");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) {
        std::cerr << "warning: pearson over a zero-variance series, similarity set to 0\n";
        return 0.0;
    }
    return cov / std::sqrt(va * vb);
}

NormStats compute_norm_stats(const SeriesTable& series, std::size_t train_slots) {
    if (train_slots == 0 || train_slots > series.slots)
        throw ContractError("compute_norm_stats: bad training span");
    NormStats st;
    const double n = static_cast<double>(train_slots);
    for (std::size_t v = 0; v < series.num_nodes(); ++v) {
        double m = 0.0;
        for (std::size_t s = 0; s < train_slots; ++s) m += series.at(v, s);
        m /= n;
        double var = 0.0;
        for (std::size_t s = 0; s < train_slots; ++s) {
            const double d = series.at(v, s) - m;
            var += d * d;
        }
        var /= n;
        st.mean.push_back(m);
        st.stddev.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
    }
    return st;
}

}  // namespace hierflow
