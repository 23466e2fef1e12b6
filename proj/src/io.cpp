#include "relulab/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace relulab {

nlohmann::json params_to_json(const Architecture& arch, const Vec& theta) {
    return {{"dims", arch.dims()}, {"theta", theta}};
}

ParamFile params_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("dims") || !j.contains("theta"))
        throw std::runtime_error("parameter file needs \"dims\" and \"theta\"");
    ParamFile pf{Architecture(j.at("dims").get<std::vector<std::size_t>>()),
                 j.at("theta").get<Vec>()};
    if (pf.theta.size() != pf.arch.param_count())
        throw std::runtime_error("theta has " + std::to_string(pf.theta.size()) +
                                 " entries, architecture " + pf.arch.to_string() + " needs " +
                                 std::to_string(pf.arch.param_count()));
    return pf;
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

ParamFile read_params(const std::filesystem::path& path) { return params_from_json(read_json(path)); }

void write_params(const std::filesystem::path& path, const Architecture& arch, const Vec& theta) {
    write_json(path, params_to_json(arch, theta));
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return out;
}

double parse_num(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line) + ": not a number: '" + s + "'");
    }
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    auto header = split(line);
    if (header.size() < 2 || header.back() != "y")
        throw std::runtime_error(path.string() + ": header must be x_1,...,x_d,y");
    for (std::size_t j = 0; j + 1 < header.size(); ++j)
        if (header[j] != "x_" + std::to_string(j + 1))
            throw std::runtime_error(path.string() + ": unexpected column '" + header[j] + "'");
    const std::size_t d = header.size() - 1;
    Dataset data;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split(line);
        if (cells.size() != d + 1)
            throw std::runtime_error(path.string() + ": line " + std::to_string(lineno) + " has " +
                                     std::to_string(cells.size()) + " columns");
        Vec x(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = parse_num(cells[j], lineno);
        data.x.push_back(std::move(x));
        data.y.push_back(parse_num(cells[d], lineno));
    }
    if (data.size() == 0) throw std::runtime_error(path.string() + ": no rows");
    double lo = data.x[0][0], hi = lo;
    for (const auto& p : data.x)
        for (double v : p) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    data.a = lo;
    data.b = hi > lo ? hi : lo + 1.0;
    return data;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t j = 1; j <= data.dim(); ++j) out << "x_" << j << ",";
    out << "y\n";
    for (std::size_t m = 0; m < data.size(); ++m) {
        for (double v : data.x[m]) out << fmt_double(v) << ",";
        out << fmt_double(data.y[m]) << "\n";
    }
}

}  // namespace relulab
