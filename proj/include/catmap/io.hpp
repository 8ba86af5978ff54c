#pragma once

#include "catmap/spectra.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace catmap {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------------------------
// Binary container: magic, version, kind, d, N, kappa (2d f64), rows, cols, then interleaved re/im f64.
// Everything little-endian.

inline constexpr char container_magic[8] = {'C', 'A', 'T', 'M', 'A', 'P', 'B', 'N'};
inline constexpr std::uint32_t container_version = 1;

enum class ContainerKind : std::uint32_t { op = 0, state = 1, eigenvectors = 2 };

struct Container {
    ContainerKind kind = ContainerKind::op;
    QuantumTorus torus;
    CMatrix data;
};

static_assert(std::endian::native == std::endian::little, "binary container assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ValidationError("truncated container");
    return v;
}

inline void write_container(const std::string& path, const Container& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open " + path + " for writing");
    os.write(container_magic, 8);
    put<std::uint32_t>(os, container_version);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.kind));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.torus.d));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.torus.N));
    for (double k : c.torus.kappa) put<double>(os, k);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(c.data.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(c.data.cols()));
    for (Eigen::Index j = 0; j < c.data.cols(); ++j)
        for (Eigen::Index i = 0; i < c.data.rows(); ++i) {
            put<double>(os, c.data(i, j).real());
            put<double>(os, c.data(i, j).imag());
        }
    if (!os) throw ValidationError("write failed for " + path);
}

inline Container read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, container_magic, 8) != 0) throw ValidationError(path + " is not a catmap container");
    if (get<std::uint32_t>(is) != container_version) throw ValidationError("unsupported container version");
    Container c;
    c.kind = static_cast<ContainerKind>(get<std::uint32_t>(is));
    const int d = static_cast<int>(get<std::uint32_t>(is));
    const int N = static_cast<int>(get<std::uint32_t>(is));
    std::vector<double> kappa(2 * d);
    for (auto& k : kappa) k = get<double>(is);
    c.torus = QuantumTorus(N, d, kappa);
    const auto rows = get<std::uint64_t>(is), cols = get<std::uint64_t>(is);
    c.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < c.data.cols(); ++j)
        for (Eigen::Index i = 0; i < c.data.rows(); ++i) {
            const double re = get<double>(is);
            const double im = get<double>(is);
            c.data(i, j) = cplx(re, im);
        }
    return c;
}

// ---------------------------------------------------------------------------------------------
// JSON with fixed 17-significant-digit floats so identical runs give identical bytes.

inline std::string format_double(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void dump_json(const json& j, std::ostream& os, int indent = 2, int level = 0) {
    const std::string pad(static_cast<size_t>(indent * (level + 1)), ' '), close(static_cast<size_t>(indent * level), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            size_t i = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++i) {
                os << pad << json(it.key()).dump() << ": ";
                dump_json(it.value(), os, indent, level + 1);
                os << (i + 1 < j.size() ? ",\n" : "\n");
            }
            os << close << "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            bool scalar = true;
            for (const auto& e : j) scalar = scalar && !e.is_structured();
            if (scalar) {
                os << "[";
                for (size_t i = 0; i < j.size(); ++i) {
                    if (i) os << ", ";
                    dump_json(j[i], os, indent, level + 1);
                }
                os << "]";
                return;
            }
            os << "[\n";
            for (size_t i = 0; i < j.size(); ++i) {
                os << pad;
                dump_json(j[i], os, indent, level + 1);
                os << (i + 1 < j.size() ? ",\n" : "\n");
            }
            os << close << "]";
            return;
        }
        case json::value_t::number_float: os << format_double(j.get<double>()); return;
        default: os << j.dump(); return;
    }
}

inline std::string to_json_text(const json& j) {
    std::ostringstream os;
    dump_json(j, os);
    os << "\n";
    return os.str();
}

inline json to_json(const LyapunovData& L) {
    return json{{"exponents", L.exponents},         {"multiplicities", L.multiplicities}, {"neutral_halfdim", L.neutral_halfdim},
                {"lambda_max", L.lambda_max},       {"Lambda_plus", L.Lambda_plus},       {"Lambda_zero", L.Lambda_zero}};
}

inline json to_json(const IntMatrix& A) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json to_json(const QuantumTorus& qt) { return json{{"N", qt.N}, {"d", qt.d}, {"kappa", qt.kappa}, {"hbar", qt.hbar()}}; }

// ---------------------------------------------------------------------------------------------
// Husimi CSV: a comment header then one row per x-index (d = 1) or one value per line (d > 1).

inline void write_husimi_csv(const std::string& path, const MeasureGrid& H) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open " + path + " for writing");
    os << "# d=" << H.d << ",N=" << H.N << ",resolution=" << H.resolution << "\n";
    if (H.d == 1) {
        for (int i = 0; i < H.resolution; ++i) {
            for (int j = 0; j < H.resolution; ++j) {
                if (j) os << ",";
                os << format_double(H.density[static_cast<size_t>(i) * H.resolution + j]);
            }
            os << "\n";
        }
    } else {
        for (double v : H.density) os << format_double(v) << "\n";
    }
}

// ---------------------------------------------------------------------------------------------
// Observables from text: named built-ins or a JSON coefficient list [{"r": [...], "c": [re, im]}, ...].

inline TrigObservable parse_observable(const std::string& spec, int d) {
    if (spec == "cos_x1") return cos_x1(d);
    if (spec == "one") return constant_observable(d);
    if (spec.rfind("bump_", 0) == 0) {
        // bump_k or bump_k@c1,c2,...
        const auto at = spec.find('@');
        const int k = std::stoi(spec.substr(5, at == std::string::npos ? std::string::npos : at - 5));
        std::vector<double> centre(2 * d, 0.5);
        if (at != std::string::npos) {
            std::stringstream ss(spec.substr(at + 1));
            std::string item;
            centre.clear();
            while (std::getline(ss, item, ',')) centre.push_back(std::stod(item));
            if (static_cast<int>(centre.size()) != 2 * d) throw DimensionError("bump centre must have 2d entries");
        }
        return bump_observable(centre, k);
    }
    json j;
    try {
        if (!spec.empty() && (spec[0] == '[' || spec[0] == '{')) j = json::parse(spec);
        else {
            std::ifstream is(spec);
            if (!is) throw ValidationError("unknown observable '" + spec + "'");
            j = json::parse(is);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("observable parse error: ") + e.what());
    }
    TrigObservable a(d);
    for (const auto& term : j) {
        Lattice r = term.at("r").get<Lattice>();
        const auto c = term.at("c").get<std::vector<double>>();
        if (c.size() != 2) throw ValidationError("coefficient must be [re, im]");
        a.add(r, cplx(c[0], c[1]));
    }
    if (a.is_real()) a.set_real();
    return a;
}

}  // namespace catmap
