#include "tetrec/mesh_io.hpp"

#include "tetrec/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tetrec {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    TriMesh mesh;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x() >> v.y() >> v.z()))
                throw ParseError(path + ":" + std::to_string(lineno) + ": malformed vertex");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string token;
            while (ss >> token) {
                // Accept v, v/vt, v//vn, v/vt/vn; only the vertex index is used.
                const auto slash = token.find('/');
                const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
                int value = 0;
                const auto [ptr, ec] =
                    std::from_chars(head.data(), head.data() + head.size(), value);
                if (ec != std::errc() || ptr != head.data() + head.size())
                    throw ParseError(path + ":" + std::to_string(lineno) + ": malformed face index '" +
                                     token + "'");
                // OBJ indices are 1-based; negative indices count from the end.
                int resolved = value > 0 ? value - 1 : static_cast<int>(mesh.vertices.size()) + value;
                idx.push_back(resolved);
            }
            if (idx.size() < 3)
                throw ParseError(path + ":" + std::to_string(lineno) + ": face with <3 vertices");
            for (size_t k = 2; k < idx.size(); ++k)
                mesh.faces.push_back({idx[0], idx[static_cast<int>(k) - 1], idx[k]});
        }
        // all other records (vn, vt, comments, groups) are ignored
    }
    mesh.validate();
    return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    char buf[96];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw IoError("short write: " + path);
}

struct PlyProperty {
    std::string type;
    std::string name;
    bool is_list = false;
    std::string count_type;
};

double read_scalar_binary(std::ifstream& in, const std::string& type) {
    auto read_as = [&](auto value) -> double {
        in.read(reinterpret_cast<char*>(&value), sizeof(value));
        return static_cast<double>(value);
    };
    if (type == "char" || type == "int8") return read_as(int8_t{});
    if (type == "uchar" || type == "uint8") return read_as(uint8_t{});
    if (type == "short" || type == "int16") return read_as(int16_t{});
    if (type == "ushort" || type == "uint16") return read_as(uint16_t{});
    if (type == "int" || type == "int32") return read_as(int32_t{});
    if (type == "uint" || type == "uint32") return read_as(uint32_t{});
    if (type == "float" || type == "float32") return read_as(float{});
    if (type == "double" || type == "float64") return read_as(double{});
    throw ParseError("unsupported PLY scalar type: " + type);
}

TriMesh load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty PLY: " + path);
    if (line.rfind("ply", 0) != 0) throw ParseError("missing PLY signature: " + path);

    bool binary = false;
    struct Element {
        std::string name;
        size_t count = 0;
        std::vector<PlyProperty> props;
    };
    std::vector<Element> elements;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "comment" || tag == "obj_info") continue;
        if (tag == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "binary_little_endian") binary = true;
            else if (fmt == "ascii") binary = false;
            else throw ParseError("unsupported PLY format: " + fmt);
        } else if (tag == "element") {
            Element e;
            ss >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty()) throw ParseError("property before element: " + path);
            PlyProperty p;
            std::string first;
            ss >> first;
            if (first == "list") {
                p.is_list = true;
                ss >> p.count_type >> p.type >> p.name;
            } else {
                p.type = first;
                ss >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        } else if (tag == "ply" || tag.empty()) {
            continue;
        } else {
            throw ParseError("unexpected PLY header line: " + line);
        }
    }

    TriMesh mesh;
    for (const auto& elem : elements) {
        if (elem.name == "vertex") {
            int ix = -1, iy = -1, iz = -1;
            for (size_t p = 0; p < elem.props.size(); ++p) {
                if (elem.props[p].name == "x") ix = static_cast<int>(p);
                if (elem.props[p].name == "y") iy = static_cast<int>(p);
                if (elem.props[p].name == "z") iz = static_cast<int>(p);
            }
            if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY vertex element lacks x/y/z");
            mesh.vertices.reserve(elem.count);
            for (size_t i = 0; i < elem.count; ++i) {
                std::vector<double> values(elem.props.size());
                if (binary) {
                    for (size_t p = 0; p < elem.props.size(); ++p) {
                        if (elem.props[p].is_list) throw ParseError("list property on vertex");
                        values[p] = read_scalar_binary(in, elem.props[p].type);
                    }
                } else {
                    for (size_t p = 0; p < elem.props.size(); ++p)
                        if (!(in >> values[p])) throw ParseError("truncated PLY vertex data");
                }
                mesh.vertices.emplace_back(values[ix], values[iy], values[iz]);
            }
        } else if (elem.name == "face") {
            mesh.faces.reserve(elem.count);
            for (size_t i = 0; i < elem.count; ++i) {
                for (const auto& prop : elem.props) {
                    if (prop.is_list) {
                        size_t n;
                        if (binary) {
                            n = static_cast<size_t>(read_scalar_binary(in, prop.count_type));
                        } else {
                            if (!(in >> n)) throw ParseError("truncated PLY face data");
                        }
                        std::vector<int> idx(n);
                        for (size_t k = 0; k < n; ++k) {
                            if (binary) idx[k] = static_cast<int>(read_scalar_binary(in, prop.type));
                            else if (!(in >> idx[k])) throw ParseError("truncated PLY face data");
                        }
                        if (n < 3) throw ParseError("PLY face with <3 vertices");
                        for (size_t k = 2; k < n; ++k)
                            mesh.faces.push_back({idx[0], idx[k - 1], idx[k]});
                    } else {
                        if (binary) read_scalar_binary(in, prop.type);
                        else {
                            double dummy;
                            if (!(in >> dummy)) throw ParseError("truncated PLY face data");
                        }
                    }
                }
            }
        } else {
            // skip unknown element payload
            for (size_t i = 0; i < elem.count; ++i) {
                for (const auto& prop : elem.props) {
                    if (prop.is_list) {
                        size_t n;
                        if (binary) n = static_cast<size_t>(read_scalar_binary(in, prop.count_type));
                        else if (!(in >> n)) throw ParseError("truncated PLY data");
                        for (size_t k = 0; k < n; ++k) {
                            if (binary) read_scalar_binary(in, prop.type);
                            else {
                                double d;
                                if (!(in >> d)) throw ParseError("truncated PLY data");
                            }
                        }
                    } else if (binary) {
                        read_scalar_binary(in, prop.type);
                    } else {
                        double d;
                        if (!(in >> d)) throw ParseError("truncated PLY data");
                    }
                }
            }
        }
        if (!in) throw ParseError("truncated PLY payload: " + path);
    }
    mesh.validate();
    return mesh;
}

} // namespace

void save_ply(const TriMesh& mesh, const std::string& path, PlyEncoding encoding) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const bool binary = encoding == PlyEncoding::BinaryLittleEndian;
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\n";
    out << "end_header\n";
    if (binary) {
        for (const auto& v : mesh.vertices) {
            double xyz[3] = {v.x(), v.y(), v.z()};
            out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        }
        for (const auto& f : mesh.faces) {
            uint8_t n = 3;
            int32_t idx[3] = {f[0], f[1], f[2]};
            out.write(reinterpret_cast<const char*>(&n), 1);
            out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
        }
    } else {
        char buf[96];
        for (const auto& v : mesh.vertices) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
            out << buf;
        }
        for (const auto& f : mesh.faces)
            out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
    if (!out) throw IoError("short write: " + path);
}

TriMesh load_mesh(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "obj") return load_obj(path);
    if (ext == "ply") return load_ply(path);
    throw ParseError("unsupported mesh extension: " + path);
}

void save_mesh(const TriMesh& mesh, const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "obj") return save_obj(mesh, path);
    if (ext == "ply") return save_ply(mesh, path);
    throw ParseError("unsupported mesh extension: " + path);
}

} // namespace tetrec
