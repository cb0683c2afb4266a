#include "qcsurf/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qcsurf {

namespace {

std::string lowercase_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

// Skips blank lines and '#' comments; returns false at EOF.
bool next_content_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        auto pos = line.find('#');
        if (pos != std::string::npos) line.erase(pos);
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) { blank = false; break; }
        if (!blank) return true;
    }
    return false;
}

TriangleMesh load_off(std::istream& in, const std::string& path) {
    std::string line;
    if (!next_content_line(in, line)) throw std::runtime_error(path + ": empty OFF file");
    {
        std::istringstream ss(line);
        std::string magic;
        ss >> magic;
        if (magic != "OFF") throw std::runtime_error(path + ": missing OFF header");
        // Counts may share the header line or come on the next one.
        long v = -1;
        if (ss >> v) {
            long f = 0, e = 0;
            ss >> f >> e;
            line = std::to_string(v) + " " + std::to_string(f) + " " + std::to_string(e);
        } else if (!next_content_line(in, line)) {
            throw std::runtime_error(path + ": truncated OFF header");
        }
    }
    long nv = 0, nf = 0, ne = 0;
    {
        std::istringstream ss(line);
        if (!(ss >> nv >> nf)) throw std::runtime_error(path + ": bad OFF counts");
        ss >> ne;
    }
    TriangleMesh mesh;
    mesh.vertices.reserve(nv);
    for (long i = 0; i < nv; ++i) {
        if (!next_content_line(in, line)) throw std::runtime_error(path + ": truncated vertices");
        std::istringstream ss(line);
        double x, y, z;
        if (!(ss >> x >> y >> z)) throw std::runtime_error(path + ": bad vertex line");
        mesh.vertices.emplace_back(x, y, z);
    }
    for (long i = 0; i < nf; ++i) {
        if (!next_content_line(in, line)) throw std::runtime_error(path + ": truncated faces");
        std::istringstream ss(line);
        int n, a, b, c;
        if (!(ss >> n >> a >> b >> c) || n != 3)
            throw std::runtime_error(path + ": only triangular faces are supported");
        mesh.faces.push_back({a, b, c});
    }
    return mesh;
}

TriangleMesh load_obj(std::istream& in, const std::string& path) {
    TriangleMesh mesh;
    std::string line;
    while (next_content_line(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) throw std::runtime_error(path + ": bad v line");
            mesh.vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // "17", "17/3", "17/3/5", "17//5" all start with the position index.
                int v = std::stoi(tok.substr(0, tok.find('/')));
                if (v < 0) v = static_cast<int>(mesh.vertices.size()) + v + 1;
                idx.push_back(v - 1);
            }
            if (idx.size() != 3)
                throw std::runtime_error(path + ": only triangular faces are supported");
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
        }
        // vt, vn, usemtl, o, g, s, mtllib: ignored.
    }
    return mesh;
}

}  // namespace

TriangleMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mesh file: " + path);
    std::string ext = lowercase_ext(path);
    TriangleMesh mesh;
    if (ext == "off")
        mesh = load_off(in, path);
    else if (ext == "obj")
        mesh = load_obj(in, path);
    else
        throw std::runtime_error(path + ": unsupported mesh format ." + ext);
    validate_mesh(mesh);
    return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::string& path,
              const std::vector<Eigen::Vector2d>* uv) {
    if (uv && static_cast<int>(uv->size()) != mesh.vertex_count())
        throw std::runtime_error("save_obj: uv size mismatch");
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out.precision(17);
        for (const auto& v : mesh.vertices)
            out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
        if (uv)
            for (const auto& t : *uv)
                out << "vt " << t.x() << " " << t.y() << "\n";
        for (const auto& f : mesh.faces) {
            if (uv)
                out << "f " << f[0] + 1 << "/" << f[0] + 1 << " " << f[1] + 1 << "/"
                    << f[1] + 1 << " " << f[2] + 1 << "/" << f[2] + 1 << "\n";
            else
                out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
        }
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

void save_channels_csv(const TriangleMesh& mesh, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out.precision(17);
        out << "vertex,channel,value\n";
        for (const auto& [name, vals] : mesh.channels)
            for (int v = 0; v < mesh.vertex_count(); ++v)
                out << v << "," << name << "," << vals[v] << "\n";
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

void load_channels_csv(TriangleMesh& mesh, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open channels file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty channels file");
    std::map<std::string, std::vector<double>> channels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::runtime_error(path + ": bad channels row: " + line);
        int v = std::stoi(line.substr(0, c1));
        std::string name = line.substr(c1 + 1, c2 - c1 - 1);
        double val = std::stod(line.substr(c2 + 1));
        auto& vec = channels[name];
        if (vec.empty()) vec.assign(mesh.vertex_count(), 0.0);
        if (v < 0 || v >= mesh.vertex_count())
            throw std::runtime_error(path + ": vertex index out of range");
        vec[v] = val;
    }
    for (auto& [name, vals] : channels) mesh.set_channel(name, std::move(vals));
}

}  // namespace qcsurf
