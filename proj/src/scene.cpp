// SPDX-License-Identifier: BSD-3-Clause

#include "scout/scene.hpp"

#include <json.hpp>

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace scout {

namespace {

using nlohmann::json;

Eigen::Vector3d parse_vec3(const json& j, const char* what)
{
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument(std::string("scene: ") + what + " must be a 3-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Rgb8 parse_colour(const json& j)
{
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument("scene: colour must be [r, g, b] with 0-255 entries");
    }
    auto channel = [&](std::size_t i) {
        const int v = j[i].get<int>();
        if (v < 0 || v > 255) {
            throw std::invalid_argument("scene: colour channels must be in 0-255");
        }
        return static_cast<std::uint8_t>(v);
    };
    return {channel(0), channel(1), channel(2)};
}

TriangleMesh parse_inline_mesh(const json& shape)
{
    TriangleMesh mesh;
    for (const auto& v : shape.at("vertices")) {
        mesh.vertices.push_back(parse_vec3(v, "mesh vertex"));
    }
    for (const auto& t : shape.at("triangles")) {
        if (!t.is_array() || t.size() != 3) {
            throw std::invalid_argument("scene: triangles must be 3-element index arrays");
        }
        const std::array<std::uint32_t, 3> tri = {t[0].get<std::uint32_t>(),
                                                  t[1].get<std::uint32_t>(),
                                                  t[2].get<std::uint32_t>()};
        for (std::uint32_t idx : tri) {
            if (idx >= mesh.vertices.size()) {
                throw std::invalid_argument("scene: triangle index out of range");
            }
        }
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

void apply_mesh_pose(TriangleMesh& mesh, const json& shape)
{
    const double scale = shape.value("scale", 1.0);
    const double yaw = shape.value("yaw", 0.0);
    Eigen::Vector3d translate = Eigen::Vector3d::Zero();
    if (shape.contains("translate")) {
        translate = parse_vec3(shape.at("translate"), "translate");
    }
    const Eigen::Matrix3d R = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    for (auto& v : mesh.vertices) {
        v = R * (v * scale) + translate;
    }
}

} // namespace

Eigen::AlignedBox3d SceneInstance::bounding_box() const
{
    if (box) {
        return *box;
    }
    Eigen::AlignedBox3d out;
    for (const auto& v : mesh.vertices) {
        out.extend(v);
    }
    return out;
}

ClassTable Scene::class_table() const
{
    ClassTable table;
    for (const auto& [label, res] : classes) {
        table.add(label, res);
    }
    return table;
}

std::vector<int> Scene::object_instances() const
{
    std::vector<int> out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].is_object()) {
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

void Scene::validate() const
{
    if (bounds.isEmpty()) {
        throw std::invalid_argument("scene: bounds must be non-empty");
    }
    if (!bounds.contains(start_position)) {
        throw std::invalid_argument("scene: start position lies outside the bounds");
    }
    std::set<std::string> labels;
    for (const auto& [label, res] : classes) {
        if (label.empty() || !(res > 0.0)) {
            throw std::invalid_argument("scene: classes need a name and a positive voxel size");
        }
        if (!labels.insert(label).second) {
            throw std::invalid_argument("scene: duplicate class " + label);
        }
    }
    std::set<std::string> names;
    const double tol = 1e-9;
    for (const auto& inst : instances) {
        if (inst.name.empty()) {
            throw std::invalid_argument("scene: every instance needs a name");
        }
        if (!names.insert(inst.name).second) {
            throw std::invalid_argument("scene: duplicate instance name " + inst.name);
        }
        if (!inst.label.empty() && labels.count(inst.label) == 0) {
            throw std::invalid_argument("scene: instance " + inst.name + " uses unknown class "
                                        + inst.label);
        }
        const bool has_mesh = !inst.mesh.vertices.empty();
        if (inst.box.has_value() == has_mesh) {
            throw std::invalid_argument("scene: instance " + inst.name
                                        + " must have exactly one of box or mesh geometry");
        }
        const Eigen::AlignedBox3d bb = inst.bounding_box();
        if ((bb.min() - bounds.min()).minCoeff() < -tol
            || (bounds.max() - bb.max()).minCoeff() < -tol) {
            throw std::invalid_argument("scene: instance " + inst.name
                                        + " extends outside the bounds");
        }
    }
}

Scene Scene::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("scene: cannot open " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("scene: " + path + " is not valid JSON: " + e.what());
    }

    const int version = j.value("version", 0);
    if (version != 1) {
        throw std::invalid_argument("scene: unsupported schema version "
                                    + std::to_string(version) + " (expected 1)");
    }

    Scene scene;
    scene.name = j.value("name", std::filesystem::path(path).stem().string());
    scene.bounds = Eigen::AlignedBox3d(parse_vec3(j.at("bounds").at("min"), "bounds.min"),
                                       parse_vec3(j.at("bounds").at("max"), "bounds.max"));
    scene.start_position = parse_vec3(j.at("start").at("position"), "start.position");
    scene.start_yaw = j.at("start").value("yaw", 0.0);

    if (j.contains("classes")) {
        for (const auto& c : j.at("classes")) {
            scene.classes.emplace_back(c.at("label").get<std::string>(),
                                       c.at("resolution").get<double>());
        }
    }

    const std::string base_dir = std::filesystem::path(path).parent_path().string();
    for (const auto& ij : j.at("instances")) {
        SceneInstance inst;
        inst.name = ij.at("name").get<std::string>();
        inst.label = ij.value("label", std::string());
        inst.unmeasurable = ij.value("unmeasurable", false);
        if (ij.contains("colour")) {
            inst.colour = parse_colour(ij.at("colour"));
        }
        const json& shape = ij.at("shape");
        const std::string type = shape.at("type").get<std::string>();
        if (type == "box") {
            inst.box = Eigen::AlignedBox3d(parse_vec3(shape.at("min"), "box.min"),
                                           parse_vec3(shape.at("max"), "box.max"));
        } else if (type == "mesh") {
            if (shape.contains("path")) {
                const std::string mesh_path = shape.at("path").get<std::string>();
                const std::filesystem::path full =
                    std::filesystem::path(mesh_path).is_absolute()
                        ? std::filesystem::path(mesh_path)
                        : std::filesystem::path(base_dir) / mesh_path;
                inst.mesh = read_ply(full.string());
            } else {
                inst.mesh = parse_inline_mesh(shape);
            }
            apply_mesh_pose(inst.mesh, shape);
        } else {
            throw std::invalid_argument("scene: unknown shape type " + type);
        }
        scene.instances.push_back(std::move(inst));
    }

    scene.validate();
    return scene;
}

} // namespace scout
