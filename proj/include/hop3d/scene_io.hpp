#pragma once

#include <string>
#include <vector>

#include "hop3d/trainer.hpp"

namespace hop3d {

// Text scene format: a header line "N F_in", then N lines holding the three
// coordinates, the F_in feature values and the integer label.
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

// Dataset directory: manifest.json (split + generation parameters + file
// lists) plus one scene file per entry.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace hop3d
