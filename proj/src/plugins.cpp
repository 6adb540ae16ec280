#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "verif/error.hpp"
#include "verif/runner.hpp"

namespace verif {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

VerifierPlugin builtin(const std::string& name) {
  VerifierPlugin p;
  p.descriptor = *find_backend(name);
  p.parser.clear();
  return p;
}

bool executable_exists(const std::filesystem::path& exe) {
  if (exe.has_parent_path()) return ::access(exe.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  std::istringstream dirs(path ? path : "");
  for (std::string dir; std::getline(dirs, dir, ':');) {
    if (!dir.empty() && ::access((std::filesystem::path(dir) / exe).c_str(), X_OK) == 0) return true;
  }
  return false;
}

[[noreturn]] void bad_entry(const std::filesystem::path& file, int line, const std::string& why) {
  throw Error(ErrorCode::PluginError, file.string() + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

PluginRegistry PluginRegistry::builtins() {
  PluginRegistry r;
  r.plugins_["ibp"] = builtin("ibp");
  r.plugins_["sample"] = builtin("sample");
  return r;
}

void PluginRegistry::add(VerifierPlugin plugin) {
  const std::string name = plugin.descriptor.name;
  if (name.empty()) throw Error(ErrorCode::PluginError, "plugin has no name");
  if (plugins_.count(name)) throw Error(ErrorCode::PluginError, "plugin '" + name + "' is already registered");
  if (!plugin.builtin()) {
    if (!find_backend(plugin.format) || plugin.format == "ibp" || plugin.format == "sample") {
      throw Error(ErrorCode::PluginError, "plugin '" + name + "': unknown format '" + plugin.format + "'");
    }
    if (!is_known_parser(plugin.parser)) {
      throw Error(ErrorCode::PluginError, "plugin '" + name + "': unknown parser '" + plugin.parser + "'");
    }
    if (!executable_exists(plugin.executable)) {
      throw Error(ErrorCode::PluginError,
                  "plugin '" + name + "': executable " + plugin.executable.string() + " does not exist");
    }
  }
  plugins_[name] = std::move(plugin);
}

// Format:
//   # comment
//   [name]
//   executable = path        (relative to the registry file)
//   arguments = {network} {property}
//   format = nnet | rlv | vnnlib
//   parser = generic | planet | vnnlib
//   timeout = 60
void PluginRegistry::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read plugin registry " + path.string());
  std::vector<std::pair<VerifierPlugin, int>> entries;
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') bad_entry(path, line_no, "unterminated section header");
      VerifierPlugin p;
      p.descriptor.name = trim(line.substr(1, line.size() - 2));
      entries.emplace_back(std::move(p), line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad_entry(path, line_no, "expected key = value");
    if (entries.empty()) bad_entry(path, line_no, "entry outside a [plugin] section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    VerifierPlugin& p = entries.back().first;
    if (key == "executable") {
      std::filesystem::path exe(value);
      if (exe.is_relative() && exe.has_parent_path()) exe = path.parent_path() / exe;
      p.executable = exe;
    } else if (key == "arguments") {
      std::istringstream words(value);
      p.arguments.clear();
      for (std::string w; words >> w;) p.arguments.push_back(w);
    } else if (key == "format") {
      p.format = value;
    } else if (key == "parser") {
      p.parser = value;
    } else if (key == "timeout") {
      try {
        p.timeout = std::stod(value);
      } catch (const std::exception&) {
        bad_entry(path, line_no, "timeout is not a number");
      }
    } else {
      bad_entry(path, line_no, "unknown key '" + key + "'");
    }
  }
  std::map<std::string, int> seen;
  for (auto& [p, where] : entries) {
    if (seen.count(p.descriptor.name)) bad_entry(path, where, "duplicate plugin '" + p.descriptor.name + "'");
    seen[p.descriptor.name] = where;
    if (p.format.empty()) bad_entry(path, where, "plugin '" + p.descriptor.name + "' has no format");
    if (p.executable.empty()) bad_entry(path, where, "plugin '" + p.descriptor.name + "' has no executable");
    // Earlier registry files take precedence.
    if (plugins_.count(p.descriptor.name)) continue;
    if (const auto* d = find_backend(p.format)) {
      const std::string name = p.descriptor.name;
      p.descriptor = *d;
      p.descriptor.name = name;
    }
    add(std::move(p));
  }
}

const VerifierPlugin* PluginRegistry::find(const std::string& name) const {
  const auto it = plugins_.find(name);
  return it == plugins_.end() ? nullptr : &it->second;
}

std::vector<std::string> PluginRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : plugins_) out.push_back(name);
  return out;
}

std::vector<std::filesystem::path> plugin_search_path() {
  std::vector<std::filesystem::path> out;
  auto add = [&](const std::filesystem::path& p) {
    out.push_back(std::filesystem::is_directory(p) ? p / "plugins.ini" : p);
  };
  if (const char* env = std::getenv("VERIF_PLUGIN_PATH")) {
    std::istringstream parts(env);
    for (std::string part; std::getline(parts, part, ':');) {
      if (!part.empty()) add(part);
    }
  }
  if (const char* xdg = std::getenv("XDG_CONFIG_HOME"); xdg && *xdg) {
    add(std::filesystem::path(xdg) / "verif");
  } else if (const char* home = std::getenv("HOME"); home && *home) {
    add(std::filesystem::path(home) / ".config" / "verif");
  }
  return out;
}

PluginRegistry PluginRegistry::load_default() {
  PluginRegistry r = builtins();
  for (const auto& file : plugin_search_path()) {
    if (std::filesystem::is_regular_file(file)) r.load_file(file);
  }
  return r;
}

}  // namespace verif
