#include "functa/cli.hpp"

#include <algorithm>
#include <sstream>

#include "common.hpp"
#include "functa/archive.hpp"
#include "functa/error.hpp"

namespace functa::cli {

namespace {

std::vector<CommandSpec> all_commands() {
  std::vector<CommandSpec> all;
  for (auto group : {functa_commands, generative_commands, inference_commands, classify_commands}) {
    for (auto& c : group()) all.push_back(std::move(c));
  }
  return all;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Name of a long option argument ("--key" or "--key=value"), empty otherwise.
std::string option_name(const std::string& arg) {
  if (arg.size() < 3 || arg.compare(0, 2, "--") != 0) return "";
  return arg.substr(2, arg.find('=') - 2);
}

// Appends the settings of the config file as "--key=value" arguments unless
// the command line already sets them.
void expand_config(Context& ctx, std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string name = option_name(args[i]);
    if (name.empty()) continue;
    ctx.explicit_options.insert(name);
    if (name == "config") {
      const auto eq = args[i].find('=');
      if (eq != std::string::npos) {
        path = args[i].substr(eq + 1);
      } else if (i + 1 < args.size()) {
        path = args[i + 1];
      }
    }
  }
  if (path.empty()) return;

  std::istringstream in(io::read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "command") {
      if (value != ctx.command) {
        throw ConfigError(path + " was written for '" + value + "', not '" + ctx.command + "'");
      }
    } else if (key.starts_with("input.")) {
      ctx.expected_inputs[key.substr(6)] = value;
    } else if (key.starts_with("output.")) {
      // Recorded for reference only.
    } else if (key == "config") {
      throw ConfigError(path + ": config files cannot include other config files");
    } else if (!value.empty() && !ctx.explicit_options.contains(key)) {
      // An empty value means the option was left at its empty default.
      args.push_back("--" + key + "=" + value);
    }
  }
}

std::string option_value(const CLI::Option* opt) {
  if (opt->count() == 0) return opt->get_default_str();
  std::string value;
  for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
  return value;
}

void write_manifest(Context& ctx) {
  std::string text = "command=" + ctx.command + "\n";
  for (const CLI::Option* opt : ctx.app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "out" || name == "config") continue;
    text += name + "=" + option_value(opt) + "\n";
  }
  for (const auto& [name, digest] : ctx.inputs) text += "input." + name + "=" + digest + "\n";
  std::vector<std::string> outputs = ctx.outputs;
  std::sort(outputs.begin(), outputs.end());
  for (const auto& file : outputs) {
    text += "output." + file + "=sha256:" + io::file_sha256(fs::path(ctx.out) / file) + "\n";
  }
  io::write_file(fs::path(ctx.out) / "manifest.txt", text);
}

std::string usage() {
  std::string text = "Usage: functa <command> [options]\n\nCommands:\n";
  for (const auto& c : all_commands()) {
    std::string name = c.name;
    name.resize(std::max<std::size_t>(name.size(), 17), ' ');
    text += "  " + name + c.help + "\n";
  }
  text += "\nRun 'functa <command> --help' for the options of a command.\n";
  return text;
}

int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    out << usage();
    return args.empty() ? kExitConfig : kExitOk;
  }
  const auto commands = all_commands();
  const auto it = std::find_if(commands.begin(), commands.end(), [&](const auto& c) { return c.name == args[0]; });
  if (it == commands.end()) {
    err << "functa: unknown command '" << args[0] << "'\n" << usage();
    return kExitConfig;
  }

  Context ctx(it->name, it->help, err);
  const Runner action = it->setup(ctx);
  std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    expand_config(ctx, rest);
    std::reverse(rest.begin(), rest.end());
    ctx.app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << ctx.app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "functa " << ctx.command << ": " << e.what() << "\n";
    return kExitConfig;
  }

  ctx.digest_inputs();
  fs::create_directories(ctx.out);
  action();
  write_manifest(ctx);
  return kExitOk;
}

}  // namespace

std::vector<std::string> command_names() {
  std::vector<std::string> names;
  for (const auto& c : all_commands()) names.push_back(c.name);
  return names;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::string prefix = "functa" + (args.empty() ? std::string() : " " + args[0]) + ": ";
  try {
    return execute(args, out, err);
  } catch (const ConfigError& e) {
    err << prefix << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << prefix << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << prefix << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << prefix << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << prefix << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace functa::cli
