#pragma once

// Top-level entry point: argument parsing, dispatch (including `validate`)
// and exit codes. 0 success, 1 validation failure, 2 usage or config error,
// 3 numeric or I/O failure.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "xlmimo/acceptance.hpp"
#include "xlmimo/cli_io.hpp"
#include "xlmimo/errors.hpp"
#include "xlmimo/parallel.hpp"

namespace xlmimo::cli {

inline Table run_validate(const ExperimentSpec& spec, bool& all_pass) {
  acceptance::Options o;
  o.seed = spec.seed;
  o.trials = spec.trials;
  Table t{{"criterion", "name", "pass", "detail"}, {}};
  all_pass = true;
  for (const auto& r : acceptance::run_all(o)) {
    all_pass = all_pass && r.pass;
    // Commas would break the CSV row.
    std::string d = r.detail;
    for (auto& ch : d)
      if (ch == ',') ch = ';';
    t.rows.push_back({std::int64_t{r.id}, r.name, std::int64_t{r.pass ? 1 : 0}, d});
  }
  return t;
}

inline int run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  const unsigned saved = worker_override();
  set_worker_count(spec.threads);
  int status = 0;
  try {
    const auto raw = resolve_raw(spec);
    build_config(raw);
    Table t;
    if (spec.command == "validate") {
      bool ok = true;
      t = run_validate(spec, ok);
      status = ok ? 0 : 1;
    } else {
      t = run_command(spec, raw);
    }
    emit(spec, render(t, spec, raw), out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    status = 2;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    status = 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    status = 3;
  }
  set_worker_count(saved);
  return status;
}

inline int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  ExperimentSpec spec;
  CLI::App app{"XL-MIMO downlink energy-efficiency experiments"};
  configure_parser(app, spec);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return run(spec, out, err);
}

}  // namespace xlmimo::cli
