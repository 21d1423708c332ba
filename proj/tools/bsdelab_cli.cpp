#include <bsdelab/experiments.hpp>
#include <bsdelab/parallel.hpp>

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

int main(int argc, char **argv)
{
	using namespace bsdelab;
	CLI::App app{"Monte Carlo laboratory for BSDE, decoupling and weighted BMO experiments"};
	app.require_subcommand(1);

	std::string target;
	std::optional<std::uint64_t> seed;
	std::optional<long long> paths;
	std::optional<unsigned> threads;
	std::optional<std::string> out;

	auto *run_cmd = app.add_subcommand("run", "Run an experiment from a JSON config file or by name");
	run_cmd->add_option("config", target, "Config file or experiment name")->required();
	run_cmd->add_option("--seed", seed, "Override the base seed");
	run_cmd->add_option("--paths", paths, "Override the number of Monte Carlo paths")->check(CLI::PositiveNumber);
	run_cmd->add_option("--threads", threads, "Cap on worker threads")->check(CLI::PositiveNumber);
	run_cmd->add_option("--out", out, "Output directory");

	auto *list_cmd = app.add_subcommand("list", "List experiments");

	std::string manifest_dir;
	auto *show_cmd = app.add_subcommand("show-manifest", "Print the manifest of a finished run");
	show_cmd->add_option("dir", manifest_dir, "Output directory of the run")->required();

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (list_cmd->parsed())
		{
			for (const auto &e : list_experiments())
				std::cout << std::left << std::setw(22) << e.name << std::setw(8)
						  << (format_number(e.expected_seconds) + "s") << e.statement << "\n";
			return 0;
		}
		if (show_cmd->parsed())
		{
			std::cout << to_json(load_manifest(manifest_dir)).dump(2) << "\n";
			return 0;
		}

		ExperimentConfig config = load_config(target);
		if (seed)
			config.parameters["seed"] = *seed;
		if (paths)
			config.parameters["paths"] = *paths;
		if (out)
			config.out_dir = *out;
		if (threads)
			set_max_threads(*threads);

		const RunManifest manifest = run(config);
		std::cout << config.experiment << ": " << manifest.status << " (" << format_number(manifest.wall_seconds)
				  << " s) -> " << config.out_dir << "\n";
		if (!manifest.error.empty())
			std::cerr << "error: " << manifest.error << "\n";
		return exit_code(manifest);
	}
	catch (const std::exception &e)
	{
		std::cerr << "error: " << e.what() << "\n";
		return 1;
	}
}
