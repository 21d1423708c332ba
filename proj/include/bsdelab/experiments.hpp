#pragma once

#include <bsdelab/report.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bsdelab
{
	struct ExperimentInfo
	{
		std::string name;
		std::string statement;
		std::string summary;
		/// Declared wall-clock at the default configuration on one core.
		double expected_seconds = 0;
	};

	/// Static registry of the shipped experiments.
	const std::vector<ExperimentInfo> &list_experiments();
	const ExperimentInfo &experiment_info(const std::string &name);

	/// Every tunable of an experiment with its default value.
	Json default_parameters(const std::string &name);

	struct ExperimentConfig
	{
		std::string experiment;
		/// Defaults merged with overrides.
		Json parameters;
		std::string out_dir = "out";
	};

	/// A JSON config file ({"experiment": ..., "out": ..., "parameters": {...}})
	/// or a bare experiment name.
	ExperimentConfig load_config(const std::string &path_or_name);
	ExperimentConfig make_config(const std::string &experiment, const Json &overrides = Json::object());

	/// Checks names, grid alignment and the exponent threshold.
	void validate(const ExperimentConfig &config);

	struct OutputFile
	{
		std::string path; // relative to the output directory
		std::string kind; // csv | json | svg
		std::string statement;
	};

	struct RunManifest
	{
		Json config;
		std::string code_version;
		std::vector<OutputFile> files;
		double wall_seconds = 0;
		/// pass | fail | error
		std::string status = "error";
		std::string error;
		Json summary = Json::object();
	};

	inline constexpr const char *kManifestName = "manifest.json";

	/// Executes the experiment, writes its outputs and manifest.json into
	/// config.out_dir and returns the manifest (also on failure).
	RunManifest run(const ExperimentConfig &config);

	/// 0 pass, 2 statistical failure, 1 execution error.
	int exit_code(const RunManifest &manifest);

	Json to_json(const RunManifest &manifest);
	RunManifest manifest_from_json(const Json &json);
	RunManifest load_manifest(const std::string &dir);

	std::string code_version();
} // namespace bsdelab
