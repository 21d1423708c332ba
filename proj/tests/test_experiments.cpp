#include <bsdelab/bmo.hpp>
#include <bsdelab/experiments.hpp>
#include <bsdelab/parallel.hpp>

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace bsdelab;
namespace fs = std::filesystem;

namespace
{
	fs::path scratch(const std::string &name)
	{
		const fs::path dir = fs::temp_directory_path() / ("bsdelab_test_" + name);
		fs::remove_all(dir);
		return dir;
	}

	std::string slurp(const fs::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		std::stringstream ss;
		ss << in.rdbuf();
		return ss.str();
	}

	void check_manifest_complete(const fs::path &dir, const RunManifest &m)
	{
		std::multiset<std::string> listed;
		for (const auto &f : m.files)
		{
			listed.insert(f.path);
			CHECK_FALSE(f.statement.empty());
		}
		std::set<std::string> present;
		for (const auto &entry : fs::directory_iterator(dir))
			present.insert(entry.path().filename().string());
		CHECK(listed.size() == present.size());
		for (const auto &name : present)
			CHECK(listed.count(name) == 1);
	}
} // namespace

TEST_CASE("registry")
{
	const std::set<std::string> expected{"paths-sanity", "decouple-sandwich", "sde-coupling-scaling", "bsde-oracle",
										 "bmo-functions", "sliceable", "fefferman", "fbsde-weighted-bmo",
										 "weight-assembly", "tail-goodlambda"};
	std::set<std::string> names;
	for (const auto &e : list_experiments())
	{
		names.insert(e.name);
		CHECK_FALSE(e.statement.empty());
		CHECK(e.expected_seconds > 0);
		CHECK(e.expected_seconds < 600);
		CHECK(default_parameters(e.name).is_object());
	}
	CHECK(names == expected);
	CHECK_THROWS_AS(experiment_info("nope"), InvalidArgument);
}

TEST_CASE("format_number round trips")
{
	for (double v : {0.1, 1.0 / 3, 1e-300, 123456789.0, -2.5})
		CHECK(std::stod(format_number(v)) == v);
	CHECK(format_number(2.0) == "2");
}

TEST_CASE("run writes a complete manifest and reproducible tables")
{
	const fs::path a = scratch("a"), b = scratch("b");
	ExperimentConfig cfg = make_config("bmo-functions");
	cfg.out_dir = a.string();
	const RunManifest m = run(cfg);
	CHECK(m.status == "pass");
	CHECK(exit_code(m) == 0);
	check_manifest_complete(a, m);
	CHECK(m.summary.at("schema_version") == kSchemaVersion);

	ExperimentConfig again = make_config("paths-sanity", Json{{"paths", 500}});
	again.out_dir = a.string() + "_p1";
	set_max_threads(1);
	run(again);
	again.out_dir = b.string();
	set_max_threads(8);
	const RunManifest m2 = run(again);
	set_max_threads(0);
	check_manifest_complete(b, m2);
	for (const auto &f : m2.files)
		if (f.kind == "csv")
			CHECK(slurp(fs::path(a.string() + "_p1") / f.path) == slurp(b / f.path));

	const RunManifest loaded = load_manifest(b.string());
	CHECK(loaded.status == m2.status);
	CHECK(loaded.files.size() == m2.files.size());
	CHECK(loaded.config == to_json(m2).at("config"));
}

TEST_CASE("config files and overrides")
{
	const fs::path dir = scratch("cfg");
	fs::create_directories(dir);
	const fs::path file = dir / "run.json";
	std::ofstream(file) << R"({"experiment": "sliceable", "out": "x", "parameters": {"n_max": 3}})";
	const ExperimentConfig cfg = load_config(file.string());
	CHECK(cfg.experiment == "sliceable");
	CHECK(cfg.out_dir == "x");
	CHECK(cfg.parameters.at("n_max") == 3);
	CHECK(cfg.parameters.at("N") == 840);
	CHECK(load_config("fefferman").experiment == "fefferman");
	CHECK_THROWS_AS(load_config("no-such-thing"), InvalidArgument);
	CHECK_THROWS_AS(make_config("sliceable", Json{{"bogus", 1}}), InvalidArgument);
}

TEST_CASE("validation and error manifests")
{
	ExperimentConfig off = make_config("decouple-sandwich", Json{{"s", 0.2}});
	CHECK_THROWS_AS(validate(off), InvalidArgument);
	const fs::path dir = scratch("err");
	off.out_dir = dir.string();
	const RunManifest m = run(off);
	CHECK(m.status == "error");
	CHECK(exit_code(m) == 1);
	CHECK(m.error.find("grid node") != std::string::npos);
	check_manifest_complete(dir, m);

	CHECK_THROWS_AS(validate(make_config("tail-goodlambda", Json{{"p", 1.5}})), InvalidArgument);
	const Json strict{{"theta", 0.5}, {"lz", 1.0}, {"s_inf", 0.2}};
	REQUIRE(*c8_min_p(1.0, 0.2) > 2);
	const double min_p = *c8_min_p(1.0, 0.2);
	CHECK_THROWS_AS(validate(make_config("tail-goodlambda", Json{{"generator", strict}, {"p", min_p * 0.999}})),
					InvalidArgument);
	CHECK_NOTHROW(validate(make_config("tail-goodlambda", Json{{"generator", strict}, {"p", min_p * 1.001}})));
}
