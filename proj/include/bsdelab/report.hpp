#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace bsdelab
{
	using Json = nlohmann::ordered_json;

	inline constexpr int kSchemaVersion = 1;

	/// Shortest round-trip decimal form; identical input gives identical text.
	std::string format_number(double value);

	/// Column-oriented table written as CSV.
	class CsvTable
	{
	public:
		explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

		void add_row(std::vector<std::string> cells);
		void add_row(const std::vector<double> &values);

		const std::vector<std::string> &columns() const { return columns_; }
		const std::vector<std::vector<std::string>> &rows() const { return rows_; }
		std::string to_string() const;
		void write(const std::string &path) const;
		/// Numeric value of a cell (NaN when not a number).
		double number(std::size_t row, std::size_t column) const;

	private:
		std::vector<std::string> columns_;
		std::vector<std::vector<std::string>> rows_;
	};

	struct PlotSeries
	{
		std::string label;
		std::vector<double> x, y;
	};

	struct PlotSpec
	{
		std::string title;
		std::string x_label, y_label;
		bool log_x = false;
		bool log_y = false;
		std::vector<PlotSeries> series;
	};

	/// Standalone SVG line chart.
	std::string render_svg(const PlotSpec &plot);
	void write_text(const std::string &path, const std::string &text);
} // namespace bsdelab
