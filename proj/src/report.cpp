#include <bsdelab/report.hpp>
#include <bsdelab/types.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace bsdelab
{
	std::string format_number(double value)
	{
		if (std::isnan(value))
			return "nan";
		if (std::isinf(value))
			return value > 0 ? "inf" : "-inf";
		char buffer[64];
		const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
		return std::string(buffer, result.ptr);
	}

	void CsvTable::add_row(std::vector<std::string> cells)
	{
		require(cells.size() == columns_.size(), "csv: row width differs from header");
		rows_.push_back(std::move(cells));
	}

	void CsvTable::add_row(const std::vector<double> &values)
	{
		std::vector<std::string> cells;
		cells.reserve(values.size());
		for (double v : values)
			cells.push_back(format_number(v));
		add_row(std::move(cells));
	}

	std::string CsvTable::to_string() const
	{
		std::ostringstream os;
		auto line = [&](const std::vector<std::string> &cells) {
			for (std::size_t i = 0; i < cells.size(); ++i)
				os << (i ? "," : "") << cells[i];
			os << '\n';
		};
		line(columns_);
		for (const auto &row : rows_)
			line(row);
		return os.str();
	}

	void CsvTable::write(const std::string &path) const { write_text(path, to_string()); }

	double CsvTable::number(std::size_t row, std::size_t column) const
	{
		const std::string &cell = rows_.at(row).at(column);
		double value = std::numeric_limits<double>::quiet_NaN();
		std::from_chars(cell.data(), cell.data() + cell.size(), value);
		return value;
	}

	void write_text(const std::string &path, const std::string &text)
	{
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot open " + path + " for writing");
		out << text;
	}

	namespace
	{
		std::string escape(const std::string &s)
		{
			std::string out;
			for (char c : s)
			{
				switch (c)
				{
				case '<': out += "&lt;"; break;
				case '>': out += "&gt;"; break;
				case '&': out += "&amp;"; break;
				default: out += c;
				}
			}
			return out;
		}

		const char *kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
	} // namespace

	std::string render_svg(const PlotSpec &plot)
	{
		const double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 60;
		auto tx = [&](double v) { return plot.log_x ? std::log10(v) : v; };
		auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
		double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
		for (const auto &s : plot.series)
			for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
			{
				const double x = tx(s.x[i]), y = ty(s.y[i]);
				if (!std::isfinite(x) || !std::isfinite(y))
					continue;
				x0 = std::min(x0, x);
				x1 = std::max(x1, x);
				y0 = std::min(y0, y);
				y1 = std::max(y1, y);
			}
		if (!(x1 >= x0))
			x0 = 0, x1 = 1;
		if (!(y1 >= y0))
			y0 = 0, y1 = 1;
		if (x1 == x0)
			x0 -= 0.5, x1 += 0.5;
		if (y1 == y0)
			y0 -= 0.5, y1 += 0.5;
		const double pw = width - left - right, ph = height - top - bottom;
		auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * pw; };
		auto py = [&](double y) { return top + ph - (ty(y) - y0) / (y1 - y0) * ph; };

		std::ostringstream os;
		os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
		   << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
		os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
		os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(plot.title)
		   << "</text>\n";
		os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
		   << "\" fill=\"none\" stroke=\"black\"/>\n";
		for (int i = 0; i <= 4; ++i)
		{
			const double fx = x0 + (x1 - x0) * i / 4, fy = y0 + (y1 - y0) * i / 4;
			const double sx = left + pw * i / 4, sy = top + ph - ph * i / 4;
			os << "<text x=\"" << sx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
			   << format_number(std::round((plot.log_x ? std::pow(10, fx) : fx) * 1e4) / 1e4) << "</text>\n";
			os << "<text x=\"" << left - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">"
			   << format_number(std::round((plot.log_y ? std::pow(10, fy) : fy) * 1e4) / 1e4) << "</text>\n";
		}
		os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 20 << "\" text-anchor=\"middle\">"
		   << escape(plot.x_label) << (plot.log_x ? " (log)" : "") << "</text>\n";
		os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 16 " << top + ph / 2
		   << ")\" text-anchor=\"middle\">" << escape(plot.y_label) << (plot.log_y ? " (log)" : "") << "</text>\n";
		for (std::size_t s = 0; s < plot.series.size(); ++s)
		{
			const auto &series = plot.series[s];
			const char *colour = kPalette[s % std::size(kPalette)];
			os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
			for (std::size_t i = 0; i < series.x.size() && i < series.y.size(); ++i)
			{
				if (!std::isfinite(tx(series.x[i])) || !std::isfinite(ty(series.y[i])))
					continue;
				os << px(series.x[i]) << "," << py(series.y[i]) << " ";
			}
			os << "\"/>\n";
			os << "<text x=\"" << left + 10 << "\" y=\"" << top + 16 + 14 * static_cast<double>(s) << "\" fill=\"" << colour
			   << "\">" << escape(series.label) << "</text>\n";
		}
		os << "</svg>\n";
		return os.str();
	}
} // namespace bsdelab
