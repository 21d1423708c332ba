#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace bsdelab
{
	/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
	/// Each (key, counter) pair maps to four independent 32-bit words, so any
	/// draw can be recomputed from its coordinates without sequential state.
	std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

	/// Named RNG streams. Distinct streams never share a counter.
	enum class Stream : std::uint32_t
	{
		Primary = 0,     // W
		Copy = 1,        // W'
		WindowRedraw = 2, // resampling inside a decoupling window
		OuterRedraw = 3, // resampling after the conditioning time
		InnerRedraw = 4, // nested resampling inside an outer redraw
		Auxiliary = 5
	};

	/// Gaussian draws addressed by (seed, stream, path, redraw, index).
	class CounterNormal
	{
	public:
		explicit CounterNormal(std::uint64_t seed);

		/// Two standard normals from one Philox block (Box-Muller).
		std::array<double, 2> pair(Stream stream, std::uint64_t path, std::uint32_t redraw, std::uint32_t block) const;

		/// Fills out[i] with the i-th normal of the (stream, path, redraw) sequence.
		void fill(Stream stream, std::uint64_t path, std::uint32_t redraw, std::span<double> out) const;

		/// The index-th normal of the (stream, path, redraw) sequence.
		double normal(Stream stream, std::uint64_t path, std::uint32_t redraw, std::uint32_t index) const
		{
			return pair(stream, path, redraw, index / 2)[index % 2];
		}

		/// Uniform in [0, 1) addressed the same way.
		double uniform(Stream stream, std::uint64_t path, std::uint32_t redraw, std::uint32_t index) const;

		std::uint64_t seed() const { return seed_; }

	private:
		std::uint64_t seed_;
		std::array<std::uint32_t, 2> key_;
	};
} // namespace bsdelab
