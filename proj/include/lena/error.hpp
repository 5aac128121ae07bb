#pragma once

#include <stdexcept>
#include <string>

namespace lena
{
	/// Tensor or parameter extents do not agree with what an operation expects.
	class ShapeError : public std::invalid_argument
	{
		public:
			using std::invalid_argument::invalid_argument;
	};

	class InvalidArgument : public std::invalid_argument
	{
		public:
			using std::invalid_argument::invalid_argument;
	};

	/// Malformed input file; the message carries the file and position.
	class ParseError : public std::runtime_error
	{
		public:
			using std::runtime_error::runtime_error;
	};

	/// A NaN or infinity showed up where finite values are required.
	class NumericError : public std::runtime_error
	{
		public:
			using std::runtime_error::runtime_error;
	};

	class IoError : public std::runtime_error
	{
		public:
			using std::runtime_error::runtime_error;
	};
}
