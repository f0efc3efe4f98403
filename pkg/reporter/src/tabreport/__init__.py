"""Figure and table generation for benchmark results CSV files.

Consumes only the documented results.csv column schema; it has no import
dependency on the benchmark package that produced the file.
"""

__version__ = "0.1.0"
