"""
Output Formatter
================

Handles console output formatting.
Follows SRP: Only handles output formatting.
"""

import sys
from typing import Mapping


class OutputFormatter:
    """
    Formatter for console output.

    Follows SRP: Only handles output formatting.
    """

    def print_header(self, title: str) -> None:
        """
        Print formatted header.

        Args:
            title: Header title
        """
        print("\n" + "=" * 80)
        print(f" {title}")
        print("=" * 80)

    def print_counts(self, title: str, counts: Mapping[str, int]) -> None:
        """
        Print a name/count summary.

        Args:
            title: Summary title
            counts: Mapping of name to count
        """
        print()
        print("-" * 80)
        print(f"{title}:")
        for name, count in counts.items():
            print(f"  {name}: {count}")
        print("=" * 80)

    def print_table(self, table_text: str) -> None:
        print(table_text)

    def print_error(self, message: str) -> None:
        """
        Print a machine-parsable error line.

        Args:
            message: Error message
        """
        print(f"error: {message}", file=sys.stderr)

    def print_warning(self, message: str) -> None:
        print(f"warning: {message}", file=sys.stderr)

    def print_success(self, message: str) -> None:
        print(f"✓ {message}")

    def print_info(self, message: str) -> None:
        print(f"ℹ {message}")
