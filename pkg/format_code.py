#!/usr/bin/env python
"""
Format the sources with Black and isort, then lint them with ruff.
Run: python format_code.py [--check]
"""

import argparse
import subprocess
import sys

TARGETS = ["src/", "tests/", "format_code.py"]


def _command(tool: str, use_poetry: bool, *args: str) -> list[str]:
    base = ["poetry", "run", tool] if use_poetry else [tool]
    return [*base, *args]


def _poetry_available() -> bool:
    try:
        subprocess.run(["poetry", "--version"], check=True, capture_output=True)
    except (subprocess.CalledProcessError, FileNotFoundError):
        return False
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description="Format and lint the project sources.")
    parser.add_argument("--check", action="store_true", help="report problems without rewriting files")
    args = parser.parse_args()

    use_poetry = _poetry_available()
    check = ["--check", "--diff"] if args.check else []
    steps = [
        ("black", _command("black", use_poetry, *check, *TARGETS)),
        ("isort", _command("isort", use_poetry, *check, *TARGETS)),
        ("ruff", _command("ruff", use_poetry, "check", *TARGETS)),
    ]

    failed = []
    for name, cmd in steps:
        print(f"Running {name}...")
        try:
            result = subprocess.run(cmd, check=False)
        except FileNotFoundError:
            print(f"{name} is not installed; install the dev dependencies first.")
            return 1
        if result.returncode != 0:
            failed.append(name)

    if failed:
        print(f"Problems reported by: {', '.join(failed)}")
        return 1
    print("Sources are formatted and lint-clean.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
