"""Thin wrapper so `python -m robust_renyi` runs the CLI."""

from .cli import app


def main() -> None:
    app(prog_name="robust-renyi")


if __name__ == "__main__":
    main()
