"""Benchmark problems, command-line driver and report writers."""
from .problems import ExampleSpec, example1, example2, example3, get_example, smoke
from .reports import RunConfig, read_csv, write_csv, write_reports, write_svg, write_vtk


def run_cli(argv=None, out=None):
    from .cli import run_cli as _run

    return _run(argv, out)


__all__ = ["ExampleSpec", "RunConfig", "example1", "example2", "example3", "get_example",
           "read_csv", "run_cli", "smoke", "write_csv", "write_reports", "write_svg",
           "write_vtk"]
