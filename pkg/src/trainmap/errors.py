"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: InputError -> 1, NumericalError -> 2.
"""


class TrainmapError(Exception):
    """Base class for all pipeline errors."""


class InputError(TrainmapError):
    """Malformed or inconsistent input (files, manifests, CSV rows, shapes).

    Messages name the offending file, line, tensor, or field.
    """


class NumericalError(TrainmapError):
    """A numerical procedure failed (singular covariance, degenerate fit)."""
