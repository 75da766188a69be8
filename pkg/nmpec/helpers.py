import traceback

import numpy as np
from ascii_colors import ASCIIColors

# Max-entry tolerance for Hermiticity / unitarity predicates
OPERATOR_TOL = 1e-8


def get_trace_exception(ex):
    """
    Traces an exception (useful for debug) and returns the full trace of the exception
    """
    traceback_lines = traceback.format_exception(type(ex), ex, ex.__traceback__)
    return ''.join(traceback_lines)


def trace_exception(ex):
    """
    Traces an exception (useful for debug)
    """
    ASCIIColors.error(get_trace_exception(ex))


def trajectory_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Private random generator of one Monte Carlo work unit.

    The stream is a pure function of (seed, stream, index) so results never depend
    on how work units are scheduled over threads.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64(sequence))


def on_grid(t: float, step: float, tol: float = 1e-9) -> int:
    """Returns k with t == k*step within a relative tolerance, or -1."""
    if step <= 0:
        return -1
    k = int(round(t / step))
    if abs(k * step - t) <= tol * max(1.0, abs(t)):
        return k
    return -1


def complex_from_config(value):
    """Decodes a complex number serialized as [re, im] or as a plain real."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex numbers are serialized as [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, complex):
        return value
    return complex(float(value), 0.0)


def complex_to_config(value: complex):
    return [float(np.real(value)), float(np.imag(value))]
