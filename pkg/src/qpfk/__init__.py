"""Spectral equilibria of Frenkel-Kontorova chains on quasi-periodic substrates.

The package computes hull corrections h_hat on T^d together with the
counterterm lambda, expands the branch perturbatively, reports a-posteriori
condition numbers, and continues families of equilibria up to the breakdown
of analyticity.

Exports resolve lazily so that importing the package (e.g. through the
command line entry point) does not initialize the numerics stack before
thread caps are in place.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "FrequencyData": ".cohomology",
    "default_tau": ".cohomology",
    "diophantine_estimate": ".cohomology",
    "solve_first_difference": ".cohomology",
    "solve_second_difference": ".cohomology",
    "RunConfig": ".config",
    "load_config": ".config",
    "validate_config": ".config",
    "BreakdownEstimate": ".continuation",
    "ContinuationRecord": ".continuation",
    "bisect_breakdown": ".continuation",
    "breakdown_signal": ".continuation",
    "continue_family": ".continuation",
    "ramp_to_breakdown": ".continuation",
    "write_records_csv": ".continuation",
    "write_records_jsonl": ".continuation",
    "BracketError": ".errors",
    "ConfigError": ".errors",
    "DegenerateConjugacyError": ".errors",
    "HermitianSymmetryError": ".errors",
    "NearResonanceError": ".errors",
    "QpfkError": ".errors",
    "ResolutionError": ".errors",
    "SeedFailureError": ".errors",
    "SmallDivisorError": ".errors",
    "SolvabilityError": ".errors",
    "TorusFunction": ".fourier",
    "dump_coeffs": ".fourier",
    "load_coeffs": ".fourier",
    "LindstedtSeries": ".lindstedt",
    "lindstedt_eval": ".lindstedt",
    "lindstedt_expand": ".lindstedt",
    "EquilibriumError": ".model",
    "ForceModel": ".model",
    "error_functional": ".model",
    "gradient_cosine_force": ".model",
    "AposterioriReport": ".solver",
    "ConditionReport": ".solver",
    "IdentityReport": ".solver",
    "SolveResult": ".solver",
    "SolverState": ".solver",
    "StepOutput": ".solver",
    "aposteriori_report": ".solver",
    "condition_numbers": ".solver",
    "default_smoothness": ".solver",
    "quasi_newton_step": ".solver",
    "solve": ".solver",
    "solve_linearized": ".solver",
    "verify_identities": ".solver",
}

__all__ = ["__version__"] + sorted(_EXPORTS)


def __getattr__(name: str):
    try:
        module_name = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    value = getattr(importlib.import_module(module_name, __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
