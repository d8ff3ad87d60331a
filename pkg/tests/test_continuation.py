"""Continuation: warm-started ramps, breakdown signal, bisection, records."""

import csv
import json

import numpy as np
import pytest

from qpfk.cohomology import FrequencyData
from qpfk.continuation import (
    RECORD_FIELDS,
    BreakdownEstimate,
    ContinuationRecord,
    bisect_breakdown,
    breakdown_signal,
    continue_family,
    ramp_to_breakdown,
    write_records_csv,
    write_records_jsonl,
)
from qpfk.errors import BracketError, SeedFailureError
from qpfk.fourier import TorusFunction
from qpfk.model import ForceModel, gradient_cosine_force
from qpfk.solver import solve

OMEGA = (np.sqrt(5.0) - 1.0) / 2.0
ALPHA = (1.0, np.sqrt(2.0))


@pytest.fixture
def freq():
    return FrequencyData(alpha=ALPHA, omega=OMEGA)


@pytest.fixture
def base(freq):
    return gradient_cosine_force((1.0, 1.0), ALPHA)


def make_record(**overrides):
    fields = dict(
        param=0.01, converged=True, iterations=4, lambda_star=0.0,
        sup_residual=1e-13, sobolev_m=10.0, decay_rate=0.3, min_l=0.8,
        wall_time=0.05,
    )
    fields.update(overrides)
    return ContinuationRecord(**fields)


class TestSignal:
    def test_healthy_record(self):
        assert not breakdown_signal(make_record(), baseline_sobolev=10.0)

    def test_non_convergence(self):
        assert breakdown_signal(make_record(converged=False), 10.0)

    def test_monotonicity_loss(self):
        assert breakdown_signal(make_record(min_l=0.01), 10.0)

    def test_sobolev_blowup(self):
        assert breakdown_signal(make_record(sobolev_m=1e8), baseline_sobolev=10.0)
        assert not breakdown_signal(make_record(sobolev_m=1e8), baseline_sobolev=1e3)

    def test_zero_baseline_disables_blowup_clause(self):
        assert not breakdown_signal(make_record(sobolev_m=1e8), baseline_sobolev=0.0)


class TestFamily:
    def test_zero_force_family(self, freq):
        force = ForceModel(d=2, modes=(), gradient=True)
        records = continue_family([0.0, 1.0, 2.0], force, freq, 16)
        assert len(records) == 3
        assert all(r.converged for r in records)
        assert all(r.sobolev_m == 0.0 for r in records)

    def test_monotone_grid_required(self, freq, base):
        with pytest.raises(ValueError):
            continue_family([0.002, 0.001, 0.003], base, freq, 32)

    def test_warm_ramp(self, freq, base):
        grid = [0.002, 0.004, 0.006, 0.008, 0.010, 0.012]
        records = continue_family(grid, base, freq, 64)
        assert [r.param for r in records] == grid
        assert all(r.converged for r in records)
        sob = [r.sobolev_m for r in records]
        assert all(b > a for a, b in zip(sob, sob[1:]))
        min_ls = [r.min_l for r in records]
        assert all(b < a for a, b in zip(min_ls, min_ls[1:]))
        assert all(r.wall_time > 0.0 for r in records)

    def test_warm_start_superiority(self, freq, base):
        # Cold starts may not converge at all at the upper end; superiority
        # holds trivially there.
        grid = [0.004, 0.008, 0.012]
        records = continue_family(grid, base, freq, 64)
        assert all(r.converged for r in records)
        for record in records[1:]:
            cold = solve(TorusFunction.zero(2, 64), 0.0,
                         base.scale(record.param), freq)
            assert (not cold.converged) or record.iterations <= cold.iterations

    def test_one_record_per_point_with_failure(self, freq, base):
        grid = [0.004, 0.008, 0.05]
        records = continue_family(grid, base, freq, 64, min_step=2e-3)
        assert [r.param for r in records] == grid
        assert records[0].converged and records[1].converged
        assert not records[2].converged

    def test_seed_failure(self, freq, base):
        with pytest.raises(SeedFailureError):
            continue_family([0.05, 0.06], base, freq, 64)

    def test_empty_grid(self, freq, base):
        assert continue_family([], base, freq, 32) == []


class TestRamp:
    def test_finds_bracket(self, freq, base):
        records, estimate = ramp_to_breakdown(
            base, freq, 64, start=0.004, initial_step=0.004, min_step=5e-4
        )
        assert estimate is not None
        assert 0.010 < estimate.lower < estimate.upper < 0.030
        assert estimate.bracket_width <= 2 * 5e-4
        assert estimate.bracket_width == estimate.upper - estimate.lower
        converged = [r for r in records if r.converged]
        sob = [r.sobolev_m for r in converged]
        assert all(b > a for a, b in zip(sob, sob[1:]))
        failed = [r for r in records if not r.converged]
        assert failed and min(r.param for r in failed) >= estimate.upper - 1e-15

    def test_respects_limit(self, freq, base):
        records, estimate = ramp_to_breakdown(
            base, freq, 64, start=0.002, initial_step=0.002, param_limit=0.008
        )
        assert estimate is None
        assert all(r.converged for r in records)
        assert max(r.param for r in records) <= 0.008

    def test_step_doubling_on_quick_successes(self, freq, base):
        records, estimate = ramp_to_breakdown(
            base, freq, 32, start=0.001, initial_step=2e-4,
            param_limit=0.004, min_step=1e-4, max_step=2e-3,
        )
        assert estimate is None
        params = [r.param for r in records if r.converged]
        diffs = np.diff(params)
        assert diffs.max() > 2.5e-4
        assert diffs.max() <= 2e-3 + 1e-12

    def test_seed_failure(self, freq, base):
        with pytest.raises(SeedFailureError):
            ramp_to_breakdown(base, freq, 64, start=0.05, initial_step=0.004)


class TestBisect:
    def test_refines_bracket(self, freq, base):
        count = []
        estimate = bisect_breakdown(
            0.010, 0.020, base, freq, 64, width_tol=5e-4,
            on_record=lambda r: count.append(r),
        )
        assert 0.010 <= estimate.lower < estimate.upper <= 0.020
        assert estimate.bracket_width <= 5e-4
        assert len(count) <= 12

    def test_inconsistent_bracket(self, freq, base):
        with pytest.raises(BracketError):
            bisect_breakdown(0.002, 0.004, base, freq, 64)

    def test_degenerate_bracket(self, freq, base):
        with pytest.raises(BracketError):
            bisect_breakdown(0.01, 0.01, base, freq, 64)
        with pytest.raises(BracketError):
            bisect_breakdown(0.02, 0.01, base, freq, 64)

    def test_lower_endpoint_must_be_computable(self, freq, base):
        with pytest.raises(BracketError):
            bisect_breakdown(0.03, 0.04, base, freq, 64)

    def test_estimate_invariant(self):
        with pytest.raises(BracketError):
            BreakdownEstimate(lower=0.02, upper=0.01, bracket_width=-0.01)


class TestWriters:
    def test_jsonl_roundtrip(self, tmp_path):
        records = [make_record(), make_record(param=0.02, decay_rate=None,
                                              converged=False)]
        path = tmp_path / "records.jsonl"
        write_records_jsonl(records, path, header="family run")
        lines = path.read_text().splitlines()
        assert lines[0] == '{"comment": "family run"}'
        rows = [json.loads(line) for line in lines[1:]]
        assert len(rows) == 2
        assert list(rows[0].keys()) == list(RECORD_FIELDS)
        assert rows[0]["param"] == 0.01
        assert rows[1]["decay_rate"] is None
        assert rows[1]["converged"] is False

    def test_csv_roundtrip(self, tmp_path):
        records = [make_record(), make_record(param=0.02, decay_rate=None)]
        path = tmp_path / "records.csv"
        write_records_csv(records, path, header="family run")
        with open(path) as fh:
            content = [line for line in fh if not line.startswith("#")]
        rows = list(csv.DictReader(content))
        assert len(rows) == 2
        assert list(rows[0].keys()) == list(RECORD_FIELDS)
        assert float(rows[0]["param"]) == 0.01
        assert rows[1]["decay_rate"] == ""

    def test_float_precision(self, tmp_path):
        value = 0.1234567890123456789
        records = [make_record(param=value)]
        path = tmp_path / "records.jsonl"
        write_records_jsonl(records, path)
        row = json.loads(path.read_text().splitlines()[0])
        assert row["param"] == value
