"""
Error hierarchy and error record tests
"""

import pytest

from bonnet_geometry.utils.error_utils import (
    BonnetError,
    ConfigError,
    NonConvergenceError,
    RegularityError,
    handle_exception,
)


class TestBonnetError:
    def test_details_default_to_empty(self):
        error = RegularityError("rank deficient")
        assert error.details == {}
        assert str(error) == "rank deficient"
        assert isinstance(error, BonnetError)

    def test_to_dict(self):
        error = ConfigError("bad grid", {"path": "grid.json"})
        assert error.to_dict() == {
            "error_type": "ConfigError",
            "message": "bad grid",
            "details": {"path": "grid.json"},
        }

    def test_non_convergence_keeps_best_iterate(self):
        error = NonConvergenceError("stalled", {"max_iters": 3}, best_iterate=[1.0], history=[(0, 1.0, 0.0)])
        assert error.best_iterate == [1.0]
        assert error.history == [(0, 1.0, 0.0)]


class TestHandleException:
    def test_bonnet_error_record(self):
        record = handle_exception(RegularityError("flat", {"node": [1, 2]}), "frame_integrator")
        assert record == {
            "error": True,
            "error_type": "RegularityError",
            "message": "flat",
            "component": "frame_integrator",
            "details": {"node": [1, 2]},
        }

    def test_foreign_exception_has_no_details(self):
        record = handle_exception(ValueError("boom"))
        assert record["error_type"] == "ValueError"
        assert record["component"] is None
        assert "details" not in record

    @pytest.mark.parametrize("error", [ConfigError("x"), RegularityError("y")])
    def test_errors_are_logged(self, caplog, error):
        handle_exception(error, "cli")
        assert type(error).__name__ in caplog.text
