"""Boot-time guard on execution limits.

Out-of-range worker counts, block sizes or tree limits warn in development and
abort startup only when QUADHEDGE_ENV=production.
"""
import logging

import pytest

from quadhedge.app.core.config import Settings, effective_path_block, effective_workers, enforce_runtime_limits


def _settings(**overrides) -> Settings:
    return Settings(_env_file=None, **overrides)


class TestLimitProblems:
    def test_defaults_ok(self):
        assert _settings().limit_problems() == []

    def test_zero_workers_flagged(self):
        assert "QUADHEDGE_WORKERS" in _settings(QUADHEDGE_WORKERS=0).limit_problems()

    def test_zero_path_block_flagged(self):
        assert "QUADHEDGE_PATH_BLOCK" in _settings(QUADHEDGE_PATH_BLOCK=0).limit_problems()

    def test_tree_limit_above_ceiling_flagged(self):
        assert "QUADHEDGE_MAX_TREE_STEPS" in _settings(QUADHEDGE_MAX_TREE_STEPS=50_000).limit_problems()

    def test_effective_values_never_below_one(self):
        cfg = _settings(QUADHEDGE_WORKERS=0, QUADHEDGE_PATH_BLOCK=-5)
        assert effective_workers(cfg) == 1
        assert effective_path_block(cfg) == 1


class TestEnforce:
    def test_prod_with_bad_limits_raises(self):
        cfg = _settings(QUADHEDGE_WORKERS=0, QUADHEDGE_ENV="production")
        with pytest.raises(RuntimeError, match="Refusing to start in production"):
            enforce_runtime_limits(cfg, logging.getLogger("test"))

    def test_dev_with_bad_limits_warns_not_raises(self, caplog):
        cfg = _settings(QUADHEDGE_PATH_BLOCK=0, QUADHEDGE_ENV="development")
        with caplog.at_level(logging.WARNING):
            enforce_runtime_limits(cfg, logging.getLogger("test"))  # must not raise
        assert any("Suspicious config" in r.message for r in caplog.records)

    def test_prod_with_good_limits_is_silent(self):
        enforce_runtime_limits(_settings(QUADHEDGE_ENV="production"), logging.getLogger("test"))
