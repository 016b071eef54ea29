import pytest
from fastapi.testclient import TestClient

from quadhedge.app.api.deps import get_engine_settings
from quadhedge.app.core.config import Settings
from quadhedge.app.main import create_app
from quadhedge.app.schemas.market import MarketParams, PayoffSpec, TimeGrid
from quadhedge.app.services.calibration import generate_gbm_series


def make_settings(**overrides) -> Settings:
    base = {
        "QUADHEDGE_WORKERS": 2,
        "QUADHEDGE_PATH_BLOCK": 512,
        "QUADHEDGE_LEDGER_PATH_CAP": 3,
        "QUADHEDGE_LOG_LEVEL": "WARNING",
    }
    base.update(overrides)
    return Settings(_env_file=None, **base)


@pytest.fixture
def settings():
    return make_settings()


@pytest.fixture
def settings_factory():
    return make_settings


@pytest.fixture
def market():
    return MarketParams(drift=0.08, volatility=0.2, riskless_rate=0.01, spot=100.0)


@pytest.fixture
def atm_call():
    return PayoffSpec.call(100.0)


@pytest.fixture
def year_grid():
    return TimeGrid(n_steps=160, horizon=1.0)


@pytest.fixture(scope="session")
def gbm_series():
    # ten years of daily closes; the strong drift keeps the estimated drift above the riskless rate
    return generate_gbm_series(0.25, 0.2, 100.0, 2521, seed=7)


@pytest.fixture
def app(settings):
    app = create_app()
    app.dependency_overrides[get_engine_settings] = lambda: settings
    return app


@pytest.fixture
def client(app):
    return TestClient(app)
