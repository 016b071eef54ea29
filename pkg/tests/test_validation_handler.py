import json

import pytest
from fastapi.exceptions import RequestValidationError

from quadhedge.app.core.errors import ColinearRiskLoadingsError, InsufficientDataError
from quadhedge.app.main import hedging_error_handler, validation_exception_handler


@pytest.mark.asyncio
async def test_validation_handler_formats_errors():
    exc = RequestValidationError(
        errors=[
            {"loc": ("body", "market", "volatility"), "msg": "volatility must be positive"},
            {"loc": ("body", "grid", "n_steps"), "msg": "Input should be greater than 0"},
        ]
    )
    response = await validation_exception_handler(None, exc)
    assert response.status_code == 422
    body = json.loads(response.body)
    assert body["error_code"] == "validation_error"
    assert body["message"] == "Invalid request payload."
    assert "job_id" in body and body["job_id"]
    assert {"field": "body.market.volatility", "message": "volatility must be positive"} in body["details"]
    assert {"field": "body.grid.n_steps", "message": "Input should be greater than 0"} in body["details"]


@pytest.mark.asyncio
async def test_input_error_maps_to_400():
    response = await hedging_error_handler(None, InsufficientDataError("insufficient observations", field="prices"))
    assert response.status_code == 400
    body = json.loads(response.body)
    assert body["error_code"] == "insufficient_observations"
    assert body["details"] == [{"field": "prices", "message": "insufficient observations"}]


@pytest.mark.asyncio
async def test_numerical_error_maps_to_422():
    response = await hedging_error_handler(None, ColinearRiskLoadingsError("sigma1*gamma2 == gamma1*sigma2"))
    assert response.status_code == 422
    assert json.loads(response.body)["error_code"] == "colinear_risk_loadings"
