import logging
import uuid

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError
from starlette import status

from quadhedge.app.api.routes import api_router
from quadhedge.app.core.config import enforce_runtime_limits, get_settings
from quadhedge.app.core.errors import HedgingError, NumericalError

logger = logging.getLogger(__name__)


def _envelope(status_code: int, error_code: str, message: str, details: list[dict]) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={
            "error_code": error_code,
            "message": message,
            "details": details,
            "job_id": str(uuid.uuid4()),
        },
    )


def _details(errors) -> list[dict]:
    details = []
    for err in errors:
        loc = ".".join(str(part) for part in err.get("loc", []) if part is not None)
        msg = err.get("msg", "Invalid value")
        details.append({"field": loc or None, "message": msg})
    return details


async def validation_exception_handler(request, exc: RequestValidationError):
    return _envelope(
        status.HTTP_422_UNPROCESSABLE_ENTITY, "validation_error", "Invalid request payload.", _details(exc.errors())
    )


async def model_validation_handler(request, exc: ValidationError):
    # engine-side schemas built from a valid payload, e.g. drift <= rate
    return _envelope(
        status.HTTP_422_UNPROCESSABLE_ENTITY, "validation_error", "Invalid model parameters.", _details(exc.errors())
    )


async def hedging_error_handler(request, exc: HedgingError):
    code = status.HTTP_422_UNPROCESSABLE_ENTITY if isinstance(exc, NumericalError) else status.HTTP_400_BAD_REQUEST
    logger.info("Request failed with %s: %s", exc.error_code, exc.message)
    return _envelope(code, exc.error_code, exc.message, exc.details())


def create_app() -> FastAPI:
    settings = get_settings()
    # Warn (dev) or refuse to boot (production) on out-of-range execution limits.
    enforce_runtime_limits(settings, logger)
    app = FastAPI(title="quadhedge", version="0.1.0")
    app.add_exception_handler(RequestValidationError, validation_exception_handler)
    app.add_exception_handler(ValidationError, model_validation_handler)
    app.add_exception_handler(HedgingError, hedging_error_handler)
    app.include_router(api_router)

    @app.get("/health")
    async def health() -> dict[str, str]:
        return {"status": "ok"}

    return app


app = create_app()
