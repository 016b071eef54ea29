from fastapi import APIRouter, Depends

from quadhedge.app.api.deps import get_engine_settings
from quadhedge.app.core.config import Settings
from quadhedge.app.schemas.calibration import SurfaceGrid
from quadhedge.app.schemas.scenario import PsiSurfaceRequest
from quadhedge.app.services import calibration

router = APIRouter(tags=["surfaces"])


@router.post("/psi-surface", response_model=SurfaceGrid)
def psi_surface(payload: PsiSurfaceRequest, settings: Settings = Depends(get_engine_settings)):
    return calibration.psi_surface(payload.gammas, payload.taus_days, payload.horizon_days, settings.trading_days)
