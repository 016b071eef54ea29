from fastapi import APIRouter, Depends

from quadhedge.app.api.deps import get_engine_settings
from quadhedge.app.core.config import Settings
from quadhedge.app.schemas.ledger import HedgeSummary
from quadhedge.app.schemas.scenario import PriceTable, ScenarioConfig
from quadhedge.app.services import scenario_service

router = APIRouter(tags=["hedging"])


@router.post("/price", response_model=PriceTable)
def price(payload: ScenarioConfig, settings: Settings = Depends(get_engine_settings)):
    return scenario_service.run_price(payload, settings)


@router.post("/hedge", response_model=HedgeSummary)
def hedge(payload: ScenarioConfig, settings: Settings = Depends(get_engine_settings)):
    # ledgers stay server-side; the CLI writes them
    return scenario_service.run_hedge(payload, settings).summary
