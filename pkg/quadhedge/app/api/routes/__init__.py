from fastapi import APIRouter

from quadhedge.app.api.routes import pricing, surfaces

api_router = APIRouter()
api_router.include_router(pricing.router)
api_router.include_router(surfaces.router)
