from quadhedge.app.core.config import Settings, get_settings


def get_engine_settings() -> Settings:
    """Settings for request handlers; overridden in tests."""
    return get_settings()
