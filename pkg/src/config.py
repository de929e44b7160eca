"""Application configuration"""

import os
from typing import Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-level settings shared by every run"""

    # Application
    APP_NAME: str = "AsyncRL"
    APP_ENV: str = "development"

    # Outputs
    OUTPUT_PATH: str = "runs"
    METRICS_QUEUE_SIZE: int = 1024

    # Shared parameter store
    LOCK_STRIPES: int = 64
    PRECISION: str = "float32"
    MP_START_METHOD: Optional[str] = None

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: Optional[str] = None

    @property
    def log_format(self) -> str:
        """LOG_FORMAT, or console output in development and JSON lines elsewhere"""
        if self.LOG_FORMAT:
            return self.LOG_FORMAT
        return "console" if self.APP_ENV == "development" else "json"

    class Config:
        env_file = "/app/.env" if os.path.exists("/app/.env") else ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True


# Create global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings"""
    return settings
