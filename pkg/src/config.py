"""Application configuration."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="SCVAE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # App
    debug: bool = Field(default=False)
    runs_dir: str = Field(default="runs")

    # Execution
    jobs: int = Field(default=1, ge=1)
    default_seed: int = Field(default=0, ge=0)

    # Output
    float_format: str = Field(default="%.17g")


settings = Settings()
