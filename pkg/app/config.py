from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    # App
    APP_NAME: str = "softmine"
    APP_ENV: str = "development"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Post-mortem dumps for non-finite losses
    DUMP_DIR: str = "dumps"

    # Numerics
    NORM_EPS: float = 1e-12  # zero-norm detection threshold

    # Evaluation
    EVAL_BATCH_SIZE: int = 256

    # Synthetic data
    MEAN_SEPARATION_MAX_ATTEMPTS: int = 10000

    # Optional default config file picked up by the CLI when --config is absent
    DEFAULT_CONFIG_PATH: Optional[str] = None

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


settings = Settings()
