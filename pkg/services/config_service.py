import logging
import os
from typing import Iterable, Optional, Tuple, Union

from dotenv import dotenv_values

from model.config import ModelConfig, ScenarioConfig
from model.errors import ConfigError
from model.validators import ensure_valid

logger = logging.getLogger(__name__)


class ConfigService:
    """Process settings from the environment and scenario files of `section.key = value` lines."""

    def __init__(self):
        self.out_dir = os.getenv('BUFSIM_OUT_DIR', 'results')
        self.log_level = os.getenv('BUFSIM_LOG_LEVEL', 'INFO').upper()
        try:
            self.workers = int(os.getenv('BUFSIM_WORKERS', os.cpu_count() or 1))
            self.seed = int(os.getenv('BUFSIM_SEED', 1))
        except ValueError as e:
            logger.error(f"Invalid numeric environment setting: {str(e)}")
            raise ValueError("BUFSIM_WORKERS and BUFSIM_SEED must be integers") from e
        if self.workers < 1:
            raise ValueError("BUFSIM_WORKERS must be at least 1")

    @staticmethod
    def parse_override(text: str) -> Tuple[str, str]:
        key, sep, value = text.partition('=')
        if not sep or not key.strip():
            raise ConfigError(text, "override must look like section.key=value")
        return key.strip(), value.strip()

    @staticmethod
    def _read(path: Optional[str]) -> dict:
        if path is None:
            return {}
        if not os.path.isfile(path):
            logger.error(f"Config file not found: {path}")
            raise ConfigError('config', f"file not found: {path}")
        return dict(dotenv_values(path))

    def _apply(self, cfg: Union[ScenarioConfig, ModelConfig], path: Optional[str],
               overrides: Iterable[str]) -> None:
        for key, value in self._read(path).items():
            cfg.set(key, '' if value is None else value)
        for override in overrides:
            cfg.set(*self.parse_override(override))

    def load_scenario(self, path: Optional[str] = None, overrides: Iterable[str] = (),
                      seed: Optional[int] = None) -> ScenarioConfig:
        cfg = ScenarioConfig()
        cfg.scenario.seed = self.seed
        self._apply(cfg, path, overrides)
        if seed is not None:
            cfg.scenario.seed = seed
        ensure_valid(cfg)
        logger.info(f"Loaded scenario {path or '<defaults>'} (hash {cfg.config_hash()}, seed {cfg.scenario.seed})")
        return cfg

    def load_model(self, path: Optional[str] = None, overrides: Iterable[str] = ()) -> ModelConfig:
        cfg = ModelConfig()
        self._apply(cfg, path, overrides)
        ensure_valid(cfg)
        return cfg
