import hashlib
import json
import logging
import os
from collections.abc import Callable
from pathlib import Path

import numpy as np

from .constants import get_default_cache_dir
from .experiment_params import ExperimentConfig

logger = logging.getLogger(__name__)

# Bump when the stored layout or the solver semantics change
CACHE_FORMAT = 1

# Keys that do not influence the computed solution
_IGNORED_KEYS = ("output", "snapshot_times")

Solution = tuple[np.ndarray, np.ndarray]


class ReferenceCache:
    def __init__(self, cache_dir: str | os.PathLike | None = None) -> None:
        """
        File cache of reference solutions, one `.npz` per run configuration.

        Args:
            cache_dir (str | os.PathLike, optional): Directory for the cache files. Defaults to
                `get_default_cache_dir()`, which honours TWOGRIDMFE_CACHE_DIR.
        """
        self.cache_dir = Path(cache_dir) if cache_dir is not None else get_default_cache_dir()

    @staticmethod
    def key(config: ExperimentConfig) -> str:
        data = {k: v for k, v in config.to_dict().items() if k not in _IGNORED_KEYS}
        data["cache_format"] = CACHE_FORMAT
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    def path(self, config: ExperimentConfig) -> Path:
        return self.cache_dir / f"{self.key(config)}.npz"

    def load(self, config: ExperimentConfig) -> Solution | None:
        path = self.path(config)
        if not path.exists():
            return None
        with np.load(path) as data:
            logger.info("Loaded reference solution from cache", extra={"path": str(path)})
            return data["u"], data["sigma"]

    def save(self, config: ExperimentConfig, u: np.ndarray, sigma: np.ndarray) -> Path:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path = self.path(config)
        tmp_path = path.with_suffix(".tmp.npz")
        np.savez(tmp_path, u=u, sigma=sigma, config=json.dumps(config.to_dict(), sort_keys=True))
        os.replace(tmp_path, path)
        logger.info("Stored reference solution", extra={"path": str(path)})
        return path

    def get_or_compute(self, config: ExperimentConfig, compute: Callable[[], Solution]) -> Solution:
        cached = self.load(config)
        if cached is not None:
            return cached
        u, sigma = compute()
        self.save(config, u, sigma)
        return u, sigma
