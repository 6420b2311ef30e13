"""
Process-wide runtime settings (logging, sweep parallelism, convolution strategy).
"""
import logging
import os
from dataclasses import dataclass


@dataclass
class AppSettings:
    """Runtime settings read once from the environment."""

    # root logger level used by the CLI
    log_level: str = "INFO"

    # worker threads for independent sweep grid values
    max_workers: int = 2

    # kernels with at least this many taps go through the FFT path of conv2
    fft_min_taps: int = 121

    @property
    def level(self) -> int:
        value = logging.getLevelName(self.log_level.upper())
        return value if isinstance(value, int) else logging.INFO

    @classmethod
    def from_env(cls) -> "AppSettings":
        return cls(
            log_level=os.getenv("STMDPLUS_LOG_LEVEL", "INFO"),
            max_workers=max(int(os.getenv("STMDPLUS_MAX_WORKERS", 2)), 1),
            fft_min_taps=max(int(os.getenv("STMDPLUS_FFT_MIN_TAPS", 121)), 1),
        )


app_settings = AppSettings.from_env()
