"""Disk cache for deterministically degraded evaluation inputs."""

import hashlib
import logging
from pathlib import Path
from typing import Any, Optional

import diskcache
import numpy as np

from bandlift.config import Config, get_config
from bandlift.models import FilterSpec, Waveform

logger = logging.getLogger(__name__)


class DegradationCache:
    """
    Caches low-rate waveforms produced by the evaluation degradation.

    Entries are keyed by the source file (path, size, mtime), the target rate and the
    filter, so an edited source file never hits a stale entry.
    """

    def __init__(
        self,
        cache_dir: Optional[Path] = None,
        ttl_seconds: Optional[int] = None,
        config: Optional[Config] = None,
    ):
        """
        Initialize the cache.

        Args:
            cache_dir: Directory for the cache (uses config if None)
            ttl_seconds: Time-to-live for entries in seconds (uses config if None)
            config: Configuration instance (uses global if None)
        """
        self.config = config or get_config()
        self.cache_dir = Path(cache_dir or self.config.cache_dir) / "degraded"
        self.ttl_seconds = ttl_seconds or self.config.cache_ttl
        self.enabled = self.config.cache_enabled
        self._cache: Optional[diskcache.Cache] = None

        if self.enabled:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            self._cache = diskcache.Cache(str(self.cache_dir))

    def _generate_cache_key(self, source: Path, rate: int, spec: FilterSpec) -> str:
        """Generate unique cache key for a degradation."""
        stat = source.stat()
        key_parts = [
            str(source.resolve()),
            str(stat.st_size),
            str(stat.st_mtime_ns),
            str(rate),
            spec.model_dump_json(),
        ]
        return hashlib.md5("|".join(key_parts).encode()).hexdigest()

    def get(self, source: Path, rate: int, spec: FilterSpec) -> Optional[Waveform]:
        """
        Retrieve a cached degraded waveform.

        Args:
            source: 48 kHz reference file
            rate: Degraded sampling rate
            spec: Degradation filter

        Returns:
            Waveform if cached, None otherwise
        """
        if self._cache is None:
            return None
        try:
            entry = self._cache.get(self._generate_cache_key(source, rate, spec))
        except OSError as e:
            logger.error(f"Cache read error for {source}: {e}")
            return None
        if entry is None:
            return None
        try:
            samples = np.frombuffer(entry["samples"], dtype=np.float64).copy()
            logger.debug(f"Cache hit for {source} at {rate} Hz")
            return Waveform(samples=samples, sample_rate=int(entry["sample_rate"]))
        except (KeyError, TypeError, ValueError) as e:
            logger.error(f"Cache deserialization error for {source}: {e}")
            return None

    def save(self, source: Path, rate: int, spec: FilterSpec, waveform: Waveform) -> bool:
        """
        Store a degraded waveform.

        Returns:
            bool: True if saved successfully
        """
        if self._cache is None:
            return False
        entry = {
            "samples": np.asarray(waveform.samples, dtype=np.float64).tobytes(),
            "sample_rate": waveform.sample_rate,
        }
        try:
            self._cache.set(
                self._generate_cache_key(source, rate, spec), entry, expire=self.ttl_seconds
            )
            return True
        except OSError as e:
            logger.error(f"Cache write error for {source}: {e}")
            return False

    def clear(self) -> int:
        """
        Clear all entries.

        Returns:
            int: Number of entries cleared
        """
        if self._cache is None:
            return 0
        count = int(self._cache.clear())
        logger.info(f"Cleared {count} cache entries")
        return count

    def clear_expired(self) -> int:
        """
        Clear only expired entries.

        Returns:
            int: Number of entries cleared
        """
        if self._cache is None:
            return 0
        count = int(self._cache.expire())
        logger.info(f"Cleared {count} expired cache entries")
        return count

    def get_cache_stats(self) -> dict[str, Any]:
        """Get cache statistics."""
        if self._cache is None:
            return {"enabled": False, "entries": 0, "size_mb": 0.0}
        return {
            "enabled": True,
            "entries": len(self._cache),
            "size_mb": round(self._cache.volume() / (1024 * 1024), 2),
            "cache_directory": str(self.cache_dir),
        }

    def close(self) -> None:
        if self._cache is not None:
            self._cache.close()


# Global cache instance
_degradation_cache: Optional[DegradationCache] = None


def get_degradation_cache(config: Optional[Config] = None) -> DegradationCache:
    """Get or create the global degradation cache."""
    global _degradation_cache

    if _degradation_cache is None:
        _degradation_cache = DegradationCache(config=config)
        _degradation_cache.clear_expired()

    return _degradation_cache


def reset_degradation_cache() -> None:
    """Reset the global cache instance (for testing)."""
    global _degradation_cache
    if _degradation_cache is not None:
        _degradation_cache.close()
    _degradation_cache = None
