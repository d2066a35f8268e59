"""
Caching of per-image quality metrics so repeated evaluations skip unchanged files.
"""

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, Optional, Union

try:
    import diskcache as dc
    DISKCACHE_AVAILABLE = True
except ImportError:
    DISKCACHE_AVAILABLE = False
    logging.warning("diskcache not available. Using file-based caching fallback.")

# Bump when metric definitions change so stale entries are ignored
METRIC_VERSION = "1"


class MetricCache:
    """Maps image content hashes to metric records."""

    def __init__(self, cache_dir: Union[str, Path] = ".cache/metrics",
                 default_ttl: int = 7 * 24 * 3600, use_diskcache: bool = True):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.default_ttl = default_ttl  # Time to live in seconds
        self.logger = logging.getLogger(__name__)

        if DISKCACHE_AVAILABLE and use_diskcache:
            self.disk_cache = dc.Cache(str(self.cache_dir / "diskcache"))
        else:
            self.disk_cache = None

        (self.cache_dir / "metrics").mkdir(exist_ok=True)

    def file_key(self, path: Union[str, Path]) -> str:
        """SHA-256 of the file bytes plus the metric version."""
        digest = hashlib.sha256()
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                digest.update(chunk)
        digest.update(METRIC_VERSION.encode())
        return digest.hexdigest()

    def _is_expired(self, timestamp: float, ttl: int) -> bool:
        return time.time() - timestamp > ttl

    def _get_file_path(self, key: str) -> Path:
        return self.cache_dir / "metrics" / f"{key}.json"

    def set_metrics(self, path: Union[str, Path], metrics: Dict[str, Any],
                    ttl: Optional[int] = None) -> bool:
        """Cache the metric record computed for an image file."""
        ttl = ttl or self.default_ttl
        key = self.file_key(path)
        cache_entry = {
            "path": str(path),
            "metrics": metrics,
            "cached_at": time.time(),
            "ttl": ttl,
        }

        if self.disk_cache is not None:
            try:
                self.disk_cache.set(key, cache_entry, expire=ttl)
                self.logger.debug(f"Cached metrics for {path} (disk cache)")
                return True
            except Exception as e:
                self.logger.warning(f"Disk cache failed for {path}: {e}")

        try:
            with open(self._get_file_path(key), "w", encoding="utf-8") as f:
                json.dump(cache_entry, f, ensure_ascii=False, indent=2)
            self.logger.debug(f"Cached metrics for {path} (file cache)")
            return True
        except OSError as e:
            self.logger.error(f"Failed to cache metrics for {path}: {e}")
            return False

    def get_metrics(self, path: Union[str, Path]) -> Optional[Dict[str, Any]]:
        """Cached metric record for an image file, or None."""
        key = self.file_key(path)

        if self.disk_cache is not None:
            try:
                cache_entry = self.disk_cache.get(key)
                if cache_entry:
                    self.logger.debug(f"Retrieved metrics for {path} (disk cache)")
                    return cache_entry["metrics"]
            except Exception as e:
                self.logger.warning(f"Disk cache retrieval failed for {path}: {e}")

        file_path = self._get_file_path(key)
        if not file_path.exists():
            return None
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                cache_entry = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            self.logger.warning(f"Corrupted cache entry {file_path}: {e}")
            file_path.unlink(missing_ok=True)
            return None

        if self._is_expired(cache_entry["cached_at"], cache_entry["ttl"]):
            self.logger.info(f"Cache expired for {path}, removing")
            file_path.unlink(missing_ok=True)
            return None

        self.logger.debug(f"Retrieved metrics for {path} (file cache)")
        return cache_entry["metrics"]

    def clear_all(self) -> bool:
        """Clear all cache entries."""
        try:
            if self.disk_cache is not None:
                self.disk_cache.clear()
            for cache_file in (self.cache_dir / "metrics").glob("*.json"):
                cache_file.unlink()
            self.logger.info("Cleared all metric cache entries")
            return True
        except OSError as e:
            self.logger.error(f"Failed to clear cache: {e}")
            return False

    def get_cache_stats(self) -> Dict[str, Any]:
        """Entry counts and sizes of the file and disk caches."""
        cache_files = list((self.cache_dir / "metrics").glob("*.json"))
        stats = {
            "cache_dir": str(self.cache_dir),
            "disk_cache_available": self.disk_cache is not None,
            "file_cache_entries": len(cache_files),
            "file_cache_size_mb": sum(f.stat().st_size for f in cache_files) / (1024 * 1024),
        }
        if self.disk_cache is not None:
            try:
                stats["disk_cache_entries"] = len(self.disk_cache)
                stats["disk_cache_size_mb"] = self.disk_cache.volume() / (1024 * 1024)
            except Exception:
                stats["disk_cache_size_mb"] = 0
        return stats

    def close(self):
        if self.disk_cache is not None:
            self.disk_cache.close()
