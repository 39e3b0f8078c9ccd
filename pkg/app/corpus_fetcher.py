"""
Corpus Fetcher - Tải payload thật cho benchmark qua HTTP

Downloads corpus entries that carry a `url` into a local cache directory so
fidelity runs can time real installer-sized files instead of synthetic
payloads. Disabled unless the benchmark config sets "fetch": true.
"""

import os
import logging
from typing import Optional
from urllib.parse import urlparse

import requests

from app.models import CorpusEntry
from app.utils import atomic_write_bytes, ensure_directory, get_file_size_mb


class CorpusFetcher:
    """HTTP client tải corpus, có cache và retry"""

    def __init__(self, cache_dir: str, timeout: int = 30, max_retries: int = 3):
        self.cache_dir = cache_dir
        self.timeout = timeout
        self.max_retries = max_retries

        self.session = requests.Session()
        self.session.headers.update({'User-Agent': 'csum-bench/1.0'})

        self.logger = logging.getLogger(__name__)

    def cache_path(self, entry: CorpusEntry) -> str:
        """Đường dẫn file cache cho một entry"""
        suffix = os.path.splitext(urlparse(entry.url or "").path)[1]
        return os.path.join(self.cache_dir, f"{entry.name}{suffix}")

    def _download(self, url: str) -> bytes:
        """GET với retry; raise RequestException sau lần thử cuối"""
        for attempt in range(self.max_retries):
            try:
                response = self.session.get(url, timeout=self.timeout)
                self.logger.debug(f"GET {url} - Status: {response.status_code}")
                response.raise_for_status()
                return response.content

            except requests.exceptions.RequestException as e:
                self.logger.warning(f"Attempt {attempt + 1} failed: {str(e)}")
                if attempt == self.max_retries - 1:
                    raise

        raise requests.exceptions.RetryError("Max retries exceeded")

    def fetch(self, entry: CorpusEntry) -> Optional[str]:
        """
        Download (or reuse the cached copy of) a corpus entry

        Returns:
            Local file path, or None if the entry has no URL or the download failed
        """
        if not entry.url:
            return None

        path = self.cache_path(entry)
        if os.path.exists(path):
            self.logger.info(f"Using cached {entry.name} ({get_file_size_mb(path):.2f} MB)")
            return path

        if not ensure_directory(self.cache_dir):
            self.logger.error(f"Cannot create cache directory {self.cache_dir}")
            return None

        try:
            content = self._download(entry.url)
        except requests.exceptions.RequestException as e:
            self.logger.warning(f"Could not fetch {entry.name} from {entry.url}: {str(e)}")
            return None

        atomic_write_bytes(path, content)
        self.logger.info(f"Fetched {entry.name}: {len(content) / 1e6:.2f} MB")
        return path

