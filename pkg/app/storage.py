"""
Storage - Bộ lưu trữ byte cho trạng thái CubeSat (file hoặc bộ nhớ)
"""

import os
import logging
from typing import Optional

from app.utils import atomic_write_bytes


class MemoryStorage:
    """Lưu trạng thái trong bộ nhớ (simulator, benchmark)"""

    def __init__(self, data: Optional[bytes] = None):
        self.data = data
        self.writes = 0

    def exists(self) -> bool:
        return self.data is not None

    def read(self) -> bytes:
        if self.data is None:
            raise FileNotFoundError("memory storage is empty")
        return self.data

    def write(self, data: bytes):
        self.data = bytes(data)
        self.writes += 1


class FileStorage:
    """Lưu trạng thái vào file, ghi theo kiểu atomic replace"""

    def __init__(self, path: str):
        self.path = path
        self.logger = logging.getLogger(__name__)

    def exists(self) -> bool:
        return os.path.exists(self.path)

    def read(self) -> bytes:
        with open(self.path, "rb") as f:
            return f.read()

    def write(self, data: bytes):
        atomic_write_bytes(self.path, data)
        self.logger.debug(f"Wrote {len(data)} bytes to {self.path}")
