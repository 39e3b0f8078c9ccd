"""
Database Manager - Quản lý registry SQLite của administrator

COMPONENT OVERVIEW:
------------------
Persists the administrator's multi-satellite registry: one hash chain per
satellite plus the last issued (pending) bundle of each chain, so that
retransmission and cursor position survive restarts.

DATABASE SCHEMA:
---------------
chains table:
- chain_id (PRIMARY KEY): hex chain identifier
- length_n: chain length
- cursor: index of the next AT_curr to issue
- chain_blob: chain in the CSUMCHN1 file layout (self-validating)
- created_at, updated_at: Timestamps

pending_bundles table:
- chain_id (PRIMARY KEY, FOREIGN KEY): chains.chain_id
- ordinal: update counter of the in-flight bundle
- bundle_blob: bundle in the CSUMBND1 wire layout
- issued_at: Timestamp

ERROR HANDLING:
--------------
- Writes log and re-raise
- Reads of a corrupted blob log and skip the row (IntegrityError/DecodeError)
"""

import os
import time
import sqlite3
import logging
from typing import List, Optional

from app.exceptions import DecodeError, IntegrityError
from app.hashchain import decode_chain, encode_chain
from app.models import HashChain, UpdateBundle
from app.wire import decode_bundle, encode_bundle


class DatabaseManager:
    """Quản lý cơ sở dữ liệu SQLite cho registry chain"""

    def __init__(self, db_path: str = "csum_registry.db"):
        self.db_path = db_path
        self.logger = logging.getLogger(__name__)

    def get_connection(self) -> sqlite3.Connection:
        """Lấy kết nối database với timeout và retry"""
        max_retries = 3
        retry_delay = 0.1

        for attempt in range(max_retries):
            try:
                conn = sqlite3.connect(self.db_path, timeout=30.0)
                conn.row_factory = sqlite3.Row
                conn.execute("PRAGMA journal_mode=WAL")
                conn.execute("PRAGMA synchronous=FULL")
                conn.execute("PRAGMA foreign_keys=ON")
                return conn
            except sqlite3.OperationalError as e:
                if "database is locked" in str(e) and attempt < max_retries - 1:
                    time.sleep(retry_delay * (attempt + 1))
                    continue
                raise

    def init_database(self):
        """Khởi tạo database và các bảng"""
        db_dir = os.path.dirname(self.db_path)
        if db_dir and not os.path.exists(db_dir):
            os.makedirs(db_dir, exist_ok=True)

        try:
            with self.get_connection() as conn:
                conn.execute("""
                    CREATE TABLE IF NOT EXISTS chains (
                        chain_id TEXT PRIMARY KEY,
                        length_n INTEGER NOT NULL,
                        cursor INTEGER NOT NULL,
                        chain_blob BLOB NOT NULL,
                        created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                        updated_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                    )
                """)

                conn.execute("""
                    CREATE TABLE IF NOT EXISTS pending_bundles (
                        chain_id TEXT PRIMARY KEY,
                        ordinal INTEGER NOT NULL,
                        bundle_blob BLOB NOT NULL,
                        issued_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                        FOREIGN KEY (chain_id) REFERENCES chains (chain_id) ON DELETE CASCADE
                    )
                """)

                conn.execute("CREATE INDEX IF NOT EXISTS idx_chains_cursor ON chains (cursor)")
                conn.commit()
                self.logger.info("Database initialized successfully")

        except Exception as e:
            self.logger.error(f"Database initialization failed: {str(e)}")
            raise

    # Chain operations
    def save_chain(self, chain: HashChain):
        """Tạo mới hoặc cập nhật chain (cursor)"""
        try:
            with self.get_connection() as conn:
                conn.execute("""
                    INSERT INTO chains (chain_id, length_n, cursor, chain_blob)
                    VALUES (?, ?, ?, ?)
                    ON CONFLICT(chain_id) DO UPDATE SET
                        cursor = excluded.cursor,
                        chain_blob = excluded.chain_blob,
                        updated_at = CURRENT_TIMESTAMP
                """, (chain.chain_id.hex(), chain.length_n, chain.cursor, encode_chain(chain)))
                conn.commit()

        except Exception as e:
            self.logger.error(f"Error saving chain {chain.chain_id.hex()}: {str(e)}")
            raise

    def get_chain(self, chain_id: bytes) -> Optional[HashChain]:
        """Lấy chain theo ID"""
        with self.get_connection() as conn:
            row = conn.execute("SELECT chain_blob FROM chains WHERE chain_id = ?",
                               (chain_id.hex(),)).fetchone()
        if not row:
            return None
        try:
            return decode_chain(bytes(row['chain_blob']))
        except IntegrityError as e:
            self.logger.error(f"Chain {chain_id.hex()} is corrupted in registry: {e}")
            return None

    def get_all_chains(self) -> List[HashChain]:
        """Lấy tất cả chains"""
        chains = []
        with self.get_connection() as conn:
            rows = conn.execute("SELECT chain_id, chain_blob FROM chains ORDER BY created_at, chain_id").fetchall()
        for row in rows:
            try:
                chains.append(decode_chain(bytes(row['chain_blob'])))
            except IntegrityError as e:
                self.logger.error(f"Skipping corrupted chain {row['chain_id']}: {e}")
        return chains

    # Pending bundle operations
    def save_pending(self, bundle: UpdateBundle):
        """Lưu bundle đang chờ xác nhận"""
        try:
            with self.get_connection() as conn:
                conn.execute("""
                    INSERT INTO pending_bundles (chain_id, ordinal, bundle_blob)
                    VALUES (?, ?, ?)
                    ON CONFLICT(chain_id) DO UPDATE SET
                        ordinal = excluded.ordinal,
                        bundle_blob = excluded.bundle_blob,
                        issued_at = CURRENT_TIMESTAMP
                """, (bundle.chain_id.hex(), bundle.ordinal, encode_bundle(bundle)))
                conn.commit()

        except Exception as e:
            self.logger.error(f"Error saving pending bundle for {bundle.chain_id.hex()}: {str(e)}")
            raise

    def get_pending(self, chain_id: bytes) -> Optional[UpdateBundle]:
        with self.get_connection() as conn:
            row = conn.execute("SELECT bundle_blob FROM pending_bundles WHERE chain_id = ?",
                               (chain_id.hex(),)).fetchone()
        if not row:
            return None
        try:
            return decode_bundle(bytes(row['bundle_blob']))
        except DecodeError as e:
            self.logger.error(f"Pending bundle for {chain_id.hex()} is corrupted: {e}")
            return None

    def get_all_pending(self) -> List[UpdateBundle]:
        bundles = []
        with self.get_connection() as conn:
            rows = conn.execute("SELECT chain_id, bundle_blob FROM pending_bundles").fetchall()
        for row in rows:
            try:
                bundles.append(decode_bundle(bytes(row['bundle_blob'])))
            except DecodeError as e:
                self.logger.error(f"Skipping corrupted pending bundle {row['chain_id']}: {e}")
        return bundles

    def clear_pending(self, chain_id: bytes):
        with self.get_connection() as conn:
            conn.execute("DELETE FROM pending_bundles WHERE chain_id = ?", (chain_id.hex(),))
            conn.commit()

    def get_registry_stats(self) -> dict:
        """Thống kê registry"""
        with self.get_connection() as conn:
            row = conn.execute("""
                SELECT COUNT(*) AS chains,
                       COALESCE(SUM(cursor), 0) AS updates_remaining,
                       COALESCE(SUM(CASE WHEN cursor = 0 THEN 1 ELSE 0 END), 0) AS exhausted
                FROM chains
            """).fetchone()
            pending = conn.execute("SELECT COUNT(*) FROM pending_bundles").fetchone()[0]
        return {
            'chains': row['chains'],
            'updates_remaining': row['updates_remaining'],
            'exhausted': row['exhausted'],
            'pending': pending,
        }
