import sqlite3
import json
import logging
import threading
from typing import Optional, List, Dict, Set, Tuple

logger = logging.getLogger(__name__)


class RunStore:
    """sqlite record of every benchmark run, keyed by (config fingerprint, model, horizon, seed)"""

    def __init__(self, db_path: str = "runs.db"):
        self.db_path = db_path
        self._write_lock = threading.Lock()
        self.init_database()

    def get_connection(self):
        return sqlite3.connect(self.db_path, timeout=30)

    def init_database(self):
        """Initialize the database with required tables"""
        conn = self.get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                fingerprint TEXT NOT NULL,
                model TEXT NOT NULL,
                horizon INTEGER NOT NULL,
                seed INTEGER NOT NULL,
                status TEXT NOT NULL,
                r2 REAL,
                rmse REAL,
                epochs INTEGER,
                best_epoch INTEGER,
                wall_time REAL,
                step_r2 TEXT,
                error TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                UNIQUE(fingerprint, model, horizon, seed)
            )
        ''')

        cursor.execute('CREATE INDEX IF NOT EXISTS idx_runs_fingerprint ON runs (fingerprint)')

        conn.commit()
        conn.close()

    def record_run(self, fingerprint: str, model: str, horizon: int, seed: int, status: str,
                   r2: float = None, rmse: float = None, epochs: int = None, best_epoch: int = None,
                   wall_time: float = None, step_r2: List[float] = None, error: str = None) -> bool:
        """Insert or replace the row of one run"""
        try:
            with self._write_lock:
                conn = self.get_connection()
                cursor = conn.cursor()
                cursor.execute('''
                    INSERT OR REPLACE INTO runs
                        (fingerprint, model, horizon, seed, status, r2, rmse, epochs, best_epoch,
                         wall_time, step_r2, error)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                ''', (fingerprint, model, horizon, seed, status, r2, rmse, epochs, best_epoch,
                      wall_time, json.dumps(step_r2) if step_r2 is not None else None, error))
                conn.commit()
                conn.close()
            return True
        except sqlite3.Error as e:
            logger.error("Error recording run %s/h%d/s%d: %s", model, horizon, seed, e)
            return False

    def _row_to_dict(self, row) -> Dict:
        return {
            'fingerprint': row[0],
            'model': row[1],
            'horizon': row[2],
            'seed': row[3],
            'status': row[4],
            'r2': row[5],
            'rmse': row[6],
            'epochs': row[7],
            'best_epoch': row[8],
            'wall_time': row[9],
            'step_r2': json.loads(row[10]) if row[10] else None,
            'error': row[11],
            'created_at': row[12],
        }

    def get_run(self, fingerprint: str, model: str, horizon: int, seed: int) -> Optional[Dict]:
        """Get one run by its key"""
        conn = self.get_connection()
        cursor = conn.cursor()
        cursor.execute('''
            SELECT fingerprint, model, horizon, seed, status, r2, rmse, epochs, best_epoch,
                   wall_time, step_r2, error, created_at
            FROM runs WHERE fingerprint = ? AND model = ? AND horizon = ? AND seed = ?
        ''', (fingerprint, model, horizon, seed))
        row = cursor.fetchone()
        conn.close()

        return self._row_to_dict(row) if row else None

    def get_runs(self, fingerprint: str, status: str = None) -> List[Dict]:
        """All runs of a configuration, optionally filtered by status"""
        conn = self.get_connection()
        cursor = conn.cursor()
        query = '''
            SELECT fingerprint, model, horizon, seed, status, r2, rmse, epochs, best_epoch,
                   wall_time, step_r2, error, created_at
            FROM runs WHERE fingerprint = ?
        '''
        params = [fingerprint]
        if status is not None:
            query += ' AND status = ?'
            params.append(status)
        cursor.execute(query + ' ORDER BY model, horizon, seed', params)
        rows = cursor.fetchall()
        conn.close()

        return [self._row_to_dict(row) for row in rows]

    def get_completed_keys(self, fingerprint: str) -> Set[Tuple[str, int, int]]:
        """(model, horizon, seed) of every run already stored as ok"""
        return {(run['model'], run['horizon'], run['seed']) for run in self.get_runs(fingerprint, status='ok')}
