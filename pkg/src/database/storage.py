"""
结果存储模块 - SQLite 索引 + 每次运行的 JSON Lines / CSV 文件

目录结构：
    <root>/index.db                 运行索引（表 runs）
    <root>/runs/<run_id>.jsonl      每条结果一行
    <root>/runs/<run_id>.manifest.json
    <root>/runs/<run_id>.csv        汇总表（pandas 写出）

- 使用线程本地存储复用数据库连接
- 所有写入都经过同一把锁
- 结果记录不含时间戳；相同配置、种子和版本得到逐字节相同的 JSON 行
"""
import json
import logging
import math
import os
import sqlite3
import threading
from dataclasses import asdict, dataclass
from datetime import datetime
from typing import Any, Iterable, List, Optional

import numpy as np
import pandas as pd

from utils.errors import StoreError

logger = logging.getLogger("sle.store")


@dataclass
class RunManifest:
    """一次运行的清单"""
    run_id: str
    config: dict
    tool_version: str
    started_at: str
    finished_at: Optional[str] = None
    experiment: str = ''
    status: str = 'running'
    records: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _clean(value: Any) -> Any:
    """把 numpy 标量和非有限浮点数转成可写入 JSON 的值"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return [_clean(value.real), _clean(value.imag)]
    return value


def encode_record(record: dict) -> str:
    """单条记录的 JSON 行（键排序，非有限值写成 null）"""
    return json.dumps(_clean(record), sort_keys=True, ensure_ascii=False, allow_nan=False)


class ResultStore:
    """实验结果存储

    使用线程本地存储管理索引数据库连接，每个线程复用同一个连接。
    """

    def __init__(self, root: str = "results"):
        self.root = root
        self.runs_dir = os.path.join(root, 'runs')
        self.db_path = os.path.join(root, 'index.db')
        # 线程本地存储，用于复用数据库连接
        self._local = threading.local()
        self._lock = threading.Lock()
        os.makedirs(self.runs_dir, exist_ok=True)
        self._init_db()

    def _get_connection(self) -> sqlite3.Connection:
        """获取当前线程的数据库连接（复用机制）"""
        if not hasattr(self._local, 'conn') or self._local.conn is None:
            self._local.conn = sqlite3.connect(self.db_path, check_same_thread=False)
        return self._local.conn

    def close(self):
        """关闭当前线程的数据库连接"""
        if getattr(self._local, 'conn', None) is not None:
            try:
                self._local.conn.close()
            except sqlite3.Error:
                pass
            self._local.conn = None

    def _init_db(self):
        """初始化索引表"""
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    run_id TEXT PRIMARY KEY,
                    experiment TEXT NOT NULL,
                    kappa REAL,
                    seed INTEGER,
                    samples INTEGER,
                    tool_version TEXT,
                    status TEXT,
                    records INTEGER DEFAULT 0,
                    started_at TEXT,
                    finished_at TEXT
                )
            """)
            cursor.execute("CREATE INDEX IF NOT EXISTS idx_experiment ON runs(experiment)")
            conn.commit()

    # ---------- 路径 ----------

    def path(self, run_id: str, suffix: str) -> str:
        return os.path.join(self.runs_dir, f"{run_id}{suffix}")

    def exists(self, run_id: str) -> bool:
        """索引中是否已有该运行"""
        cursor = self._get_connection().cursor()
        cursor.execute("SELECT 1 FROM runs WHERE run_id = ?", (run_id,))
        return cursor.fetchone() is not None

    # ---------- 写入 ----------

    def begin(self, run_id: str, config: dict, tool_version: str, force: bool = False) -> RunManifest:
        """
        登记一次新运行

        Args:
            run_id: 运行标识
            config: 配置（JSON 对象）
            tool_version: 工具版本
            force: 已存在时覆盖

        Raises:
            StoreError: 运行已存在且未指定 force
        """
        with self._lock:
            if self.exists(run_id):
                if not force:
                    logger.error(f"运行 {run_id} 已存在，使用 --force 覆盖")
                    raise StoreError(f"运行 {run_id} 已存在")
                self._remove(run_id)
            manifest = RunManifest(run_id=run_id, config=_clean(config), tool_version=tool_version,
                                   started_at=datetime.now().isoformat(timespec='seconds'),
                                   experiment=str(config.get('experiment', '')))
            conn = self._get_connection()
            conn.execute("""
                INSERT INTO runs (run_id, experiment, kappa, seed, samples, tool_version, status, started_at)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            """, (run_id, manifest.experiment, config.get('kappa'), config.get('seed'),
                  config.get('samples'), tool_version, manifest.status, manifest.started_at))
            conn.commit()
            # 清空结果文件
            open(self.path(run_id, '.jsonl'), 'w', encoding='utf-8').close()
            self._write_manifest(manifest)
        logger.info(f"登记运行 {run_id}（{manifest.experiment}）")
        return manifest

    def _remove(self, run_id: str):
        conn = self._get_connection()
        conn.execute("DELETE FROM runs WHERE run_id = ?", (run_id,))
        conn.commit()
        for suffix in ('.jsonl', '.manifest.json', '.csv'):
            p = self.path(run_id, suffix)
            if os.path.exists(p):
                os.remove(p)

    def _write_manifest(self, manifest: RunManifest):
        with open(self.path(manifest.run_id, '.manifest.json'), 'w', encoding='utf-8') as f:
            json.dump(_clean(manifest.to_dict()), f, ensure_ascii=False, indent=2, sort_keys=True)

    def append(self, manifest: RunManifest, records: Iterable[dict]) -> int:
        """追加结果记录，返回写入条数"""
        lines = [encode_record(r) for r in records]
        with self._lock:
            with open(self.path(manifest.run_id, '.jsonl'), 'a', encoding='utf-8') as f:
                for line in lines:
                    f.write(line + '\n')
            manifest.records += len(lines)
        logger.debug(f"运行 {manifest.run_id} 写入 {len(lines)} 条记录")
        return len(lines)

    def finish(self, manifest: RunManifest, status: str = 'ok') -> RunManifest:
        """结束运行：写 CSV 汇总、更新清单和索引"""
        with self._lock:
            records = self.load_records(manifest.run_id)
            if records:
                pd.DataFrame(records).to_csv(self.path(manifest.run_id, '.csv'), index=False)
            manifest.finished_at = datetime.now().isoformat(timespec='seconds')
            manifest.status = status
            self._write_manifest(manifest)
            conn = self._get_connection()
            conn.execute("UPDATE runs SET status = ?, records = ?, finished_at = ? WHERE run_id = ?",
                         (status, manifest.records, manifest.finished_at, manifest.run_id))
            conn.commit()
        logger.info(f"运行 {manifest.run_id} 结束（{status}），共 {manifest.records} 条记录")
        return manifest

    # ---------- 读取 ----------

    def load_records(self, run_id: str) -> List[dict]:
        path = self.path(run_id, '.jsonl')
        if not os.path.exists(path):
            return []
        with open(path, 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]

    def load_manifest(self, run_id: str) -> RunManifest:
        path = self.path(run_id, '.manifest.json')
        if not os.path.exists(path):
            raise StoreError(f"运行 {run_id} 不存在")
        with open(path, 'r', encoding='utf-8') as f:
            return RunManifest(**json.load(f))

    def list_runs(self, experiment: Optional[str] = None) -> List[dict]:
        """索引中的运行（按开始时间倒序）"""
        cursor = self._get_connection().cursor()
        sql = "SELECT run_id, experiment, kappa, seed, samples, status, records, started_at FROM runs"
        args = ()
        if experiment:
            sql += " WHERE experiment = ?"
            args = (experiment,)
        cursor.execute(sql + " ORDER BY started_at DESC", args)
        cols = [c[0] for c in cursor.description]
        return [dict(zip(cols, row)) for row in cursor.fetchall()]
