"""
日志配置

所有模块使用 logging.getLogger("sle.xxx")，入口处调用一次 setup_logger 即可。
控制台输出固定写到 stderr：tables 子命令的 CSV 独占 stdout。
"""
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s | %(name)-12s | %(levelname)-7s | %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _resolve_level(level: Union[int, str]) -> int:
    if isinstance(level, int):
        return level
    return getattr(logging, str(level).upper(), logging.INFO)


def setup_logger(
    name: str = "sle",
    log_file: Optional[str] = None,
    level: Union[int, str] = logging.INFO,
    max_bytes: int = 5 * 1024 * 1024,  # 5MB
    backup_count: int = 3
) -> logging.Logger:
    """
    配置 sle 根 logger

    Args:
        name: 根 logger 名称
        log_file: 轮转日志文件路径（可选）
        level: 日志级别，整数或 "DEBUG"/"INFO" 等名称
        max_bytes: 单个日志文件最大大小
        backup_count: 保留的备份文件数量

    Example:
        logger = setup_logger("sle", "logs/slelab.log", level="DEBUG")
    """
    logger = logging.getLogger(name)
    logger.setLevel(_resolve_level(level))

    # 重复调用只更新级别
    if logger.handlers:
        return logger

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(formatter)
    logger.addHandler(console)

    if log_file:
        os.makedirs(os.path.dirname(log_file) or '.', exist_ok=True)
        rotating = RotatingFileHandler(log_file, maxBytes=max_bytes,
                                       backupCount=backup_count, encoding='utf-8')
        rotating.setFormatter(formatter)
        logger.addHandler(rotating)

    # 子 logger 的消息只由这里输出一次
    logger.propagate = False
    return logger
