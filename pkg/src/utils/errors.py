"""
异常定义

所有业务异常都继承自 SleLabError，命令行入口统一捕获后返回退出码 1。
吞没（swallowing）是正常结果，截断（censoring）只记录不抛出。
"""
from typing import Any, Dict, Optional


class SleLabError(Exception):
    """SLE 实验室异常基类"""


class ParameterError(SleLabError, ValueError):
    """参数越界（如 kappa 不在允许区间）"""


class ConfigError(SleLabError, ValueError):
    """配置文件或命令行参数不合法"""


class DomainError(SleLabError, ValueError):
    """输入不满足顺序或取值要求（如 y < x 被违反）"""


class OutOfRegimeError(DomainError):
    """输入超出公式适用范围（如 r > (x-y)/4）"""


class ResourceLimitError(SleLabError):
    """步数或网格规模超过上限"""


class SolverError(SleLabError):
    """数值求解失败，附带诊断信息"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({detail})"


class QuadratureError(SleLabError):
    """数值积分未达到要求精度"""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message}: 实际误差估计 {achieved:.3e}")
        self.achieved = achieved


class GeometryError(SleLabError):
    """三角形退化"""


class ConsistencyError(SleLabError):
    """数值结果违反应有的不变量（单调性、重心坐标范围等）"""


class SamplerError(SleLabError):
    """布朗运动出口采样器步数耗尽"""


class StoreError(SleLabError):
    """结果库操作被拒绝（如 run_id 已存在且未指定 --force）"""
