# -*- coding: utf-8 -*-
"""Pipeline configuration

配置文件为纯文本 key = value 格式，键名与PipelineConfig字段名一致::

    # 小血管尺度
    sigma_low_mm = 0.47
    frac_low_scale = 0.57, 0.67
    connectivity = 26

优先级：默认值 < 配置文件 < 命令行参数。
"""

import dataclasses
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final

from mravessel.libs.exceptions import InvalidConfig
from mravessel.utils.misc import parse_pair

__all__ = [
    'CONFIG_ENV',
    'PipelineConfig',
    'default_config_path',
]

# 默认配置文件路径的环境变量
CONFIG_ENV: Final[str] = 'MRAVESSEL_CONFIG'


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline parameters with their default values"""

    sigma_low_mm: float = 0.47
    sigma_high_mm: float = 0.94
    frac_low_scale: tuple[float, float] = (0.57, 0.67)
    frac_high_scale: tuple[float, float] = (0.39, 0.49)
    min_component_mm3: float = 10.0
    percentile: float = 99.9
    connectivity: int = 26
    gamma23: float = 1.0
    gamma12: float = 1.0
    alpha: float = 0.25
    restrict_to_positive: bool = True
    scale_normalized: bool = False

    def __post_init__(self):
        # 统一类型，便于比较和序列化
        for name in ('frac_low_scale', 'frac_high_scale'):
            try:
                pair = parse_pair(getattr(self, name))
            except (TypeError, ValueError) as e:
                raise InvalidConfig(f"{name}: {e}")
            object.__setattr__(self, name, pair)
        for name in ('sigma_low_mm', 'sigma_high_mm', 'min_component_mm3', 'percentile',
                     'gamma23', 'gamma12', 'alpha'):
            try:
                object.__setattr__(self, name, float(getattr(self, name)))
            except (TypeError, ValueError):
                raise InvalidConfig(f"{name}: expected a number, got {getattr(self, name)!r}")
        self.validate()

    def validate(self):
        for name in ('sigma_low_mm', 'sigma_high_mm'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidConfig(f"{name} must be > 0, got {value}")
        for name in ('frac_low_scale', 'frac_high_scale'):
            low, high = getattr(self, name)
            if not (0 < low < high <= 1):
                raise InvalidConfig(f"{name} must satisfy 0 < low < high <= 1, got {(low, high)}")
        if not (math.isfinite(self.min_component_mm3) and self.min_component_mm3 >= 0):
            raise InvalidConfig(f"min_component_mm3 must be >= 0, got {self.min_component_mm3}")
        if not (0 < self.percentile <= 100):
            raise InvalidConfig(f"percentile must be in (0, 100], got {self.percentile}")
        if self.connectivity not in (6, 18, 26):
            raise InvalidConfig(f"connectivity must be 6, 18 or 26, got {self.connectivity}")
        if not (self.alpha > 0 and self.gamma23 > 0 and self.gamma12 > 0):
            raise InvalidConfig("gamma23, gamma12 and alpha must be > 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def with_overrides(self, **overrides) -> 'PipelineConfig':
        """返回新的配置，值为None的参数被忽略"""
        unknown = set(overrides) - set(self.field_names())
        if unknown:
            raise InvalidConfig(f"Unknown config keys: {sorted(unknown)}")
        changes = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, bool):
                v = 'true' if v else 'false'
            elif isinstance(v, tuple):
                v = f"{v[0]!r}, {v[1]!r}"
            else:
                v = repr(v)
            lines.append(f"{k} = {v}")
        return '\n'.join(lines) + '\n'

    @classmethod
    def loads(cls, text: str, *, source: str = '<string>') -> 'PipelineConfig':
        return cls().with_overrides(**parse_config_text(text, source=source))

    @classmethod
    def from_file(cls, path: str | Path) -> 'PipelineConfig':
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise InvalidConfig(f"Unable to read config '{path}': {e}")
        return cls.loads(text, source=str(path))


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _parse_value(key: str, value: str):
    kind = _FIELD_TYPES[key]
    if kind in (bool, 'bool'):
        if value.lower() in ('true', 'yes', 'on', '1'):
            return True
        if value.lower() in ('false', 'no', 'off', '0'):
            return False
        raise ValueError(f"expected true/false, got {value!r}")
    if kind in (int, 'int'):
        return int(value)
    if kind in (float, 'float'):
        return float(value)
    return parse_pair(value)


def parse_config_text(text: str, *, source: str = '<string>') -> dict[str, Any]:
    """解析 key = value 文本

    :raise InvalidConfig: 未知键、缺少'='或数值格式错误
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (_.strip() for _ in line.split('=', 1))
        if key not in _FIELD_TYPES:
            raise InvalidConfig(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, value)
        except ValueError as e:
            raise InvalidConfig(f"{source}:{lineno}: {key}: {e}")
    return values


def default_config_path() -> Path | None:
    value = os.environ.get(CONFIG_ENV)
    return Path(value) if value else None
