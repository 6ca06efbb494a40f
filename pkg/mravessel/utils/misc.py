from typing import Any

__all__ = [
    'args_to_list',
    'format_fraction',
    'parse_pair',
]


def args_to_list(args: Any) -> list:
    if not isinstance(args, (list, tuple)):
        if args is None:
            return []
        else:
            return [args]
    return list(args)


def parse_pair(text: str | tuple | list) -> tuple[float, float]:
    """解析一对数值，如 "0.57,0.67"、"(0.57, 0.67)" 或 "[0.57, 0.67]"

    :raise ValueError: 不是两个数值
    """
    if isinstance(text, (tuple, list)):
        parts = list(text)
    else:
        parts = [_ for _ in text.strip().strip('()[]').split(',')]
    if len(parts) != 2:
        raise ValueError(f"Expected two comma separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def format_fraction(frac: float) -> str:
    """0.57 -> '57'，用于文件命名"""
    return f"{frac * 100:.0f}"
